use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg::{Mat, RowMajor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    LinearMpnn,
    LinearMpnnVn,
    PairnormVn,
    Gcn,
    GcnVn,
    GcnVng,
    Gatedgcn,
    GatedgcnVn,
    GatedgcnVng,
    GpsLite,
}

impl Arch {
    pub const ALL: [Arch; 10] = [
        Arch::LinearMpnn,
        Arch::LinearMpnnVn,
        Arch::PairnormVn,
        Arch::Gcn,
        Arch::GcnVn,
        Arch::GcnVng,
        Arch::Gatedgcn,
        Arch::GatedgcnVn,
        Arch::GatedgcnVng,
        Arch::GpsLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::LinearMpnn => "linear-mpnn",
            Arch::LinearMpnnVn => "linear-mpnn-vn",
            Arch::PairnormVn => "pairnorm-vn",
            Arch::Gcn => "gcn",
            Arch::GcnVn => "gcn-vn",
            Arch::GcnVng => "gcn-vng",
            Arch::Gatedgcn => "gatedgcn",
            Arch::GatedgcnVn => "gatedgcn-vn",
            Arch::GatedgcnVng => "gatedgcn-vng",
            Arch::GpsLite => "gps-lite",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Arch::LinearMpnn | Arch::LinearMpnnVn | Arch::PairnormVn)
    }

    /// Carries a VN state updated from the previous layer's node states.
    pub fn has_vn_state(self) -> bool {
        matches!(self, Arch::GcnVn | Arch::GatedgcnVn)
    }

    pub fn is_vng(self) -> bool {
        matches!(self, Arch::GcnVng | Arch::GatedgcnVng)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, Arch::Gatedgcn | Arch::GatedgcnVn | Arch::GatedgcnVng)
    }

    /// Weights owned by layer `layer`.
    pub fn layer_weights(self, layer: usize) -> Vec<Weight> {
        use Weight::*;
        match self {
            Arch::LinearMpnn => vec![W],
            Arch::LinearMpnnVn | Arch::PairnormVn if layer == 0 => vec![W],
            Arch::LinearMpnnVn | Arch::PairnormVn => vec![W, Q],
            Arch::Gcn => vec![Omega, W],
            Arch::GcnVn => vec![Omega, W, OmegaVn, WVn],
            Arch::GcnVng => vec![Omega, W, Q],
            Arch::Gatedgcn => vec![Omega, W1, W2, W3],
            Arch::GatedgcnVn => vec![Omega, W1, W2, W3, OmegaVn, WVn],
            Arch::GatedgcnVng => vec![Omega, W1, W2, W3, Q],
            Arch::GpsLite => vec![Omega, W, WQ, WK, WV, F],
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ModelError::UnknownArch(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Mean,
    VPool,
}

/// Normaliser of the VN aggregation: `sum` divides by 1, `mean` by `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VnNormalizer {
    Sum,
    Mean,
}

impl VnNormalizer {
    pub fn value(self, n: usize) -> f64 {
        match self {
            VnNormalizer::Sum => 1.0,
            VnNormalizer::Mean => n as f64,
        }
    }
}

/// Adds or removes the layer mean `1 Mean(H)^T` after every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanAugment {
    None,
    Add,
    Subtract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub readout: Readout,
    pub vn_normalizer: VnNormalizer,
    pub mean_augment: MeanAugment,
    /// Learnable input map `H0 = X E`. Always present when `input_dim` differs
    /// from `width`.
    pub embedding: bool,
}

impl ModelSpec {
    /// Square model with mean readout, mean VN aggregation and no embedding.
    /// Linear architectures get the identity activation, the rest tanh.
    pub fn new(arch: Arch, depth: usize, width: usize) -> Self {
        ModelSpec {
            arch,
            depth,
            width,
            input_dim: width,
            output_dim: width,
            activation: if arch.is_linear() {
                Activation::Identity
            } else {
                Activation::Tanh
            },
            readout: Readout::Mean,
            vn_normalizer: VnNormalizer::Mean,
            mean_augment: MeanAugment::None,
            embedding: false,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_io(mut self, input_dim: usize, output_dim: usize) -> Self {
        self.input_dim = input_dim;
        self.output_dim = output_dim;
        self
    }

    pub fn with_embedding(mut self, embedding: bool) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn with_mean_augment(mut self, mode: MeanAugment) -> Self {
        self.mean_augment = mode;
        self
    }

    pub fn with_normalizer(mut self, normalizer: VnNormalizer) -> Self {
        self.vn_normalizer = normalizer;
        self
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn has_embedding(&self) -> bool {
        self.embedding || self.input_dim != self.width
    }

    /// Activation actually used; linear architectures always use the identity.
    pub fn effective_activation(&self) -> Activation {
        if self.arch.is_linear() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.arch.is_linear() && self.activation != Activation::Identity {
            return bad("linear architectures use the identity activation");
        }
        Ok(())
    }

    /// Whether `(layer, weight)` is updated during training.
    pub fn is_trainable(&self, weight: Weight) -> bool {
        !(self.arch == Arch::PairnormVn && weight == Weight::Q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    Omega,
    W,
    Q,
    OmegaVn,
    WVn,
    W1,
    W2,
    W3,
    WQ,
    WK,
    WV,
    F,
}

/// Model weights. Node-update weights act on column features (`h' = Omega h`);
/// the linear models and attention projections multiply row features from the
/// right (`H' = H + A H W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsRepr", try_from = "ParamsRepr")]
pub struct Params {
    /// `input_dim x width`.
    pub embed: Option<Mat>,
    pub layers: Vec<BTreeMap<Weight, Mat>>,
    /// Readout `output_dim x width`.
    pub readout: Mat,
}

impl Params {
    pub fn get(&self, layer: usize, w: Weight) -> Option<&Mat> {
        self.layers.get(layer).and_then(|l| l.get(&w))
    }

    pub fn weight(&self, layer: usize, w: Weight) -> Result<&Mat, ModelError> {
        self.get(layer, w)
            .ok_or(ModelError::MissingWeight { layer, weight: w })
    }

    pub fn set(&mut self, layer: usize, w: Weight, m: Mat) {
        self.layers[layer].insert(w, m);
    }

    /// Checks that exactly the architecture's weights are present, with the
    /// right shapes.
    pub fn check(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        let d = spec.width;
        let shape_err = |what: String, expected: (usize, usize), got: (usize, usize)| {
            Err(ModelError::Shape {
                what,
                expected,
                got,
            })
        };
        if self.layers.len() != spec.depth {
            return Err(ModelError::InvalidSpec(format!(
                "params have {} layers, spec depth is {}",
                self.layers.len(),
                spec.depth
            )));
        }
        match (&self.embed, spec.has_embedding()) {
            (Some(e), true) if e.shape() != (spec.input_dim, d) => {
                return shape_err("embedding".into(), (spec.input_dim, d), e.shape())
            }
            (None, true) => return Err(ModelError::InvalidSpec("missing embedding".into())),
            (Some(_), false) => {
                return Err(ModelError::InvalidSpec("unexpected embedding".into()))
            }
            _ => {}
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let expected = spec.arch.layer_weights(l);
            for w in &expected {
                let m = self.weight(l, *w)?;
                if m.shape() != (d, d) {
                    return shape_err(format!("layer {l} {w:?}"), (d, d), m.shape());
                }
            }
            if let Some(extra) = layer.keys().find(|w| !expected.contains(w)) {
                return Err(ModelError::InvalidSpec(format!(
                    "layer {l} carries {extra:?}, not used by {}",
                    spec.arch
                )));
            }
        }
        if self.readout.shape() != (spec.output_dim, d) {
            return shape_err("readout".into(), (spec.output_dim, d), self.readout.shape());
        }
        Ok(())
    }

    /// Trainable entries in a fixed order: embedding, layers, readout.
    pub fn trainable_slots(&self, spec: &ModelSpec) -> Vec<Slot> {
        let mut out = Vec::new();
        if self.embed.is_some() {
            out.push(Slot::Embed);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for &w in layer.keys() {
                if spec.is_trainable(w) {
                    out.push(Slot::Layer(l, w));
                }
            }
        }
        out.push(Slot::Readout);
        out
    }

    pub fn slot(&self, s: Slot) -> &Mat {
        match s {
            Slot::Embed => self.embed.as_ref().expect("embedding slot"),
            Slot::Layer(l, w) => &self.layers[l][&w],
            Slot::Readout => &self.readout,
        }
    }

    pub fn slot_mut(&mut self, s: Slot) -> &mut Mat {
        match s {
            Slot::Embed => self.embed.as_mut().expect("embedding slot"),
            Slot::Layer(l, w) => self.layers[l].get_mut(&w).expect("layer slot"),
            Slot::Readout => &mut self.readout,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Json(e.to_string()))
    }
}

/// Address of one weight matrix inside [`Params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    Embed,
    Layer(usize, Weight),
    Readout,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embed: Option<RowMajor>,
    layers: Vec<BTreeMap<Weight, RowMajor>>,
    readout: RowMajor,
}

impl From<Params> for ParamsRepr {
    fn from(p: Params) -> Self {
        ParamsRepr {
            embed: p.embed.as_ref().map(RowMajor::from),
            layers: p
                .layers
                .iter()
                .map(|l| l.iter().map(|(k, m)| (*k, RowMajor::from(m))).collect())
                .collect(),
            readout: RowMajor::from(&p.readout),
        }
    }
}

impl TryFrom<ParamsRepr> for Params {
    type Error = String;

    fn try_from(r: ParamsRepr) -> Result<Self, String> {
        let layers = r
            .layers
            .into_iter()
            .map(|l| {
                l.into_iter()
                    .map(|(k, m)| Mat::try_from(m).map(|m| (k, m)))
                    .collect::<Result<BTreeMap<_, _>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Params {
            embed: r.embed.map(Mat::try_from).transpose()?,
            layers,
            readout: Mat::try_from(r.readout)?,
        })
    }
}

/// Random initialisation: entries uniform on `[-1/sqrt(d), 1/sqrt(d)]`, the
/// embedding identity-padded, and the fixed `Q = -I` of `pairnorm-vn`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Params, ModelError> {
    spec.validate()?;
    let d = spec.width;
    let bound = 1.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-bound..=bound));
    let embed = spec
        .has_embedding()
        .then(|| Mat::from_fn(spec.input_dim, d, |i, j| if i == j { 1.0 } else { 0.0 }));
    let mut layers = Vec::with_capacity(spec.depth);
    for l in 0..spec.depth {
        let mut layer = BTreeMap::new();
        for w in spec.arch.layer_weights(l) {
            let m = if spec.arch == Arch::PairnormVn && w == Weight::Q {
                -Mat::identity(d, d)
            } else {
                draw(d, d)
            };
            layer.insert(w, m);
        }
        layers.push(layer);
    }
    let readout = draw(spec.output_dim, d);
    Ok(Params {
        embed,
        layers,
        readout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::new(Arch::GatedgcnVn, 3, 4);
        assert_eq!(init_params(&spec, 5).unwrap(), init_params(&spec, 5).unwrap());
        assert_ne!(init_params(&spec, 5).unwrap(), init_params(&spec, 6).unwrap());
    }

    #[test]
    fn shapes_and_bounds() {
        for arch in Arch::ALL {
            let spec = ModelSpec::new(arch, 2, 4);
            let p = init_params(&spec, 1).unwrap();
            p.check(&spec).unwrap();
            for layer in &p.layers {
                for (w, m) in layer {
                    assert_eq!(m.shape(), (4, 4));
                    if spec.is_trainable(*w) {
                        assert!(m.iter().all(|x| x.abs() <= 0.5));
                    }
                }
            }
        }
    }

    #[test]
    fn pairnorm_q_fixed() {
        let spec = ModelSpec::new(Arch::PairnormVn, 3, 3);
        let p = init_params(&spec, 0).unwrap();
        assert!(p.get(0, Weight::Q).is_none());
        for l in 1..3 {
            assert_eq!(p.get(l, Weight::Q).unwrap(), &-Mat::identity(3, 3));
        }
        let slots = p.trainable_slots(&spec);
        assert!(!slots.iter().any(|s| matches!(s, Slot::Layer(_, Weight::Q))));
    }

    #[test]
    fn embedding_identity_padded() {
        let spec = ModelSpec::new(Arch::Gcn, 1, 3).with_io(1, 1);
        let p = init_params(&spec, 0).unwrap();
        let e = p.embed.as_ref().unwrap();
        assert_eq!(e.shape(), (1, 3));
        assert_eq!(e[(0, 0)], 1.0);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::new(Arch::GpsLite, 2, 3).with_embedding(true);
        let p = init_params(&spec, 2).unwrap();
        let back = Params::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let s: ModelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(s, spec);
    }

    #[test]
    fn arch_names_parse() {
        for a in Arch::ALL {
            assert_eq!(a.name().parse::<Arch>().unwrap(), a);
        }
        assert!("transformer".parse::<Arch>().is_err());
    }

    #[test]
    fn linear_requires_identity() {
        let spec = ModelSpec::new(Arch::LinearMpnn, 2, 2).with_activation(Activation::Tanh);
        assert!(spec.validate().is_err());
    }
}
