use std::collections::BTreeMap;

use super::model::{Activation, Arch, MeanAugment, ModelSpec, Params, Weight};
use super::tape::{Tape, Var};
use super::ModelError;
use crate::graph::Graph;
use crate::linalg::{column_means, Mat, Vector};

/// Inputs to layer `l`: node states `H^(l)`, the previous node states used by
/// the linear VN term, and the VN state (`1 x d`) of the VN architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Mat,
    pub prev_h: Option<Mat>,
    pub vn: Option<Vector>,
}

/// Everything computed by [`forward`]. Layer-indexed vectors have `depth`
/// entries except `hidden`, `vn` and `pooled`, which also hold layer 0.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden: Vec<Mat>,
    pub vn: Vec<Option<Vector>>,
    /// Argument of the node activation at each layer (the local update for
    /// VN_G and gps-lite; the full update otherwise).
    pub pre_activation: Vec<Mat>,
    pub vn_pre_activation: Vec<Option<Vector>>,
    pub local: Vec<Option<Mat>>,
    pub attention: Vec<Option<Mat>>,
    /// `Mean(H^(l))` for every layer.
    pub pooled: Vec<Vector>,
    /// `Theta~ Mean(H^(m))`.
    pub output: Vector,
}

impl ForwardTrace {
    pub fn final_hidden(&self) -> &Mat {
        self.hidden.last().expect("non-empty trace")
    }

    /// State entering layer `l`, suitable for [`forward_from`].
    pub fn state(&self, l: usize) -> LayerState {
        LayerState {
            h: self.hidden[l].clone(),
            prev_h: (l > 0).then(|| self.hidden[l - 1].clone()),
            vn: self.vn[l].clone(),
        }
    }
}

/// Graph constants placed on a tape.
pub(crate) struct TapeGraph {
    pub adj: Var,
    pub norm_adj: Var,
    pub ones: Var,
    /// `1^T / n~` for the VN aggregation.
    pub vn_mean: Var,
    /// `1^T / n`.
    pub mean: Var,
    pub recv: Var,
    pub send: Var,
}

impl TapeGraph {
    pub fn new(tape: &mut Tape, spec: &ModelSpec, g: &Graph) -> Self {
        let n = g.n();
        let deg = g.degrees();
        let a = g.adjacency();
        let norm = Mat::from_fn(n, n, |i, j| {
            if a[(i, j)] != 0.0 {
                1.0 / (deg[i] * deg[j]).sqrt()
            } else {
                0.0
            }
        });
        let directed: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| g.neighbors(i).iter().map(move |&j| (i, j)))
            .collect();
        let e = directed.len();
        let mut recv = Mat::zeros(e, n);
        let mut send = Mat::zeros(e, n);
        for (idx, &(i, j)) in directed.iter().enumerate() {
            recv[(idx, i)] = 1.0;
            send[(idx, j)] = 1.0;
        }
        let nt = spec.vn_normalizer.value(n);
        TapeGraph {
            adj: tape.leaf(a.clone()),
            norm_adj: tape.leaf(norm),
            ones: tape.leaf(Mat::from_element(n, 1, 1.0)),
            vn_mean: tape.leaf(Mat::from_element(1, n, 1.0 / nt)),
            mean: tape.leaf(Mat::from_element(1, n, 1.0 / n as f64)),
            recv: tape.leaf(recv),
            send: tape.leaf(send),
        }
    }
}

/// Parameters placed on a tape.
pub(crate) struct TapeParams {
    pub embed: Option<Var>,
    pub layers: Vec<BTreeMap<Weight, Var>>,
    pub readout: Var,
}

impl TapeParams {
    pub fn new(tape: &mut Tape, params: &Params) -> Self {
        TapeParams {
            embed: params.embed.as_ref().map(|m| tape.leaf(m.clone())),
            layers: params
                .layers
                .iter()
                .map(|l| l.iter().map(|(w, m)| (*w, tape.leaf(m.clone()))).collect())
                .collect(),
            readout: tape.leaf(params.readout.clone()),
        }
    }

    fn get(&self, l: usize, w: Weight) -> Result<Var, ModelError> {
        self.layers[l]
            .get(&w)
            .copied()
            .ok_or(ModelError::MissingWeight { layer: l, weight: w })
    }
}

pub(crate) struct TapeState {
    pub h: Var,
    pub prev: Option<Var>,
    pub vn: Option<Var>,
}

pub(crate) struct LayerRecord {
    pub pre: Var,
    pub vn_pre: Option<Var>,
    pub local: Option<Var>,
    pub attention: Option<Var>,
}

fn activate(tape: &mut Tape, act: Activation, x: Var) -> Var {
    match act {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
        Activation::Identity => x,
    }
}

/// `H M^T`, the row form of applying `M` to every column feature.
fn apply_cols(tape: &mut Tape, h: Var, m: Var) -> Var {
    let mt = tape.transpose(m);
    tape.matmul(h, mt)
}

/// Local pre-activation `Omega h_i + sum_j psi_ij` in row form.
fn local_pre(
    tape: &mut Tape,
    spec: &ModelSpec,
    tp: &TapeParams,
    tg: &TapeGraph,
    l: usize,
    h: Var,
) -> Result<Var, ModelError> {
    let omega = tp.get(l, Weight::Omega)?;
    let self_term = apply_cols(tape, h, omega);
    let messages = if spec.arch.is_gated() {
        let w1 = tp.get(l, Weight::W1)?;
        let w2 = tp.get(l, Weight::W2)?;
        let w3 = tp.get(l, Weight::W3)?;
        let p = apply_cols(tape, h, w2);
        let q = apply_cols(tape, h, w3);
        let v = apply_cols(tape, h, w1);
        let pe = tape.matmul(tg.recv, p);
        let qe = tape.matmul(tg.send, q);
        let ve = tape.matmul(tg.send, v);
        let logits = tape.add(pe, qe);
        let gate = tape.sigmoid(logits);
        let msg = tape.hadamard(gate, ve);
        let recv_t = tape.transpose(tg.recv);
        tape.matmul(recv_t, msg)
    } else {
        let w = tp.get(l, Weight::W)?;
        let hw = apply_cols(tape, h, w);
        tape.matmul(tg.norm_adj, hw)
    };
    Ok(tape.add(self_term, messages))
}

pub(crate) fn layer_on_tape(
    tape: &mut Tape,
    spec: &ModelSpec,
    tp: &TapeParams,
    tg: &TapeGraph,
    l: usize,
    state: &TapeState,
) -> Result<(TapeState, LayerRecord), ModelError> {
    let act = spec.effective_activation();
    let h = state.h;
    let mut record = LayerRecord {
        pre: h,
        vn_pre: None,
        local: None,
        attention: None,
    };
    let mut vn_next = None;
    let out = match spec.arch {
        Arch::LinearMpnn | Arch::LinearMpnnVn | Arch::PairnormVn => {
            let w = tp.get(l, Weight::W)?;
            let ah = tape.matmul(tg.adj, h);
            let ahw = tape.matmul(ah, w);
            let mut out = tape.add(h, ahw);
            if let (Some(prev), Some(q)) = (state.prev, tp.layers[l].get(&Weight::Q)) {
                let m = tape.matmul(tg.vn_mean, prev);
                let jm = tape.matmul(tg.ones, m);
                let jq = tape.matmul(jm, *q);
                out = tape.add(out, jq);
            }
            record.pre = out;
            out
        }
        Arch::Gcn | Arch::Gatedgcn => {
            let z = local_pre(tape, spec, tp, tg, l, h)?;
            record.pre = z;
            activate(tape, act, z)
        }
        Arch::GcnVn | Arch::GatedgcnVn => {
            let local = local_pre(tape, spec, tp, tg, l, h)?;
            let vn = state.vn.ok_or_else(|| ModelError::InvalidSpec("missing VN state".into()))?;
            let broadcast = tape.matmul(tg.ones, vn);
            let z = tape.add(local, broadcast);
            record.pre = z;
            let omega_vn = tp.get(l, Weight::OmegaVn)?;
            let w_vn = tp.get(l, Weight::WVn)?;
            let agg = tape.matmul(tg.vn_mean, h);
            let a = apply_cols(tape, vn, omega_vn);
            let b = apply_cols(tape, agg, w_vn);
            let z_vn = tape.add(a, b);
            record.vn_pre = Some(z_vn);
            vn_next = Some(activate(tape, act, z_vn));
            activate(tape, act, z)
        }
        Arch::GcnVng | Arch::GatedgcnVng => {
            let z = local_pre(tape, spec, tp, tg, l, h)?;
            record.pre = z;
            let local = activate(tape, act, z);
            record.local = Some(local);
            let q = tp.get(l, Weight::Q)?;
            let agg = tape.matmul(tg.vn_mean, local);
            let global = apply_cols(tape, agg, q);
            let broadcast = tape.matmul(tg.ones, global);
            tape.add(local, broadcast)
        }
        Arch::GpsLite => {
            let z = local_pre(tape, spec, tp, tg, l, h)?;
            record.pre = z;
            let local = activate(tape, act, z);
            record.local = Some(local);
            let wq = tp.get(l, Weight::WQ)?;
            let wk = tp.get(l, Weight::WK)?;
            let wv = tp.get(l, Weight::WV)?;
            let qh = tape.matmul(h, wq);
            let kh = tape.matmul(h, wk);
            let kt = tape.transpose(kh);
            let logits = tape.matmul(qh, kt);
            let scaled = tape.scale(logits, 1.0 / (spec.width as f64).sqrt());
            let att = tape.softmax_rows(scaled);
            record.attention = Some(att);
            let vh = tape.matmul(h, wv);
            let mixed = tape.matmul(att, vh);
            let x = tape.add(local, mixed);
            let f = tp.get(l, Weight::F)?;
            let fx = apply_cols(tape, x, f);
            let fa = activate(tape, act, fx);
            tape.add(x, fa)
        }
    };
    let out = match spec.mean_augment {
        MeanAugment::None => out,
        mode => {
            let m = tape.matmul(tg.mean, out);
            let jm = tape.matmul(tg.ones, m);
            if mode == MeanAugment::Add {
                tape.add(out, jm)
            } else {
                tape.sub(out, jm)
            }
        }
    };
    Ok((
        TapeState {
            h: out,
            prev: Some(h),
            vn: vn_next,
        },
        record,
    ))
}

fn check_inputs(spec: &ModelSpec, g: &Graph, rows: usize, cols: usize, expected_cols: usize) -> Result<(), ModelError> {
    spec.validate()?;
    if g.has_vn() {
        return Err(ModelError::InvalidSpec(
            "models add their own virtual node; pass the simple graph".into(),
        ));
    }
    if rows != g.n() || cols != expected_cols {
        return Err(ModelError::Shape {
            what: "features".into(),
            expected: (g.n(), expected_cols),
            got: (rows, cols),
        });
    }
    Ok(())
}

/// Runs every layer, recording the intermediate states.
pub fn forward(spec: &ModelSpec, params: &Params, g: &Graph, x: &Mat) -> Result<ForwardTrace, ModelError> {
    check_inputs(spec, g, x.nrows(), x.ncols(), spec.input_dim)?;
    params.check(spec)?;
    let mut tape = Tape::new();
    let tg = TapeGraph::new(&mut tape, spec, g);
    let tp = TapeParams::new(&mut tape, params);
    let state = initial_tape_state(&mut tape, spec, &tp, x);
    let (states, records) = run_layers(&mut tape, spec, &tp, &tg, 0, spec.depth, state)?;
    let vec_of = |tape: &Tape, v: Var| Vector::from_iterator(tape.value(v).len(), tape.value(v).iter().copied());
    let hidden: Vec<Mat> = states.iter().map(|s| tape.value(s.h).clone()).collect();
    let pooled: Vec<Vector> = hidden.iter().map(column_means).collect();
    let output = &params.readout * pooled.last().expect("depth >= 1");
    Ok(ForwardTrace {
        vn: states.iter().map(|s| s.vn.map(|v| vec_of(&tape, v))).collect(),
        pre_activation: records.iter().map(|r| tape.value(r.pre).clone()).collect(),
        vn_pre_activation: records.iter().map(|r| r.vn_pre.map(|v| vec_of(&tape, v))).collect(),
        local: records.iter().map(|r| r.local.map(|v| tape.value(v).clone())).collect(),
        attention: records
            .iter()
            .map(|r| r.attention.map(|v| tape.value(v).clone()))
            .collect(),
        hidden,
        pooled,
        output,
    })
}

pub(crate) fn initial_tape_state(tape: &mut Tape, spec: &ModelSpec, tp: &TapeParams, x: &Mat) -> TapeState {
    let xv = tape.leaf(x.clone());
    let h = match tp.embed {
        Some(e) => tape.matmul(xv, e),
        None => xv,
    };
    let vn = spec
        .arch
        .has_vn_state()
        .then(|| tape.leaf(Mat::zeros(1, spec.width)));
    TapeState { h, prev: None, vn }
}

pub(crate) fn run_layers(
    tape: &mut Tape,
    spec: &ModelSpec,
    tp: &TapeParams,
    tg: &TapeGraph,
    from: usize,
    to: usize,
    state: TapeState,
) -> Result<(Vec<TapeState>, Vec<LayerRecord>), ModelError> {
    let mut states = vec![state];
    let mut records = Vec::new();
    for l in from..to {
        let (next, rec) = layer_on_tape(tape, spec, tp, tg, l, states.last().expect("state"))?;
        states.push(next);
        records.push(rec);
    }
    Ok((states, records))
}

/// Runs layers `from .. from + span` starting from an explicit state and
/// returns the node states after each of them.
pub fn forward_from(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    from: usize,
    span: usize,
    state: &LayerState,
) -> Result<Vec<Mat>, ModelError> {
    check_inputs(spec, g, state.h.nrows(), state.h.ncols(), spec.width)?;
    params.check(spec)?;
    if from + span > spec.depth {
        return Err(ModelError::InvalidSpec(format!(
            "layers {from}..{} exceed depth {}",
            from + span,
            spec.depth
        )));
    }
    let mut tape = Tape::new();
    let tg = TapeGraph::new(&mut tape, spec, g);
    let tp = TapeParams::new(&mut tape, params);
    let h = tape.leaf(state.h.clone());
    let prev = state.prev_h.as_ref().map(|m| tape.leaf(m.clone()));
    let vn = match (&state.vn, spec.arch.has_vn_state()) {
        (Some(v), true) => Some(tape.leaf(Mat::from_row_slice(1, v.len(), v.as_slice()))),
        (None, true) => Some(tape.leaf(Mat::zeros(1, spec.width))),
        _ => None,
    };
    let (states, _) = run_layers(&mut tape, spec, &tp, &tg, from, from + span, TapeState { h, prev, vn })?;
    Ok(states[1..].iter().map(|s| tape.value(s.h).clone()).collect())
}
