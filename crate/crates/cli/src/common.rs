use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

use vnode::filters::{probe_inputs, PolynomialFilter, PoolingVector};
use vnode::graph::{generate, load_edge_list, GenSpec};
use vnode::nn::{init_params, read_features_csv, Activation, Arch, ModelSpec, Params};
use vnode::{Graph, Mat, Vector};

use crate::{Format, Globals};

pub const EXIT_NUMERIC: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl From<vnode::Error> for Failure {
    fn from(e: vnode::Error) -> Self {
        Failure {
            code: if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERIC },
            message: e.to_string(),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                vnode::Error::from(e).into()
            }
        })*
    };
}

via_core_error!(
    vnode::graph::GraphError,
    vnode::spectral::SpectralError,
    vnode::nn::ModelError,
    vnode::sensitivity::SensitivityError,
    vnode::filters::FilterError
);

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

/// Parses a kebab-case enum value through its serde name.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

pub fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse::<Arch>().map_err(|e| e.to_string())
}

/// A graph given as an edge-list file or as a generator such as `path:7`,
/// `grid:3x3` or `er:20:0.2`. Existing files take precedence.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct GraphSource(pub String);

impl std::str::FromStr for GraphSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(GraphSource(s.to_string()))
    }
}

impl GraphSource {
    pub fn id(&self) -> String {
        let p = Path::new(&self.0);
        if p.exists() {
            p.file_stem().map_or(self.0.clone(), |s| s.to_string_lossy().into_owned())
        } else {
            self.0.clone()
        }
    }

    pub fn load(&self, seed: u64) -> Result<Graph, Failure> {
        let path = Path::new(&self.0);
        if path.exists() {
            return load_graph_file(path);
        }
        let spec = parse_generator(&self.0, seed)
            .ok_or_else(|| Failure::input(format!("{}: no such file or generator", self.0)))?;
        Ok(generate(&spec)?)
    }
}

pub fn load_graph_file(path: &Path) -> Result<Graph, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    load_edge_list(BufReader::new(file)).map_err(|e| {
        let f = Failure::from(e);
        Failure::input(format!("{}: {}", path.display(), f.message))
    })
}

fn parse_generator(s: &str, seed: u64) -> Option<GenSpec> {
    let mut parts = s.split(':');
    let kind = parts.next()?;
    let size = parts.next()?;
    let extra = parts.next();
    if parts.next().is_some() {
        return None;
    }
    let n = || size.parse::<usize>().ok();
    let spec = match (kind, extra) {
        ("path", None) => GenSpec::path(n()?),
        ("cycle", None) => GenSpec::cycle(n()?),
        ("star", None) => GenSpec::star(n()?),
        ("complete", None) => GenSpec::complete(n()?),
        ("grid", None) => {
            let (r, c) = size.split_once('x')?;
            GenSpec::grid(r.parse().ok()?, c.parse().ok()?)
        }
        ("er", Some(p)) => GenSpec::erdos_renyi(n()?, p.parse().ok()?, seed),
        _ => return None,
    };
    Some(spec)
}

/// Model shape and weights. Weights come from `--params` or from a seeded
/// initialisation.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Architecture, e.g. gcn-vn, gatedgcn-vng, gps-lite, linear-mpnn.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Arch,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Input channels; defaults to the width.
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Output channels; defaults to the width.
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// tanh or relu; linear architectures always use the identity.
    #[arg(long, value_parser = kebab::<Activation>)]
    pub activation: Option<Activation>,
    /// Learnable input embedding even when input and width agree.
    #[arg(long)]
    pub embedding: bool,
    /// Parameter JSON; otherwise weights are drawn from the seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl ModelArgs {
    pub fn spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.arch, self.depth, self.width)
            .with_io(self.input_dim.unwrap_or(self.width), self.output_dim.unwrap_or(self.width))
            .with_embedding(self.embedding);
        if let Some(a) = self.activation {
            spec = spec.with_activation(a);
        }
        spec
    }

    pub fn build(&self, seed: u64) -> Result<(ModelSpec, Params), Failure> {
        let spec = self.spec();
        spec.validate()?;
        let params = match &self.params {
            Some(path) => {
                let p = Params::from_json(&read_text(path)?)?;
                p.check(&spec)?;
                p
            }
            None => init_params(&spec, seed)?,
        };
        Ok((spec, params))
    }
}

/// Node features from a `node_id,f_1,..` CSV, or uniform on `[-1, 1]` drawn
/// from `seed + 1` so they do not reuse the weight stream.
pub fn features(path: Option<&PathBuf>, n: usize, d: usize, seed: u64) -> Result<Mat, Failure> {
    match path {
        Some(p) => {
            let file = File::open(p).map_err(|e| io_failure(p, e))?;
            let x = read_features_csv(file, n)?;
            if x.ncols() != d {
                return Err(Failure::input(format!(
                    "{}: {} feature columns, the model expects {d}",
                    p.display(),
                    x.ncols()
                )));
            }
            Ok(x)
        }
        None => Ok(probe_inputs(n, d, 1, seed.wrapping_add(1)).remove(0)),
    }
}

pub fn read_filter(path: &Path) -> Result<PolynomialFilter, Failure> {
    PolynomialFilter::from_json(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Comma-separated pooling weights.
pub fn parse_pool(s: &str, n: usize) -> Result<PoolingVector, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::input(format!("bad pooling vector `{s}`")))?;
    if v.len() != n {
        return Err(Failure::input(format!("pooling vector has {} entries for n = {n}", v.len())));
    }
    Ok(PoolingVector::new(Vector::from_vec(v)))
}

#[derive(Serialize)]
struct Report<'a, C, R> {
    command: &'a str,
    globals: &'a Globals,
    config: &'a C,
    result: &'a R,
}

pub fn envelope<C: Serialize, R: Serialize>(
    globals: &Globals,
    command: &str,
    config: &C,
    result: &R,
) -> Result<Vec<u8>, Failure> {
    json_bytes(&Report {
        command,
        globals,
        config,
        result,
    })
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::numeric(format!("serialising report: {e}")))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Writes `bytes` to `--out` or stdout.
pub fn emit(globals: &Globals, bytes: &[u8]) -> Result<(), Failure> {
    match &globals.out {
        Some(path) => write_file(path, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::input(format!("stdout: {e}"))),
    }
}

/// Emits the JSON envelope `{command, globals, config, result}`, or the CSV
/// form when one exists and was requested.
pub fn report<C: Serialize, R: Serialize>(
    globals: &Globals,
    command: &str,
    config: &C,
    result: &R,
    csv: Option<&dyn Fn() -> String>,
) -> Result<(), Failure> {
    match (globals.format, csv) {
        (Format::Json, _) => emit(globals, &envelope(globals, command, config, result)?),
        (Format::Csv, Some(f)) => emit(globals, f().as_bytes()),
        (Format::Csv, None) => Err(Failure::input(format!("`{command}` has no csv output"))),
    }
}

pub fn csv_row<I: IntoIterator<Item = String>>(fields: I) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}
