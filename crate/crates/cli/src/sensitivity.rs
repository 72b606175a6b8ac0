use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use vnode::nn::{forward, init_params, Arch, ModelSpec, Params};
use vnode::sensitivity::{
    analytic_jacobian_attention, analytic_jacobian_vn, analytic_jacobian_vng, attention_column_std, attention_matrix,
    attention_to_csv, fd_attention_jacobian, fd_jacobian, homogeneity_report, mean_project_attention,
    mixing_estimate, model_function, AttentionMatrix, JacobianReport, SensitivityError, DEFAULT_FD_STEP,
};
use vnode::Mat;

use crate::common::{emit, features, report, write_file, Failure, GraphSource, ModelArgs};
use crate::{Format, Globals};

#[derive(Subcommand)]
pub enum SensitivityCommand {
    /// Jacobian block d h_i / d h_k across one or two layers.
    Jacobian(JacobianArgs),
    /// Whether the block is the same for every node beyond the local field.
    Homogeneity(HomogeneityArgs),
    /// Column standard deviation of an attention matrix.
    AttentionStd(AttentionArgs),
    /// Sampled mixing between two nodes' features in the model output.
    Mixing(MixingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct JacobianArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    graph: GraphSource,
    /// `node_id,f_1,..` feature CSV; otherwise drawn from the seed.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    i: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    /// Layers spanned by the finite-difference block; defaults to 2 for
    /// models with a virtual node state and 1 otherwise.
    #[arg(long)]
    span: Option<usize>,
    #[arg(long, value_enum, default_value_t = JacobianMode::Both)]
    method: JacobianMode,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    eps: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct HomogeneityArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    i: usize,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    /// Scores of a gps-lite layer on the given graph.
    Model,
    Uniform,
    Identity,
}

#[derive(Debug, Args, Serialize)]
pub struct AttentionArgs {
    #[arg(long, value_enum, default_value_t = MatrixKind::Model)]
    matrix: MatrixKind,
    /// Required for `--matrix model`.
    #[arg(long)]
    graph: Option<GraphSource>,
    /// Size of the reference matrices.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Write the scores as `row,col,score` CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MixingArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    i: usize,
    #[arg(long)]
    j: usize,
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
}

pub fn run(cmd: SensitivityCommand, globals: &Globals) -> Result<(), Failure> {
    match cmd {
        SensitivityCommand::Jacobian(a) => jacobian(a, globals),
        SensitivityCommand::Homogeneity(a) => {
            let (spec, params) = a.model.build(globals.seed)?;
            let g = a.graph.load(globals.seed)?;
            let x = features(a.features.as_ref(), g.n(), spec.input_dim, globals.seed)?;
            let r = homogeneity_report(&spec, &params, &g, &x, a.layer, a.i, a.eps)?;
            report(globals, "sensitivity homogeneity", &a, &r, None)
        }
        SensitivityCommand::AttentionStd(a) => attention_std(a, globals),
        SensitivityCommand::Mixing(a) => {
            let (spec, params) = a.model.build(globals.seed)?;
            let g = a.graph.load(globals.seed)?;
            let f = model_function(&spec, &params, &g);
            let r = mixing_estimate(f, g.n(), spec.input_dim, a.i, a.j, a.samples, a.eps, globals.seed)?;
            report(globals, "sensitivity mixing", &a, &r, None)
        }
    }
}

#[derive(Serialize)]
struct JacobianResult {
    graph_id: String,
    analytic: Option<JacobianReport>,
    finite_difference: Option<JacobianReport>,
    max_abs_residual: Option<f64>,
}

fn analytic_block(
    spec: &ModelSpec,
    params: &Params,
    g: &vnode::Graph,
    x: &Mat,
    a: &JacobianArgs,
) -> Result<JacobianReport, SensitivityError> {
    if spec.arch == Arch::GpsLite {
        let h = forward(spec, params, g, x)?.state(a.layer).h;
        analytic_jacobian_attention(params, a.layer, &h, a.i, a.k)
    } else if spec.arch.is_vng() {
        analytic_jacobian_vng(spec, params, g, x, a.layer, a.i, a.k)
    } else {
        analytic_jacobian_vn(spec, params, g, x, a.layer, a.i, a.k)
    }
}

fn jacobian(a: JacobianArgs, globals: &Globals) -> Result<(), Failure> {
    let (spec, params) = a.model.build(globals.seed)?;
    let g = a.graph.load(globals.seed)?;
    let x = features(a.features.as_ref(), g.n(), spec.input_dim, globals.seed)?;
    let mut analytic = match a.method {
        JacobianMode::FiniteDifference => None,
        _ => Some(analytic_block(&spec, &params, &g, &x, &a)?),
    };
    let mut fd = match a.method {
        JacobianMode::Analytic => None,
        _ if spec.arch == Arch::GpsLite => {
            let h = forward(&spec, &params, &g, &x)?.state(a.layer).h;
            Some(fd_attention_jacobian(&params, a.layer, &h, a.i, a.k, a.eps)?)
        }
        _ => {
            let span = a.span.unwrap_or(if spec.arch.has_vn_state() { 2 } else { 1 });
            Some(fd_jacobian(&spec, &params, &g, &x, a.layer, a.i, a.k, span, a.eps)?)
        }
    };
    let max_abs_residual = match (&mut analytic, &mut fd) {
        (Some(an), Some(f)) => Some(an.compare(f)),
        _ => None,
    };
    let r = JacobianResult {
        graph_id: a.graph.id(),
        analytic,
        finite_difference: fd,
        max_abs_residual,
    };
    report(globals, "sensitivity jacobian", &a, &r, None)
}

#[derive(Serialize)]
struct AttentionResult {
    n: usize,
    matrix: MatrixKind,
    column_std: f64,
    mean_projected_column_std: f64,
}

fn reference_matrix(kind: MatrixKind, n: usize) -> Result<AttentionMatrix, Failure> {
    let scores = match kind {
        MatrixKind::Uniform => Mat::from_element(n, n, 1.0 / n as f64),
        _ => Mat::identity(n, n),
    };
    Ok(AttentionMatrix::new(scores)?)
}

fn attention_std(a: AttentionArgs, globals: &Globals) -> Result<(), Failure> {
    let m = match a.matrix {
        MatrixKind::Model => {
            let source = a
                .graph
                .as_ref()
                .ok_or_else(|| Failure::input("--matrix model needs --graph"))?;
            let g = source.load(globals.seed)?;
            let spec = ModelSpec::new(Arch::GpsLite, a.depth, a.width);
            spec.validate()?;
            let params = match &a.params {
                Some(p) => {
                    let p = Params::from_json(&crate::common::read_text(p)?)?;
                    p.check(&spec)?;
                    p
                }
                None => init_params(&spec, globals.seed)?,
            };
            let x = features(a.features.as_ref(), g.n(), spec.input_dim, globals.seed)?;
            let h = forward(&spec, &params, &g, &x)?.state(a.layer).h;
            attention_matrix(&params, a.layer, &h)?
        }
        kind => {
            if a.n == 0 {
                return Err(Failure::input("--n must be positive"));
            }
            reference_matrix(kind, a.n)?
        }
    };
    let mut csv = Vec::new();
    if a.csv.is_some() || globals.format == Format::Csv {
        attention_to_csv(&m, &mut csv)?;
    }
    if let Some(path) = &a.csv {
        write_file(path, &csv)?;
    }
    if globals.format == Format::Csv {
        return emit(globals, &csv);
    }
    let r = AttentionResult {
        n: m.n(),
        matrix: a.matrix,
        column_std: attention_column_std(&m),
        mean_projected_column_std: attention_column_std(&mean_project_attention(&m)),
    };
    report(globals, "sensitivity attention-std", &a, &r, None)
}
