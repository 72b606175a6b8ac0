use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use vnode::filters::{
    construct_vn_weights, det_constraint_check, embedding_target_reachability, extract_filter, fit_filter,
    fourier_pooling_profile, v_pool_extract, DetReport, FitInit, FitMethod, PolynomialFilter, PoolingVector,
    Reachability, VPoolFilter, DEFAULT_PROBES,
};
use vnode::nn::{Arch, ModelSpec, Params, TrainConfig};

use crate::common::{csv_row, features, kebab, parse_arch, parse_pool, read_filter, report, write_file, Failure, GraphSource, ModelArgs};
use crate::Globals;

#[derive(Subcommand)]
pub enum FiltersCommand {
    /// Polynomial filter computed by a linear model.
    Extract(ExtractArgs),
    /// linear-mpnn-vn weights realising a degree-2 target filter.
    Construct(ConstructArgs),
    /// Fit a linear model to a target filter on random probes.
    Fit(FitArgs),
    /// Pooled filter output split over the adjacency eigenbasis.
    Fourier(FourierArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated pooling vector; extraction then splits into the
    /// v-pooled terms and a mean-pooled remainder.
    #[arg(long)]
    pool: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    /// Target filter JSON `{degree, theta}`.
    #[arg(long)]
    target: PathBuf,
    /// Also write the parameters alone here.
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Random,
    /// Weights from `filters construct`; linear-mpnn-vn only.
    Constructive,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Arch,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "path:5")]
    graph: GraphSource,
    #[arg(long, default_value_t = DEFAULT_PROBES)]
    probes: usize,
    /// Seed of the probe inputs; defaults to `--seed`.
    #[arg(long)]
    probe_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = InitKind::Random)]
    init: InitKind,
    /// levenberg-marquardt or gradient-descent.
    #[arg(long, value_parser = kebab::<FitMethod>, default_value = "levenberg-marquardt")]
    method: FitMethod,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Gradient-descent step size.
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FourierArgs {
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    target: PathBuf,
    /// Comma-separated pooling vector; defaults to mean pooling.
    #[arg(long)]
    pool: Option<String>,
    #[arg(long)]
    features: Option<PathBuf>,
}

pub fn run(cmd: FiltersCommand, globals: &Globals) -> Result<(), Failure> {
    match cmd {
        FiltersCommand::Extract(a) => extract(a, globals),
        FiltersCommand::Construct(a) => construct(a, globals),
        FiltersCommand::Fit(a) => fit(a, globals),
        FiltersCommand::Fourier(a) => fourier(a, globals),
    }
}

#[derive(Serialize)]
struct ExtractResult {
    spec: ModelSpec,
    filter: PolynomialFilter,
    v_pool: Option<VPoolFilter>,
    determinant: Option<DetReport>,
}

fn extract(a: ExtractArgs, globals: &Globals) -> Result<(), Failure> {
    let (spec, params) = a.model.build(globals.seed)?;
    let filter = extract_filter(&spec, &params)?;
    let v_pool = match &a.pool {
        Some(s) => {
            let v = parse_pool(s, s.split(',').count())?;
            Some(v_pool_extract(&spec, &params, &v)?)
        }
        None => None,
    };
    let determinant = (spec.arch == Arch::LinearMpnn && spec.depth == 2 && params.embed.is_some())
        .then(|| det_constraint_check(&spec, &params))
        .transpose()?;
    let r = ExtractResult {
        spec,
        filter,
        v_pool,
        determinant,
    };
    report(globals, "filters extract", &a, &r, None)
}

#[derive(Serialize)]
struct ConstructResult {
    spec: ModelSpec,
    params: Params,
    extracted: PolynomialFilter,
    max_abs_error: f64,
}

fn construct(a: ConstructArgs, globals: &Globals) -> Result<(), Failure> {
    let target = read_filter(&a.target)?;
    let (spec, params) = construct_vn_weights(&target)?;
    let extracted = extract_filter(&spec, &params)?;
    if let Some(path) = &a.params_out {
        write_file(path, params.to_json().as_bytes())?;
    }
    let r = ConstructResult {
        max_abs_error: extracted.max_abs_diff(&target),
        spec,
        params,
        extracted,
    };
    report(globals, "filters construct", &a, &r, None)
}

#[derive(Serialize)]
struct FitResult {
    graph_id: String,
    #[serde(flatten)]
    fit: vnode::filters::FitReport,
    reachability: Option<Reachability>,
}

fn fit(a: FitArgs, globals: &Globals) -> Result<(), Failure> {
    let target = read_filter(&a.target)?;
    let g = a.graph.load(globals.seed)?;
    let init = match a.init {
        InitKind::Random => FitInit::Random { seed: globals.seed },
        InitKind::Constructive => FitInit::Constructive,
    };
    let cfg = TrainConfig {
        steps: a.steps,
        step_size: a.step_size,
        seed: globals.seed,
        ..TrainConfig::default()
    };
    let probe_seed = a.probe_seed.unwrap_or(globals.seed);
    let fit = fit_filter(a.arch, &target, &g, a.probes, probe_seed, init, a.method, &cfg)?;
    let r = FitResult {
        graph_id: a.graph.id(),
        fit,
        reachability: embedding_target_reachability(&target).ok(),
    };
    report(globals, "filters fit", &a, &r, None)
}

fn fourier(a: FourierArgs, globals: &Globals) -> Result<(), Failure> {
    let target = read_filter(&a.target)?;
    let g = a.graph.load(globals.seed)?;
    let v = match &a.pool {
        Some(s) => parse_pool(s, g.n())?,
        None => PoolingVector::mean(g.n()),
    };
    let x = features(a.features.as_ref(), g.n(), target.in_dim(), globals.seed)?;
    let r = fourier_pooling_profile(&g, &v, &x, &target)?;
    let csv = || {
        let out = target.out_dim();
        let mut header = vec!["eigenvalue".to_string(), "coefficient".to_string()];
        header.extend((0..out).map(|c| format!("contribution_{c}")));
        let mut s = csv_row(header);
        for m in &r.modes {
            let mut row = vec![m.eigenvalue.to_string(), m.coefficient.to_string()];
            row.extend(m.contribution.iter().map(f64::to_string));
            s += &csv_row(row);
        }
        s
    };
    report(globals, "filters fourier", &a, &r, Some(&csv))
}
