use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use vnode::spectral::{
    commute_time, histogram, laplacian_spectrum, mc_commute_time, spectrum_report, vn_depth_lower_bound,
    vn_effect_report, walk_commute_time, CommuteReport, DepthBound, HistogramBin, VnEffectReport,
};

use crate::common::{csv_row, report, write_file, Failure, GraphSource};
use crate::Globals;

#[derive(Subcommand)]
pub enum SpectralCommand {
    /// Commute time between two nodes, with the virtual-node change.
    Commute(CommuteArgs),
    /// Average change in commute time from adding a virtual node, per graph.
    VnEffect(VnEffectArgs),
    /// Laplacian spectrum and the predicted augmented spectrum.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CommuteArgs {
    /// Edge-list file or generator (`path:7`, `grid:3x3`, `er:20:0.2`, ...).
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    i: usize,
    #[arg(long)]
    j: usize,
    /// Work on the graph with a virtual node attached.
    #[arg(long)]
    augment: bool,
    /// Also estimate by this many simulated round trips.
    #[arg(long)]
    walks: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct VnEffectArgs {
    /// Edge-list files or generators.
    graphs: Vec<GraphSource>,
    /// Directory whose `*.edges` files are added in name order.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Write the histogram of per-graph averages here as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Include every pair's delta.
    #[arg(long)]
    pairs: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    augment: bool,
}

pub fn run(cmd: SpectralCommand, globals: &Globals) -> Result<(), Failure> {
    match cmd {
        SpectralCommand::Commute(a) => commute(a, globals),
        SpectralCommand::VnEffect(a) => vn_effect(a, globals),
        SpectralCommand::Spectrum(a) => {
            let mut g = a.graph.load(globals.seed)?;
            if a.augment {
                g = g.augment_with_vn()?;
            }
            let r = spectrum_report(&g, &a.graph.id())?;
            let csv = || {
                let mut s = csv_row(["index".into(), "eigenvalue".into()]);
                for (k, l) in r.laplacian_eigenvalues.iter().enumerate() {
                    s += &csv_row([k.to_string(), l.to_string()]);
                }
                s
            };
            report(globals, "spectral spectrum", &a, &r, Some(&csv))
        }
    }
}

#[derive(Serialize)]
struct CommuteResult {
    graph_id: String,
    #[serde(flatten)]
    commute: CommuteReport,
    /// Degree-volume commute time, the quantity the simulation estimates.
    walk_commute_time: Option<f64>,
    vn: Option<DepthBound>,
}

fn commute(a: CommuteArgs, globals: &Globals) -> Result<(), Failure> {
    let mut g = a.graph.load(globals.seed)?;
    if a.augment {
        g = g.augment_with_vn()?;
    }
    if a.i >= g.n() || a.j >= g.n() {
        return Err(Failure::input(format!("nodes ({}, {}) out of range for n = {}", a.i, a.j, g.n())));
    }
    let spec = laplacian_spectrum(&g)?;
    spec.require_connected()?;
    let mut c = commute_time(&g, &spec, a.i, a.j)?;
    let mut walk = None;
    if let Some(walks) = a.walks {
        c.monte_carlo = Some(mc_commute_time(&g, a.i, a.j, walks, globals.seed));
        walk = Some(walk_commute_time(&g, &spec, a.i, a.j)?);
    }
    let vn = if g.has_vn() {
        None
    } else {
        Some(vn_depth_lower_bound(&g, &spec, a.i, a.j)?)
    };
    let r = CommuteResult {
        graph_id: a.graph.id(),
        commute: c,
        walk_commute_time: walk,
        vn,
    };
    report(globals, "spectral commute", &a, &r, None)
}

#[derive(Serialize)]
struct CorpusResult {
    graphs: Vec<VnEffectReport>,
    mean_avg_delta: f64,
    negative_fraction: f64,
    histogram: Vec<HistogramBin>,
}

fn corpus_files(dir: &PathBuf) -> Result<Vec<GraphSource>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "edges"))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .map(|p| GraphSource(p.to_string_lossy().into_owned()))
        .collect())
}

fn vn_effect(a: VnEffectArgs, globals: &Globals) -> Result<(), Failure> {
    let mut sources = a.graphs.clone();
    if let Some(dir) = &a.corpus {
        sources.extend(corpus_files(dir)?);
    }
    if sources.is_empty() {
        return Err(Failure::input("no graphs given"));
    }
    let reports: Vec<VnEffectReport> = sources
        .par_iter()
        .map(|s| {
            let g = s.load(globals.seed)?;
            let id = s.id();
            if !g.is_connected() {
                return Err(Failure::input(format!("graph `{id}` is disconnected")));
            }
            let spec = laplacian_spectrum(&g)?;
            Ok(vn_effect_report(&g, &spec, &id, a.pairs)?)
        })
        .collect::<Result<_, Failure>>()?;
    let values: Vec<f64> = reports.iter().map(|r| r.avg_delta).collect();
    let hist = histogram(&values, a.bins);
    let hist_csv = || {
        let mut s = csv_row(["bin_lo".into(), "bin_hi".into(), "count".into()]);
        for b in &hist {
            s += &csv_row([b.bin_lo.to_string(), b.bin_hi.to_string(), b.count.to_string()]);
        }
        s
    };
    if let Some(path) = &a.histogram {
        write_file(path, hist_csv().as_bytes())?;
    }
    let r = CorpusResult {
        mean_avg_delta: values.iter().sum::<f64>() / values.len() as f64,
        negative_fraction: values.iter().filter(|v| **v < 0.0).count() as f64 / values.len() as f64,
        histogram: hist.clone(),
        graphs: reports,
    };
    let table = || {
        let mut s = csv_row(["graph_id", "n", "edge_count", "avg_delta", "alpha", "lower", "upper"].map(String::from));
        for g in &r.graphs {
            s += &csv_row([
                g.graph_id.clone(),
                g.n.to_string(),
                g.edge_count.to_string(),
                g.avg_delta.to_string(),
                g.alpha.to_string(),
                g.bounds.lower.to_string(),
                g.bounds.upper.to_string(),
            ]);
        }
        s
    };
    report(globals, "spectral vn-effect", &a, &r, Some(&table))
}
