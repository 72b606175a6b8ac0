use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use vnode::graph::{generate, write_edge_list, GenKind, GenSpec};

use crate::common::{emit, envelope, load_graph_file, report, write_file, Failure};
use crate::Globals;

#[derive(Subcommand)]
pub enum GraphCommand {
    /// Generate a graph and write its edge list.
    Gen(GenArgs),
    /// Load an edge list and print its summary.
    Load(LoadArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Path,
    Cycle,
    Star,
    Complete,
    Grid,
    Er,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Node count; grids use `--rows` and `--cols`.
    #[arg(long, default_value_t = 0)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    cols: usize,
    /// Edge probability for `er`.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LoadArgs {
    path: PathBuf,
}

pub fn run(cmd: GraphCommand, globals: &Globals) -> Result<(), Failure> {
    match cmd {
        GraphCommand::Gen(a) => gen(a, globals),
        GraphCommand::Load(a) => {
            let g = load_graph_file(&a.path)?;
            let id = a.path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            report(globals, "graph load", &a, &g.summary(&id), None)
        }
    }
}

fn gen(a: GenArgs, globals: &Globals) -> Result<(), Failure> {
    let spec = GenSpec {
        kind: match a.kind {
            KindArg::Path => GenKind::Path,
            KindArg::Cycle => GenKind::Cycle,
            KindArg::Star => GenKind::Star,
            KindArg::Complete => GenKind::Complete,
            KindArg::Grid => GenKind::Grid,
            KindArg::Er => GenKind::ErdosRenyi,
        },
        n: a.n,
        rows: a.rows,
        cols: a.cols,
        p: a.p,
        seed: globals.seed,
    };
    let g = generate(&spec)?;
    let mut edges = Vec::new();
    write_edge_list(&g, &mut edges).map_err(|e| Failure::numeric(e.to_string()))?;
    emit(globals, &edges)?;
    if let Some(path) = &a.summary {
        let id = format!("{:?}", a.kind).to_lowercase();
        write_file(path, &envelope(globals, "graph gen", &a, &g.summary(&id))?)?;
    }
    Ok(())
}
