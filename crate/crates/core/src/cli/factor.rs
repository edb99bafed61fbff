use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use toucan::io::{load_real, save_real};
use toucan::nrmse;
use toucan::tsvd::{tsvd, DEFAULT_RANK_TOL};

use super::{create, write_json, CliResult, Common};

#[derive(Debug, Args)]
pub struct TsvdArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    /// Relative threshold for nonzero singular tubes.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub tol: f64,
    /// Keep only the leading singular tubes.
    #[arg(long)]
    pub truncate: Option<usize>,
}

#[derive(Serialize)]
struct Report {
    dims: (usize, usize, usize),
    tubal_rank: usize,
    tol: f64,
    truncated_to: Option<usize>,
    /// `None` for an all-zero input.
    reconstruction_nrmse: Option<f64>,
}

pub fn run(common: &Common, a: TsvdArgs) -> CliResult<()> {
    if !(a.tol >= 0.0) {
        return Err(super::CliError::Usage("--tol must be nonnegative".into()));
    }
    let x = load_real(&a.tensor)?;
    let full = tsvd(&x)?;
    let norms = full.singular_tube_norms();
    let rank = full.tubal_rank(a.tol);
    let f = match a.truncate {
        Some(r) => full.truncate(r)?,
        None => full,
    };
    let recon = f.reconstruct()?;
    let dir = &common.out_dir;
    save_real(dir.join("u.tns"), &f.u)?;
    save_real(dir.join("s.tns"), &f.s)?;
    save_real(dir.join("v.tns"), &f.v)?;
    let mut w = create(dir, "tubes.csv")?;
    writeln!(w, "index,norm")?;
    for (i, n) in norms.iter().enumerate() {
        writeln!(w, "{i},{n:e}")?;
    }
    w.flush()?;
    let report = Report {
        dims: x.dims(),
        tubal_rank: rank,
        tol: a.tol,
        truncated_to: a.truncate,
        reconstruction_nrmse: nrmse(&recon, &x).ok(),
    };
    println!("tubal rank {rank}");
    write_json(dir, "tsvd.json", &report)
}
