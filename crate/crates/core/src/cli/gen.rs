use std::io::Write;

use clap::{Args, ValueEnum};
use serde::Serialize;
use toucan::io::save_real;
use toucan::synth::{gen_cp, gen_low_tubal_rank, write_masks_csv, MaskSampler, Sampling};
use toucan::MaskKind;

use super::{create, rate, write_json, CliResult, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// t-product of two Gaussian factors.
    Tsvd,
    /// Sum of rank-one outer products.
    Cp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Entries,
    Tubes,
}

impl From<KindArg> for MaskKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Entries => MaskKind::Entries,
            KindArg::Tubes => MaskKind::Tubes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Bernoulli,
    Uniform,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long)]
    pub n3: usize,
    #[arg(long)]
    pub rank: usize,
    /// Fraction of entries (or tubes) observed.
    #[arg(long, value_parser = rate)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "entries")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "tsvd")]
    pub model: Model,
    #[arg(long, value_enum, default_value = "bernoulli")]
    pub sampling: SamplingArg,
}

#[derive(Serialize)]
struct GenSpec {
    n1: usize,
    n2: usize,
    n3: usize,
    rank: usize,
    sample_rate: f64,
    kind: MaskKind,
    model: Model,
    sampling: Sampling,
    seed: u64,
    observed: usize,
}

pub fn run(common: &Common, a: GenArgs) -> CliResult<()> {
    if a.n1 == 0 || a.n2 == 0 || a.n3 == 0 {
        return Err(super::CliError::Usage("dimensions must be positive".into()));
    }
    let x = match a.model {
        Model::Tsvd => gen_low_tubal_rank(a.n1, a.n2, a.n3, a.rank, common.seed)?,
        Model::Cp => gen_cp(a.n1, a.n2, a.n3, a.rank, common.seed)?,
    };
    let sampling = match a.sampling {
        SamplingArg::Bernoulli => Sampling::Bernoulli,
        SamplingArg::Uniform => Sampling::Uniform,
    };
    let kind = MaskKind::from(a.kind);
    let mut sampler = MaskSampler::new(a.n1, a.n3, kind, a.rate, common.seed)?.with_sampling(sampling);
    let masks: Vec<_> = (0..a.n2).map(|_| sampler.next_mask()).collect();
    let dir = &common.out_dir;
    save_real(dir.join("tensor.tns"), &x)?;
    let mut w = create(dir, "mask.csv")?;
    write_masks_csv(&mut w, &masks)?;
    w.flush()?;
    write_json(
        dir,
        "spec.json",
        &GenSpec {
            n1: a.n1,
            n2: a.n2,
            n3: a.n3,
            rank: a.rank,
            sample_rate: a.rate,
            kind,
            model: a.model,
            sampling,
            seed: common.seed,
            observed: masks.iter().map(|m| m.entry_count()).sum(),
        },
    )
}
