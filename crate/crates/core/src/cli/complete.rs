use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use toucan::io::{load_real, save_complex, save_real};
use toucan::metrics::{write_metrics_csv, MetricRecord};
use toucan::synth::read_masks_csv;
use toucan::toucan::{run_batch_with, BatchOptions, CheckpointMeta, SliceOrder};
use toucan::{nrmse, FsmEstimate, MaskKind, SampleMask, Tensor3};

use super::gen::KindArg;
use super::{create, opt, positive, write_json, CgdArgs, CliError, CliResult, Common};

#[derive(Debug, Args)]
pub struct CompleteArgs {
    /// Input tensor (TNS1); only observed entries are read.
    #[arg(long)]
    pub tensor: PathBuf,
    /// Mask CSV with one mask per lateral slice.
    #[arg(long)]
    pub mask: PathBuf,
    /// Ground truth used for NRMSE and the early stop.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub rank: usize,
    /// Solver variant; defaults to the kind of the mask.
    #[arg(long, value_enum)]
    pub variant: Option<KindArg>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub passes: u64,
    /// Stop once a pass reaches this NRMSE against the reference.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    pub threshold: f64,
    /// Visit slices in a fresh random order every pass.
    #[arg(long)]
    pub shuffle: bool,
    /// Record wall-clock times (makes outputs non-reproducible).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub cgd: CgdArgs,
}

#[derive(Serialize)]
struct Summary {
    dims: (usize, usize, usize),
    rank: usize,
    variant: MaskKind,
    passes_run: usize,
    steps: u64,
    final_nrmse: Option<f64>,
    converged: Option<bool>,
    orthonormality_deviation: f64,
    wall_time: Option<f64>,
}

fn observed_nrmse(slice: &Tensor3, imputed: &Tensor3, mask: &SampleMask) -> f64 {
    let obs = mask.indicator();
    let (mut num, mut den) = (0.0, 0.0);
    for ((&v, &p), o) in slice.as_slice().iter().zip(imputed.as_slice()).zip(obs) {
        if o {
            num += (v - p) * (v - p);
            den += v * v;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

pub fn run(common: &Common, a: CompleteArgs) -> CliResult<()> {
    let data = load_real(&a.tensor)?;
    let (n1, n2, n3) = data.dims();
    let mut masks = read_masks_csv(BufReader::new(File::open(&a.mask)?), n2)?;
    if masks.first().map(|m| m.dims()) != Some((n1, n3)) {
        return Err(CliError::Usage(format!("mask shape does not match tensor {:?}", data.dims())));
    }
    let mask_kind = masks[0].kind();
    let variant = a.variant.map(MaskKind::from).unwrap_or(mask_kind);
    match (variant, mask_kind) {
        (MaskKind::Tubes, MaskKind::Entries) => {
            return Err(CliError::Usage("--variant tubes needs a tube mask".into()));
        }
        (MaskKind::Entries, MaskKind::Tubes) => {
            masks = masks.iter().map(SampleMask::to_entries).collect();
        }
        _ => {}
    }
    let reference = a.reference.as_ref().map(load_real).transpose()?;
    if let Some(r) = &reference {
        if r.dims() != data.dims() {
            return Err(CliError::Usage("reference shape does not match the tensor".into()));
        }
    }
    let u0 = FsmEstimate::random(n1, a.rank, n3, common.seed)?;
    let opts = BatchOptions {
        passes: a.passes as usize,
        cgd: a.cgd.config(),
        order: if a.shuffle {
            SliceOrder::Shuffled(common.seed)
        } else {
            SliceOrder::Fixed
        },
        threshold: reference.as_ref().map(|_| a.threshold),
    };
    let mut records = Vec::new();
    let start = std::time::Instant::now();
    let run = run_batch_with(u0, &data, &masks, &opts, reference.as_ref(), |_, j, out| {
        let e = match &reference {
            Some(r) => nrmse(&out.imputed, &r.lateral(j)).unwrap_or_else(|_| out.imputed.frobenius_norm()),
            None => observed_nrmse(&data.lateral(j), &out.imputed, &masks[j]),
        };
        let mut rec = MetricRecord::new(out.report.t, e);
        rec.cg_iters = out.report.cg_iters;
        rec.wall_ms = a.timing.then_some(out.report.wall_time * 1e3);
        records.push(rec);
        Ok(())
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    let dir = &common.out_dir;
    save_real(dir.join("imputed.tns"), &run.completed)?;
    save_complex(dir.join("fsm.tns"), &run.fsm.to_checkpoint())?;
    write_json(
        dir,
        "fsm.json",
        &CheckpointMeta {
            n3,
            r: a.rank,
            step_count: run.steps,
            seed: common.seed,
        },
    )?;
    let mut w = create(dir, "metrics.csv")?;
    write_metrics_csv(&mut w, &records)?;
    w.flush()?;
    let mut w = create(dir, "passes.csv")?;
    writeln!(w, "pass,nrmse,mean_cg,wall_s")?;
    for p in &run.passes {
        writeln!(
            w,
            "{},{},{:e},{}",
            p.pass,
            opt(p.nrmse),
            p.mean_cg,
            opt(a.timing.then_some(p.wall_time))
        )?;
    }
    w.flush()?;
    write_json(
        dir,
        "summary.json",
        &Summary {
            dims: (n1, n2, n3),
            rank: a.rank,
            variant,
            passes_run: run.passes.len(),
            steps: run.steps,
            final_nrmse: run.final_nrmse,
            converged: run.final_nrmse.map(|e| e <= a.threshold),
            orthonormality_deviation: run.fsm.orthonormality_deviation(),
            wall_time: a.timing.then_some(elapsed),
        },
    )?;
    if let Some(e) = run.final_nrmse {
        println!("passes {} final nrmse {e:.3e}", run.passes.len());
    }
    Ok(())
}
