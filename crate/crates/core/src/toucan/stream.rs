use std::time::Instant;

use rand::seq::SliceRandom;

use super::cgd::{check_mask, cg_solve, rhs_with, zero_weights, SampledGram};
use super::gradient::predict;
use super::step::{StepOutput, StepReport, Tracker};
use super::{CgdConfig, FsmEstimate};
use crate::metrics::nrmse;
use crate::par;
use crate::synth::rng::{self, STREAM_ORDER};
use crate::synth::{MaskKind, SampleMask};
use crate::tensor::{Tensor3, TubeFft};
use crate::{Error, Result};

/// Order in which batch mode visits the lateral slices within a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SliceOrder {
    #[default]
    Fixed,
    /// Fresh permutation every pass, drawn from the given seed.
    Shuffled(u64),
}

/// Result of a single pass over a stream.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub fsm: FsmEstimate,
    pub reports: Vec<StepReport>,
}

/// Processes `(slice, mask)` pairs in order, one step each.
///
/// Only the basis and the current weight slice are held; `sink` sees every
/// step output (including the imputed slice) together with the updated
/// basis and decides what to keep.
pub fn run_stream<I, F>(u0: FsmEstimate, stream: I, cfg: &CgdConfig, mut sink: F) -> Result<StreamRun>
where
    I: IntoIterator<Item = Result<(Tensor3, SampleMask)>>,
    F: FnMut(&StepOutput, &FsmEstimate) -> Result<()>,
{
    let mut tracker = Tracker::new(u0, *cfg)?;
    let mut reports = Vec::new();
    for item in stream {
        let (v, mask) = item?;
        let out = tracker.step(&v, &mask)?;
        sink(&out, tracker.fsm())?;
        reports.push(out.report);
    }
    Ok(StreamRun {
        fsm: tracker.into_fsm(),
        reports,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub passes: usize,
    pub cgd: CgdConfig,
    pub order: SliceOrder,
    /// Stop once the streaming NRMSE of a pass against the reference is at
    /// or below this value.
    pub threshold: Option<f64>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            passes: 1,
            cgd: CgdConfig::default(),
            order: SliceOrder::Fixed,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassSummary {
    pub pass: usize,
    /// Streaming imputation of this pass against the reference.
    pub nrmse: Option<f64>,
    pub mean_cg: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct BatchRun {
    pub fsm: FsmEstimate,
    /// Every slice re-fitted against the final basis.
    pub completed: Tensor3,
    pub passes: Vec<PassSummary>,
    /// NRMSE of `completed` against the reference.
    pub final_nrmse: Option<f64>,
    pub steps: u64,
}

impl BatchRun {
    pub fn converged(&self, threshold: f64) -> bool {
        self.final_nrmse.is_some_and(|e| e <= threshold)
    }
}

fn check_batch(u: &FsmEstimate, data: &Tensor3, masks: &[SampleMask]) -> Result<()> {
    let (n1, n2, n3) = data.dims();
    if n1 != u.n1() || n3 != u.n3() || masks.len() != n2 {
        return Err(Error::DimensionMismatch(format!(
            "data {:?} with {} masks for an {}x{}x{} basis",
            data.dims(),
            masks.len(),
            u.n1(),
            u.rank(),
            u.n3()
        )));
    }
    masks.iter().try_for_each(|m| check_mask(u, m))
}

/// Cycles over the lateral slices of a static batch.
pub fn run_batch(
    u0: FsmEstimate,
    data: &Tensor3,
    masks: &[SampleMask],
    opts: &BatchOptions,
    reference: Option<&Tensor3>,
) -> Result<BatchRun> {
    run_batch_with(u0, data, masks, opts, reference, |_, _, _| Ok(()))
}

/// [`run_batch`] with a callback receiving `(pass, column, step)`.
pub fn run_batch_with<F>(
    u0: FsmEstimate,
    data: &Tensor3,
    masks: &[SampleMask],
    opts: &BatchOptions,
    reference: Option<&Tensor3>,
    mut on_step: F,
) -> Result<BatchRun>
where
    F: FnMut(usize, usize, &StepOutput) -> Result<()>,
{
    check_batch(&u0, data, masks)?;
    if opts.passes == 0 {
        return Err(Error::InvalidArgument("at least one pass is required".into()));
    }
    if let Some(r) = reference {
        if r.dims() != data.dims() {
            return Err(Error::DimensionMismatch("reference and data differ in shape".into()));
        }
    }
    let n2 = data.n2();
    let columns: Vec<Tensor3> = (0..n2).map(|j| data.lateral(j)).collect();
    let mut order: Vec<usize> = (0..n2).collect();
    let mut shuffler = match opts.order {
        SliceOrder::Fixed => None,
        SliceOrder::Shuffled(seed) => Some(rng::substream(seed, STREAM_ORDER)),
    };
    let mut tracker = Tracker::new(u0, opts.cgd)?;
    let mut imputed = Tensor3::zeros(data.n1(), n2, data.n3());
    let mut passes = Vec::new();
    for pass in 0..opts.passes {
        if let Some(g) = shuffler.as_mut() {
            order.shuffle(g);
        }
        let start = Instant::now();
        let mut cg_total = 0usize;
        for &j in &order {
            let out = tracker.step(&columns[j], &masks[j])?;
            cg_total += out.report.cg_iters;
            imputed.set_lateral(j, &out.imputed);
            on_step(pass, j, &out)?;
        }
        let wall_time = start.elapsed().as_secs_f64();
        let err = reference.map(|r| nrmse(&imputed, r)).transpose()?;
        passes.push(PassSummary {
            pass,
            nrmse: err,
            mean_cg: cg_total as f64 / n2.max(1) as f64,
            wall_time,
        });
        if let (Some(e), Some(th)) = (err, opts.threshold) {
            if e <= th {
                break;
            }
        }
    }
    let steps = tracker.steps();
    let fsm = tracker.into_fsm();
    let completed = complete_with_basis(&fsm, data, masks, &opts.cgd)?;
    let final_nrmse = reference.map(|r| nrmse(&completed, r)).transpose()?;
    Ok(BatchRun {
        fsm,
        completed,
        passes,
        final_nrmse,
        steps,
    })
}

/// Fits every lateral slice against a fixed basis (conjugate gradients for
/// entry masks, pseudo-inverses for tube masks) and returns the predictions.
pub fn complete_with_basis(
    u: &FsmEstimate,
    data: &Tensor3,
    masks: &[SampleMask],
    cfg: &CgdConfig,
) -> Result<Tensor3> {
    check_batch(u, data, masks)?;
    cfg.validate()?;
    let plan = TubeFft::new(u.n3());
    let cols = par::map_range(data.n2(), |j| -> Result<Vec<f64>> {
        let v = data.lateral(j);
        let mask = &masks[j];
        let w = if mask.is_empty() {
            zero_weights(u)
        } else if mask.kind() == MaskKind::Tubes {
            super::step::pinv_with(u, &plan, &v, mask)?.spectral
        } else {
            let observed = mask.indicator();
            let b = rhs_with(u, &plan, &v, &observed);
            let op = SampledGram {
                u,
                plan: &plan,
                observed: &observed,
            };
            cg_solve(&op, b, cfg).weights
        };
        Ok(predict(u, &plan, &w))
    });
    let mut out = Tensor3::zeros(data.n1(), data.n2(), data.n3());
    for (j, col) in cols.into_iter().enumerate() {
        let col = Tensor3::from_vec(data.n1(), 1, data.n3(), col?)?;
        out.set_lateral(j, &col);
    }
    Ok(out)
}
