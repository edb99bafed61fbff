use std::io::Write;

use clap::Args;
use toucan::synth::{gen_low_tubal_rank, gen_masks};
use toucan::toucan::{
    basis_coherence, cgd_iteration_bound, complete_with_basis, condition_number, sampled_operator, BoundParams,
    ConditionBound, IterationBound, Tracker,
};
use toucan::{nrmse, par, Error, FsmEstimate, MaskKind};

use super::{create, opt, positive, rate, CgdArgs, CliError, CliResult, Common};

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 50)]
    pub n1: usize,
    #[arg(long, default_value_t = 200)]
    pub n2: usize,
    #[arg(long, default_value_t = 20)]
    pub n3: usize,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Number of sampling rates, evenly spaced from 1 down to --min-rate.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long, value_parser = rate, default_value_t = 0.1)]
    pub min_rate: f64,
    /// Masks per rate whose sampled operator is formed explicitly.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Passes over the data per rate.
    #[arg(long, default_value_t = 3)]
    pub passes: usize,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Precision in the iteration bounds.
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[command(flatten)]
    pub cgd: CgdArgs,
}

fn rates(points: usize, min: f64) -> Vec<f64> {
    if points == 1 {
        return vec![1.0];
    }
    (0..points)
        .map(|i| ((1.0 - (1.0 - min) * i as f64 / (points - 1) as f64) * 1e9).round() / 1e9)
        .collect()
}

fn fmt_kappa(k: f64) -> String {
    if k.is_finite() {
        format!("{k:e}")
    } else {
        "inf".into()
    }
}

pub fn run(common: &Common, a: StudyArgs) -> CliResult<()> {
    let params = BoundParams {
        c1: a.c1,
        delta: a.delta,
        epsilon: a.epsilon,
    };
    params.validate()?;
    if a.points == 0 || a.passes == 0 || a.trials > a.n2 {
        return Err(CliError::Usage("need points, passes >= 1 and trials <= n2".into()));
    }
    let (n1, n2, n3, r) = (a.n1, a.n2, a.n3, a.rank);
    let cfg = a.cgd.config();
    let x = gen_low_tubal_rank(n1, n2, n3, r, common.seed)?;
    let u0 = FsmEstimate::random(n1, r, n3, common.seed)?;
    let mu = basis_coherence(&u0);
    let dof = (n3 * r * (n1 + n2 - r)) as f64;
    let log_term = (2.0 / a.epsilon).ln();

    let dir = &common.out_dir;
    let mut study = create(dir, "cgd_study.csv")?;
    writeln!(study, "rate,dof_ratio,mean_cg,kappa_bound,theorem_bound")?;
    let mut recovery = create(dir, "cgd_recovery.csv")?;
    writeln!(recovery, "rate,nrmse,mean_kappa_sq,max_cg,tau,feasible")?;
    let mut instances = create(dir, "cgd_instances.csv")?;
    writeln!(instances, "rate,trial,cg_iters,kappa,kappa_bound")?;

    for rate in rates(a.points, a.min_rate) {
        // One seed for every rate: Bernoulli masks are then nested across rates.
        let masks = gen_masks(n1, n2, n3, MaskKind::Entries, rate, common.seed)?;
        let observed: usize = masks.iter().map(|m| m.len()).sum();
        let mut tracker = Tracker::new(u0.clone(), cfg)?;
        let mut snapshots = Vec::with_capacity(a.trials);
        let mut iters = Vec::with_capacity(n2 * a.passes);
        for _ in 0..a.passes {
            for (j, mask) in masks.iter().enumerate() {
                if snapshots.len() < a.trials {
                    snapshots.push(tracker.fsm().clone());
                }
                iters.push(tracker.step(&x.lateral(j), mask)?.report.cg_iters);
            }
        }
        let kappas = par::map_range(snapshots.len(), |t| {
            match sampled_operator(&snapshots[t], &masks[t]).and_then(|op| condition_number(&op)) {
                Ok(k) => Ok(k),
                Err(Error::SingularOperator) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .into_iter()
        .collect::<toucan::Result<Vec<f64>>>()?;
        for (t, k) in kappas.iter().enumerate() {
            writeln!(
                instances,
                "{rate},{t},{},{},{}",
                iters[t],
                fmt_kappa(*k),
                fmt_kappa(ConditionBound::instance_bound(*k, a.epsilon))
            )?;
        }
        let mean_kappa_sq = kappas.iter().map(|k| k * k).sum::<f64>() / kappas.len().max(1) as f64;
        let kappa_bound = 0.5 * mean_kappa_sq.sqrt() * log_term;
        let omega = ((rate * (n1 * n3) as f64).round() as usize).max(1);
        let bound = cgd_iteration_bound(mu, n1, n3, omega, &params)?;
        let mean_cg = iters.iter().sum::<usize>() as f64 / iters.len() as f64;
        writeln!(
            study,
            "{rate},{:e},{mean_cg:e},{},{}",
            dof / observed.max(1) as f64,
            fmt_kappa(kappa_bound),
            opt(bound.k_max())
        )?;
        let fsm = tracker.into_fsm();
        let completed = complete_with_basis(&fsm, &x, &masks, &cfg)?;
        writeln!(
            recovery,
            "{rate},{:e},{},{},{:e},{}",
            nrmse(&completed, &x)?,
            fmt_kappa(mean_kappa_sq),
            iters.iter().max().copied().unwrap_or(0),
            bound.tau(),
            matches!(bound, IterationBound::Feasible { .. })
        )?;
    }
    study.flush()?;
    recovery.flush()?;
    instances.flush()?;
    Ok(())
}
