use std::io::Write;

use clap::Args;
use toucan::metrics::{write_metrics_csv, MetricRecord};
use toucan::synth::gen_fsm_stream;
use toucan::toucan::Tracker;
use toucan::{fsm_tracking_error, nrmse, FsmEstimate, MaskKind, StreamSpec};

use super::gen::KindArg;
use super::{create, rate, CgdArgs, CliResult, Common};

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long, default_value_t = 50)]
    pub n1: usize,
    #[arg(long, default_value_t = 10)]
    pub n3: usize,
    /// Comma-separated tubal ranks, one run each.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub ranks: Vec<usize>,
    #[arg(long, value_parser = rate, default_value_t = 0.7)]
    pub rate: f64,
    /// Slices between redraws of the true basis; 0 keeps it fixed.
    #[arg(long, default_value_t = 500)]
    pub change_period: usize,
    #[arg(long, default_value_t = 1500)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "entries")]
    pub kind: KindArg,
    /// Error level reported as reached in the summary.
    #[arg(long, default_value_t = 1e-3)]
    pub target: f64,
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub cgd: CgdArgs,
}

struct Segment {
    id: usize,
    start: u64,
    end: u64,
    first_below: Option<u64>,
    min_error: f64,
    last_error: f64,
}

pub fn run(common: &Common, a: TrackArgs) -> CliResult<()> {
    let mut summary = create(&common.out_dir, "track_summary.csv")?;
    writeln!(summary, "rank,segment,start,end,first_below,min_error,final_error")?;
    for &r in &a.ranks {
        let spec = StreamSpec {
            n1: a.n1,
            n3: a.n3,
            rank: r,
            steps: a.steps,
            change_period: a.change_period,
            sample_rate: a.rate,
            kind: MaskKind::from(a.kind),
            seed: common.seed,
        };
        let stream = gen_fsm_stream(&spec)?;
        let mut tracker = Tracker::new(FsmEstimate::random(a.n1, r, a.n3, common.seed)?, a.cgd.config())?;
        let mut records = Vec::with_capacity(a.steps);
        let mut segments: Vec<Segment> = Vec::new();
        for item in stream {
            let item = item?;
            let out = tracker.step(&item.slice, &item.mask)?;
            let err = fsm_tracking_error(tracker.fsm(), &item.truth)?;
            let mut rec = MetricRecord::new(out.report.t, nrmse(&out.imputed, &item.slice).unwrap_or(0.0));
            rec.fsm_error = Some(err);
            rec.cg_iters = out.report.cg_iters;
            rec.wall_ms = a.timing.then_some(out.report.wall_time * 1e3);
            records.push(rec);
            let t = item.t as u64;
            if segments.last().map(|s| s.id) != Some(item.fsm_id) {
                segments.push(Segment {
                    id: item.fsm_id,
                    start: t,
                    end: t,
                    first_below: None,
                    min_error: f64::INFINITY,
                    last_error: err,
                });
            }
            let s = segments.last_mut().expect("segment");
            s.end = t;
            s.min_error = s.min_error.min(err);
            s.last_error = err;
            if err < a.target && s.first_below.is_none() {
                s.first_below = Some(t);
            }
        }
        let mut w = create(&common.out_dir, &format!("track_r{r}.csv"))?;
        write_metrics_csv(&mut w, &records)?;
        w.flush()?;
        for s in &segments {
            writeln!(
                summary,
                "{r},{},{},{},{},{:e},{:e}",
                s.id,
                s.start,
                s.end,
                s.first_below.map(|t| t.to_string()).unwrap_or_default(),
                s.min_error,
                s.last_error
            )?;
        }
    }
    summary.flush()?;
    Ok(())
}
