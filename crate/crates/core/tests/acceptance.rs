//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 5 (paper-scale runs) takes minutes and only runs when
//! `TOUCAN_PAPER_SCALE=1` is set.

mod common;

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use toucan::synth::{gen_fsm_stream, gen_low_tubal_rank, gen_masks, rng};
use toucan::tensor::{bcirc, conj_transpose, fft3, fold, identity_tensor, is_self_conjugate, tprod, unfold};
use toucan::toucan::{
    compute_gradient_terms, directional_derivative, gradient_blocks, run_batch, sampled_loss, solve_weights_cgd,
    BatchOptions, Tracker,
};
use toucan::tsvd::tsvd;
use toucan::{fsm_tracking_error, CgdConfig, FsmEstimate, MaskKind, StreamSpec, Tensor3};

use common::{gaussian, rel_err};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn dims(g: &mut rand_chacha::ChaCha20Rng, max: usize) -> usize {
    1 + (rng::uniform(g) * max as f64) as usize % max
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut g = rng::substream(1, 500);
    let mut worst = 0.0f64;
    let mut worst_law = 0.0f64;
    for t in 0..200u64 {
        let (n1, n2, n3, n4) = (dims(&mut g, 6), dims(&mut g, 6), dims(&mut g, 6), dims(&mut g, 6));
        let a = gaussian(n1, n2, n3, 2 * t);
        let b = gaussian(n2, n4, n3, 2 * t + 1);
        let c = tprod(&a, &b).unwrap();
        let oracle = fold(&(bcirc(&a) * unfold(&b)), n1, n4, n3).unwrap();
        worst = worst.max(rel_err(&c, &oracle));
        let anti = tprod(&conj_transpose(&b), &conj_transpose(&a)).unwrap();
        worst_law = worst_law.max(rel_err(&conj_transpose(&c), &anti));
        let left = tprod(&identity_tensor(n1, n3), &a).unwrap();
        let right = tprod(&a, &identity_tensor(n2, n3)).unwrap();
        worst_law = worst_law.max(rel_err(&left, &a)).max(rel_err(&right, &a));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && worst_law <= 1e-10 && secs < 5.0,
        format!("200 pairs: oracle err {worst:.1e} (<=1e-10), laws {worst_law:.1e} (<=1e-10), {secs:.2}s (<5s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut g = rng::substream(2, 500);
    let (mut recon, mut ortho, mut offdiag) = (0.0f64, 0.0f64, 0.0f64);
    let mut rank_ok = true;
    for t in 0..50u64 {
        let (n1, n2, n3) = (dims(&mut g, 10), dims(&mut g, 10), dims(&mut g, 10));
        let a = gaussian(n1, n2, n3, 100 + t);
        let f = tsvd(&a).unwrap();
        recon = recon.max(rel_err(&f.reconstruct().unwrap(), &a));
        for q in [&f.u, &f.v] {
            for s in fft3(q).slices {
                let n = s.ncols();
                ortho = ortho.max((s.adjoint() * &s - DMatrix::<Complex64>::identity(n, n)).norm());
            }
        }
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    if i != j {
                        offdiag = offdiag.max(f.s[(i, j, k)].abs());
                    }
                }
            }
        }
        let r = 1 + t as usize % n1.min(n2);
        let low = gen_low_tubal_rank(n1, n2, n3, r, 200 + t).unwrap();
        rank_ok &= tsvd(&low).unwrap().tubal_rank(1e-8) == r;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        recon <= 1e-8 && ortho <= 1e-10 && offdiag <= 1e-12 && rank_ok && secs < 10.0,
        format!(
            "50 tensors: recon {recon:.1e} (<=1e-8), orthonormality {ortho:.1e} (<=1e-10), \
             off-diagonal {offdiag:.1e} (<=1e-12), constructed ranks {}, {secs:.2}s (<10s)",
            if rank_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn criterion_3() -> Outcome {
    let (n1, r, n3) = (12, 3, 8);
    let mut worst = 0.0f64;
    for t in 0..20u64 {
        let u = FsmEstimate::random(n1, r, n3, t).unwrap();
        let v = gaussian(n1, 1, n3, 300 + t);
        let mask = gen_masks(n1, 1, n3, MaskKind::Entries, 0.5, 400 + t).unwrap().remove(0);
        let w = solve_weights_cgd(&u, &v, &mask, &CgdConfig::default()).unwrap().weights;
        let blocks = gradient_blocks(&compute_gradient_terms(&u, &v, &mask, &w).unwrap(), &w);
        let mut g = rng::substream(t, 600);
        let dir: Vec<DMatrix<Complex64>> = u
            .slices()
            .iter()
            .enumerate()
            .map(|(l, ul)| {
                let real = is_self_conjugate(l, n3);
                let d = DMatrix::from_fn(n1, r, |_, _| {
                    let re = rng::gaussian(&mut g);
                    Complex64::new(re, if real { 0.0 } else { rng::gaussian(&mut g) })
                });
                &d - ul * ul.ad_mul(&d)
            })
            .collect();
        let loss = |h: f64| {
            let s = u.slices().iter().zip(&dir).map(|(a, d)| a + d * Complex64::new(h, 0.0)).collect();
            sampled_loss(&FsmEstimate::from_spectral(n3, s).unwrap(), &v, &mask, &w).unwrap()
        };
        let h = 1e-5;
        let fd = (loss(h) - loss(-h)) / (2.0 * h);
        let an = directional_derivative(&blocks, &dir, n3);
        worst = worst.max((fd - an).abs() / an.abs());
    }
    check(worst <= 1e-5, format!("20 instances: worst relative error {worst:.1e} (<=1e-5)"))
}

fn batch(n1: usize, n2: usize, n3: usize, r: usize, kind: MaskKind, rate: f64, threshold: f64, passes: usize) -> (toucan::toucan::BatchRun, f64) {
    let x = gen_low_tubal_rank(n1, n2, n3, r, 11).unwrap();
    let masks = gen_masks(n1, n2, n3, kind, rate, 12).unwrap();
    let opts = BatchOptions {
        passes,
        threshold: Some(threshold),
        ..BatchOptions::default()
    };
    let start = Instant::now();
    let run = run_batch(FsmEstimate::random(n1, r, n3, 13).unwrap(), &x, &masks, &opts, Some(&x)).unwrap();
    (run, start.elapsed().as_secs_f64())
}

fn per_pass(run: &toucan::toucan::BatchRun) -> f64 {
    run.passes.iter().map(|p| p.wall_time).sum::<f64>() / run.passes.len() as f64
}

fn criterion_4() -> Outcome {
    let (e, secs_e) = batch(50, 300, 12, 3, MaskKind::Entries, 0.5, 1e-6, 100);
    let (t, secs_t) = batch(50, 300, 12, 3, MaskKind::Tubes, 0.5, 1e-6, 100);
    let (ne, nt) = (e.final_nrmse.unwrap(), t.final_nrmse.unwrap());
    let (pe, pt) = (per_pass(&e), per_pass(&t));
    check(
        ne <= 1e-6 && nt <= 1e-6 && secs_e < 60.0 && secs_t < 60.0 && pt < pe,
        format!(
            "entries: nrmse {ne:.1e} in {} passes, {secs_e:.2}s; tubes: nrmse {nt:.1e} in {} passes; \
             per pass {:.1}ms (tubes) < {:.1}ms (entries)",
            e.passes.len(),
            t.passes.len(),
            pt * 1e3,
            pe * 1e3
        ),
    )
}

fn criterion_5() -> Option<Outcome> {
    if std::env::var("TOUCAN_PAPER_SCALE").ok().as_deref() != Some("1") {
        return None;
    }
    let (a, secs_a) = batch(200, 500, 20, 3, MaskKind::Entries, 0.5, 1e-10, 100);
    let (b, secs_b) = batch(200, 500, 25, 5, MaskKind::Tubes, 0.2, 1e-10, 100);
    let (na, nb) = (a.final_nrmse.unwrap(), b.final_nrmse.unwrap());
    Some(check(
        na <= 1e-9 && nb <= 1e-9,
        format!(
            "200x500x20 r=3 50% entries: nrmse {na:.1e} ({} passes, {secs_a:.1}s); \
             200x500x25 r=5 20% tubes: nrmse {nb:.1e} ({} passes, {secs_b:.1}s)",
            a.passes.len(),
            b.passes.len()
        ),
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [1, 3, 5] {
        let spec = StreamSpec {
            n1: 50,
            n3: 10,
            rank: r,
            steps: 1500,
            change_period: 500,
            sample_rate: 0.7,
            kind: MaskKind::Entries,
            seed: 1,
        };
        let mut tr = Tracker::new(FsmEstimate::random(50, r, 10, 1).unwrap(), CgdConfig::default()).unwrap();
        let mut min_err = [f64::INFINITY; 3];
        let mut end_err = [0.0; 3];
        for item in gen_fsm_stream(&spec).unwrap() {
            let item = item.unwrap();
            tr.step(&item.slice, &item.mask).unwrap();
            let e = fsm_tracking_error(tr.fsm(), &item.truth).unwrap();
            min_err[item.fsm_id] = min_err[item.fsm_id].min(e);
            end_err[item.fsm_id] = e;
        }
        ok &= min_err.iter().all(|&e| e < 1e-3);
        parts.push(format!(
            "r={r} min {:.0e}/{:.0e}/{:.0e} at change {:.0e}/{:.0e}/{:.0e}",
            min_err[0], min_err[1], min_err[2], end_err[0], end_err[1], end_err[2]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        ok && secs < 120.0,
        format!("per-segment minimum < 1e-3: {}; {secs:.1}s (<120s)", parts.join("; ")),
    )
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn toucan_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_toucan"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "toucan {args:?} failed");
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    toucan_cli(dir.path(), &["--seed", "1", "cgd-study"]);
    let study = read_csv(&dir.path().join("cgd_study.csv"));
    let recovery = read_csv(&dir.path().join("cgd_recovery.csv"));
    let instances = read_csv(&dir.path().join("cgd_instances.csv"));
    let num = |s: &str| if s == "inf" { f64::INFINITY } else { s.parse::<f64>().unwrap() };
    let mean_cg: Vec<f64> = study.iter().map(|r| num(&r[2])).collect();
    let monotone = study.len() == 10 && mean_cg.windows(2).all(|w| w[1] >= w[0]);
    let violations = instances.iter().filter(|r| num(&r[2]) > num(&r[4])).count();
    let feasible: Vec<(f64, f64)> = study
        .iter()
        .filter(|r| !r[4].is_empty())
        .map(|r| (num(&r[4]), num(&r[2])))
        .collect();
    let dominated = feasible.iter().all(|(k, m)| k >= m);
    let nrmse: Vec<f64> = recovery.iter().map(|r| num(&r[1])).collect();
    // Rates 1.0..0.5 recover; the lowest rate, where iterations blow up, does not.
    let sharp = nrmse[..6].iter().all(|&e| e <= 1e-6) && nrmse[9] >= 1e-2;
    let theorem = if feasible.is_empty() {
        "theorem bound infeasible at every rate (vacuous)".to_string()
    } else {
        format!("theorem bound dominates at {} feasible rates", feasible.len())
    };
    check(
        monotone && violations == 0 && dominated && sharp,
        format!(
            "mean CG {:.1} -> {:.1} nondecreasing: {monotone}; kappa-bound violations {violations}/{}; {theorem}; \
             nrmse {:.0e} at rate 0.5 vs {:.0e} at rate 0.1",
            mean_cg[0],
            mean_cg[9],
            instances.len(),
            nrmse[5],
            nrmse[9]
        ),
    )
}

fn criterion_8() -> Outcome {
    let (n1, r, n3) = (20, 3, 8);
    let mut tr = Tracker::new(FsmEstimate::random(n1, r, n3, 8).unwrap(), CgdConfig::default()).unwrap();
    let masks = gen_masks(n1, 10_000, n3, MaskKind::Entries, 0.5, 9).unwrap();
    let mut g = rng::substream(10, 700);
    let mut worst = 0.0f64;
    for m in &masks {
        let v = Tensor3::from_fn(n1, 1, n3, |_, _, _| rng::gaussian(&mut g));
        tr.step(&v, m).unwrap();
        worst = worst.max(tr.fsm().orthonormality_deviation());
    }
    check(
        worst <= 1e-8,
        format!("10000 steps on random data: worst per-slice deviation {worst:.1e} (<=1e-8)"),
    )
}

fn criterion_9() -> Outcome {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &runs {
        let p = d.path();
        toucan_cli(p, &["--seed", "7", "gen", "--n1", "20", "--n2", "40", "--n3", "6", "--rank", "2", "--rate", "0.5"]);
        let t = p.join("tensor.tns");
        let m = p.join("mask.csv");
        let (t, m) = (t.to_str().unwrap(), m.to_str().unwrap());
        toucan_cli(p, &["--seed", "7", "complete", "--tensor", t, "--mask", m, "--reference", t, "--rank", "2", "--shuffle"]);
        toucan_cli(p, &["--seed", "7", "track", "--n1", "20", "--n3", "6", "--ranks", "1,2", "--steps", "300", "--change-period", "100"]);
        toucan_cli(p, &["--seed", "7", "cgd-study", "--n1", "12", "--n2", "30", "--n3", "6", "--rank", "2", "--points", "4", "--trials", "5", "--passes", "1"]);
        toucan_cli(p, &["--seed", "7", "tsvd", "--tensor", t]);
    }
    let mut files: Vec<String> = std::fs::read_dir(runs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(runs[0].path().join(f)).unwrap() != std::fs::read(runs[1].path().join(f)).unwrap())
        .collect();
    check(
        differing.is_empty() && files.len() >= 10,
        format!("{} CSV files compared across two runs, {} differ", files.len(), differing.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 algebra oracle suite", criterion_1),
        ("2 t-SVD suite", criterion_2),
        ("3 gradient check", criterion_3),
        ("4 static completion, desk scale", criterion_4),
        ("6 dynamic FSM tracking", criterion_6),
        ("7 CGD study", criterion_7),
        ("8 orthonormality endurance", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let line = match f() {
            Ok(m) => format!("PASS criterion {name}: {m}"),
            Err(m) => {
                failed += 1;
                format!("FAIL criterion {name}: {m}")
            }
        };
        println!("{line}");
        if name.starts_with('4') {
            match criterion_5() {
                Some(Ok(m)) => println!("PASS criterion 5 paper-scale replication: {m}"),
                Some(Err(m)) => {
                    failed += 1;
                    println!("FAIL criterion 5 paper-scale replication: {m}");
                }
                None => println!("SKIP criterion 5 paper-scale replication: set TOUCAN_PAPER_SCALE=1 to run"),
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
