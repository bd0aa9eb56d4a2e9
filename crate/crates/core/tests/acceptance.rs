//! Acceptance suite. Runs every primary criterion at its stated tolerance
//! and prints one `PASS`/`FAIL` line per criterion; exits non-zero when any
//! fails. Set `ACCEPTANCE_ONLY=<substring>` to run a subset.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{admm_oracle, blocky_image, random_weights, rng};
use inctpv::cp::{subproblem_objective, CpSolver, WeightVector};
use inctpv::data::{corrupt, generate_phantom, EllipsePhantomSpec, NoiseModel};
use inctpv::guess::{oracle_blend_guess, GuessOperator, IdentityGuess, OracleBlendGuess};
use inctpv::incremental::{inc_dg_with, inc_tpv_with, update_p, IncrementalConfig};
use inctpv::metrics::{batch_stats, quantile};
use inctpv::operators::{
    dot_product_test, fbp_reconstruct, FanBeamGeometry, FanBeamProjector, GaussianBlur, GradientOperator, Identity,
    LinearOperator, StackedOperator,
};
use inctpv::{cp_solve, relative_error, ssim, Image, Observation};
use rand::Rng;

type Check = Result<String, String>;

const DEBLUR_SIDE: usize = 256;
const DEBLUR_COUNT: usize = 20;
const DEBLUR_SEED: u64 = 1000;
const CT_COUNT: usize = 5;
const CT_SEED: u64 = 2000;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn phantom(seed: u64) -> Image {
    generate_phantom(&EllipsePhantomSpec::with_side_and_seed(DEBLUR_SIDE, seed)).expect("phantom")
}

fn adjoint_suite() -> Check {
    let blur_small = GaussianBlur::with_default_sigma(16, 16).unwrap();
    let blur_rect = GaussianBlur::with_default_sigma(37, 23).unwrap();
    let blur = GaussianBlur::with_default_sigma(64, 64).unwrap();
    let fan_small = FanBeamProjector::new(FanBeamGeometry::new(16, 12, 30)).unwrap();
    let fan = FanBeamProjector::new(FanBeamGeometry::new(64, 60, 120)).unwrap();
    let grad = GradientOperator::new(64, 64);
    let stacked_blur = StackedOperator::new(&blur);
    let stacked_fan = StackedOperator::new(&fan);
    let ops: [(&str, &dyn LinearOperator); 8] = [
        ("blur16", &blur_small),
        ("blur37x23", &blur_rect),
        ("blur64", &blur),
        ("fan16", &fan_small),
        ("fan64", &fan),
        ("D64", &grad),
        ("[blur;D]64", &stacked_blur),
        ("[fan;D]64", &stacked_fan),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, (name, op)) in ops.iter().enumerate() {
        let gap = dot_product_test(*op, 100, 0xad + i as u64);
        worst = worst.max(gap);
        parts.push(format!("{name}={gap:.1e}"));
    }
    ensure(worst < 1e-10, format!("max relative gap {worst:.2e} < 1e-10 ({})", parts.join(" ")))
}

fn cp_oracle() -> Check {
    let side = 16;
    let k = GaussianBlur::with_default_sigma(side, side).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..5u64 {
        let mut r = rng(100 + trial);
        let gt = blocky_image(side, &mut r);
        let y = corrupt(&gt, &k, &NoiseModel::new(0.02, trial).unwrap()).unwrap();
        let w = random_weights(side * side, &mut r);
        let lambda = r.gen_range(0.005..0.05);
        let x = cp_solve(&k, &y, &w, lambda, &y.to_image().unwrap(), 2000).unwrap();
        let f_cp = subproblem_objective(&x, &k, &y, &w, lambda).unwrap();
        let oracle = admm_oracle(&k, &y, &w, lambda, 20_000);
        if oracle.primal_residual > 1e-8 {
            return Err(format!("oracle did not converge on trial {trial}"));
        }
        worst = worst.max((f_cp - oracle.objective).abs() / oracle.objective);
    }

    let id = Identity::for_image(side, side);
    let mut r = rng(7);
    let raw = Image::from_fn(side, side, |_, _| r.gen_range(-0.5..1.0)).unwrap();
    let y = id.observe(&raw).unwrap();
    let w = WeightVector::uniform(side * side, 1.0).unwrap();
    let x = cp_solve(&id, &y, &w, 1e-9, &Image::zeros(side, side), 2000).unwrap();
    let proj_re = relative_error(&x, &raw.clamped_nonneg()).unwrap();
    ensure(
        worst < 1e-3 && proj_re < 1e-4,
        format!("max objective gap {worst:.2e} < 1e-3 over 5 instances; projection RE {proj_re:.2e} < 1e-4"),
    )
}

struct DeblurRuns {
    input_re: Vec<f64>,
    first_step_re: Vec<f64>,
    final_re: Vec<f64>,
    final_ssim: Vec<f64>,
    p: Vec<f64>,
    lambda: Vec<f64>,
}

fn deblur_runs() -> DeblurRuns {
    let k = GaussianBlur::with_default_sigma(DEBLUR_SIDE, DEBLUR_SIDE).unwrap();
    let solver = CpSolver::new(&k).unwrap();
    let mut cfg = IncrementalConfig::deblur_default();
    cfg.keep_snapshots = true;
    let mut runs = DeblurRuns {
        input_re: vec![],
        first_step_re: vec![],
        final_re: vec![],
        final_ssim: vec![],
        p: vec![],
        lambda: vec![],
    };
    for i in 0..DEBLUR_COUNT {
        let gt = phantom(DEBLUR_SEED + i as u64);
        let y = corrupt(&gt, &k, &NoiseModel::new(0.02, DEBLUR_SEED + i as u64).unwrap()).unwrap();
        let start = y.to_image().unwrap();
        let out = inc_tpv_with(&solver, &y, &start, &cfg).unwrap();
        runs.input_re.push(relative_error(&start, &gt).unwrap());
        runs.first_step_re.push(relative_error(&out.snapshots[1], &gt).unwrap());
        runs.final_re.push(relative_error(&out.image, &gt).unwrap());
        runs.final_ssim.push(ssim(&out.image, &gt).unwrap());
        if i == 0 {
            runs.p = out.trace.p_sequence();
            runs.lambda = out.trace.lambda_sequence();
        }
    }
    runs
}

fn ct_p_column() -> Check {
    let cfg = IncrementalConfig::ct_default();
    let mut p = cfg.p0;
    let mut seq = vec![p];
    for _ in 1..cfg.steps() {
        p = update_p(p, cfg.alpha_p).map_err(|e| e.to_string())?;
        seq.push(p);
    }
    Ok(format!("{seq:?}"))
}

fn schedule_exactness(runs: &DeblurRuns, ct_trace_p: &[f64]) -> Check {
    let p_ok = runs.p == [1.0, 0.5, 0.25, 0.125];
    let lambda_ok = runs.lambda.get(1) == Some(&0.25);
    // 0.16807 has no exact binary form; the trace must equal the product
    // chain 0.7·0.7·… bitwise and sit within one rounding of the decimal.
    let chain = (0..5).fold(1.0f64, |p, _| p * 0.7);
    let ct_ok = ct_trace_p.len() == 6 && ct_trace_p[5] == chain && (ct_trace_p[5] - 0.16807).abs() < 1e-15;
    ensure(
        p_ok && lambda_ok && ct_ok,
        format!(
            "deblur p={:?} λ1={:?}; CT p5={:?} (|p5-0.16807|<1e-15); reference chain {}",
            runs.p,
            runs.lambda.get(1),
            ct_trace_p.get(5),
            ct_p_column().unwrap_or_default()
        ),
    )
}

fn deblur_quality(runs: &DeblurRuns) -> Check {
    let mean = |v: &[f64]| batch_stats(v).unwrap().mean;
    let (re, ss, input) = (mean(&runs.final_re), mean(&runs.final_ssim), mean(&runs.input_re));
    let re_std = batch_stats(&runs.final_re).unwrap().std;
    ensure(
        re <= 0.12 && ss >= 0.90 && re <= 0.6 * input,
        format!(
            "mean RE {re:.4}±{re_std:.4} (≤0.12), mean SSIM {ss:.4} (≥0.90), input RE {input:.4} (need ≤{:.4})",
            0.6 * input
        ),
    )
}

fn monotonicity(runs: &DeblurRuns) -> Check {
    let better = runs
        .final_re
        .iter()
        .zip(&runs.first_step_re)
        .filter(|(last, first)| last <= first)
        .count();
    let frac = better as f64 / runs.final_re.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    ensure(
        frac >= 0.9,
        format!(
            "RE(h=3) ≤ RE(h=0) on {better}/{} phantoms; mean RE h=0 {:.4} → h=3 {:.4}",
            runs.final_re.len(),
            mean(&runs.first_step_re),
            mean(&runs.final_re)
        ),
    )
}

fn guess_leverage() -> Check {
    let k = GaussianBlur::with_default_sigma(DEBLUR_SIDE, DEBLUR_SIDE).unwrap();
    let solver = CpSolver::new(&k).unwrap();
    let cfg = IncrementalConfig::deblur_guess_default();
    let identity = IdentityGuess;
    let id_guesses: Vec<&dyn GuessOperator> = vec![&identity; cfg.steps()];
    let (mut oracle_re, mut identity_re) = (Vec::new(), Vec::new());
    let mut wins = 0;
    let mut bit_identical = true;
    for i in 0..DEBLUR_COUNT {
        let seed = DEBLUR_SEED + i as u64;
        let gt = phantom(seed);
        let y = corrupt(&gt, &k, &NoiseModel::new(0.02, seed).unwrap()).unwrap();
        let start = y.to_image().unwrap();
        let blend: OracleBlendGuess = oracle_blend_guess(gt.clone(), 0.5).unwrap();
        let blends: Vec<&dyn GuessOperator> = vec![&blend; cfg.steps()];
        let with_oracle = inc_dg_with(&solver, &y, &start, &cfg, &blends).unwrap();
        let with_identity = inc_dg_with(&solver, &y, &start, &cfg, &id_guesses).unwrap();
        let plain = inc_tpv_with(&solver, &y, &start, &cfg).unwrap();
        bit_identical &= with_identity.image == plain.image;
        let (a, b) = (
            relative_error(&with_oracle.image, &gt).unwrap(),
            relative_error(&with_identity.image, &gt).unwrap(),
        );
        if a < b {
            wins += 1;
        }
        oracle_re.push(a);
        identity_re.push(b);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        quantile(v, 0.5)
    };
    let frac = wins as f64 / DEBLUR_COUNT as f64;
    let (mo, mi) = (median(&mut oracle_re), median(&mut identity_re));
    ensure(
        frac >= 0.9 && mo < mi && bit_identical,
        format!(
            "oracle-blend beats identity on {wins}/{DEBLUR_COUNT}; median RE {mo:.4} vs {mi:.4}; identity ≡ incTpV bitwise: {bit_identical}"
        ),
    )
}

struct CtRuns {
    ratio_of_means: f64,
    min_ratio: f64,
    tpv_time: f64,
    dg_time: f64,
    tpv_iters: usize,
    dg_iters: usize,
    tpv_re: f64,
    dg_re: f64,
    fbp_re: f64,
    p: Vec<f64>,
}

fn ct_runs() -> CtRuns {
    let geometry = FanBeamGeometry::standard();
    let proj = FanBeamProjector::new(geometry).unwrap();
    let solver = CpSolver::new(&proj).unwrap();
    let tpv_cfg = IncrementalConfig::ct_default();
    let dg_cfg = IncrementalConfig::ct_guess_default();
    let (mut t_tpv, mut t_dg, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    let (mut re_tpv, mut re_dg, mut re_fbp) = (Vec::new(), Vec::new(), Vec::new());
    let (mut it_tpv, mut it_dg) = (0, 0);
    let mut p = Vec::new();
    for i in 0..CT_COUNT {
        let seed = CT_SEED + i as u64;
        let gt = phantom(seed);
        let y: Observation = corrupt(&gt, &proj, &NoiseModel::new(0.005, seed).unwrap()).unwrap();

        let started = Instant::now();
        let fbp = fbp_reconstruct(&y, &proj).unwrap();
        let tpv = inc_tpv_with(&solver, &y, &fbp, &tpv_cfg).unwrap();
        let a = started.elapsed().as_secs_f64();

        let blend = oracle_blend_guess(gt.clone(), 0.5).unwrap();
        let guesses: Vec<&dyn GuessOperator> = vec![&blend; dg_cfg.steps()];
        let started = Instant::now();
        let fbp2 = fbp_reconstruct(&y, &proj).unwrap();
        let dg = inc_dg_with(&solver, &y, &fbp2, &dg_cfg, &guesses).unwrap();
        let b = started.elapsed().as_secs_f64();

        t_tpv.push(a);
        t_dg.push(b);
        ratios.push(a / b);
        it_tpv = tpv.trace.total_cp_iterations();
        it_dg = dg.trace.total_cp_iterations();
        re_tpv.push(relative_error(&tpv.image, &gt).unwrap());
        re_dg.push(relative_error(&dg.image, &gt).unwrap());
        re_fbp.push(relative_error(&fbp, &gt).unwrap());
        if i == 0 {
            p = tpv.trace.p_sequence();
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    CtRuns {
        ratio_of_means: mean(&t_tpv) / mean(&t_dg),
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        tpv_time: mean(&t_tpv),
        dg_time: mean(&t_dg),
        tpv_iters: it_tpv,
        dg_iters: it_dg,
        tpv_re: mean(&re_tpv),
        dg_re: mean(&re_dg),
        fbp_re: mean(&re_fbp),
        p,
    }
}

fn ct_speed(runs: &CtRuns) -> Check {
    ensure(
        runs.ratio_of_means >= 5.0 && runs.min_ratio >= 5.0,
        format!(
            "incTpV {:.2}s ({} CP) vs incDG {:.3}s ({} CP) per image: ratio {:.1}x (min {:.1}x, need ≥5x); mean RE fbp {:.3} incTpV {:.3} incDG {:.3}",
            runs.tpv_time, runs.tpv_iters, runs.dg_time, runs.dg_iters, runs.ratio_of_means, runs.min_ratio,
            runs.fbp_re, runs.tpv_re, runs.dg_re
        ),
    )
}

fn noise_exactness() -> Check {
    let blur = GaussianBlur::with_default_sigma(DEBLUR_SIDE, DEBLUR_SIDE).unwrap();
    let proj = FanBeamProjector::new(FanBeamGeometry::standard()).unwrap();
    let ops: [&dyn LinearOperator; 2] = [&blur, &proj];
    let mut worst: f64 = 0.0;
    for (j, op) in ops.iter().enumerate() {
        for i in 0..3u64 {
            let gt = phantom(3000 + i);
            let clean = op.observe(&gt).unwrap();
            for nu in [0.005, 0.02] {
                let y = corrupt(&gt, *op, &NoiseModel::new(nu, i * 10 + j as u64).unwrap()).unwrap();
                let level = inctpv::vector::distance(y.as_slice(), clean.as_slice())
                    / inctpv::vector::norm2(clean.as_slice());
                worst = worst.max((level - nu).abs());
            }
        }
    }
    ensure(worst < 1e-12, format!("max |‖y−Kx‖/‖Kx‖ − ν| = {worst:.2e} < 1e-12 (blur and fan-beam, ν ∈ {{0.005, 0.02}})"))
}

fn metric_sanity() -> Check {
    let gt = phantom(4000);
    let mut failures = Vec::new();
    if relative_error(&gt, &gt).unwrap() != 0.0 {
        failures.push("RE(gt,gt)≠0");
    }
    if relative_error(&Image::zeros(DEBLUR_SIDE, DEBLUR_SIDE), &gt).unwrap() != 1.0 {
        failures.push("RE(0,gt)≠1");
    }
    let scaled = gt.map(|v| 1.1 * v).unwrap();
    if (relative_error(&scaled, &gt).unwrap() - 0.1).abs() > 1e-12 {
        failures.push("RE(1.1gt,gt)≠0.1");
    }
    if (ssim(&gt, &gt).unwrap() - 1.0).abs() > 1e-12 {
        failures.push("SSIM(gt,gt)≠1");
    }
    let half = Image::filled(64, 64, 0.5);
    if (ssim(&half, &half).unwrap() - 1.0).abs() > 1e-12 {
        failures.push("SSIM(const,const)≠1");
    }
    let mut r = rng(5);
    for _ in 0..20 {
        let a = Image::from_fn(32, 32, |_, _| r.gen_range(0.0..1.0)).unwrap();
        let b = Image::from_fn(32, 32, |_, _| r.gen_range(0.0..1.0)).unwrap();
        if (ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() > 1e-12 {
            failures.push("SSIM asymmetric");
            break;
        }
    }

    let k = GaussianBlur::with_default_sigma(DEBLUR_SIDE, DEBLUR_SIDE).unwrap();
    let mut ordered = 0;
    for i in 0..20u64 {
        let gt = phantom(4100 + i);
        let levels: Vec<(f64, f64)> = [0.0, 0.02, 0.05]
            .iter()
            .map(|&nu| {
                let y = corrupt(&gt, &k, &NoiseModel::new(nu, 4100 + i).unwrap()).unwrap().to_image().unwrap();
                (relative_error(&y, &gt).unwrap(), ssim(&y, &gt).unwrap())
            })
            .collect();
        if levels[0].0 < levels[1].0 && levels[1].0 < levels[2].0 && levels[0].1 > levels[1].1 && levels[1].1 > levels[2].1 {
            ordered += 1;
        }
    }
    ensure(
        failures.is_empty() && ordered == 20,
        format!(
            "identity/zero/scaling/symmetry cases: {}; ν ordering holds on {ordered}/20 phantoms",
            if failures.is_empty() { "ok".to_string() } else { failures.join(", ") }
        ),
    )
}

fn main() -> ExitCode {
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    let wanted = |name: &str| only.as_deref().map_or(true, |f| name.contains(f));
    let mut results: Vec<(String, Check, f64)> = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Check| {
        if !wanted(name) {
            return;
        }
        let t = Instant::now();
        let r = f();
        results.push((name.to_string(), r, t.elapsed().as_secs_f64()));
        let (n, r, s) = results.last().unwrap();
        match r {
            Ok(d) => println!("PASS {n} ({s:.1}s): {d}"),
            Err(d) => println!("FAIL {n} ({s:.1}s): {d}"),
        }
    };

    run("adjoint-suite", &mut adjoint_suite);
    run("cp-oracle-equivalence", &mut cp_oracle);

    let needs_deblur = ["schedule-exactness", "deblur-quality", "incremental-monotonicity"]
        .iter()
        .any(|n| wanted(n));
    let deblur = needs_deblur.then(deblur_runs);
    let needs_ct = ["schedule-exactness", "ct-budget-speed"].iter().any(|n| wanted(n));
    let ct = needs_ct.then(ct_runs);

    if let (Some(d), Some(c)) = (&deblur, &ct) {
        run("schedule-exactness", &mut || schedule_exactness(d, &c.p));
    }
    if let Some(d) = &deblur {
        run("deblur-quality", &mut || deblur_quality(d));
        run("incremental-monotonicity", &mut || monotonicity(d));
    }
    run("guess-leverage", &mut guess_leverage);
    if let Some(c) = &ct {
        run("ct-budget-speed", &mut || ct_speed(c));
    }
    run("noise-exactness", &mut noise_exactness);
    run("metric-sanity", &mut metric_sanity);

    let failed = results.iter().filter(|(_, r, _)| r.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
