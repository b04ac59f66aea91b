//! Acceptance suite on the bundled default problem. Prints one line per
//! criterion and exits nonzero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use impulse_cli::config::RunConfig;
use impulse_core::*;

const DEFAULT: &str = include_str!("../configs/default.toml");

struct Setup {
    cfg: RunConfig,
    grid: StateGrid,
    model: ProcessModel,
    problem: ImpulseProblem,
    params: RiskParams,
}

fn setup() -> Setup {
    let cfg = RunConfig::from_toml(DEFAULT).unwrap();
    cfg.validate().unwrap();
    let grid = cfg.grid().unwrap();
    let model = cfg.model().unwrap();
    let problem = cfg.problem(&grid).unwrap();
    let params = RiskParams::new(cfg.problem.gamma).unwrap();
    Setup {
        cfg,
        grid,
        model,
        problem,
        params,
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> (T, Duration) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let out = pool.install(f);
    (out, start.elapsed())
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn main() {
    let s = setup();
    let tol = s.cfg.solver.tol;
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    // 1
    let ((kernel, solution), elapsed) = single_threaded(|| {
        let k = build_kernel(
            &s.model,
            &s.grid,
            s.problem.reward(),
            s.cfg.problem.delta,
            s.cfg.kernel.n_samples,
            s.cfg.kernel.seed,
        )
        .unwrap();
        let sol = solve_fixed_point(&k, &s.problem, s.params, tol, s.cfg.solver.max_iter);
        (k, sol)
    });
    let solution = match solution {
        Ok(sol) => sol,
        Err(e) => {
            println!("criterion 1 (fixed point): FAIL {e}");
            std::process::exit(1);
        }
    };
    results.push((
        1,
        "fixed point",
        outcome(
            solution.residual_span < 1e-8 && solution.iterations <= 500 && elapsed.as_secs_f64() < 60.0,
            format!(
                "residual {:e}, {} iterations, {:.2} s single-threaded (kernel clamp fraction {:e})",
                solution.residual_span,
                solution.iterations,
                elapsed.as_secs_f64(),
                kernel.clamp_fraction()
            ),
        ),
    ));
    assert!(kernel.clamp_fraction() < 1e-3);

    // 2
    let policy = extract_policy(&solution, &kernel, &s.problem, s.params).unwrap();
    let sim = &s.cfg.simulate;
    let estimate = |rule: &dyn DecisionRule| {
        estimate_longrun_value(
            &s.model,
            rule,
            &s.problem,
            sim.start,
            sim.n_steps,
            sim.n_reps,
            s.params,
            sim.seed,
        )
        .unwrap()
    };
    let (extracted, elapsed) = single_threaded(|| estimate(&policy));
    let lod = solution.lambda / solution.delta;
    let gap = (lod - extracted.j_hat).abs();
    let band = 3.0 * extracted.stderr + 0.05;
    results.push((
        2,
        "lambda/delta vs simulated J",
        outcome(
            gap <= band && elapsed.as_secs_f64() < 120.0,
            format!(
                "lambda/delta {lod}, J_hat {} (stderr {}), gap {gap} <= {band}, {:.2} s single-threaded",
                extracted.j_hat,
                extracted.stderr,
                elapsed.as_secs_f64()
            ),
        ),
    ));

    // 3
    let stay = estimate(&StationaryPolicy::stay_everywhere(&s.grid));
    let random = estimate(&RandomShiftPolicy::new(&s.grid, 0.1).unwrap());
    let dominates = |b: &LongRunEstimate| {
        let se = (extracted.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        extracted.j_hat >= b.j_hat - 3.0 * se
    };
    results.push((
        3,
        "policy dominance",
        outcome(
            dominates(&stay) && dominates(&random),
            format!(
                "extracted {}, stay {} (stderr {}), random-shift {} (stderr {})",
                extracted.j_hat, stay.j_hat, stay.stderr, random.j_hat, random.stderr
            ),
        ),
    ));

    // 4
    let holder = holder_suite(10_000, &[-2.0, -0.5], &[1.5, 2.0, 4.0], s.cfg.verify.seed).unwrap();
    results.push((
        4,
        "entropic Hoelder bounds",
        outcome(
            holder.all_pass(),
            format!("{} checks, {} failures", holder.checks, holder.failures.len()),
        ),
    ));

    // 5
    let mut rng = derive_stream(s.cfg.verify.seed, StreamPurpose::Contraction, 0, 0);
    let contraction = contraction_estimate(&kernel, &s.problem, s.params, 5.0, 100, &mut rng).unwrap();
    let max_w = s.problem.shift_targets().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let beta_expected = (1.0 / (2.0 * max_w)).min(1.0);
    results.push((
        5,
        "contraction",
        outcome(
            contraction.l_hat < 1.0 && contraction.beta == beta_expected && contraction.ratios.len() == 100,
            format!(
                "L_hat {} at beta {} over {} pairs",
                contraction.l_hat,
                contraction.beta,
                contraction.ratios.len()
            ),
        ),
    ));

    // 6
    let spans = span_growth(&kernel, &s.problem, s.params, 100).unwrap();
    let max_span = spans.iter().copied().fold(0.0, f64::max);
    results.push((
        6,
        "span boundedness",
        outcome(
            max_span <= 2.0 * spans[19],
            format!("max span {max_span}, span at n = 20 {}", spans[19]),
        ),
    ));

    // 7
    let other = s.grid.nearest_index(2.5);
    let second =
        solve_fixed_point_with_anchor(&kernel, &s.problem, s.params, tol, s.cfg.solver.max_iter, other).unwrap();
    let diff: Vec<f64> = solution.w.values.iter().zip(&second.w.values).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    let deviation = diff.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
    let dl = (solution.lambda - second.lambda).abs();
    results.push((
        7,
        "anchor independence",
        outcome(
            dl <= 10.0 * tol && deviation < 10.0 * tol,
            format!("|dlambda| {dl:e}, w offset deviation {deviation:e}"),
        ),
    ));

    // 8
    let states: Vec<f64> = (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect();
    let omega = Weight::sup_abs();
    let frozen: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 32).unwrap().into();
    let d0 = verify_drift(&frozen, &omega, &[0.0, 0.5, 1.0, -0.5], &states, 0.5, 16, 5).unwrap();
    let noisy = verify_drift(&s.model, &omega, &[0.0, 0.5, 1.0], &states, 0.5, 2000, 5).unwrap();
    let (ok0, text0) = match &d0.estimate {
        Some(e) => (
            e.b1_hat == 0.65 && e.b1_hat >= (-0.5f64).exp() && e.m2_hat.iter().all(|m| m.1 <= 1e-9),
            format!("sigma 0: b1 {} max M2 {:e}", e.b1_hat, e.m2_hat.iter().map(|m| m.1).fold(f64::MIN, f64::max)),
        ),
        None => (false, "sigma 0: not certified".into()),
    };
    let (ok1, text1) = match &noisy.estimate {
        Some(e) => (
            e.b1_hat < 1.0 && e.m1_hat.iter().chain(&e.m2_hat).all(|m| m.1.is_finite()),
            format!("sigma 1: b1 {} M2 {:?}", e.b1_hat, e.m2_hat.iter().map(|m| m.1).collect::<Vec<_>>()),
        ),
        None => (false, "sigma 1: not certified".into()),
    };
    results.push((8, "drift certification", outcome(ok0 && ok1, format!("{text0}; {text1}"))));

    // 9
    let mut noise_ok = true;
    let mut worst = 0.0_f64;
    for d in [1usize, 2] {
        let m = DiffusionModel::diagonal_ou(&vec![1.0; d], 1.0, 32).unwrap();
        for g in [0.5, 1.0, 2.0] {
            let c = verify_noise_bound_example1(&m, g, 0.5, 100_000, 5).unwrap();
            noise_ok &= c.holds();
            worst = worst.max(c.empirical_mgf / c.analytic_bound);
        }
    }
    results.push((
        9,
        "noise moment bound",
        outcome(noise_ok, format!("max empirical/bound ratio {worst}")),
    ));

    // 10
    let sweep = lambda_gamma_sweep(&kernel, &s.problem, &[-2.0, -1.0, -0.5, -0.1, -0.01], tol, 500).unwrap();
    results.push((
        10,
        "gamma sweep",
        outcome(
            sweep.monotone && sweep.max_jump <= 0.5 * sweep.range,
            format!(
                "monotone {}, max jump {} vs 0.5 x range {}, lambdas {:?}",
                sweep.monotone,
                sweep.max_jump,
                0.5 * sweep.range,
                sweep.points.iter().map(|p| p.1).collect::<Vec<_>>()
            ),
        ),
    ));

    // 11
    let run_pipeline = |dir: &Path| {
        let config = dir.join("config.toml");
        std::fs::write(&config, DEFAULT).unwrap();
        let out = dir.join("out");
        let args = |cmd: &[&str]| {
            let mut v = vec!["impulse".to_string()];
            v.extend(cmd.iter().map(|s| s.to_string()));
            v.extend(["--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()]);
            v
        };
        assert_eq!(impulse_cli::run(args(&["solve"])), 0);
        assert_eq!(impulse_cli::run(args(&["simulate"])), 0);
        assert_eq!(impulse_cli::run(args(&["verify", "--which", "drift"])), 0);
        ["solution.csv", "simulate.csv", "drift.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let identical = run_pipeline(a.path()) == run_pipeline(b.path());
    results.push((
        11,
        "determinism",
        outcome(identical, "solution.csv, simulate.csv, drift.csv compared byte for byte".into()),
    ));

    // 12
    let probes: Vec<f64> = s.grid.points().iter().copied().filter(|x| x.abs() <= 3.0 + 1e-12).collect();
    let minor = verify_minorisation(&s.model, &omega, 3.0, 0.5, 64, 10_000, 5, &probes, 5.0, (-1.0, 1.0)).unwrap();
    results.push((
        12,
        "minorisation",
        outcome(
            minor.d_hat > 0.0 && minor.overlap_on_u > 0.0,
            format!("d_hat {}, overlap_on_U {}", minor.d_hat, minor.overlap_on_u),
        ),
    ));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} ({name}): {} {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
