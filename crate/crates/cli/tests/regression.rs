//! Pinned values for the bundled default problem (kernel seed 7, simulation
//! seed 11). Any change here means the numerics changed.

use impulse_cli::config::RunConfig;
use impulse_core::*;

const DEFAULT: &str = include_str!("../configs/default.toml");

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + b.abs())
}

#[test]
fn default_problem_regression() {
    let cfg = RunConfig::from_toml(DEFAULT).unwrap();
    let grid = cfg.grid().unwrap();
    let model = cfg.model().unwrap();
    let problem = cfg.problem(&grid).unwrap();
    let params = RiskParams::new(cfg.problem.gamma).unwrap();
    let kernel = build_kernel(&model, &grid, problem.reward(), 0.5, 2000, 7).unwrap();

    let s = solve_fixed_point(&kernel, &problem, params, 1e-8, 500).unwrap();
    assert_eq!(s.iterations, 17);
    assert!(s.residual_span < 1e-8);
    assert!(close(s.lambda, 0.372515396297397, 1e-9), "lambda {}", s.lambda);

    // Shift region is |x| >= 2.15, everything inside stays.
    let policy = extract_policy(&s, &kernel, &problem, params).unwrap();
    for (a, x) in policy.actions().iter().zip(grid.points()) {
        assert_eq!(a.shift_flag() == 1, x.abs() >= 2.15 - 1e-9, "x = {x}");
    }

    let est = estimate_longrun_value(&model, &policy, &problem, 0.0, 400, 400, params, 11).unwrap();
    assert!(close(est.j_hat, 0.7434363392320645, 1e-9), "J {}", est.j_hat);
    assert!(est.shifts_per_step > 0.0 && est.shifts_per_step < 1.0);
    assert!(close(est.shifts_per_step, 0.00225625, 1e-12));
    let half = est.per_horizon[199];
    assert!((est.j_hat - half).abs() <= 5.0 * est.stderr);
    // No doubling of the ω-moment over the second half of the horizon.
    let first = est.omega_moment[..200].iter().copied().fold(0.0, f64::max);
    let all = est.omega_moment.iter().copied().fold(0.0, f64::max);
    assert!(all <= 2.0 * first);

    // Esscher measures at x = -4 under w and at y = 4 under 0.
    let tv = esscher_tv_diagnostic(&kernel, &s.w.scale(-0.5), &GridFunction::zeros(201), 20, 180, &problem, params)
        .unwrap();
    assert!(tv > 0.0 && tv <= 2.0 + 0.5 * (4.0 + 4.0));
    assert!(close(tv, 3.399146503218216, 1e-9), "tv {tv}");

    // T^n 0 stays bounded in span.
    let spans = span_growth(&kernel, &problem, params, 100).unwrap();
    assert!(spans.iter().all(|v| v.is_finite() && *v < 1.0));
}

#[test]
fn constant_reward_on_default_kernel() {
    let cfg = RunConfig::from_toml(DEFAULT).unwrap();
    let grid = cfg.grid().unwrap();
    let model = cfg.model().unwrap();
    let reward = Reward::constant(1.0);
    let kernel = build_kernel(&model, &grid, &reward, 0.5, 200, 7).unwrap();
    let problem =
        ImpulseProblem::new(&grid, reward, ShiftCost::constant(-10.0), -10.0, 0.5, Weight::sup_abs()).unwrap();
    let s = solve_fixed_point(&kernel, &problem, RiskParams::new(-0.5).unwrap(), 1e-10, 50).unwrap();
    assert!((s.lambda - 0.5).abs() < 1e-12);
    assert!(s.w.values.iter().all(|v| v.abs() < 1e-12));
}
