//! Subcommand pipelines and artifact writers.
//!
//! Every artifact carries the config hash and tool version: JSON records as
//! fields, CSV files as a leading `#` comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use impulse_core::kernel::kernel_key;
use impulse_core::{
    build_kernel, contraction_estimate, derive_stream, estimate_longrun_value, extract_policy, holder_suite,
    lambda_gamma_sweep, solve_fixed_point, verify_drift, verify_minorisation, verify_noise_bound_example1,
    Action, DiffusionModel, FrozenKernel, RiskParams, StateGrid, StationaryPolicy, StreamPurpose,
};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, RunConfig};
use crate::{CliError, Command, CommonArgs, VerifyTarget, TOOL_VERSION};

pub fn dispatch(command: &Command) -> Result<Vec<String>, CliError> {
    match command {
        Command::Solve(common) => cmd_solve(&Context::prepare(common)?),
        Command::Simulate { common, policy } => {
            let ctx = Context::prepare(common)?;
            let path = policy.clone().unwrap_or_else(|| ctx.out.join("policy.json"));
            cmd_simulate(&ctx, &path)
        }
        Command::Verify { common, which } => cmd_verify(&Context::prepare(common)?, *which),
    }
}

/// Validated config plus output location.
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
}

impl Context {
    pub fn prepare(args: &CommonArgs) -> Result<Self, CliError> {
        let mut config = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            config.override_seed(seed);
        }
        config.validate()?;
        if let Some(n) = args.threads {
            if n == 0 {
                return Err(CliError::Validation("--threads must be at least 1".into()));
            }
            // Only the first call in a process can size the global pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        fs::create_dir_all(&args.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
        Ok(Self {
            config_hash: config.hash(),
            config,
            out: args.out.clone(),
        })
    }

    fn csv_header(&self) -> String {
        format!("# tool_version={TOOL_VERSION} config_hash={}\n", self.config_hash)
    }

    fn params(&self) -> Result<RiskParams, CliError> {
        Ok(RiskParams::new(self.config.problem.gamma)?)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, record: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(record).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Load `kernel-<key>.bin` from the output directory or build and store it.
    fn kernel(&self, grid: &StateGrid) -> Result<(FrozenKernel, bool), CliError> {
        let cfg = &self.config;
        let model = cfg.model()?;
        let reward = cfg.reward();
        let key = kernel_key(
            &model.tag(),
            reward.tag(),
            cfg.kernel.seed,
            grid,
            cfg.problem.delta,
            cfg.kernel.n_samples,
        );
        let path = self.out.join(format!("kernel-{key}.bin"));
        if path.exists() {
            let k = FrozenKernel::load(&path)?;
            if k.key() == key {
                return Ok((k, true));
            }
        }
        let k = build_kernel(
            &model,
            grid,
            &reward,
            cfg.problem.delta,
            cfg.kernel.n_samples,
            cfg.kernel.seed,
        )?;
        k.save(&path)?;
        Ok((k, false))
    }
}

fn meta(ctx: &Context) -> Meta {
    Meta {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: ctx.config_hash.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub tool_version: String,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(flatten)]
    pub meta: Meta,
    pub grid_hash: String,
    pub kernel_key: String,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub lambda_over_delta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub anchor_index: usize,
    pub beta: f64,
    pub kernel_clamp_fraction: f64,
    pub min_effective_sample_size: f64,
    pub shift_nodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyArtifact {
    #[serde(flatten)]
    pub meta: Meta,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub policy: StationaryPolicy,
}

pub fn cmd_solve(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    let problem = cfg.problem(&grid)?;
    let params = ctx.params()?;
    let (kernel, cached) = ctx.kernel(&grid)?;
    let solution = solve_fixed_point(&kernel, &problem, params, cfg.solver.tol, cfg.solver.max_iter)?;
    let policy = extract_policy(&solution, &kernel, &problem, params)?;
    let mut min_ess = f64::INFINITY;
    for i in 0..kernel.n_states() {
        min_ess = min_ess.min(kernel.effective_sample_size(i, &solution.w, params)?);
    }

    let mut csv = ctx.csv_header();
    csv.push_str("x,omega,w,action_flag,action_target\n");
    for (i, a) in policy.actions().iter().enumerate() {
        let target = match a {
            Action::Stay => String::new(),
            Action::Shift { target, .. } => format!("{target}"),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            grid.points()[i],
            grid.weight_values()[i],
            solution.w.values[i],
            a.shift_flag(),
            target
        );
    }
    ctx.write("solution.csv", &csv)?;
    let record = SolutionRecord {
        meta: meta(ctx),
        grid_hash: grid.hash(),
        kernel_key: solution.kernel_key.clone(),
        gamma: solution.gamma,
        delta: solution.delta,
        lambda: solution.lambda,
        lambda_over_delta: solution.lambda / solution.delta,
        residual: solution.residual_span,
        iterations: solution.iterations,
        anchor_index: solution.anchor_index,
        beta: solution.beta,
        kernel_clamp_fraction: kernel.clamp_fraction(),
        min_effective_sample_size: min_ess,
        shift_nodes: policy.shift_count(),
    };
    ctx.write_json("solution.json", &record)?;
    ctx.write_json(
        "policy.json",
        &PolicyArtifact {
            meta: meta(ctx),
            gamma: solution.gamma,
            delta: solution.delta,
            lambda: solution.lambda,
            policy,
        },
    )?;
    Ok(vec![
        format!("kernel {} ({})", kernel.key(), if cached { "cached" } else { "built" }),
        format!("kernel clamp fraction {}", kernel.clamp_fraction()),
        format!("converged in {} iterations, residual {}", solution.iterations, solution.residual_span),
        format!("lambda {}", solution.lambda),
        format!("lambda/delta {}", solution.lambda / solution.delta),
        format!("min effective sample size {min_ess}"),
        format!("shift nodes {}", record.shift_nodes),
    ])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateRecord {
    #[serde(flatten)]
    pub meta: Meta,
    pub j_hat: f64,
    pub stderr: f64,
    pub lambda_over_delta: f64,
    pub gap: f64,
    /// `|Ĵ(n) - Ĵ(n/2)|`.
    pub stabilization: f64,
    pub shifts_per_step: f64,
    pub max_omega_moment: f64,
    pub n_steps: usize,
    pub n_reps: usize,
}

pub fn cmd_simulate(ctx: &Context, policy_path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(policy_path)
        .map_err(|e| CliError::Io(format!("cannot read policy {}: {e}", policy_path.display())))?;
    let artifact: PolicyArtifact = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("malformed policy {}: {e}", policy_path.display())))?;
    if artifact.meta.config_hash != ctx.config_hash {
        return Err(CliError::Validation(format!(
            "policy {} was produced under config hash {}, but the current config hashes to {}; rerun solve",
            policy_path.display(),
            artifact.meta.config_hash,
            ctx.config_hash
        )));
    }
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    if artifact.policy.grid().hash() != grid.hash() {
        return Err(CliError::Validation("policy grid differs from the config grid".into()));
    }
    let problem = cfg.problem(&grid)?;
    let model = cfg.model()?;
    let sim = &cfg.simulate;
    let est = estimate_longrun_value(
        &model,
        &artifact.policy,
        &problem,
        sim.start,
        sim.n_steps,
        sim.n_reps,
        ctx.params()?,
        sim.seed,
    )?;
    let mut csv = ctx.csv_header();
    csv.push_str("k,T_k,J_hat_k\n");
    for (k, j) in est.per_horizon.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", k + 1, (k + 1) as f64 * est.delta, j);
    }
    ctx.write("simulate.csv", &csv)?;
    let lambda_over_delta = artifact.lambda / artifact.delta;
    let half = est.per_horizon[(sim.n_steps / 2).max(1) - 1];
    let record = SimulateRecord {
        meta: meta(ctx),
        j_hat: est.j_hat,
        stderr: est.stderr,
        lambda_over_delta,
        gap: lambda_over_delta - est.j_hat,
        stabilization: (est.j_hat - half).abs(),
        shifts_per_step: est.shifts_per_step,
        max_omega_moment: est.omega_moment.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_steps: est.n_steps,
        n_reps: est.n_reps,
    };
    ctx.write_json("simulate.json", &record)?;
    Ok(vec![
        format!("J_hat {} (stderr {})", record.j_hat, record.stderr),
        format!("lambda/delta {lambda_over_delta}"),
        format!("gap {}", record.gap),
        format!("shifts per step {}", record.shifts_per_step),
    ])
}

pub fn cmd_verify(ctx: &Context, which: VerifyTarget) -> Result<Vec<String>, CliError> {
    match which {
        VerifyTarget::Drift => verify_drift_cmd(ctx),
        VerifyTarget::Minorisation => verify_minorisation_cmd(ctx),
        VerifyTarget::Holder => verify_holder_cmd(ctx),
        VerifyTarget::Contraction => verify_contraction_cmd(ctx),
        VerifyTarget::Sweep => verify_sweep_cmd(ctx),
        VerifyTarget::NoiseBound => verify_noise_cmd(ctx),
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    meta: Meta,
    check: &'a str,
    passed: bool,
    note: String,
    result: &'a T,
}

fn report<T: Serialize>(
    ctx: &Context,
    check: &str,
    passed: bool,
    note: String,
    result: &T,
) -> Result<(), CliError> {
    ctx.write_json(
        &format!("{check}.json"),
        &Report {
            meta: meta(ctx),
            check,
            passed,
            note,
            result,
        },
    )?;
    Ok(())
}

fn verdict(check: &str, passed: bool, lines: Vec<String>) -> Result<Vec<String>, CliError> {
    if passed {
        Ok(lines)
    } else {
        Err(CliError::Certification(format!("{check}: {}", lines.join("; "))))
    }
}

fn verify_drift_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let v = &cfg.verify;
    let mut gammas = v.drift_gammas.clone();
    for g in [0.0, cfg.problem.gamma] {
        if !gammas.contains(&g) {
            gammas.push(g);
        }
    }
    let l = cfg.grid.half_width;
    let n = v.drift_states;
    let states: Vec<f64> = (0..n).map(|k| -l + 2.0 * l * k as f64 / (n - 1) as f64).collect();
    let r = verify_drift(
        &cfg.model()?,
        &cfg.weight(),
        &gammas,
        &states,
        cfg.problem.delta,
        v.drift_samples,
        v.seed,
    )?;
    let mut csv = ctx.csv_header();
    csv.push_str("gamma,state,omega,mu_hat,mu_path_hat,bound\n");
    for row in &r.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.gamma, row.state, row.omega, row.mu_hat, row.mu_path_hat, row.bound
        );
    }
    ctx.write("drift.csv", &csv)?;
    let note = format!("bounds probed at the finite gamma set {gammas:?} only");
    report(ctx, "drift", r.certified(), note, &r)?;
    let lines = match &r.estimate {
        Some(e) => {
            let mut lines = vec![format!("b1_hat {}", e.b1_hat)];
            for ((g, m1), (_, m2)) in e.m1_hat.iter().zip(&e.m2_hat) {
                lines.push(format!("gamma {g}: M1_hat {m1}, M2_hat {m2}"));
            }
            lines
        }
        None => vec!["no candidate drift rate in (0, 1) passes the flatness test".into()],
    };
    verdict("drift", r.certified(), lines)
}

fn verify_minorisation_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let v = &cfg.verify;
    let grid = cfg.grid()?;
    let omega = cfg.weight();
    let probes: Vec<f64> = grid
        .points()
        .iter()
        .copied()
        .filter(|&x| omega.eval_scalar(x) <= v.radius_r + 1e-12)
        .collect();
    let targets = cfg.shift_targets();
    let u = (
        targets.iter().copied().fold(f64::INFINITY, f64::min),
        targets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let e = verify_minorisation(
        &cfg.model()?,
        &omega,
        v.radius_r,
        cfg.problem.delta,
        v.bins,
        v.minorisation_samples,
        v.seed,
        &probes,
        cfg.grid.half_width,
        u,
    )?;
    let width = 2.0 * cfg.grid.half_width / v.bins as f64;
    let mut csv = ctx.csv_header();
    csv.push_str("bin_lo,bin_hi,nu_hat\n");
    for (b, nu) in e.nu_hat.iter().enumerate() {
        let lo = -cfg.grid.half_width + b as f64 * width;
        let _ = writeln!(csv, "{},{},{}", lo, lo + width, nu);
    }
    ctx.write("minorisation.csv", &csv)?;
    let note = "minorising measure resolved at histogram resolution only".to_string();
    report(ctx, "minorisation", e.certified(), note, &e)?;
    verdict(
        "minorisation",
        e.certified(),
        vec![
            format!("R {}, {} probe states", e.radius_r, e.probe_states.len()),
            format!("d_hat {}", e.d_hat),
            format!("overlap_on_U {}", e.overlap_on_u),
        ],
    )
}

fn verify_holder_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let v = &ctx.config.verify;
    let r = holder_suite(v.holder_instances, &v.holder_gammas, &v.holder_ps, v.seed)?;
    let note = "tolerance 1e-9 (1 + |lhs|)".to_string();
    report(ctx, "holder", r.all_pass(), note, &r)?;
    verdict(
        "holder",
        r.all_pass(),
        vec![format!("{} checks on {} instances, {} failures", r.checks, r.instances, r.failures.len())],
    )
}

fn verify_contraction_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    let problem = cfg.problem(&grid)?;
    let (kernel, _) = ctx.kernel(&grid)?;
    let mut rng = derive_stream(cfg.verify.seed, StreamPurpose::Contraction, 0, 0);
    let c = contraction_estimate(
        &kernel,
        &problem,
        ctx.params()?,
        cfg.verify.span_bound,
        cfg.verify.contraction_pairs,
        &mut rng,
    )?;
    let mut csv = ctx.csv_header();
    csv.push_str("pair,ratio\n");
    for (i, r) in c.ratios.iter().enumerate() {
        let _ = writeln!(csv, "{i},{r}");
    }
    ctx.write("contraction.csv", &csv)?;
    #[derive(Serialize)]
    struct Out {
        l_hat: f64,
        beta: f64,
        pairs: usize,
        skipped: usize,
    }
    let passed = c.l_hat < 1.0;
    let out = Out {
        l_hat: c.l_hat,
        beta: c.beta,
        pairs: c.ratios.len(),
        skipped: c.skipped,
    };
    report(ctx, "contraction", passed, format!("span bound {}", cfg.verify.span_bound), &out)?;
    verdict(
        "contraction",
        passed,
        vec![format!("L_hat {} at beta {} ({} pairs, {} skipped)", c.l_hat, c.beta, out.pairs, c.skipped)],
    )
}

fn verify_sweep_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    let problem = cfg.problem(&grid)?;
    let (kernel, _) = ctx.kernel(&grid)?;
    let s = lambda_gamma_sweep(
        &kernel,
        &problem,
        &cfg.verify.sweep_gammas,
        cfg.solver.tol,
        cfg.solver.max_iter,
    )?;
    let mut csv = ctx.csv_header();
    csv.push_str("gamma,lambda\n");
    for (g, l) in &s.points {
        let _ = writeln!(csv, "{g},{l}");
    }
    ctx.write("sweep.csv", &csv)?;
    let jump_ok = s.max_jump <= 0.5 * s.range || s.points.len() < 3;
    let passed = s.monotone && jump_ok;
    report(ctx, "sweep", passed, "shared kernel across gamma".into(), &s)?;
    verdict(
        "sweep",
        passed,
        vec![
            format!("monotone {}", s.monotone),
            format!("max adjacent jump {} (range {})", s.max_jump, s.range),
        ],
    )
}

fn verify_noise_cmd(ctx: &Context) -> Result<Vec<String>, CliError> {
    let cfg = &ctx.config;
    let (alpha, sigma, substeps) = match cfg.model {
        ModelConfig::Diffusion { alpha, sigma, substeps } => (alpha, sigma, substeps),
        _ => {
            return Err(CliError::Validation(
                "model.kind: the noise bound check needs a diffusion model".into(),
            ))
        }
    };
    let v = &cfg.verify;
    let mut checks = Vec::new();
    for &d in &v.noise_dimensions {
        let model = DiffusionModel::diagonal_ou(&vec![alpha; d], sigma, substeps)?;
        for &g in &v.noise_gammas {
            checks.push(verify_noise_bound_example1(&model, g, v.noise_t, v.noise_samples, v.seed)?);
        }
    }
    let mut csv = ctx.csv_header();
    csv.push_str("dimension,gamma,empirical_mgf,analytic_bound,relative_se,holds\n");
    let mut lines = Vec::new();
    for c in &checks {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.dimension,
            c.gamma,
            c.empirical_mgf,
            c.analytic_bound,
            c.relative_se,
            c.holds()
        );
        lines.push(format!(
            "d {} gamma {}: empirical {} vs bound {} ({})",
            c.dimension,
            c.gamma,
            c.empirical_mgf,
            c.analytic_bound,
            if c.holds() { "ok" } else { "violated" }
        ));
    }
    ctx.write("noise_bound.csv", &csv)?;
    let passed = checks.iter().all(|c| c.holds());
    report(ctx, "noise_bound", passed, format!("t = {}", v.noise_t), &checks)?;
    verdict("noise-bound", passed, lines)
}
