//! Empirical checks of the standing assumptions and of the γ-dependence of λ.
//!
//! Drift and minorisation estimates use common random numbers across start
//! states: sample `j` draws from stream `(seed, Verify, tag, j)` whatever the
//! state, so differences between states reflect the dynamics only.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{operator_t, solve_fixed_point, ImpulseProblem};
use crate::entropic::{entropic_utility, holder_split, RiskParams};
use crate::error::{Error, Result};
use crate::functions::Weight;
use crate::kernel::FrozenKernel;
use crate::norms::{beta_span_seminorm, GridFunction};
use crate::processes::{diffusion_noise_mgf_bound, sample_segment, DiffusionModel, ProcessModel};
use crate::rng::{derive_stream, StreamPurpose};

const DRIFT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const MINORISATION_STREAM: u64 = 2;

/// Candidate drift rates `0.05, 0.10, …, 0.95`.
pub fn drift_candidates() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Certified drift constants: `b₁` and the per-γ offsets `M₁(γ)`, `M₂(γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub b1_hat: f64,
    /// `(γ, M₁(γ))` in probe order.
    pub m1_hat: Vec<(f64, f64)>,
    /// `(γ, M₂(γ))` in probe order.
    pub m2_hat: Vec<(f64, f64)>,
    pub test_states: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

/// One (γ, state) line of a drift report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub gamma: f64,
    pub state: f64,
    pub omega: f64,
    /// `μ̂^γ(ω(X_δ))`.
    pub mu_hat: f64,
    /// `μ̂^γ(∫₀^δ ω(X_s) ds)`.
    pub mu_path_hat: f64,
    /// `b₁ω(x) + M₂(γ)`, NaN when not certified.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `None` when no candidate passes the flatness test.
    pub estimate: Option<DriftEstimate>,
    pub rows: Vec<DriftRow>,
    pub gammas_probed: Vec<f64>,
}

impl DriftReport {
    pub fn certified(&self) -> bool {
        self.estimate.is_some()
    }
}

fn top_quartile_non_increasing(omegas: &[f64], residuals: &[f64]) -> bool {
    let mut order: Vec<usize> = (0..omegas.len()).collect();
    order.sort_by(|&a, &b| omegas[a].total_cmp(&omegas[b]));
    let keep = omegas.len().div_ceil(4).max(2).min(omegas.len());
    let top = &order[omegas.len() - keep..];
    let scale = 1.0 + top.iter().map(|&i| residuals[i].abs()).fold(0.0, f64::max);
    let slack = 1e-9 * scale;
    top.iter().all(|&a| {
        top.iter()
            .all(|&b| omegas[b] <= omegas[a] || residuals[b] <= residuals[a] + slack)
    })
}

/// Certify `μ^γ_x(ω(X_δ)) ≤ b₁ω(x) + M₂(γ)` on a finite γ set.
///
/// `b₁` is the smallest candidate whose residual `μ̂^γ(ω(X_δ)) - bω(x)` is
/// non-increasing in `ω(x)` over the top quartile of test states, for every
/// γ. `M₂(γ)` is the max residual and `M₁(γ) = max_x μ̂^γ(∫ω ds) - ω(x)`.
/// One-dimensional test states are placed on the diagonal of `ℝ^d`.
pub fn verify_drift(
    model: &ProcessModel,
    omega: &Weight,
    gammas: &[f64],
    test_states: &[f64],
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<DriftReport> {
    if test_states.len() < 2 || n_samples == 0 || gammas.is_empty() {
        return Err(Error::domain("need at least two test states, one gamma and one sample"));
    }
    let dim = model.dimension();
    let omegas: Vec<f64> = test_states.iter().map(|&x| omega.eval(&vec![x; dim])).collect();
    let samples: Vec<(Vec<f64>, Vec<f64>)> = test_states
        .par_iter()
        .map(|&x| {
            let start = vec![x; dim];
            let mut terminal = Vec::with_capacity(n_samples);
            let mut path = Vec::with_capacity(n_samples);
            for j in 0..n_samples as u64 {
                let mut rng = derive_stream(seed, StreamPurpose::Verify, DRIFT_STREAM, j);
                let seg = sample_segment(model, &start, delta, &mut rng)?;
                terminal.push(omega.eval(&seg.terminal));
                path.push(seg.trapezoid(|s| omega.eval(s)));
            }
            Ok((terminal, path))
        })
        .collect::<Result<_>>()?;
    let mut mu = Vec::with_capacity(gammas.len());
    let mut mu_path = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let params = RiskParams::new(gamma)?;
        let mut m = Vec::with_capacity(test_states.len());
        let mut mp = Vec::with_capacity(test_states.len());
        for (terminal, path) in &samples {
            m.push(entropic_utility(terminal, params)?);
            mp.push(entropic_utility(path, params)?);
        }
        mu.push(m);
        mu_path.push(mp);
    }
    let b1 = drift_candidates().into_iter().find(|&b| {
        mu.iter().all(|m| {
            let r: Vec<f64> = m.iter().zip(&omegas).map(|(v, w)| v - b * w).collect();
            top_quartile_non_increasing(&omegas, &r)
        })
    });
    let max_residual = |vals: &[f64], b: f64| {
        vals.iter()
            .zip(&omegas)
            .map(|(v, w)| v - b * w)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let estimate = b1.map(|b| DriftEstimate {
        b1_hat: b,
        m1_hat: gammas
            .iter()
            .zip(&mu_path)
            .map(|(&g, mp)| (g, max_residual(mp, 1.0)))
            .collect(),
        m2_hat: gammas.iter().zip(&mu).map(|(&g, m)| (g, max_residual(m, b))).collect(),
        test_states: test_states.to_vec(),
        n_samples,
        seed,
    });
    let mut rows = Vec::with_capacity(gammas.len() * test_states.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (i, &x) in test_states.iter().enumerate() {
            let bound = match &estimate {
                Some(e) => e.b1_hat * omegas[i] + e.m2_hat[gi].1,
                None => f64::NAN,
            };
            rows.push(DriftRow {
                gamma,
                state: x,
                omega: omegas[i],
                mu_hat: mu[gi][i],
                mu_path_hat: mu_path[gi][i],
                bound,
            });
        }
    }
    Ok(DriftReport {
        estimate,
        rows,
        gammas_probed: gammas.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBoundCheck {
    pub dimension: usize,
    pub gamma: f64,
    pub t: f64,
    pub empirical_mgf: f64,
    pub analytic_bound: f64,
    pub relative_se: f64,
    pub n_samples: usize,
}

impl NoiseBoundCheck {
    /// `empirical ≤ bound · (1 + 3·relative SE)`.
    pub fn holds(&self) -> bool {
        self.empirical_mgf <= self.analytic_bound * (1.0 + 3.0 * self.relative_se)
    }
}

/// Monte Carlo `E[e^{γ ω(Z(t))}]` for the stochastic convolution `Z`, simulated
/// as the model without its bounded drift started at 0, against
/// [`diffusion_noise_mgf_bound`]. `ω` is the max-abs norm.
pub fn verify_noise_bound_example1(
    model: &DiffusionModel,
    gamma: f64,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<NoiseBoundCheck> {
    let analytic_bound = diffusion_noise_mgf_bound(model, gamma, t)?;
    if n_samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let z_model: ProcessModel = model.without_bounded_drift().into();
    let d = model.dimension();
    let omega = Weight::sup_abs();
    let start = vec![0.0; d];
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = derive_stream(seed, StreamPurpose::Verify, NOISE_STREAM, j);
            let seg = sample_segment(&z_model, &start, t, &mut rng)?;
            Ok((gamma * omega.eval(&seg.terminal)).exp())
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(NoiseBoundCheck {
        dimension: d,
        gamma,
        t,
        empirical_mgf: mean,
        analytic_bound,
        relative_se: (var / n).sqrt() / mean,
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorisationEstimate {
    pub radius_r: f64,
    /// Total mass of the bin-wise minimum of the probe histograms.
    pub d_hat: f64,
    pub histogram_bins: usize,
    /// `ν̂`-mass of bins meeting the shift set.
    pub overlap_on_u: f64,
    /// Normalised bin-wise minimum; all zero when `d_hat = 0`.
    pub nu_hat: Vec<f64>,
    pub probe_states: Vec<f64>,
    pub n_samples: usize,
}

impl MinorisationEstimate {
    pub fn certified(&self) -> bool {
        self.d_hat > 0.0
    }
}

/// Histogram witness for `inf_{x∈C_R} P_x[X_δ ∈ A] ≥ d ν(A)`.
///
/// Terminals are binned on `[-half_width, half_width]`, out-of-range values
/// counted in the edge bins. `shift_range` is `[min U, max U]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_minorisation(
    model: &ProcessModel,
    omega: &Weight,
    radius_r: f64,
    delta: f64,
    histogram_bins: usize,
    n_samples: usize,
    seed: u64,
    probe_states: &[f64],
    half_width: f64,
    shift_range: (f64, f64),
) -> Result<MinorisationEstimate> {
    if !(radius_r > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {radius_r}")));
    }
    if probe_states.len() < 5 {
        return Err(Error::domain(format!(
            "need at least 5 probe states, got {}",
            probe_states.len()
        )));
    }
    if model.dimension() != 1 {
        return Err(Error::domain("minorisation check needs a one-dimensional model"));
    }
    if let Some(&x) = probe_states.iter().find(|&&x| omega.eval_scalar(x) > radius_r) {
        return Err(Error::domain(format!("probe state {x} lies outside C_R")));
    }
    if histogram_bins == 0 || n_samples == 0 || !(half_width > 0.0) {
        return Err(Error::domain("bins, samples and half width must be positive"));
    }
    let width = 2.0 * half_width / histogram_bins as f64;
    let histograms: Vec<Vec<f64>> = probe_states
        .par_iter()
        .map(|&x| {
            let mut counts = vec![0usize; histogram_bins];
            for j in 0..n_samples as u64 {
                let mut rng = derive_stream(seed, StreamPurpose::Verify, MINORISATION_STREAM, j);
                let seg = sample_segment(model, &[x], delta, &mut rng)?;
                let pos = ((seg.terminal[0] + half_width) / width).floor();
                let bin = pos.clamp(0.0, (histogram_bins - 1) as f64) as usize;
                counts[bin] += 1;
            }
            Ok(counts.into_iter().map(|c| c as f64 / n_samples as f64).collect())
        })
        .collect::<Result<_>>()?;
    let minima: Vec<f64> = (0..histogram_bins)
        .map(|b| histograms.iter().map(|h| h[b]).fold(f64::INFINITY, f64::min))
        .collect();
    let d_hat: f64 = minima.iter().sum();
    let nu_hat: Vec<f64> = if d_hat > 0.0 {
        minima.iter().map(|m| m / d_hat).collect()
    } else {
        vec![0.0; histogram_bins]
    };
    let (u_lo, u_hi) = shift_range;
    let overlap_on_u = nu_hat
        .iter()
        .enumerate()
        .filter(|(b, _)| {
            let lo = -half_width + *b as f64 * width;
            lo <= u_hi && lo + width >= u_lo
        })
        .map(|(_, v)| v)
        .sum();
    Ok(MinorisationEstimate {
        radius_r,
        d_hat,
        histogram_bins,
        overlap_on_u,
        nu_hat,
        probe_states: probe_states.to_vec(),
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// `(γ, λ)` in increasing γ.
    pub points: Vec<(f64, f64)>,
    pub monotone: bool,
    /// `max |λ_{i+1} - λ_i|`.
    pub max_jump: f64,
    /// `max λ - min λ`.
    pub range: f64,
    pub iterations: Vec<usize>,
}

/// Solve the fixed point at each γ on one shared kernel.
pub fn lambda_gamma_sweep(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    gammas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::domain("empty gamma sweep"));
    }
    if gammas.iter().any(|&g| !(g < 0.0)) || gammas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("sweep gammas must be negative and strictly increasing"));
    }
    let solutions: Vec<(f64, usize)> = gammas
        .par_iter()
        .map(|&gamma| {
            let wrap = |e| Error::Sweep {
                gamma,
                source: Box::new(e),
            };
            let params = RiskParams::new(gamma).map_err(wrap)?;
            let s = solve_fixed_point(kernel, problem, params, tol, max_iter).map_err(wrap)?;
            Ok((s.lambda, s.iterations))
        })
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = gammas.iter().zip(&solutions).map(|(&g, &(l, _))| (g, l)).collect();
    let monotone = points.windows(2).all(|w| w[1].1 >= w[0].1);
    let max_jump = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).abs())
        .fold(0.0, f64::max);
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SweepReport {
        points,
        monotone,
        max_jump,
        range: hi - lo,
        iterations: solutions.iter().map(|s| s.1).collect(),
    })
}

/// `‖Tⁿ 0‖_{ω-span}` (β = 1) for `n = 1..=n_max`.
pub fn span_growth(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
    n_max: usize,
) -> Result<Vec<f64>> {
    let grid = kernel.grid();
    let mut g = GridFunction::zeros(grid.len());
    let mut spans = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        g = operator_t(kernel, &g, problem, params)?;
        // Spans are shift invariant; recentring keeps the iterate bounded.
        let c = g.values[grid.nearest_index(0.0)];
        g = g.shift(-c);
        spans.push(beta_span_seminorm(&g, grid, 1.0)?);
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFailure {
    pub instance: usize,
    pub gamma: f64,
    pub p: f64,
    pub lhs: f64,
    pub superadditive_bound: f64,
    pub subadditive_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub instances: usize,
    pub checks: usize,
    pub failures: Vec<HolderFailure>,
}

impl HolderReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

fn draw_pair(rng: &mut crate::rng::SimRng, len: usize) -> (Vec<f64>, Vec<f64>) {
    let kind = rng.random_range(0..4u8);
    let scale = rng.random_range(0.1..3.0);
    let rho: f64 = rng.random_range(-1.0..1.0);
    let mut x = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for _ in 0..len {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let (u, v) = match kind {
            0 => (a, rho * a + (1.0 - rho * rho).sqrt() * b),
            1 => (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            2 => {
                let e: f64 = Exp1.sample(rng);
                (e, -rho * e + 0.3 * b)
            }
            _ => (a.signum() * a * a, b + if rng.random::<f64>() < 0.1 { 5.0 } else { 0.0 }),
        };
        x.push(scale * u);
        y.push(scale * v);
    }
    (x, y)
}

/// Both entropic Hölder bounds on `n_instances` random paired samples, for
/// every `(γ, p)` combination.
pub fn holder_suite(n_instances: usize, gammas: &[f64], ps: &[f64], seed: u64) -> Result<HolderReport> {
    let per_instance: Vec<Vec<HolderFailure>> = (0..n_instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = derive_stream(seed, StreamPurpose::Holder, k as u64, 0);
            let len = rng.random_range(2..=64);
            let (x, y) = draw_pair(&mut rng, len);
            let mut failures = Vec::new();
            for &gamma in gammas {
                for &p in ps {
                    let h = holder_split(&x, &y, gamma, p)?;
                    if !h.holds() {
                        failures.push(HolderFailure {
                            instance: k,
                            gamma,
                            p,
                            lhs: h.lhs,
                            superadditive_bound: h.superadditive_bound,
                            subadditive_bound: h.subadditive_bound,
                        });
                    }
                }
            }
            Ok(failures)
        })
        .collect::<Result<_>>()?;
    Ok(HolderReport {
        instances: n_instances,
        checks: n_instances * gammas.len() * ps.len(),
        failures: per_instance.into_iter().flatten().collect(),
    })
}
