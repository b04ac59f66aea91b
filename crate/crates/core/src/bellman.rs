//! Dyadic Bellman operator with impulse actions and its fixed point.
//!
//! On the frozen kernel the operator reads
//!
//! ```text
//! R g(x) = max { F_g(x), max_ξ F_g(ξ) + c(x, ξ) },   F_g(y) = μ̂^γ_y(∫₀^δ f(X_s)ds + g(X_δ))
//! ```
//!
//! and `T g = γ R(g/γ)`. A shift moves the process to the node `ξ` and lets
//! it run uncontrolled for one step, so `F_g(ξ)` is the stay value of node
//! `ξ` and shift targets must be grid nodes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropic::RiskParams;
use crate::error::{Error, Result};
use crate::functions::{Reward, ShiftCost, Weight};
use crate::kernel::FrozenKernel;
use crate::norms::{beta_span_seminorm, weighted_tv_norm, GridFunction, StateGrid};
use crate::rng::SimRng;

/// Reward, shift cost and shift set of the control problem on a fixed grid.
#[derive(Debug, Clone)]
pub struct ImpulseProblem {
    reward: Reward,
    shift_cost: ShiftCost,
    cost_ceiling: f64,
    shift_targets: Vec<f64>,
    target_indices: Vec<usize>,
    delta: f64,
    weight: Weight,
    grid_hash: String,
    reward_omega_norm: f64,
    min_cost_omega_norm: f64,
}

impl ImpulseProblem {
    /// The shift set is the grid's shift set. Checks `c(x, ξ) ≤ c₀ < 0` on
    /// every node × target pair and finiteness of `‖f‖_ω` and `‖ĉ‖_ω`.
    pub fn new(
        grid: &StateGrid,
        reward: Reward,
        shift_cost: ShiftCost,
        cost_ceiling: f64,
        delta: f64,
        weight: Weight,
    ) -> Result<Self> {
        if !(cost_ceiling < 0.0 && cost_ceiling.is_finite()) {
            return Err(Error::domain(format!(
                "cost ceiling c0 must be negative, got {cost_ceiling}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::domain(format!("delta must be positive, got {delta}")));
        }
        let target_indices = grid.shift_set_indices().to_vec();
        let shift_targets: Vec<f64> = target_indices.iter().map(|&i| grid.points()[i]).collect();
        let mut reward_omega_norm = 0.0_f64;
        let mut min_cost_omega_norm = 0.0_f64;
        for (&x, &w) in grid.points().iter().zip(grid.weight_values()) {
            let f = reward.eval(x);
            if !f.is_finite() {
                return Err(Error::domain(format!("reward is not finite at {x}")));
            }
            reward_omega_norm = reward_omega_norm.max(f.abs() / (1.0 + w));
            let mut c_hat = f64::INFINITY;
            for &xi in &shift_targets {
                let c = shift_cost.eval(x, xi);
                if !c.is_finite() {
                    return Err(Error::domain(format!("shift cost is not finite at ({x}, {xi})")));
                }
                if c > cost_ceiling {
                    return Err(Error::domain(format!(
                        "shift cost c({x}, {xi}) = {c} exceeds the ceiling {cost_ceiling}"
                    )));
                }
                c_hat = c_hat.min(c);
            }
            min_cost_omega_norm = min_cost_omega_norm.max(c_hat.abs() / (1.0 + w));
        }
        Ok(Self {
            reward,
            shift_cost,
            cost_ceiling,
            shift_targets,
            target_indices,
            delta,
            weight,
            grid_hash: grid.hash(),
            reward_omega_norm,
            min_cost_omega_norm,
        })
    }

    pub fn reward(&self) -> &Reward {
        &self.reward
    }

    pub fn shift_cost(&self) -> &ShiftCost {
        &self.shift_cost
    }

    pub fn cost_ceiling(&self) -> f64 {
        self.cost_ceiling
    }

    pub fn shift_targets(&self) -> &[f64] {
        &self.shift_targets
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_indices
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn reward_omega_norm(&self) -> f64 {
        self.reward_omega_norm
    }

    /// `‖ĉ‖_ω` with `ĉ(x) = min_ξ c(x, ξ)`.
    pub fn min_cost_omega_norm(&self) -> f64 {
        self.min_cost_omega_norm
    }

    fn check_kernel(&self, kernel: &FrozenKernel) -> Result<()> {
        if kernel.grid().hash() != self.grid_hash {
            return Err(Error::domain("kernel grid differs from the problem grid"));
        }
        if kernel.delta() != self.delta {
            return Err(Error::domain(format!(
                "kernel delta {} differs from problem delta {}",
                kernel.delta(),
                self.delta
            )));
        }
        if kernel.reward_tag() != self.reward.tag() {
            return Err(Error::domain(format!(
                "kernel reward '{}' differs from problem reward '{}'",
                kernel.reward_tag(),
                self.reward.tag()
            )));
        }
        Ok(())
    }
}

/// Either continue uncontrolled or shift to a target node first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Stay,
    Shift { node: usize, target: f64 },
}

impl Action {
    pub fn shift_flag(&self) -> u8 {
        match self {
            Action::Stay => 0,
            Action::Shift { .. } => 1,
        }
    }

    pub fn target(&self) -> Option<f64> {
        match self {
            Action::Stay => None,
            Action::Shift { target, .. } => Some(*target),
        }
    }

    /// Node the uncontrolled step starts from when taken at `state_index`.
    pub fn start_node(&self, state_index: usize) -> usize {
        match self {
            Action::Stay => state_index,
            Action::Shift { node, .. } => *node,
        }
    }
}

/// `R g` together with the maximising action at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanStep {
    pub values: GridFunction,
    pub actions: Vec<Action>,
}

/// Pair `(w, λ)` solving `w + λ = R w` on the grid, with `w(anchor) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellmanSolution {
    pub w: GridFunction,
    pub lambda: f64,
    pub gamma: f64,
    pub delta: f64,
    pub iterations: usize,
    /// `‖R w - w - λ‖_{β,ω-span}`.
    pub residual_span: f64,
    pub anchor_index: usize,
    pub beta: f64,
    pub kernel_key: String,
}

/// Apply the Bellman operator `R` to `g`.
///
/// Ties go to staying, then to the lowest-index target.
pub fn bellman_apply(
    kernel: &FrozenKernel,
    g: &GridFunction,
    problem: &ImpulseProblem,
    params: RiskParams,
) -> Result<BellmanStep> {
    problem.check_kernel(kernel)?;
    if g.len() != kernel.n_states() {
        return Err(Error::domain(format!(
            "grid function has {} values, kernel has {} states",
            g.len(),
            kernel.n_states()
        )));
    }
    if !g.is_finite() {
        return Err(Error::Numerical("grid function has non-finite values".into()));
    }
    let stay: Vec<f64> = (0..kernel.n_states())
        .into_par_iter()
        .map(|i| kernel.entropic_value_unchecked(i, &g.values, params))
        .collect::<Result<_>>()?;
    let points = kernel.grid().points();
    let mut values = Vec::with_capacity(stay.len());
    let mut actions = Vec::with_capacity(stay.len());
    for (i, &x) in points.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut best_target = None;
        for (&node, &xi) in problem.target_indices.iter().zip(&problem.shift_targets) {
            let v = stay[node] + problem.shift_cost.eval(x, xi);
            if v > best {
                best = v;
                best_target = Some((node, xi));
            }
        }
        match best_target {
            Some((node, target)) if best > stay[i] => {
                values.push(best);
                actions.push(Action::Shift { node, target });
            }
            _ => {
                values.push(stay[i]);
                actions.push(Action::Stay);
            }
        }
    }
    Ok(BellmanStep {
        values: GridFunction::new(values),
        actions,
    })
}

/// `T g = γ R(g/γ)`.
pub fn operator_t(
    kernel: &FrozenKernel,
    g: &GridFunction,
    problem: &ImpulseProblem,
    params: RiskParams,
) -> Result<GridFunction> {
    if params.is_neutral() {
        return Err(Error::domain("T is defined for nonzero gamma only"));
    }
    let gamma = params.gamma;
    let step = bellman_apply(kernel, &g.scale(1.0 / gamma), problem, params)?;
    Ok(step.values.scale(gamma))
}

/// `β = 1/(2 max_{ξ∈U} ω(ξ))`, clamped to `(0, 1]`.
pub fn solver_beta(grid: &StateGrid) -> f64 {
    let max_w = grid
        .shift_set_indices()
        .iter()
        .map(|&i| grid.weight_values()[i])
        .fold(0.0, f64::max);
    if max_w > 0.0 {
        (0.5 / max_w).min(1.0)
    } else {
        1.0
    }
}

/// Relative value iteration anchored at the node nearest 0.
pub fn solve_fixed_point(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
    tol: f64,
    max_iter: usize,
) -> Result<BellmanSolution> {
    let anchor = kernel.grid().nearest_index(0.0);
    solve_fixed_point_with_anchor(kernel, problem, params, tol, max_iter, anchor)
}

/// Iterates `g ← R g - (R g)(anchor)` from `g ≡ 0` until
/// `‖R g - g‖_{β,ω-span} < tol`; the returned `w` is the iterate that met
/// the test and `λ = (R w)(anchor)`.
pub fn solve_fixed_point_with_anchor(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
    tol: f64,
    max_iter: usize,
    anchor: usize,
) -> Result<BellmanSolution> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let grid = kernel.grid();
    if anchor >= grid.len() {
        return Err(Error::domain(format!("anchor {anchor} outside the grid")));
    }
    let beta = solver_beta(grid);
    let mut g = GridFunction::zeros(grid.len());
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let step = bellman_apply(kernel, &g, problem, params)?;
        if !step.values.is_finite() {
            return Err(Error::Numerical(format!("non-finite iterate at iteration {iteration}")));
        }
        residual = beta_span_seminorm(&(&step.values - &g), grid, beta)?;
        if residual < tol {
            return Ok(BellmanSolution {
                lambda: step.values.values[anchor] - g.values[anchor],
                w: g,
                gamma: params.gamma,
                delta: problem.delta,
                iterations: iteration,
                residual_span: residual,
                anchor_index: anchor,
                beta,
                kernel_key: kernel.key(),
            });
        }
        let offset = step.values.values[anchor];
        g = step.values.shift(-offset);
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Empirical Lipschitz constant of `T` in the β-span semi-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    pub l_hat: f64,
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub beta: f64,
}

/// `‖T f₁ - T f₂‖ / ‖f₁ - f₂‖` in the β-span semi-norm, `None` when the
/// denominator vanishes (up to rounding relative to the inputs' spans).
pub fn contraction_ratio(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
    f1: &GridFunction,
    f2: &GridFunction,
    beta: f64,
) -> Result<Option<f64>> {
    let grid = kernel.grid();
    let den = beta_span_seminorm(&(f1 - f2), grid, beta)?;
    let scale = 1.0 + beta_span_seminorm(f1, grid, beta)? + beta_span_seminorm(f2, grid, beta)?;
    if den <= 1e-12 * scale {
        return Ok(None);
    }
    let t1 = operator_t(kernel, f1, problem, params)?;
    let t2 = operator_t(kernel, f2, problem, params)?;
    Ok(Some(beta_span_seminorm(&(&t1 - &t2), grid, beta)? / den))
}

fn random_grid_function(grid: &StateGrid, span_bound: f64, kind: usize, rng: &mut SimRng) -> Result<GridFunction> {
    let n = grid.len();
    let mut g: Vec<f64> = match kind % 3 {
        // white noise
        0 => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        // smooth random trigonometric profile
        1 => {
            let coeffs: Vec<(f64, f64)> = (0..4)
                .map(|_| (rng.sample(StandardNormal), rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            let width = (grid.upper() - grid.lower()).max(f64::MIN_POSITIVE);
            grid.points()
                .iter()
                .map(|&x| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, (a, phase))| a * ((k + 1) as f64 * std::f64::consts::PI * x / width + phase).sin())
                        .sum()
                })
                .collect()
        }
        // weight-proportional growth plus noise
        _ => {
            let slope: f64 = rng.sample(StandardNormal);
            grid.weight_values()
                .iter()
                .map(|&w| slope * w + 0.2 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };
    let g0 = GridFunction::new(g.clone());
    let span = beta_span_seminorm(&g0, grid, 1.0)?;
    let target = span_bound * rng.random_range(0.05..=1.0);
    if span > 0.0 {
        for v in &mut g {
            *v *= target / span;
        }
    }
    Ok(GridFunction::new(g))
}

/// Maximum contraction ratio over `n_pairs` random pairs with ω-span at most
/// `span_bound`, at the solver's β.
pub fn contraction_estimate(
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
    span_bound: f64,
    n_pairs: usize,
    rng: &mut SimRng,
) -> Result<ContractionEstimate> {
    if !(span_bound > 0.0) {
        return Err(Error::domain("span bound must be positive"));
    }
    let grid = kernel.grid();
    let beta = solver_beta(grid);
    let mut ratios = Vec::with_capacity(n_pairs);
    let mut skipped = 0;
    for k in 0..n_pairs {
        let f1 = random_grid_function(grid, span_bound, k, rng)?;
        let f2 = random_grid_function(grid, span_bound, k + 1, rng)?;
        match contraction_ratio(kernel, problem, params, &f1, &f2, beta)? {
            Some(r) => ratios.push(r),
            None => skipped += 1,
        }
    }
    let l_hat = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ContractionEstimate {
        l_hat,
        ratios,
        skipped,
        beta,
    })
}

/// Weighted variation norm of the difference of Esscher measures
/// `μ*(x, g₁, a(x, g₂)) - μ*(y, g₂, a(y, g₁))`, for `g₁, g₂` on the `T` scale.
pub fn esscher_tv_diagnostic(
    kernel: &FrozenKernel,
    g1: &GridFunction,
    g2: &GridFunction,
    x_index: usize,
    y_index: usize,
    problem: &ImpulseProblem,
    params: RiskParams,
) -> Result<f64> {
    let n = kernel.n_states();
    if x_index >= n || y_index >= n {
        return Err(Error::domain(format!(
            "state indices ({x_index}, {y_index}) out of range for {n} states"
        )));
    }
    let (gamma, scale) = if params.is_neutral() {
        (0.0, 1.0)
    } else {
        (params.gamma, 1.0 / params.gamma)
    };
    let h1 = g1.scale(scale);
    let h2 = g2.scale(scale);
    let a_x = bellman_apply(kernel, &h2, problem, params)?.actions[x_index];
    let a_y = bellman_apply(kernel, &h1, problem, params)?.actions[y_index];
    let m1 = kernel.esscher_on_grid(a_x.start_node(x_index), &h1, gamma)?;
    let m2 = kernel.esscher_on_grid(a_y.start_node(y_index), &h2, gamma)?;
    let diff: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    weighted_tv_norm(&diff, kernel.grid(), solver_beta(kernel.grid()))
}
