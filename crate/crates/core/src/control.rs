//! Impulse policies, controlled simulation and long-run objective estimates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{bellman_apply, Action, BellmanSolution, ImpulseProblem};
use crate::entropic::{entropic_utility, RiskParams};
use crate::error::{Error, Result};
use crate::kernel::FrozenKernel;
use crate::norms::StateGrid;
use crate::processes::{sample_segment, ProcessModel};
use crate::rng::{derive_stream, SimRng, StreamPurpose};

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Decision taken at each dyadic time from the current state.
pub trait DecisionRule: Sync {
    fn decide(&self, state: f64, rng: &mut SimRng) -> Action;
}

/// Per-node action table; off-grid states use the nearest node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    grid: StateGrid,
    actions: Vec<Action>,
    /// Key of the kernel the policy was extracted from, if any.
    pub kernel_key: Option<String>,
}

impl StationaryPolicy {
    pub fn new(grid: StateGrid, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != grid.len() {
            return Err(Error::domain(format!(
                "{} actions for {} grid nodes",
                actions.len(),
                grid.len()
            )));
        }
        for a in &actions {
            if let Action::Shift { node, target } = *a {
                if !grid.shift_set_indices().contains(&node) || grid.points()[node] != target {
                    return Err(Error::domain(format!("shift target {target} is not a shift-set node")));
                }
            }
        }
        Ok(Self {
            grid,
            actions,
            kernel_key: None,
        })
    }

    pub fn stay_everywhere(grid: &StateGrid) -> Self {
        Self {
            actions: vec![Action::Stay; grid.len()],
            grid: grid.clone(),
            kernel_key: None,
        }
    }

    /// Shift to the shift-set node nearest `target` from every state.
    pub fn shift_everywhere(grid: &StateGrid, target: f64) -> Result<Self> {
        let node = grid
            .shift_set_indices()
            .iter()
            .copied()
            .min_by(|&a, &b| {
                (grid.points()[a] - target)
                    .abs()
                    .total_cmp(&(grid.points()[b] - target).abs())
            })
            .ok_or_else(|| Error::domain("grid has an empty shift set"))?;
        let action = Action::Shift {
            node,
            target: grid.points()[node],
        };
        Ok(Self {
            actions: vec![action; grid.len()],
            grid: grid.clone(),
            kernel_key: None,
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action_at(&self, state: f64) -> Action {
        self.actions[self.grid.nearest_index(state)]
    }

    pub fn shift_count(&self) -> usize {
        self.actions.iter().filter(|a| a.shift_flag() == 1).count()
    }
}

impl DecisionRule for StationaryPolicy {
    fn decide(&self, state: f64, _rng: &mut SimRng) -> Action {
        self.action_at(state)
    }
}

/// Baseline: with probability `p` shift to a uniformly drawn shift-set node.
#[derive(Debug, Clone)]
pub struct RandomShiftPolicy {
    probability: f64,
    targets: Vec<(usize, f64)>,
}

impl RandomShiftPolicy {
    pub fn new(grid: &StateGrid, probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::domain(format!("probability must lie in [0, 1], got {probability}")));
        }
        let targets: Vec<(usize, f64)> = grid
            .shift_set_indices()
            .iter()
            .map(|&i| (i, grid.points()[i]))
            .collect();
        if targets.is_empty() {
            return Err(Error::domain("grid has an empty shift set"));
        }
        Ok(Self { probability, targets })
    }
}

impl DecisionRule for RandomShiftPolicy {
    fn decide(&self, _state: f64, rng: &mut SimRng) -> Action {
        if rng.random::<f64>() < self.probability {
            let (node, target) = self.targets[rng.random_range(0..self.targets.len())];
            Action::Shift { node, target }
        } else {
            Action::Stay
        }
    }
}

/// One controlled trajectory sampled at the dyadic times.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledRun {
    /// `Z_k`: accumulated reward plus shift costs up to `T_k = kδ`.
    pub z_values: Vec<f64>,
    /// `X_{kδ}` after each step.
    pub states: Vec<f64>,
    pub n_steps: usize,
    pub shifts_applied: usize,
    pub seed: u64,
    pub replication: u64,
}

/// Maximising actions of `R w` on the kernel's grid.
pub fn extract_policy(
    solution: &BellmanSolution,
    kernel: &FrozenKernel,
    problem: &ImpulseProblem,
    params: RiskParams,
) -> Result<StationaryPolicy> {
    if solution.kernel_key != kernel.key() {
        return Err(Error::domain("solution was computed on a different kernel"));
    }
    if solution.gamma != params.gamma || solution.delta != problem.delta() {
        return Err(Error::domain("solution gamma or delta differs from the requested problem"));
    }
    let step = bellman_apply(kernel, &solution.w, problem, params)?;
    Ok(StationaryPolicy {
        grid: kernel.grid().clone(),
        actions: step.actions,
        kernel_key: Some(kernel.key()),
    })
}

/// Simulate `n_steps` dyadic steps on the replication stream
/// `(seed, Controlled, replication)`.
///
/// At each grid time the rule is consulted at the current state; a shift
/// books `c(x, ξ)` and moves to `ξ` before the uncontrolled segment runs.
pub fn simulate_controlled(
    model: &ProcessModel,
    policy: &dyn DecisionRule,
    problem: &ImpulseProblem,
    start: f64,
    n_steps: usize,
    seed: u64,
    replication: u64,
) -> Result<ControlledRun> {
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be at least 1"));
    }
    if model.dimension() != 1 {
        return Err(Error::domain("controlled simulation needs a one-dimensional model"));
    }
    let mut rng = derive_stream(seed, StreamPurpose::Controlled, replication, 0);
    let reward = problem.reward();
    let mut x = start;
    let mut z = 0.0;
    let mut shifts_applied = 0;
    let mut z_values = Vec::with_capacity(n_steps);
    let mut states = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        if let Action::Shift { target, .. } = policy.decide(x, &mut rng) {
            z += problem.shift_cost().eval(x, target);
            x = target;
            shifts_applied += 1;
        }
        let seg = sample_segment(model, &[x], problem.delta(), &mut rng)
            .map_err(|e| Error::Numerical(format!("step {k}: {e}")))?;
        z += seg.trapezoid(|s| reward.eval(s[0]));
        x = seg.terminal[0];
        if !(z.is_finite() && x.is_finite()) {
            return Err(Error::Numerical(format!("step {k}: non-finite state or payoff")));
        }
        z_values.push(z);
        states.push(x);
    }
    Ok(ControlledRun {
        z_values,
        states,
        n_steps,
        shifts_applied,
        seed,
        replication,
    })
}

/// Entropic long-run rate estimates over independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunEstimate {
    /// `Ĵ(n) = μ̂^γ(Z_n) / T_n`.
    pub j_hat: f64,
    /// Bootstrap standard error of `Ĵ(n)`.
    pub stderr: f64,
    /// `Ĵ(k)` for `k = 1..=n`.
    pub per_horizon: Vec<f64>,
    pub shifts_per_step: f64,
    /// `μ̂^γ(ω(X_{kδ}))` across replications for `k = 1..=n`.
    pub omega_moment: Vec<f64>,
    pub n_steps: usize,
    pub n_reps: usize,
    pub delta: f64,
}

/// Run `n_reps` controlled replications and evaluate `Ĵ(k)` at every
/// checkpoint. Results depend only on `seed`, not on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_longrun_value(
    model: &ProcessModel,
    policy: &dyn DecisionRule,
    problem: &ImpulseProblem,
    start: f64,
    n_steps: usize,
    n_reps: usize,
    params: RiskParams,
    seed: u64,
) -> Result<LongRunEstimate> {
    if n_reps < 2 {
        return Err(Error::domain(format!("n_reps must be at least 2, got {n_reps}")));
    }
    let runs: Vec<ControlledRun> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| simulate_controlled(model, policy, problem, start, n_steps, seed, r))
        .collect::<Result<_>>()?;
    let delta = problem.delta();
    let weight = problem.weight();
    let mut per_horizon = Vec::with_capacity(n_steps);
    let mut omega_moment = Vec::with_capacity(n_steps);
    let mut column = vec![0.0; n_reps];
    for k in 0..n_steps {
        for (c, run) in column.iter_mut().zip(&runs) {
            *c = run.z_values[k];
        }
        per_horizon.push(entropic_utility(&column, params)? / ((k + 1) as f64 * delta));
        for (c, run) in column.iter_mut().zip(&runs) {
            *c = weight.eval_scalar(run.states[k]);
        }
        omega_moment.push(entropic_utility(&column, params)?);
    }
    let horizon = n_steps as f64 * delta;
    let finals: Vec<f64> = runs.iter().map(|r| r.z_values[n_steps - 1]).collect();
    let mut rng = derive_stream(seed, StreamPurpose::Bootstrap, 0, 0);
    let mut resample = vec![0.0; n_reps];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for v in resample.iter_mut() {
            *v = finals[rng.random_range(0..n_reps)];
        }
        stats.push(entropic_utility(&resample, params)? / horizon);
    }
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    let shifts: usize = runs.iter().map(|r| r.shifts_applied).sum();
    Ok(LongRunEstimate {
        j_hat: per_horizon[n_steps - 1],
        stderr: var.sqrt(),
        per_horizon,
        shifts_per_step: shifts as f64 / (n_steps * n_reps) as f64,
        omega_moment,
        n_steps,
        n_reps,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Reward, ShiftCost, Weight};
    use crate::processes::DiffusionModel;

    fn grid() -> StateGrid {
        StateGrid::uniform(3.0, 31, &Weight::sup_abs(), &[-0.2, 0.0, 0.2]).unwrap()
    }

    fn model() -> ProcessModel {
        DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into()
    }

    fn problem(reward: Reward, cost: f64) -> ImpulseProblem {
        ImpulseProblem::new(&grid(), reward, ShiftCost::constant(cost), cost, 0.5, Weight::sup_abs()).unwrap()
    }

    #[test]
    fn stay_policy_with_unit_reward() {
        let p = problem(Reward::constant(1.0), -1.0);
        let pol = StationaryPolicy::stay_everywhere(&grid());
        let run = simulate_controlled(&model(), &pol, &p, 0.3, 10, 4, 0).unwrap();
        for (k, z) in run.z_values.iter().enumerate() {
            assert!((z - 0.5 * (k + 1) as f64).abs() < 1e-12);
        }
        assert_eq!(run.shifts_applied, 0);
        let est = estimate_longrun_value(&model(), &pol, &p, 0.3, 10, 8, RiskParams::new(-0.5).unwrap(), 4).unwrap();
        assert!((est.j_hat - 1.0).abs() < 1e-12);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn shift_policy_with_zero_reward() {
        let p = problem(Reward::constant(0.0), -1.0);
        let pol = StationaryPolicy::shift_everywhere(&grid(), 0.0).unwrap();
        let run = simulate_controlled(&model(), &pol, &p, 1.0, 6, 4, 2).unwrap();
        assert_eq!(run.z_values, vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0]);
        assert_eq!(run.shifts_applied, 6);
        let est = estimate_longrun_value(&model(), &pol, &p, 1.0, 6, 4, RiskParams::new(-0.5).unwrap(), 4).unwrap();
        assert_eq!(est.j_hat, -2.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.shifts_per_step, 1.0);
    }

    #[test]
    fn input_validation() {
        let p = problem(Reward::constant(0.0), -1.0);
        let pol = StationaryPolicy::stay_everywhere(&grid());
        assert!(simulate_controlled(&model(), &pol, &p, 0.0, 0, 1, 0).is_err());
        assert!(estimate_longrun_value(&model(), &pol, &p, 0.0, 3, 1, RiskParams::new(-0.5).unwrap(), 1).is_err());
        assert!(RandomShiftPolicy::new(&grid(), 1.5).is_err());
        assert!(StationaryPolicy::new(grid(), vec![Action::Stay; 3]).is_err());
        let bad = vec![Action::Shift { node: 0, target: -3.0 }; 31];
        assert!(StationaryPolicy::new(grid(), bad).is_err());
    }

    #[test]
    fn random_shift_frequency() {
        let p = problem(Reward::constant(0.0), -1.0);
        let pol = RandomShiftPolicy::new(&grid(), 0.1).unwrap();
        let est = estimate_longrun_value(&model(), &pol, &p, 0.0, 200, 50, RiskParams::new(0.0).unwrap(), 9).unwrap();
        // Binomial(10⁴, 0.1) standard deviation is 0.003 in frequency.
        assert!((est.shifts_per_step - 0.1).abs() < 0.015);
    }

    #[test]
    fn replications_are_schedule_independent() {
        let p = problem(Reward::peak(1.0), -0.3);
        let pol = RandomShiftPolicy::new(&grid(), 0.3).unwrap();
        let a = simulate_controlled(&model(), &pol, &p, 0.0, 20, 5, 3).unwrap();
        let b = simulate_controlled(&model(), &pol, &p, 0.0, 20, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_controlled(&model(), &pol, &p, 0.0, 20, 5, 4).unwrap();
        assert_ne!(a.z_values, c.z_values);
    }
}
