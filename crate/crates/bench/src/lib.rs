//! Benchmark fixtures shared by the criterion targets.

use impulse_core::{
    build_kernel, DiffusionModel, FrozenKernel, ImpulseProblem, ProcessModel, Reward, ShiftCost, StateGrid, Weight,
};

/// OU reference model with the default discretisation.
pub fn ou_model() -> ProcessModel {
    DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 32).unwrap().into()
}

/// Grid on `[-5, 5]` with shift set `{-1, -0.9, …, 1}`; `n_nodes - 1` must be a multiple of 10.
pub fn grid(n_nodes: usize) -> StateGrid {
    let targets: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    StateGrid::uniform(5.0, n_nodes, &Weight::sup_abs(), &targets).unwrap()
}

/// Default control problem and its kernel at the given size.
pub fn default_problem(n_nodes: usize, n_samples: usize) -> (FrozenKernel, ImpulseProblem) {
    let grid = grid(n_nodes);
    let reward = Reward::peak(1.0);
    let kernel = build_kernel(&ou_model(), &grid, &reward, 0.5, n_samples, 7).unwrap();
    let problem =
        ImpulseProblem::new(&grid, reward, ShiftCost::affine(-0.3, 0.1), -0.3, 0.5, Weight::sup_abs()).unwrap();
    (kernel, problem)
}
