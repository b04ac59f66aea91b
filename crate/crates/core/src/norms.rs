//! State grid, grid functions and the weighted norms used by the solver.
//!
//! With `ω` the weight:
//!
//! - `‖g‖_ω = max_i |g_i| / (1 + ω_i)`
//! - `‖g‖_{β,ω} = max_i |g_i| / (1 + βω_i)`
//! - `‖g‖_{β,ω-span} = max_{i,j} (g_i - g_j) / (2 + βω_i + βω_j)`
//! - `‖h‖_{β,ω-var} = Σ_i (1 + βω_i)|h_i|`
//!
//! The variation norm of a difference of two probability vectors at `β = 0`
//! is `Σ|h_i|`, i.e. twice the total variation distance.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functions::Weight;

/// Truncated one-dimensional state space with its weight and shift set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    points: Vec<f64>,
    weight_values: Vec<f64>,
    shift_set_indices: Vec<usize>,
}

impl StateGrid {
    pub fn new(points: Vec<f64>, weight_values: Vec<f64>, shift_set_indices: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("grid must have at least one node"));
        }
        if points.len() != weight_values.len() {
            return Err(Error::domain(format!(
                "{} grid points but {} weight values",
                points.len(),
                weight_values.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("grid points must be finite"));
        }
        if !points.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("grid points must be strictly increasing"));
        }
        if let Some(i) = weight_values.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain(format!(
                "weight at node {i} is {}; weights must be finite and nonnegative",
                weight_values[i]
            )));
        }
        if shift_set_indices.is_empty() {
            return Err(Error::domain("shift set must be nonempty"));
        }
        if let Some(&i) = shift_set_indices.iter().find(|&&i| i >= points.len()) {
            return Err(Error::domain(format!("shift set index {i} is outside the grid")));
        }
        let mut shift_set_indices = shift_set_indices;
        shift_set_indices.sort_unstable();
        shift_set_indices.dedup();
        Ok(Self {
            points,
            weight_values,
            shift_set_indices,
        })
    }

    /// `n_nodes` equally spaced nodes on `[-L, L]`; each shift target must
    /// coincide with a node.
    pub fn uniform(half_width: f64, n_nodes: usize, weight: &Weight, shift_targets: &[f64]) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::domain(format!("half width must be positive, got {half_width}")));
        }
        if n_nodes < 2 {
            return Err(Error::domain("a uniform grid needs at least 2 nodes"));
        }
        let step = 2.0 * half_width / (n_nodes - 1) as f64;
        let m = (n_nodes - 1) as f64;
        // Symmetric form keeps ±x pairs and decimal nodes exact where possible.
        let points: Vec<f64> = (0..n_nodes)
            .map(|i| half_width * (2.0 * i as f64 - m) / m)
            .collect();
        let weight_values = points.iter().map(|&x| weight.eval_scalar(x)).collect();
        let mut indices = Vec::with_capacity(shift_targets.len());
        for &target in shift_targets {
            if !(target.abs() <= half_width) {
                return Err(Error::domain(format!("shift target {target} lies outside [-L, L]")));
            }
            let i = ((target + half_width) / step).round() as usize;
            if (points[i] - target).abs() > 1e-9 * step {
                return Err(Error::domain(format!("shift target {target} is not a grid node")));
            }
            indices.push(i);
        }
        Self::new(points, weight_values, indices)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight_values(&self) -> &[f64] {
        &self.weight_values
    }

    pub fn shift_set_indices(&self) -> &[usize] {
        &self.shift_set_indices
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of the node nearest to `x` (lower index on exact ties).
    pub fn nearest_index(&self, x: f64) -> usize {
        let p = &self.points;
        let upper = p.partition_point(|&v| v < x);
        if upper == 0 {
            return 0;
        }
        if upper == p.len() {
            return p.len() - 1;
        }
        if x - p[upper - 1] <= p[upper] - x {
            upper - 1
        } else {
            upper
        }
    }

    /// Linear interpolation stencil `(i, θ, clamped)`: the interpolant at `x`
    /// is `(1-θ) g_i + θ g_{i+1}`. Points outside `[x_0, x_{n-1}]` clamp to
    /// the boundary node with `θ = 0`.
    pub fn stencil(&self, x: f64) -> (usize, f64, bool) {
        let p = &self.points;
        let n = p.len();
        if n == 1 || x <= p[0] {
            return (0, 0.0, x < p[0]);
        }
        if x >= p[n - 1] {
            return (n - 1, 0.0, x > p[n - 1]);
        }
        let upper = p.partition_point(|&v| v <= x);
        let i = upper - 1;
        (i, (x - p[i]) / (p[i + 1] - p[i]), false)
    }

    /// Linearly interpolated value of `g` at `x`, clamped at the boundary.
    pub fn interpolate(&self, g: &GridFunction, x: f64) -> f64 {
        let (i, theta, _) = self.stencil(x);
        interpolate_with(&g.values, i, theta)
    }

    /// Hex digest identifying points, weights and shift set exactly.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.points.iter().chain(&self.weight_values) {
            h.update(v.to_le_bytes());
        }
        for &i in &self.shift_set_indices {
            h.update((i as u64).to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    fn check(&self, g: &GridFunction) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::domain(format!(
                "grid function has {} values, grid has {} nodes",
                g.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn interpolate_with(values: &[f64], i: usize, theta: f64) -> f64 {
    if theta == 0.0 {
        values[i]
    } else {
        (1.0 - theta) * values[i] + theta * values[i + 1]
    }
}

/// Real function sampled on a [`StateGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn from_fn(grid: &StateGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.points().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        assert_eq!(self.len(), rhs.len(), "grid function length mismatch");
        GridFunction::new(self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        assert_eq!(self.len(), rhs.len(), "grid function length mismatch");
        GridFunction::new(self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect())
    }
}

pub fn omega_norm(g: &GridFunction, grid: &StateGrid) -> Result<f64> {
    beta_omega_norm(g, grid, 1.0)
}

pub fn beta_omega_norm(g: &GridFunction, grid: &StateGrid, beta: f64) -> Result<f64> {
    grid.check(g)?;
    check_beta(beta)?;
    Ok(shifted_norm(&g.values, grid.weight_values(), beta, 0.0))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("beta must be nonnegative and finite, got {beta}")))
    }
}

fn shifted_norm(values: &[f64], weights: &[f64], beta: f64, d: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| (v + d).abs() / (1.0 + beta * w))
        .fold(0.0, f64::max)
}

/// Exact pair scan; `O(n)` when the weight is constant on the grid.
pub fn beta_span_seminorm(g: &GridFunction, grid: &StateGrid, beta: f64) -> Result<f64> {
    grid.check(g)?;
    check_beta(beta)?;
    let w = grid.weight_values();
    let v = &g.values;
    if w.iter().all(|&x| x == w[0]) {
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        return Ok((hi - lo) / (2.0 + 2.0 * beta * w[0]));
    }
    let mut best = 0.0_f64;
    for i in 0..v.len() {
        let wi = beta * w[i];
        for j in 0..v.len() {
            let r = (v[i] - v[j]) / (2.0 + wi + beta * w[j]);
            if r > best {
                best = r;
            }
        }
    }
    Ok(best)
}

/// Constant `d*` minimising `‖g + d‖_{β,ω}`.
///
/// Bisects on `a₊(d) - a₋(d)` where `a₊(d) = max_i (g_i + d)/(1 + βω_i)` and
/// `a₋(d) = -min_i (g_i + d)/(1 + βω_i)`; the difference is increasing in
/// `d` and vanishes at the minimiser.
pub fn centering_constant(g: &GridFunction, grid: &StateGrid, beta: f64) -> Result<f64> {
    grid.check(g)?;
    check_beta(beta)?;
    let w = grid.weight_values();
    let gap = |d: f64| {
        let mut a_plus = f64::NEG_INFINITY;
        let mut a_minus = f64::NEG_INFINITY;
        for (v, wi) in g.values.iter().zip(w) {
            let r = (v + d) / (1.0 + beta * wi);
            a_plus = a_plus.max(r);
            a_minus = a_minus.max(-r);
        }
        a_plus - a_minus
    };
    let bound = g.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Either endpoint is within one ulp of the minimiser; keep the better one.
    let nl = shifted_norm(&g.values, w, beta, lo);
    let nh = shifted_norm(&g.values, w, beta, hi);
    Ok(if nl <= nh { lo } else { hi })
}

/// `Σ_i (1 + βω_i)|h_i|` for a signed discrete measure on the grid.
pub fn weighted_tv_norm(signed_weights: &[f64], grid: &StateGrid, beta: f64) -> Result<f64> {
    if signed_weights.len() != grid.len() {
        return Err(Error::domain(format!(
            "{} signed weights for {} grid nodes",
            signed_weights.len(),
            grid.len()
        )));
    }
    check_beta(beta)?;
    Ok(signed_weights
        .iter()
        .zip(grid.weight_values())
        .map(|(h, w)| (1.0 + beta * w) * h.abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(weights: Vec<f64>) -> StateGrid {
        let points = (0..weights.len()).map(|i| i as f64).collect();
        StateGrid::new(points, weights, vec![0]).unwrap()
    }

    #[test]
    fn omega_norm_examples() {
        let g = grid(vec![0.0, 2.0, 1.0, 5.0]);
        assert_eq!(omega_norm(&GridFunction::zeros(4), &g).unwrap(), 0.0);
        let one_plus = GridFunction::new(g.weight_values().iter().map(|w| 1.0 + w).collect());
        assert_eq!(omega_norm(&one_plus, &g).unwrap(), 1.0);
        let spike = GridFunction::new(vec![0.0, 3.0, 0.0, 0.0]);
        assert_eq!(omega_norm(&spike, &g).unwrap(), 1.0);
        assert_eq!(beta_omega_norm(&spike, &g, 0.5).unwrap(), 1.5);
        assert_eq!(beta_omega_norm(&spike, &g, 1.0).unwrap(), omega_norm(&spike, &g).unwrap());
        assert_eq!(beta_omega_norm(&GridFunction::constant(4, -2.5), &g, 0.3).unwrap(), 2.5);
        assert!(omega_norm(&GridFunction::zeros(3), &g).is_err());
    }

    #[test]
    fn span_examples() {
        let two = grid(vec![0.0, 0.0]);
        let g = GridFunction::new(vec![0.0, 4.0]);
        for beta in [0.1, 0.5, 1.0] {
            assert_eq!(beta_span_seminorm(&g, &two, beta).unwrap(), 2.0);
        }
        let g4 = grid(vec![0.0, 2.0, 1.0, 5.0]);
        assert_eq!(beta_span_seminorm(&GridFunction::constant(4, 7.0), &g4, 0.5).unwrap(), 0.0);
        let h = GridFunction::new(vec![0.3, -1.0, 2.0, 0.5]);
        let s = beta_span_seminorm(&h, &g4, 0.5).unwrap();
        assert_eq!(beta_span_seminorm(&h.shift(3.25), &g4, 0.5).unwrap(), s);
    }

    #[test]
    fn centering_examples() {
        let g4 = grid(vec![0.0, 2.0, 1.0, 5.0]);
        let d = centering_constant(&GridFunction::constant(4, 5.0), &g4, 0.5).unwrap();
        assert!((d + 5.0).abs() < 1e-12);

        let sym = StateGrid::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0, 1.0, 2.0], vec![2]).unwrap();
        let anti = GridFunction::new(vec![-3.0, 1.0, 0.0, -1.0, 3.0]);
        assert!(centering_constant(&anti, &sym, 0.4).unwrap().abs() < 1e-12);
    }

    #[test]
    fn weighted_tv_examples() {
        let g = grid(vec![0.0, 2.0]);
        assert_eq!(weighted_tv_norm(&[0.0, 0.0], &g, 0.5).unwrap(), 0.0);
        assert_eq!(weighted_tv_norm(&[1.0, -1.0], &g, 0.5).unwrap(), 3.0);
        let p = [0.2, 0.8];
        let diff: Vec<f64> = p.iter().zip(&p).map(|(a, b)| a - b).collect();
        assert_eq!(weighted_tv_norm(&diff, &g, 0.7).unwrap(), 0.0);
        // β = 0: plain Σ|h_i|.
        assert!((weighted_tv_norm(&[0.3, -0.3], &g, 0.0).unwrap() - 0.6).abs() < 1e-15);
        assert!(weighted_tv_norm(&[1.0], &g, 0.5).is_err());
    }

    #[test]
    fn uniform_grid_and_lookup() {
        let w = Weight::sup_abs();
        let g = StateGrid::uniform(5.0, 201, &w, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g.points()[100], 0.0);
        assert_eq!(g.upper(), 5.0);
        assert_eq!(g.shift_set_indices(), &[80, 100, 120]);
        assert_eq!(g.nearest_index(0.01), 100);
        assert_eq!(g.nearest_index(-7.0), 0);
        assert_eq!(g.nearest_index(9.0), 200);
        assert!(StateGrid::uniform(5.0, 201, &w, &[0.013]).is_err());
        assert!(StateGrid::uniform(5.0, 201, &w, &[6.0]).is_err());
        assert!(StateGrid::uniform(5.0, 201, &w, &[]).is_err());

        let (i, theta, clamped) = g.stencil(0.0125);
        assert_eq!(i, 100);
        assert!((theta - 0.25).abs() < 1e-12 && !clamped);
        assert_eq!(g.stencil(-6.0), (0, 0.0, true));
        assert_eq!(g.stencil(5.0), (200, 0.0, false));
    }

    #[test]
    fn affine_interpolation_is_exact() {
        let g = StateGrid::uniform(3.0, 31, &Weight::sup_abs(), &[0.0]).unwrap();
        let f = GridFunction::from_fn(&g, |x| 2.0 * x - 1.0);
        for x in [-2.95, -1.234, 0.0, 0.77, 2.999] {
            assert!((g.interpolate(&f, x) - (2.0 * x - 1.0)).abs() < 1e-12);
        }
        assert_eq!(g.interpolate(&f, 10.0), 5.0);
    }

    #[test]
    fn grid_validation() {
        assert!(StateGrid::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0]).is_err());
        assert!(StateGrid::new(vec![0.0, 1.0], vec![0.0, -1.0], vec![0]).is_err());
        assert!(StateGrid::new(vec![0.0, 1.0], vec![0.0], vec![0]).is_err());
        assert!(StateGrid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![2]).is_err());
    }
}
