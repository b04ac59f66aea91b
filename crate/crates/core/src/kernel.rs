//! Frozen Monte Carlo transition kernel.
//!
//! For every grid node `x_i` the kernel stores `N` simulated δ-step outcomes
//! `(X_δ, ∫₀^δ f(X_s) ds)`. Built once and reused, it turns the Bellman
//! operator into a deterministic map. Terminals are stored raw; grid
//! functions are interpolated at them on evaluation (linear inside the grid,
//! clamped to the boundary node outside).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::entropic::{entropic_utility, esscher_weights, RiskParams};
use crate::error::{Error, Result};
use crate::functions::Reward;
use crate::norms::{interpolate_with, GridFunction, StateGrid};
use crate::processes::{sample_segment, ProcessModel};
use crate::rng::{derive_stream, StreamPurpose};

const MAGIC: &[u8; 8] = b"FKERNEL1";

#[derive(Debug, Clone)]
pub struct FrozenKernel {
    grid: StateGrid,
    delta: f64,
    n_samples: usize,
    seed: u64,
    model_tag: String,
    reward_tag: String,
    /// Row-major `[state][sample]`.
    terminals: Vec<f64>,
    rewards: Vec<f64>,
    stencil_index: Vec<u32>,
    stencil_theta: Vec<f64>,
    clamped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelHeader {
    model_tag: String,
    reward_tag: String,
    seed: u64,
    grid_hash: String,
    delta: f64,
    n_states: usize,
    n_samples: usize,
    grid: StateGrid,
}

impl FrozenKernel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        grid: StateGrid,
        delta: f64,
        n_samples: usize,
        seed: u64,
        model_tag: String,
        reward_tag: String,
        terminals: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Self {
        let mut stencil_index = Vec::with_capacity(terminals.len());
        let mut stencil_theta = Vec::with_capacity(terminals.len());
        let mut clamped = 0;
        for &t in &terminals {
            let (i, theta, c) = grid.stencil(t);
            stencil_index.push(i as u32);
            stencil_theta.push(theta);
            clamped += c as usize;
        }
        Self {
            grid,
            delta,
            n_samples,
            seed,
            model_tag,
            reward_tag,
            terminals,
            rewards,
            stencil_index,
            stencil_theta,
            clamped,
        }
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_states(&self) -> usize {
        self.grid.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn reward_tag(&self) -> &str {
        &self.reward_tag
    }

    fn row(&self, state_index: usize) -> std::ops::Range<usize> {
        state_index * self.n_samples..(state_index + 1) * self.n_samples
    }

    pub fn terminals(&self, state_index: usize) -> &[f64] {
        &self.terminals[self.row(state_index)]
    }

    pub fn reward_integrals(&self, state_index: usize) -> &[f64] {
        &self.rewards[self.row(state_index)]
    }

    /// Fraction of stored terminals outside `[-L, L]`.
    pub fn clamp_fraction(&self) -> f64 {
        self.clamped as f64 / self.terminals.len() as f64
    }

    /// Cache key over `(model, reward, seed, grid, δ, N)`.
    pub fn key(&self) -> String {
        kernel_key(
            &self.model_tag,
            &self.reward_tag,
            self.seed,
            &self.grid,
            self.delta,
            self.n_samples,
        )
    }

    fn check_state(&self, state_index: usize) -> Result<()> {
        if state_index >= self.n_states() {
            return Err(Error::domain(format!(
                "state index {state_index} out of range for {} states",
                self.n_states()
            )));
        }
        Ok(())
    }

    fn check_function(&self, g: &GridFunction) -> Result<()> {
        if g.len() != self.n_states() {
            return Err(Error::domain(format!(
                "grid function has {} values, kernel has {} states",
                g.len(),
                self.n_states()
            )));
        }
        Ok(())
    }

    /// `∫f + g̃(X_δ)` for every frozen sample of `state_index`.
    pub fn continuation_values(&self, state_index: usize, g: &GridFunction) -> Result<Vec<f64>> {
        self.check_state(state_index)?;
        self.check_function(g)?;
        Ok(self.continuation_unchecked(state_index, &g.values))
    }

    fn continuation_unchecked(&self, state_index: usize, g: &[f64]) -> Vec<f64> {
        let r = self.row(state_index);
        self.rewards[r.clone()]
            .iter()
            .zip(&self.stencil_index[r.clone()])
            .zip(&self.stencil_theta[r])
            .map(|((&reward, &i), &theta)| reward + interpolate_with(g, i as usize, theta))
            .collect()
    }

    pub(crate) fn entropic_value_unchecked(&self, state_index: usize, g: &[f64], params: RiskParams) -> Result<f64> {
        entropic_utility(&self.continuation_unchecked(state_index, g), params)
    }

    /// Esscher measure of the continuation at `state_index`, binned onto the
    /// grid through the interpolation weights.
    pub fn esscher_on_grid(&self, state_index: usize, g: &GridFunction, gamma: f64) -> Result<Vec<f64>> {
        let values = self.continuation_values(state_index, g)?;
        let uniform = vec![1.0 / self.n_samples as f64; self.n_samples];
        let tilted = esscher_weights(&values, &uniform, gamma)?;
        let r = self.row(state_index);
        let mut binned = vec![0.0; self.n_states()];
        for ((w, &i), &theta) in tilted.iter().zip(&self.stencil_index[r.clone()]).zip(&self.stencil_theta[r]) {
            let i = i as usize;
            binned[i] += (1.0 - theta) * w;
            if theta > 0.0 {
                binned[i + 1] += theta * w;
            }
        }
        Ok(binned)
    }

    /// `1 / Σ w_i²` of the Esscher weights at `state_index`; equals `N` when
    /// tilting is disabled.
    pub fn effective_sample_size(&self, state_index: usize, g: &GridFunction, params: RiskParams) -> Result<f64> {
        let values = self.continuation_values(state_index, g)?;
        let uniform = vec![1.0 / self.n_samples as f64; self.n_samples];
        let gamma = if params.is_neutral() { 0.0 } else { params.gamma };
        let w = esscher_weights(&values, &uniform, gamma)?;
        Ok(1.0 / w.iter().map(|x| x * x).sum::<f64>())
    }

    /// Header record followed by per-state `N` terminals then `N` reward
    /// integrals, all little-endian `f64`, in grid order.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = KernelHeader {
            model_tag: self.model_tag.clone(),
            reward_tag: self.reward_tag.clone(),
            seed: self.seed,
            grid_hash: self.grid.hash(),
            delta: self.delta,
            n_states: self.n_states(),
            n_samples: self.n_samples,
            grid: self.grid.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for i in 0..self.n_states() {
            for v in self.terminals(i).iter().chain(self.reward_integrals(i)) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Format(format!("header length {len} is implausible")));
        }
        let mut header = vec![0u8; len];
        input.read_exact(&mut header)?;
        let header: KernelHeader =
            serde_json::from_slice(&header).map_err(|e| Error::Format(e.to_string()))?;
        if header.grid.hash() != header.grid_hash || header.grid.len() != header.n_states {
            return Err(Error::Format("grid does not match its recorded hash".into()));
        }
        if header.n_samples == 0 {
            return Err(Error::Format("kernel has no samples".into()));
        }
        let n = header.n_samples;
        let total = header.n_states * n;
        let mut terminals = Vec::with_capacity(total);
        let mut rewards = Vec::with_capacity(total);
        let mut buf = [0u8; 8];
        for _ in 0..header.n_states {
            for target in [&mut terminals, &mut rewards] {
                for _ in 0..n {
                    input.read_exact(&mut buf)?;
                    let v = f64::from_le_bytes(buf);
                    if !v.is_finite() {
                        return Err(Error::Format("non-finite sample".into()));
                    }
                    target.push(v);
                }
            }
        }
        Ok(Self::assemble(
            header.grid,
            header.delta,
            n,
            header.seed,
            header.model_tag,
            header.reward_tag,
            terminals,
            rewards,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Hex digest identifying a kernel build.
pub fn kernel_key(
    model_tag: &str,
    reward_tag: &str,
    seed: u64,
    grid: &StateGrid,
    delta: f64,
    n_samples: usize,
) -> String {
    let mut h = Sha256::new();
    for part in [model_tag, reward_tag, &grid.hash()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.update(seed.to_le_bytes());
    h.update(delta.to_le_bytes());
    h.update((n_samples as u64).to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Simulate `n_samples` δ-segments from every grid node.
///
/// Sample `j` of node `i` uses stream `(seed, i, j)`, so the result does not
/// depend on thread scheduling.
pub fn build_kernel(
    model: &ProcessModel,
    grid: &StateGrid,
    reward: &Reward,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FrozenKernel> {
    if model.dimension() != 1 {
        return Err(Error::domain("kernels are built for one-dimensional models only"));
    }
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = grid
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut terminals = Vec::with_capacity(n_samples);
            let mut rewards = Vec::with_capacity(n_samples);
            for j in 0..n_samples {
                let annotate = |source: Error| Error::Simulation {
                    state_index: i,
                    replication: j,
                    source: Box::new(source),
                };
                let mut rng = derive_stream(seed, StreamPurpose::Kernel, i as u64, j as u64);
                let seg = sample_segment(model, &[x], delta, &mut rng).map_err(annotate)?;
                let integral = seg.trapezoid(|s| reward.eval(s[0]));
                if !integral.is_finite() {
                    return Err(annotate(Error::Numerical(format!(
                        "reward integral is {integral}"
                    ))));
                }
                terminals.push(seg.terminal[0]);
                rewards.push(integral);
            }
            Ok((terminals, rewards))
        })
        .collect::<Result<_>>()?;
    let mut terminals = Vec::with_capacity(grid.len() * n_samples);
    let mut rewards = Vec::with_capacity(grid.len() * n_samples);
    for (t, r) in rows {
        terminals.extend(t);
        rewards.extend(r);
    }
    Ok(FrozenKernel::assemble(
        grid.clone(),
        delta,
        n_samples,
        seed,
        model.tag(),
        reward.tag().to_owned(),
        terminals,
        rewards,
    ))
}

/// Empirical `μ^γ(∫₀^δ f(X_s)ds + g̃(X_δ))` from node `state_index`.
pub fn kernel_entropic_value(
    kernel: &FrozenKernel,
    state_index: usize,
    g: &GridFunction,
    params: RiskParams,
) -> Result<f64> {
    kernel.check_state(state_index)?;
    kernel.check_function(g)?;
    kernel.entropic_value_unchecked(state_index, &g.values, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::Weight;
    use crate::processes::DiffusionModel;

    fn small_grid() -> StateGrid {
        StateGrid::uniform(3.0, 13, &Weight::sup_abs(), &[0.0]).unwrap()
    }

    fn deterministic_ou() -> ProcessModel {
        DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1024).unwrap().into()
    }

    #[test]
    fn deterministic_kernel_follows_linear_flow() {
        let grid = small_grid();
        let k = build_kernel(&deterministic_ou(), &grid, &Reward::constant(1.0), 0.5, 3, 1).unwrap();
        for (i, &x) in grid.points().iter().enumerate() {
            for (&t, &r) in k.terminals(i).iter().zip(k.reward_integrals(i)) {
                assert!((r - 0.5).abs() < 1e-12);
                assert!((t - (-0.5f64).exp() * x).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn builds_are_bit_identical() {
        let grid = small_grid();
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into();
        let a = build_kernel(&m, &grid, &Reward::peak(1.0), 0.5, 1, 9).unwrap();
        let b = build_kernel(&m, &grid, &Reward::peak(1.0), 0.5, 1, 9).unwrap();
        assert_eq!(a.terminals, b.terminals);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.key(), b.key());
        let c = build_kernel(&m, &grid, &Reward::peak(1.0), 0.5, 1, 10).unwrap();
        assert_ne!(a.terminals, c.terminals);
        assert_ne!(a.key(), c.key());
    }

    #[test]
    fn zero_reward_integrates_to_zero() {
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into();
        let k = build_kernel(&m, &small_grid(), &Reward::constant(0.0), 0.5, 20, 2).unwrap();
        assert!(k.rewards.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn entropic_value_examples() {
        let grid = small_grid();
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into();
        let k = build_kernel(&m, &grid, &Reward::constant(0.0), 0.5, 50, 3).unwrap();
        let p = RiskParams::new(-1.5).unwrap();
        for i in 0..grid.len() {
            assert_eq!(kernel_entropic_value(&k, i, &GridFunction::zeros(13), p).unwrap(), 0.0);
            let c = kernel_entropic_value(&k, i, &GridFunction::constant(13, 2.25), p).unwrap();
            assert!((c - 2.25).abs() < 1e-14);
        }
        assert!(kernel_entropic_value(&k, 13, &GridFunction::zeros(13), p).is_err());
        assert!(kernel_entropic_value(&k, 0, &GridFunction::zeros(12), p).is_err());

        // Single-atom law: ω(2e^{-0.5}) = 1.2130613194252668.
        let det = build_kernel(&deterministic_ou(), &grid, &Reward::constant(0.0), 0.5, 1, 3).unwrap();
        let omega = GridFunction::new(grid.weight_values().to_vec());
        let x2 = grid.nearest_index(2.0);
        let v = kernel_entropic_value(&det, x2, &omega, p).unwrap();
        assert!((v - 1.213_061_319_425_266_8).abs() < 1e-3);
    }

    #[test]
    fn round_trip_through_bytes() {
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into();
        let k = build_kernel(&m, &small_grid(), &Reward::peak(1.0), 0.5, 7, 4).unwrap();
        let mut bytes = Vec::new();
        k.write_to(&mut bytes).unwrap();
        let back = FrozenKernel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.terminals, k.terminals);
        assert_eq!(back.rewards, k.rewards);
        assert_eq!(back.key(), k.key());
        assert_eq!(back.clamp_fraction(), k.clamp_fraction());

        bytes[0] = b'X';
        assert!(matches!(FrozenKernel::read_from(bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn effective_sample_size_is_full_without_tilting() {
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 8).unwrap().into();
        let k = build_kernel(&m, &small_grid(), &Reward::peak(1.0), 0.5, 40, 5).unwrap();
        let g = GridFunction::new(small_grid().weight_values().to_vec());
        let ess0 = k.effective_sample_size(6, &g, RiskParams::new(0.0).unwrap()).unwrap();
        assert!((ess0 - 40.0).abs() < 1e-9);
        let ess = k.effective_sample_size(6, &g, RiskParams::new(-2.0).unwrap()).unwrap();
        assert!((1.0..40.0).contains(&ess));
    }
}
