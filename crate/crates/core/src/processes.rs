//! Uncontrolled reference processes, simulated one δ-step at a time.
//!
//! Three families:
//!
//! - [`DiffusionModel`]: `dX = (AX + g(X))dt + σ(X)dW` with stable `A` and
//!   bounded `g`, `σ`; Euler–Maruyama with exact Gaussian increments.
//! - [`StepProcessModel`]: a regular step process holding each state for an
//!   `Exp(r(z))` time with `r(z) = max{‖z‖^{1+ε}, r₀}`, then jumping to
//!   `A(z) + w`.
//! - [`PdmpModel`]: a one-dimensional piecewise deterministic process
//!   following a contracting flow between `Exp(r)` jump times, with jumps
//!   `A(x⁻) + w`, `w` Gaussian.
//!
//! Every segment records its states on a uniform mesh of `substeps`
//! intervals plus, for the event-driven families, every event time. At event
//! nodes the pre-jump left limit is kept alongside the post-jump state, so the
//! trapezoid rule over a segment never averages across a jump.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// `out ← F(x)`, with `out` sized by the caller.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Fills `out` with one noise draw.
pub type NoiseSampler = Arc<dyn Fn(&mut SimRng, &mut [f64]) + Send + Sync>;

/// Deterministic flow `φ(x, t)`.
pub type Flow = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Cap on events inside one segment, guarding against exploding intensities.
const MAX_EVENTS_PER_SEGMENT: usize = 1_000_000;

fn euclidean(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_positive(value: f64, name: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_nonnegative(value: f64, name: &str) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be nonnegative and finite, got {value}")))
    }
}

/// One simulated δ-step: mesh and event nodes with their states.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    dimension: usize,
    pub terminal: Vec<f64>,
    times: Vec<f64>,
    states: Vec<f64>,
    left_limits: Vec<f64>,
    pub jumps: usize,
    pub rng_draws_consumed: u64,
}

impl PathSegment {
    fn start(dimension: usize, start: &[f64], capacity: usize) -> Self {
        let mut seg = Self {
            dimension,
            terminal: Vec::new(),
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity * dimension),
            left_limits: Vec::with_capacity(capacity * dimension),
            jumps: 0,
            rng_draws_consumed: 0,
        };
        seg.times.push(0.0);
        seg.states.extend_from_slice(start);
        seg.left_limits.extend_from_slice(start);
        seg
    }

    fn push(&mut self, time: f64, left: &[f64], state: &[f64]) -> Result<()> {
        let substep = self.times.len();
        if !state.iter().chain(left).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { substep });
        }
        self.times.push(time);
        self.left_limits.extend_from_slice(left);
        self.states.extend_from_slice(state);
        Ok(())
    }

    fn finish(mut self) -> Self {
        let n = self.times.len();
        self.terminal = self.state(n - 1).to_vec();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Node time offsets, strictly increasing from 0 to δ.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Right-continuous state at node `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dimension..(k + 1) * self.dimension]
    }

    /// Left limit at node `k`; differs from [`state`](Self::state) only at jumps.
    pub fn left_limit(&self, k: usize) -> &[f64] {
        &self.left_limits[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn is_jump(&self, k: usize) -> bool {
        self.state(k) != self.left_limit(k)
    }

    pub fn substep_states(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times.iter().enumerate().map(|(k, &t)| (t, self.state(k)))
    }

    /// Trapezoid rule for `∫₀^δ f(X_s) ds` using left limits at the right end
    /// of each interval.
    pub fn trapezoid(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut total = 0.0;
        let mut prev = f(self.state(0));
        for k in 1..self.times.len() {
            let dt = self.times[k] - self.times[k - 1];
            total += 0.5 * dt * (prev + f(self.left_limit(k)));
            prev = f(self.state(k));
        }
        total
    }
}

fn mesh_time(k: usize, substeps: usize, delta: f64) -> f64 {
    if k == substeps {
        delta
    } else {
        delta * k as f64 / substeps as f64
    }
}

/// Itô diffusion `dX = (AX + g(X))dt + σ(X)dW` on `ℝ^d`.
#[derive(Clone)]
pub struct DiffusionModel {
    dimension: usize,
    mean_reversion: Vec<f64>,
    drift_bounded: Option<VectorField>,
    drift_tag: String,
    drift_bound: f64,
    vol: Option<VectorField>,
    vol_tag: String,
    vol_bound: f64,
    substeps: usize,
}

impl DiffusionModel {
    /// Linear part only (`g ≡ 0`, `σ ≡ 0`); `mean_reversion` is `A` row-major.
    ///
    /// Stability is checked for scalar and diagonal `A`; for a general `A`
    /// the caller asserts it is stable and diagonalisable.
    pub fn new(dimension: usize, mean_reversion: Vec<f64>, substeps: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        if mean_reversion.len() != dimension * dimension {
            return Err(Error::domain(format!(
                "mean reversion matrix has {} entries, expected {}",
                mean_reversion.len(),
                dimension * dimension
            )));
        }
        if mean_reversion.iter().any(|a| !a.is_finite()) {
            return Err(Error::domain("mean reversion matrix must be finite"));
        }
        if substeps == 0 {
            return Err(Error::domain("substeps must be at least 1"));
        }
        let diagonal = (0..dimension)
            .all(|i| (0..dimension).all(|j| i == j || mean_reversion[i * dimension + j] == 0.0));
        if diagonal {
            if let Some(i) = (0..dimension).find(|&i| mean_reversion[i * dimension + i] >= 0.0) {
                return Err(Error::domain(format!(
                    "mean reversion A[{i}][{i}] = {} is not negative; A must be stable",
                    mean_reversion[i * dimension + i]
                )));
            }
        }
        Ok(Self {
            dimension,
            mean_reversion,
            drift_bounded: None,
            drift_tag: "none".into(),
            drift_bound: 0.0,
            vol: None,
            vol_tag: "none".into(),
            vol_bound: 0.0,
            substeps,
        })
    }

    /// One-dimensional `dX = -αX dt + σ dW`.
    pub fn ornstein_uhlenbeck(alpha: f64, sigma: f64, substeps: usize) -> Result<Self> {
        check_positive(alpha, "alpha")?;
        Self::new(1, vec![-alpha], substeps)?.with_constant_vol(sigma)
    }

    /// `dX = -diag(α)X dt + σ I dW`.
    pub fn diagonal_ou(alphas: &[f64], sigma: f64, substeps: usize) -> Result<Self> {
        let d = alphas.len();
        let mut a = vec![0.0; d * d];
        for (i, &alpha) in alphas.iter().enumerate() {
            check_positive(alpha, "alpha")?;
            a[i * d + i] = -alpha;
        }
        Self::new(d, a, substeps)?.with_constant_vol(sigma)
    }

    /// `σ(x) = s·I`.
    pub fn with_constant_vol(self, sigma: f64) -> Result<Self> {
        check_nonnegative(sigma, "sigma")?;
        let d = self.dimension;
        if sigma == 0.0 {
            return Ok(Self {
                vol: None,
                vol_tag: "none".into(),
                vol_bound: 0.0,
                ..self
            });
        }
        let field: VectorField = Arc::new(move |_x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..d {
                out[i * d + i] = sigma;
            }
        });
        self.with_vol(format!("const({sigma})"), field, sigma)
    }

    /// State-dependent volatility `σ(x)` (written row-major into a `d×d` buffer),
    /// with `bound = sup ‖σ‖_∞`.
    pub fn with_vol(self, tag: impl Into<String>, vol: VectorField, bound: f64) -> Result<Self> {
        check_nonnegative(bound, "volatility bound")?;
        Ok(Self {
            vol: Some(vol),
            vol_tag: tag.into(),
            vol_bound: bound,
            ..self
        })
    }

    /// Bounded nonlinear drift `g` with `bound = sup ‖g‖_∞`.
    pub fn with_bounded_drift(
        self,
        tag: impl Into<String>,
        drift: VectorField,
        bound: f64,
    ) -> Result<Self> {
        check_nonnegative(bound, "drift bound")?;
        Ok(Self {
            drift_bounded: Some(drift),
            drift_tag: tag.into(),
            drift_bound: bound,
            ..self
        })
    }

    /// Same model with `g ≡ 0`; isolates the stochastic convolution.
    pub fn without_bounded_drift(&self) -> Self {
        Self {
            drift_bounded: None,
            drift_tag: "none".into(),
            drift_bound: 0.0,
            ..self.clone()
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mean_reversion(&self) -> &[f64] {
        &self.mean_reversion
    }

    pub fn drift_bound(&self) -> f64 {
        self.drift_bound
    }

    pub fn vol_bound(&self) -> f64 {
        self.vol_bound
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn tag(&self) -> String {
        format!(
            "diffusion(d={},A={:?},g={},sigma={},substeps={})",
            self.dimension, self.mean_reversion, self.drift_tag, self.vol_tag, self.substeps
        )
    }

    fn sample(&self, start: &[f64], delta: f64, rng: &mut SimRng) -> Result<PathSegment> {
        let d = self.dimension;
        let n = self.substeps;
        let h = delta / n as f64;
        let sqrt_h = h.sqrt();
        let mut seg = PathSegment::start(d, start, n + 1);
        let mut x = start.to_vec();
        let mut drift = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut sigma = vec![0.0; d * d];
        let mut dw = vec![0.0; d];
        for k in 1..=n {
            for (i, di) in drift.iter_mut().enumerate() {
                *di = (0..d).map(|j| self.mean_reversion[i * d + j] * x[j]).sum();
            }
            if let Some(field) = &self.drift_bounded {
                field(&x, &mut g);
                for i in 0..d {
                    drift[i] += g[i];
                }
            }
            if let Some(vol) = &self.vol {
                vol(&x, &mut sigma);
                for w in dw.iter_mut() {
                    *w = sqrt_h * rng.sample::<f64, _>(StandardNormal);
                }
                seg.rng_draws_consumed += d as u64;
                for i in 0..d {
                    x[i] += drift[i] * h + (0..d).map(|j| sigma[i * d + j] * dw[j]).sum::<f64>();
                }
            } else {
                for i in 0..d {
                    x[i] += drift[i] * h;
                }
            }
            seg.push(mesh_time(k, n, delta), &x, &x)?;
        }
        Ok(seg.finish())
    }
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Numeric parameters of a [`StepProcessModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProcessParams {
    /// `r₀` in `r(z) = max{‖z‖^{1+ε}, r₀}`.
    pub base_rate: f64,
    /// `ε`.
    pub rate_exponent: f64,
    /// `β ∈ (0,1)` with `‖A(x)‖ + ‖w‖ ≤ β‖x‖ + K`.
    pub contraction_beta: f64,
    /// `K ≥ 0`.
    pub offset_k: f64,
    /// Almost-sure bound on `‖w‖`.
    pub noise_bound: f64,
    pub substeps: usize,
}

/// Regular step process with state-dependent holding intensity.
#[derive(Clone)]
pub struct StepProcessModel {
    dimension: usize,
    params: StepProcessParams,
    jump_map: VectorField,
    jump_noise: NoiseSampler,
    tag: String,
}

impl StepProcessModel {
    /// Validates the parameters and spot-checks `‖A(x)‖ + bound ≤ β‖x‖ + K`
    /// along the coordinate axes.
    pub fn new(
        dimension: usize,
        params: StepProcessParams,
        jump_map: VectorField,
        jump_noise: NoiseSampler,
        tag: impl Into<String>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        check_positive(params.base_rate, "base_rate")?;
        check_positive(params.rate_exponent, "rate_exponent")?;
        check_nonnegative(params.offset_k, "offset K")?;
        check_nonnegative(params.noise_bound, "noise bound")?;
        if !(params.contraction_beta > 0.0 && params.contraction_beta < 1.0) {
            return Err(Error::domain(format!(
                "contraction_beta must lie in (0,1), got {}",
                params.contraction_beta
            )));
        }
        if params.substeps == 0 {
            return Err(Error::domain("substeps must be at least 1"));
        }
        let mut x = vec![0.0; dimension];
        let mut ax = vec![0.0; dimension];
        for axis in 0..dimension {
            for radius in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, -1.0, -10.0] {
                x.fill(0.0);
                x[axis] = radius;
                jump_map(&x, &mut ax);
                let lhs = euclidean(&ax) + params.noise_bound;
                let rhs = params.contraction_beta * euclidean(&x) + params.offset_k;
                if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::domain(format!(
                        "jump bound violated at x = {x:?}: ‖A(x)‖ + ‖w‖ = {lhs} > β‖x‖ + K = {rhs}"
                    )));
                }
            }
        }
        Ok(Self {
            dimension,
            params,
            jump_map,
            jump_noise,
            tag: tag.into(),
        })
    }

    /// `A(x) = a·x`, `w` uniform on `[-h, h]^d`; then `β = a` and `K = h√d`.
    pub fn linear(
        dimension: usize,
        base_rate: f64,
        rate_exponent: f64,
        jump_scale: f64,
        noise_half_width: f64,
        substeps: usize,
    ) -> Result<Self> {
        check_nonnegative(noise_half_width, "noise half width")?;
        let noise_bound = noise_half_width * (dimension as f64).sqrt();
        let params = StepProcessParams {
            base_rate,
            rate_exponent,
            contraction_beta: jump_scale,
            offset_k: noise_bound,
            noise_bound,
            substeps,
        };
        let jump_map: VectorField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = jump_scale * v;
            }
        });
        let noise: NoiseSampler = Arc::new(move |rng: &mut SimRng, out: &mut [f64]| {
            for o in out.iter_mut() {
                *o = if noise_half_width > 0.0 {
                    rng.random_range(-noise_half_width..=noise_half_width)
                } else {
                    0.0
                };
            }
        });
        let tag = format!(
            "step(d={dimension},r0={base_rate},eps={rate_exponent},a={jump_scale},h={noise_half_width},substeps={substeps})"
        );
        Self::new(dimension, params, jump_map, noise, tag)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn params(&self) -> &StepProcessParams {
        &self.params
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// `r(z) = max{‖z‖^{1+ε}, r₀}`.
    pub fn rate(&self, z: &[f64]) -> f64 {
        euclidean(z)
            .powf(1.0 + self.params.rate_exponent)
            .max(self.params.base_rate)
    }

    fn sample(&self, start: &[f64], delta: f64, rng: &mut SimRng) -> Result<PathSegment> {
        let d = self.dimension;
        let n = self.params.substeps;
        let mut seg = PathSegment::start(d, start, n + 1);
        let mut z = start.to_vec();
        let mut next = vec![0.0; d];
        let mut noise = vec![0.0; d];
        let mut t = 0.0;
        let mut mesh = 1;
        loop {
            let dwell: f64 = rng.sample::<f64, _>(Exp1) / self.rate(&z);
            seg.rng_draws_consumed += 1;
            let event = t + dwell;
            while mesh <= n && mesh_time(mesh, n, delta) < event {
                seg.push(mesh_time(mesh, n, delta), &z, &z)?;
                mesh += 1;
            }
            if event >= delta {
                break;
            }
            if seg.jumps >= MAX_EVENTS_PER_SEGMENT {
                return Err(Error::Numerical(format!(
                    "more than {MAX_EVENTS_PER_SEGMENT} jumps in one segment"
                )));
            }
            (self.jump_map)(&z, &mut next);
            (self.jump_noise)(rng, &mut noise);
            seg.rng_draws_consumed += 1;
            let noise_norm = euclidean(&noise);
            if noise_norm > self.params.noise_bound * (1.0 + 1e-12) {
                return Err(Error::Numerical(format!(
                    "jump noise norm {noise_norm} exceeds declared bound {}",
                    self.params.noise_bound
                )));
            }
            for (a, w) in next.iter_mut().zip(&noise) {
                *a += w;
            }
            if event > *seg.times.last().expect("segment has a start node") {
                seg.push(event, &z, &next)?;
            }
            seg.jumps += 1;
            std::mem::swap(&mut z, &mut next);
            t = event;
        }
        Ok(seg.finish())
    }
}

impl fmt::Debug for StepProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag)
    }
}

/// Numeric parameters of a [`PdmpModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdmpParams {
    /// `α` in `|φ(x,t)| ≤ e^{-αt}|x| + M`.
    pub flow_alpha: f64,
    /// `M`.
    pub flow_offset: f64,
    /// Constant jump intensity `r`.
    pub jump_rate: f64,
    /// `K` in `|A(x)| ≤ |x| + K`.
    pub jump_offset_k: f64,
    /// Scale of the Gaussian jump noise.
    pub jump_noise_std: f64,
    pub substeps: usize,
}

/// One-dimensional piecewise deterministic Markov process.
#[derive(Clone)]
pub struct PdmpModel {
    params: PdmpParams,
    flow: Flow,
    jump_map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tag: String,
}

impl PdmpModel {
    /// Validates parameters and checks the declared flow and jump bounds on a
    /// fixed set of probe states.
    pub fn new(
        params: PdmpParams,
        flow: Flow,
        jump_map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        tag: impl Into<String>,
    ) -> Result<Self> {
        check_positive(params.flow_alpha, "flow_alpha")?;
        check_nonnegative(params.flow_offset, "flow_offset")?;
        check_positive(params.jump_rate, "jump_rate")?;
        check_nonnegative(params.jump_offset_k, "jump offset K")?;
        check_positive(params.jump_noise_std, "jump_noise_std")?;
        if params.substeps == 0 {
            return Err(Error::domain("substeps must be at least 1"));
        }
        for x in [-100.0, -10.0, -3.0, -1.0, 0.0, 0.5, 1.0, 3.0, 10.0, 100.0] {
            for t in [0.0, 0.1, 0.25, 0.5, 1.0, 2.0] {
                let phi = flow(x, t);
                let bound = (-params.flow_alpha * t).exp() * f64::abs(x) + params.flow_offset;
                if !(phi.abs() <= bound * (1.0 + 1e-12) + 1e-12) {
                    return Err(Error::domain(format!(
                        "flow bound violated: |φ({x}, {t})| = {} > {bound}",
                        phi.abs()
                    )));
                }
            }
            let a = jump_map(x);
            if !(a.abs() <= x.abs() + params.jump_offset_k + 1e-12) {
                return Err(Error::domain(format!(
                    "jump bound violated: |A({x})| = {} > |x| + K",
                    a.abs()
                )));
            }
        }
        Ok(Self {
            params,
            flow,
            jump_map,
            tag: tag.into(),
        })
    }

    /// Flow `φ(x,t) = e^{-αt}x + (1 - e^{-αt})m` toward `m` (so `M = |m|`)
    /// and jumps `A(x) = a·x + k` with `|a| ≤ 1` (so `K = |k|`).
    pub fn linear(
        flow_alpha: f64,
        flow_target: f64,
        jump_rate: f64,
        jump_scale: f64,
        jump_shift: f64,
        jump_noise_std: f64,
        substeps: usize,
    ) -> Result<Self> {
        if !(jump_scale.abs() <= 1.0) {
            return Err(Error::domain(format!(
                "jump_scale must satisfy |a| ≤ 1, got {jump_scale}"
            )));
        }
        if !flow_target.is_finite() || !jump_shift.is_finite() {
            return Err(Error::domain("flow target and jump shift must be finite"));
        }
        let params = PdmpParams {
            flow_alpha,
            flow_offset: flow_target.abs(),
            jump_rate,
            jump_offset_k: jump_shift.abs(),
            jump_noise_std,
            substeps,
        };
        let flow: Flow = Arc::new(move |x, t| {
            let decay = (-flow_alpha * t).exp();
            decay * x + (1.0 - decay) * flow_target
        });
        let jump = Arc::new(move |x: f64| jump_scale * x + jump_shift);
        let tag = format!(
            "pdmp(alpha={flow_alpha},m={flow_target},r={jump_rate},a={jump_scale},k={jump_shift},std={jump_noise_std},substeps={substeps})"
        );
        Self::new(params, flow, jump, tag)
    }

    pub fn params(&self) -> &PdmpParams {
        &self.params
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn flow(&self, x: f64, t: f64) -> f64 {
        (self.flow)(x, t)
    }

    fn sample(&self, start: f64, delta: f64, rng: &mut SimRng) -> Result<PathSegment> {
        let n = self.params.substeps;
        let mut seg = PathSegment::start(1, &[start], n + 1);
        let mut anchor = start;
        let mut anchor_time = 0.0;
        let mut mesh = 1;
        loop {
            let dwell: f64 = rng.sample::<f64, _>(Exp1) / self.params.jump_rate;
            seg.rng_draws_consumed += 1;
            let event = anchor_time + dwell;
            while mesh <= n && mesh_time(mesh, n, delta) < event {
                let t = mesh_time(mesh, n, delta);
                let x = self.flow(anchor, t - anchor_time);
                seg.push(t, &[x], &[x])?;
                mesh += 1;
            }
            if event >= delta {
                break;
            }
            if seg.jumps >= MAX_EVENTS_PER_SEGMENT {
                return Err(Error::Numerical(format!(
                    "more than {MAX_EVENTS_PER_SEGMENT} jumps in one segment"
                )));
            }
            let pre = self.flow(anchor, event - anchor_time);
            let w: f64 = rng.sample(StandardNormal);
            seg.rng_draws_consumed += 1;
            let post = (self.jump_map)(pre) + self.params.jump_noise_std * w;
            if event > *seg.times.last().expect("segment has a start node") {
                seg.push(event, &[pre], &[post])?;
            }
            seg.jumps += 1;
            anchor = post;
            anchor_time = event;
        }
        Ok(seg.finish())
    }
}

impl fmt::Debug for PdmpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag)
    }
}

/// Any of the three reference process families.
#[derive(Debug, Clone)]
pub enum ProcessModel {
    Diffusion(DiffusionModel),
    Step(StepProcessModel),
    Pdmp(PdmpModel),
}

impl ProcessModel {
    pub fn dimension(&self) -> usize {
        match self {
            ProcessModel::Diffusion(m) => m.dimension(),
            ProcessModel::Step(m) => m.dimension(),
            ProcessModel::Pdmp(_) => 1,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            ProcessModel::Diffusion(m) => m.tag(),
            ProcessModel::Step(m) => m.tag().to_owned(),
            ProcessModel::Pdmp(m) => m.tag().to_owned(),
        }
    }
}

impl From<DiffusionModel> for ProcessModel {
    fn from(m: DiffusionModel) -> Self {
        ProcessModel::Diffusion(m)
    }
}

impl From<StepProcessModel> for ProcessModel {
    fn from(m: StepProcessModel) -> Self {
        ProcessModel::Step(m)
    }
}

impl From<PdmpModel> for ProcessModel {
    fn from(m: PdmpModel) -> Self {
        ProcessModel::Pdmp(m)
    }
}

/// Simulate the uncontrolled process over `[0, δ]` from `start`.
pub fn sample_segment(
    model: &ProcessModel,
    start: &[f64],
    delta: f64,
    rng: &mut SimRng,
) -> Result<PathSegment> {
    if start.len() != model.dimension() {
        return Err(Error::domain(format!(
            "start has dimension {}, model has {}",
            start.len(),
            model.dimension()
        )));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("start state must be finite"));
    }
    check_positive(delta, "delta")?;
    match model {
        ProcessModel::Diffusion(m) => m.sample(start, delta, rng),
        ProcessModel::Step(m) => m.sample(start, delta, rng),
        ProcessModel::Pdmp(m) => m.sample(start[0], delta, rng),
    }
}

/// `2^d · exp(γ² d ‖σ‖²_∞ / 2)`, a bound on `E[e^{γ ω(Z(t))}]` for the
/// stochastic convolution `Z(t) = ∫₀ᵗ e^{A(t-s)} σ(X_s) dW_s`, `t ≤ 1`.
pub fn diffusion_noise_mgf_bound(model: &DiffusionModel, gamma: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("t must lie in (0, 1], got {t}")));
    }
    let d = model.dimension() as f64;
    let s = model.vol_bound();
    Ok(2f64.powf(d) * (0.5 * gamma * gamma * d * s * s).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamPurpose};

    fn rng(j: u64) -> SimRng {
        derive_stream(11, StreamPurpose::Kernel, 0, j)
    }

    #[test]
    fn deterministic_ou_matches_linear_flow() {
        // 2·e^{-0.5} = 1.2130613194252668 (high-precision evaluation).
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1024).unwrap().into();
        let seg = sample_segment(&m, &[2.0], 0.5, &mut rng(0)).unwrap();
        assert!((seg.terminal[0] - 1.213_061_319_425_266_8).abs() < 1e-3);
        assert_eq!(seg.rng_draws_consumed, 0);
        assert_eq!(seg.times()[0], 0.0);
        assert_eq!(*seg.times().last().unwrap(), 0.5);
    }

    #[test]
    fn euler_bias_decays_first_order() {
        let exact = 2.0 * (-0.5f64).exp();
        let err = |n| {
            let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, n).unwrap().into();
            (sample_segment(&m, &[2.0], 0.5, &mut rng(0)).unwrap().terminal[0] - exact).abs()
        };
        let (e1, e2) = (err(64), err(128));
        let ratio = e1 / e2;
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn segments_are_deterministic() {
        let models: Vec<ProcessModel> = vec![
            DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 16).unwrap().into(),
            StepProcessModel::linear(1, 1.0, 0.5, 0.5, 0.3, 8).unwrap().into(),
            PdmpModel::linear(1.0, 0.2, 2.0, 0.5, 0.1, 1.0, 8).unwrap().into(),
        ];
        for m in &models {
            let a = sample_segment(m, &[1.7], 0.5, &mut rng(3)).unwrap();
            let b = sample_segment(m, &[1.7], 0.5, &mut rng(3)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn step_process_without_event_stays_put() {
        let m: ProcessModel = StepProcessModel::linear(1, 1e-9, 0.5, 0.5, 0.3, 4).unwrap().into();
        let seg = sample_segment(&m, &[0.0], 0.5, &mut rng(0)).unwrap();
        assert_eq!(seg.jumps, 0);
        assert_eq!(seg.terminal, vec![0.0]);
        assert_eq!(seg.len(), 5);
    }

    #[test]
    fn step_process_jumps_obey_chain_bound() {
        let model = StepProcessModel::linear(2, 1.0, 0.5, 0.6, 0.4, 8).unwrap();
        let beta = model.params().contraction_beta;
        let k = model.params().offset_k;
        let m: ProcessModel = model.into();
        let mut jumps = 0;
        for j in 0..200 {
            let seg = sample_segment(&m, &[4.0, -3.0], 0.5, &mut rng(j)).unwrap();
            for node in 1..seg.len() {
                if seg.is_jump(node) {
                    jumps += 1;
                    let after = euclidean(seg.state(node));
                    let before = euclidean(seg.left_limit(node));
                    assert!(after <= beta * before + k + 1e-12);
                }
            }
        }
        assert!(jumps > 100);
    }

    #[test]
    fn node_times_strictly_increase() {
        let models: Vec<ProcessModel> = vec![
            StepProcessModel::linear(1, 2.0, 0.5, 0.5, 0.3, 8).unwrap().into(),
            PdmpModel::linear(1.0, 0.2, 6.0, 0.5, 0.1, 1.0, 8).unwrap().into(),
        ];
        for m in &models {
            for j in 0..100 {
                let seg = sample_segment(m, &[3.0], 0.5, &mut rng(j)).unwrap();
                assert_eq!(seg.times()[0], 0.0);
                assert_eq!(*seg.times().last().unwrap(), 0.5);
                assert!(seg.times().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn trapezoid_is_exact_for_step_paths() {
        let m: ProcessModel = StepProcessModel::linear(1, 3.0, 0.5, 0.5, 0.3, 4).unwrap().into();
        for j in 0..50 {
            let seg = sample_segment(&m, &[2.0], 0.5, &mut rng(j)).unwrap();
            let f = |x: &[f64]| x[0] * x[0];
            let mut exact = 0.0;
            for k in 1..seg.len() {
                exact += (seg.times()[k] - seg.times()[k - 1]) * f(seg.state(k - 1));
            }
            assert!((seg.trapezoid(f) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn pdmp_flow_bound_before_first_jump() {
        let model = PdmpModel::linear(1.5, 0.4, 1.0, 0.8, 0.2, 1.0, 16).unwrap();
        let p = *model.params();
        let m: ProcessModel = model.into();
        for j in 0..200 {
            let x0 = 5.0;
            let seg = sample_segment(&m, &[x0], 0.5, &mut rng(j)).unwrap();
            for k in 0..seg.len() {
                if seg.is_jump(k) {
                    break;
                }
                let t = seg.times()[k];
                let bound = (-p.flow_alpha * t).exp() * x0 + p.flow_offset;
                assert!(seg.state(k)[0].abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn pdmp_jump_probability_matches_exponential_law() {
        // P(at least one jump in [0, δ]) = 1 - e^{-rδ} = 0.39346934028736658 for r = 1, δ = 0.5.
        let m: ProcessModel = PdmpModel::linear(1.0, 0.0, 1.0, 0.5, 0.0, 1.0, 2).unwrap().into();
        let n = 100_000;
        let hits = (0..n)
            .filter(|&j| sample_segment(&m, &[0.0], 0.5, &mut rng(j)).unwrap().jumps > 0)
            .count();
        let p = 0.393_469_340_287_366_6;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let frac = hits as f64 / n as f64;
        assert!((frac - p).abs() < 3.0 * se, "{frac} vs {p}");
    }

    #[test]
    fn mgf_bound_values() {
        let zero = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 4).unwrap();
        assert_eq!(diffusion_noise_mgf_bound(&zero, 1.0, 0.5).unwrap(), 2.0);
        let one = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 4).unwrap();
        let v = diffusion_noise_mgf_bound(&one, 1.0, 0.5).unwrap();
        assert!((v - 3.297_442_541_400_256).abs() < 1e-12);
        let two = DiffusionModel::diagonal_ou(&[1.0, 2.0], 1.0, 4).unwrap();
        let v = diffusion_noise_mgf_bound(&two, 2.0, 1.0).unwrap();
        assert!((v - 218.392_600_132_576_96).abs() < 1e-9);
        assert!(diffusion_noise_mgf_bound(&one, 0.0, 0.5).is_err());
        assert!(diffusion_noise_mgf_bound(&one, -1.0, 0.5).is_err());
        assert!(diffusion_noise_mgf_bound(&one, 1.0, 1.5).is_err());
    }

    #[test]
    fn construction_rejects_invalid_models() {
        assert!(DiffusionModel::new(1, vec![0.5], 4).is_err());
        assert!(DiffusionModel::new(2, vec![-1.0, 0.0, 0.0, 0.0], 4).is_err());
        assert!(DiffusionModel::ornstein_uhlenbeck(1.0, -1.0, 4).is_err());
        assert!(StepProcessModel::linear(1, 0.0, 0.5, 0.5, 0.1, 4).is_err());
        assert!(StepProcessModel::linear(1, 1.0, 0.5, 1.0, 0.1, 4).is_err());
        assert!(PdmpModel::linear(0.0, 0.0, 1.0, 0.5, 0.0, 1.0, 4).is_err());
        assert!(PdmpModel::linear(1.0, 0.0, 1.0, 1.5, 0.0, 1.0, 4).is_err());
        // A flow that grows violates the declared bound.
        let params = PdmpParams {
            flow_alpha: 1.0,
            flow_offset: 0.0,
            jump_rate: 1.0,
            jump_offset_k: 0.0,
            jump_noise_std: 1.0,
            substeps: 4,
        };
        let growing: Flow = Arc::new(|x, t| x * (1.0 + t));
        assert!(PdmpModel::new(params, growing, Arc::new(|x| x), "bad").is_err());
    }

    #[test]
    fn non_finite_state_reports_substep() {
        let blow_up: VectorField = Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = f64::INFINITY);
        let m: ProcessModel = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 4)
            .unwrap()
            .with_bounded_drift("inf", blow_up, 1.0)
            .unwrap()
            .into();
        match sample_segment(&m, &[1.0], 0.5, &mut rng(0)) {
            Err(Error::NonFinite { substep }) => assert_eq!(substep, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
