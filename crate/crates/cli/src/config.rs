//! Run configuration: TOML schema, validation and conversion to core types.

use std::path::Path;

use impulse_core::{
    DiffusionModel, ImpulseProblem, PdmpModel, ProcessModel, Reward, ShiftCost, StateGrid, StepProcessModel,
    Weight,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    /// `dX = -αX dt + σ dW`.
    Diffusion {
        alpha: f64,
        sigma: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
    /// Jumps `x ↦ a·x + w`, `w ~ U[-h, h]`, at rate `r₀(1 + ε|x|)`.
    Step {
        base_rate: f64,
        rate_exponent: f64,
        jump_scale: f64,
        noise_half_width: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
    /// Linear flow toward `target` with jumps `x ↦ a·x + k + N(0, s²)`.
    Pdmp {
        alpha: f64,
        target: f64,
        jump_rate: f64,
        jump_scale: f64,
        jump_shift: f64,
        jump_noise_std: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum RewardConfig {
    /// `f(x) = h / (1 + x²)`.
    Peak { height: f64 },
    Constant { value: f64 },
    /// `f(x) = a - b|x|`.
    Tent { level: f64, slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CostConfig {
    /// `c(x, ξ) = c₀ - κ|x - ξ|`.
    Affine { c0: f64, kappa: f64 },
    Constant { c0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub delta: f64,
    pub gamma: f64,
    pub reward: RewardConfig,
    pub cost: CostConfig,
    pub shift_targets: TargetsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_steps: usize,
    pub n_reps: usize,
    #[serde(default)]
    pub start: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub drift_gammas: Vec<f64>,
    pub drift_states: usize,
    pub drift_samples: usize,
    pub radius_r: f64,
    pub bins: usize,
    pub minorisation_samples: usize,
    pub sweep_gammas: Vec<f64>,
    pub holder_instances: usize,
    pub holder_gammas: Vec<f64>,
    pub holder_ps: Vec<f64>,
    pub contraction_pairs: usize,
    pub span_bound: f64,
    pub noise_gammas: Vec<f64>,
    pub noise_dimensions: Vec<usize>,
    pub noise_t: f64,
    pub noise_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
}

fn positive(errors: &mut Vec<String>, path: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{path} must be positive (got {v})"));
    }
}

fn nonnegative(errors: &mut Vec<String>, path: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        errors.push(format!("{path} must be nonnegative (got {v})"));
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Set every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        self.kernel.seed = seed;
        self.simulate.seed = seed;
        self.verify.seed = seed;
    }

    /// Hex sha256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn shift_targets(&self) -> Vec<f64> {
        let t = &self.problem.shift_targets;
        if t.count == 1 {
            return vec![t.from];
        }
        (0..t.count)
            .map(|k| t.from + (t.to - t.from) * k as f64 / (t.count - 1) as f64)
            .collect()
    }

    /// All violations, each prefixed by its field path.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut e = Vec::new();
        match &self.model {
            ModelConfig::Diffusion { alpha, sigma, substeps } => {
                positive(&mut e, "model.alpha", *alpha);
                nonnegative(&mut e, "model.sigma", *sigma);
                if *substeps == 0 {
                    e.push("model.substeps must be at least 1".into());
                }
            }
            ModelConfig::Step {
                base_rate,
                rate_exponent,
                jump_scale,
                noise_half_width,
                substeps,
            } => {
                nonnegative(&mut e, "model.base_rate", *base_rate);
                nonnegative(&mut e, "model.rate_exponent", *rate_exponent);
                if !(jump_scale.abs() < 1.0) {
                    e.push(format!("model.jump_scale must satisfy |a| < 1 (got {jump_scale})"));
                }
                nonnegative(&mut e, "model.noise_half_width", *noise_half_width);
                if *substeps == 0 {
                    e.push("model.substeps must be at least 1".into());
                }
            }
            ModelConfig::Pdmp {
                alpha,
                target,
                jump_rate,
                jump_scale,
                jump_shift,
                jump_noise_std,
                substeps,
            } => {
                positive(&mut e, "model.alpha", *alpha);
                if !target.is_finite() || !jump_shift.is_finite() {
                    e.push("model.target and model.jump_shift must be finite".into());
                }
                nonnegative(&mut e, "model.jump_rate", *jump_rate);
                if !(jump_scale.abs() <= 1.0) {
                    e.push(format!("model.jump_scale must satisfy |a| <= 1 (got {jump_scale})"));
                }
                nonnegative(&mut e, "model.jump_noise_std", *jump_noise_std);
                if *substeps == 0 {
                    e.push("model.substeps must be at least 1".into());
                }
            }
        }
        let p = &self.problem;
        if !(p.delta > 0.0 && p.delta.is_finite()) {
            e.push(format!("problem.delta: delta must be positive (got {})", p.delta));
        }
        if !(p.gamma < 0.0 && p.gamma.is_finite()) {
            e.push(format!("problem.gamma: gamma must be negative (got {})", p.gamma));
        }
        match p.reward {
            RewardConfig::Peak { height } => positive(&mut e, "problem.reward.height", height),
            RewardConfig::Constant { value } => {
                if !value.is_finite() {
                    e.push("problem.reward.value must be finite".into());
                }
            }
            RewardConfig::Tent { level, slope } => {
                if !level.is_finite() {
                    e.push("problem.reward.level must be finite".into());
                }
                nonnegative(&mut e, "problem.reward.slope", slope);
            }
        }
        match p.cost {
            CostConfig::Affine { c0, kappa } => {
                if !(c0 < 0.0 && c0.is_finite()) {
                    e.push(format!("problem.cost.c0 must be negative (got {c0})"));
                }
                nonnegative(&mut e, "problem.cost.kappa", kappa);
            }
            CostConfig::Constant { c0 } => {
                if !(c0 < 0.0 && c0.is_finite()) {
                    e.push(format!("problem.cost.c0 must be negative (got {c0})"));
                }
            }
        }
        let t = &p.shift_targets;
        if t.count == 0 {
            e.push("problem.shift_targets.count must be at least 1".into());
        }
        if !(t.from.is_finite() && t.to.is_finite() && t.from <= t.to) {
            e.push("problem.shift_targets: need finite from <= to".into());
        }
        let g = &self.grid;
        positive(&mut e, "grid.half_width", g.half_width);
        if g.n_nodes < 3 {
            e.push(format!("grid.n_nodes must be at least 3 (got {})", g.n_nodes));
        }
        if t.from.abs().max(t.to.abs()) >= g.half_width {
            e.push("grid.half_width must exceed max |shift_targets|".into());
        }
        if self.kernel.n_samples == 0 {
            e.push("kernel.n_samples must be at least 1".into());
        }
        positive(&mut e, "solver.tol", self.solver.tol);
        if self.solver.max_iter == 0 {
            e.push("solver.max_iter must be at least 1".into());
        }
        if self.simulate.n_steps == 0 {
            e.push("simulate.n_steps must be at least 1".into());
        }
        if self.simulate.n_reps < 2 {
            e.push(format!("simulate.n_reps must be at least 2 (got {})", self.simulate.n_reps));
        }
        if !self.simulate.start.is_finite() {
            e.push("simulate.start must be finite".into());
        }
        let v = &self.verify;
        positive(&mut e, "verify.radius_r", v.radius_r);
        if v.bins == 0 {
            e.push("verify.bins must be at least 1".into());
        }
        if v.drift_states < 2 {
            e.push("verify.drift_states must be at least 2".into());
        }
        if v.sweep_gammas.iter().any(|&x| !(x < 0.0)) || v.sweep_gammas.windows(2).any(|w| !(w[0] < w[1])) {
            e.push("verify.sweep_gammas must be negative and strictly increasing".into());
        }
        if v.holder_gammas.iter().any(|&x| !(x < 0.0)) {
            e.push("verify.holder_gammas must be negative".into());
        }
        if v.holder_ps.iter().any(|&x| !(x > 1.0)) {
            e.push("verify.holder_ps must exceed 1".into());
        }
        positive(&mut e, "verify.span_bound", v.span_bound);
        if v.noise_gammas.iter().any(|&x| !(x > 0.0)) {
            e.push("verify.noise_gammas must be positive".into());
        }
        if v.noise_dimensions.contains(&0) {
            e.push("verify.noise_dimensions must be at least 1".into());
        }
        if !(v.noise_t > 0.0 && v.noise_t <= 1.0) {
            e.push(format!("verify.noise_t must lie in (0, 1] (got {})", v.noise_t));
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(e.join("\n")))
        }
    }

    pub fn weight(&self) -> Weight {
        Weight::sup_abs()
    }

    pub fn model(&self) -> Result<ProcessModel, CliError> {
        let m: ProcessModel = match self.model {
            ModelConfig::Diffusion { alpha, sigma, substeps } => {
                DiffusionModel::ornstein_uhlenbeck(alpha, sigma, substeps)?.into()
            }
            ModelConfig::Step {
                base_rate,
                rate_exponent,
                jump_scale,
                noise_half_width,
                substeps,
            } => StepProcessModel::linear(1, base_rate, rate_exponent, jump_scale, noise_half_width, substeps)?.into(),
            ModelConfig::Pdmp {
                alpha,
                target,
                jump_rate,
                jump_scale,
                jump_shift,
                jump_noise_std,
                substeps,
            } => PdmpModel::linear(alpha, target, jump_rate, jump_scale, jump_shift, jump_noise_std, substeps)?.into(),
        };
        Ok(m)
    }

    pub fn reward(&self) -> Reward {
        match self.problem.reward {
            RewardConfig::Peak { height } => Reward::peak(height),
            RewardConfig::Constant { value } => Reward::constant(value),
            RewardConfig::Tent { level, slope } => Reward::tent(level, slope),
        }
    }

    /// Cost function and its ceiling `c₀`.
    pub fn cost(&self) -> (ShiftCost, f64) {
        match self.problem.cost {
            CostConfig::Affine { c0, kappa } => (ShiftCost::affine(c0, kappa), c0),
            CostConfig::Constant { c0 } => (ShiftCost::constant(c0), c0),
        }
    }

    pub fn grid(&self) -> Result<StateGrid, CliError> {
        Ok(StateGrid::uniform(
            self.grid.half_width,
            self.grid.n_nodes,
            &self.weight(),
            &self.shift_targets(),
        )?)
    }

    pub fn problem(&self, grid: &StateGrid) -> Result<ImpulseProblem, CliError> {
        let (cost, c0) = self.cost();
        Ok(ImpulseProblem::new(
            grid,
            self.reward(),
            cost,
            c0,
            self.problem.delta,
            self.weight(),
        )?)
    }
}
