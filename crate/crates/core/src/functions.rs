//! Reward, shift cost and weight functions.
//!
//! Each carries a tag identifying it in kernel cache keys and artifacts;
//! two functions with the same tag must be the same function.

use std::fmt;
use std::sync::Arc;

/// Running reward `f`.
#[derive(Clone)]
pub struct Reward {
    tag: String,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Reward {
    pub fn new(tag: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            tag: tag.into(),
            func: Arc::new(func),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant({value})"), move |_| value)
    }

    /// `f(x) = h / (1 + x²)`.
    pub fn peak(height: f64) -> Self {
        Self::new(format!("peak({height})"), move |x| height / (1.0 + x * x))
    }

    /// `f(x) = a - b|x|`.
    pub fn tent(level: f64, slope: f64) -> Self {
        Self::new(format!("tent({level},{slope})"), move |x| level - slope * x.abs())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

impl fmt::Debug for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Reward").field(&self.tag).finish()
    }
}

/// Shift execution cost `c(x, ξ)`; nonpositive by convention.
#[derive(Clone)]
pub struct ShiftCost {
    tag: String,
    func: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl ShiftCost {
    pub fn new(
        tag: impl Into<String>,
        func: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            tag: tag.into(),
            func: Arc::new(func),
        }
    }

    pub fn constant(cost: f64) -> Self {
        Self::new(format!("constant({cost})"), move |_, _| cost)
    }

    /// `c(x, ξ) = c₀ - κ|x - ξ|`.
    pub fn affine(c0: f64, kappa: f64) -> Self {
        Self::new(format!("affine({c0},{kappa})"), move |x, xi| {
            c0 - kappa * (x - xi).abs()
        })
    }

    #[inline]
    pub fn eval(&self, x: f64, target: f64) -> f64 {
        (self.func)(x, target)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

impl fmt::Debug for ShiftCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ShiftCost").field(&self.tag).finish()
    }
}

type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nonnegative weight `ω` on `ℝ^d`.
#[derive(Clone)]
pub struct Weight {
    tag: String,
    func: WeightFn,
}

impl Weight {
    pub fn new(
        tag: impl Into<String>,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            tag: tag.into(),
            func: Arc::new(func),
        }
    }

    /// `ω(x) = max_i |x_i|`, which is `|x|` in one dimension.
    pub fn sup_abs() -> Self {
        Self::new("sup_abs", |x| x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }

    #[inline]
    pub fn eval_scalar(&self, x: f64) -> f64 {
        (self.func)(std::slice::from_ref(&x))
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Weight").field(&self.tag).finish()
    }
}
