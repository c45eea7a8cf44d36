//! Rate model and the closed-form CVaR-optimal per-terminal power policy.
//!
//! For multipliers `(lambda, mu)` the per-terminal power subproblem is
//!
//! ```text
//! sup_{p >= 0}  lambda * log(1 + p h^2 / sigma^2) - (mu / phi) (p - z)_+
//! ```
//!
//! and its maximiser is the waterfilling level floored at the quantile level:
//! `p* = max{ (lambda phi / mu - sigma^2 / h^2)_+, (z)_+ }`.

use crate::cvar::check_confidence;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Static per-terminal configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalConfig<T> {
    /// Noise power `sigma^2`.
    pub noise_var: T,
    /// CVaR confidence level in `(0, 1]`.
    pub phi: T,
    /// Utility weight.
    pub weight: T,
}

impl<T: Real> TerminalConfig<T> {
    pub fn new(noise_var: T, phi: T, weight: T) -> Result<Self> {
        let cfg = Self {
            noise_var,
            phi,
            weight,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_var > T::zero() && self.noise_var.is_finite()) {
            return Err(invalid(
                "noise_var",
                format!("must be positive, got {}", self.noise_var),
            ));
        }
        check_confidence(self.phi)?;
        if !(self.weight > T::zero() && self.weight.is_finite()) {
            return Err(invalid(
                "weight",
                format!("must be positive, got {}", self.weight),
            ));
        }
        Ok(())
    }
}

/// Lagrange multipliers: one rate multiplier per terminal and the power
/// multiplier `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T> {
    pub lambda: Vec<T>,
    pub mu: T,
}

impl<T: Real> DualState<T> {
    pub fn new(lambda: Vec<T>, mu: T) -> Result<Self> {
        let s = Self { lambda, mu };
        if !s.is_feasible() {
            return Err(invalid(
                "duals",
                "multipliers must be nonnegative and finite",
            ));
        }
        Ok(s)
    }

    pub fn is_feasible(&self) -> bool {
        let ok = |v: T| v >= T::zero() && v.is_finite();
        ok(self.mu) && self.lambda.iter().all(|&l| ok(l))
    }
}

/// Instantaneous rate `log(1 + p h^2 / sigma^2)` in nats.
pub fn rate<T: Real>(p: T, h: T, noise_var: T) -> T {
    (p * h * h / noise_var).ln_1p()
}

/// Waterfilling level `lambda phi / mu`.
#[inline]
pub fn water_level<T: Real>(lambda: T, mu: T, phi: T) -> T {
    lambda * phi / mu
}

/// Objective of the per-terminal power subproblem at power `p`.
pub fn power_objective<T: Real>(p: T, h: T, lambda: T, mu: T, phi: T, noise_var: T, z: T) -> T {
    lambda * rate(p, h, noise_var) - mu / phi * (p - z).pos_part()
}

/// Maximiser of [`power_objective`] over `p >= 0`.
///
/// `h = 0` is a zero-gain link: the waterfilling term vanishes.
pub fn optimal_power<T: Real>(h: T, lambda: T, mu: T, phi: T, noise_var: T, z: T) -> Result<T> {
    if lambda < T::zero() || mu < T::zero() {
        return Err(invalid("duals", "multipliers must be nonnegative"));
    }
    if mu == T::zero() {
        return if lambda == T::zero() {
            Ok(T::zero())
        } else {
            Err(Error::Unbounded)
        };
    }
    let floor = z.pos_part();
    if lambda == T::zero() || h == T::zero() {
        return Ok(floor);
    }
    let fill = (water_level(lambda, mu, phi) - noise_var / (h * h)).pos_part();
    Ok(fill.max(floor))
}

/// Value of the Heaviside selection `C = (lambda phi / mu) h^2 / (sigma^2 + p* h^2)`
/// that makes the power subgradient vanish at `p*`.
pub fn c_parameter<T: Real>(p_star: T, h: T, lambda: T, mu: T, phi: T, noise_var: T) -> Result<T> {
    if mu <= T::zero() {
        return Err(invalid("mu", "C parameter needs mu > 0"));
    }
    let g = h * h;
    Ok(water_level(lambda, mu, phi) * g / (noise_var + p_star * g))
}
