//! Channel fading models.
//!
//! Only Rayleigh fading ships. The model is parameterised by its mean square
//! gain `E[h^2]`, so `h^2` is exponentially distributed with that mean.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingKind {
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel<T> {
    kind: FadingKind,
    mean_square: T,
}

impl<T: Real> FadingModel<T> {
    pub fn rayleigh(mean_square: T) -> Result<Self> {
        if !(mean_square > T::zero() && mean_square.is_finite()) {
            return Err(invalid(
                "mean_square",
                format!("must be positive and finite, got {mean_square}"),
            ));
        }
        Ok(Self {
            kind: FadingKind::Rayleigh,
            mean_square,
        })
    }

    /// Unit mean-square Rayleigh fading.
    pub fn unit_rayleigh() -> Self {
        Self {
            kind: FadingKind::Rayleigh,
            mean_square: T::one(),
        }
    }

    pub fn kind(&self) -> FadingKind {
        self.kind
    }

    pub fn mean_square(&self) -> T {
        self.mean_square
    }

    /// Draws one fading magnitude `h >= 0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self.kind {
            FadingKind::Rayleigh => {
                let e: f64 = Exp1.sample(rng);
                (self.mean_square * T::lit(e)).sqrt()
            }
        }
    }

    /// Draws `n` i.i.d. fading magnitudes from `rng`.
    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<T> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Exact CDF `P(h' <= h)`.
    ///
    /// # Panics
    /// If `h` is negative or NaN.
    pub fn cdf(&self, h: T) -> T {
        assert!(h >= T::zero(), "fading cdf evaluated at negative h = {h}");
        match self.kind {
            FadingKind::Rayleigh => {
                if h.is_infinite() {
                    return T::one();
                }
                -(-(h * h) / self.mean_square).exp_m1()
            }
        }
    }

    /// Density of `h` on `[0, inf)`.
    pub fn pdf(&self, h: T) -> T {
        match self.kind {
            FadingKind::Rayleigh => {
                if h < T::zero() || h.is_infinite() {
                    return T::zero();
                }
                let m = self.mean_square;
                T::lit(2.0) * h / m * (-(h * h) / m).exp()
            }
        }
    }

    /// Inverse CDF for `p` in `[0, 1)`; returns `+inf` at `p = 1`.
    pub fn quantile(&self, p: T) -> T {
        assert!(
            p >= T::zero() && p <= T::one(),
            "fading quantile needs p in [0, 1], got {p}"
        );
        match self.kind {
            FadingKind::Rayleigh => {
                if p == T::one() {
                    return T::infinity();
                }
                (-self.mean_square * (-p).ln_1p()).sqrt()
            }
        }
    }
}
