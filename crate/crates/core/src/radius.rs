//! Conversion between the radius of the density-ratio ambiguity ball and
//! the CVaR confidence level: `phi = exp(-radius)`.

use crate::cvar::check_confidence;
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Sup log-likelihood-ratio radius in nats; `+inf` is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityRadius<T>(T);

impl<T: Real> AmbiguityRadius<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if epsilon >= T::zero() {
            Ok(Self(epsilon))
        } else {
            Err(invalid(
                "radius",
                format!("must be nonnegative, got {epsilon}"),
            ))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Confidence<T> {
    /// Admissible level in `(0, 1]`.
    Level(T),
    /// Infinite radius: the risk measure degenerates to the essential
    /// supremum (`phi = 0`), which the solver does not accept.
    EssentialSupremum,
}

impl<T: Real> Confidence<T> {
    pub fn level(self) -> Result<T> {
        match self {
            Self::Level(phi) => Ok(phi),
            Self::EssentialSupremum => Err(invalid(
                "radius",
                "infinite radius (phi = 0) is not an admissible confidence level",
            )),
        }
    }
}

pub fn confidence_from_radius<T: Real>(radius: AmbiguityRadius<T>) -> Confidence<T> {
    let phi = (-radius.0).exp();
    if radius.0.is_infinite() || phi == T::zero() {
        Confidence::EssentialSupremum
    } else {
        Confidence::Level(phi)
    }
}

pub fn radius_from_confidence<T: Real>(phi: T) -> Result<AmbiguityRadius<T>> {
    check_confidence(phi)?;
    Ok(AmbiguityRadius(-phi.ln()))
}
