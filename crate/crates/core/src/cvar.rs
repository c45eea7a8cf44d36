//! Empirical Conditional Value-at-Risk of a batch of cost samples.
//!
//! For a confidence level `phi` in `(0, 1]` the CVaR is
//! `inf_z { z + E[(xi - z)_+] / phi }`: the mean of the worst `phi`-fraction
//! of the costs. `phi = 1` gives the plain mean.

use crate::error::{invalid, Error, Result};
use crate::scalar::{mean, Real};

/// Non-empty batch of finite cost samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    values: Vec<T>,
}

impl<T: Real> SampleBatch<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid("sample", format!("non-finite cost {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> T {
        mean(&self.values)
    }

    fn sorted_descending(&self) -> Vec<T> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.partial_cmp(a).expect("finite samples"));
        v
    }
}

pub(crate) fn check_confidence<T: Real>(phi: T) -> Result<()> {
    if phi > T::zero() && phi <= T::one() {
        Ok(())
    } else {
        Err(invalid(
            "phi",
            format!("confidence level must lie in (0, 1], got {phi}"),
        ))
    }
}

/// Rockafellar-Uryasev objective `z + mean((xi - z)_+) / phi`.
pub fn cvar_objective<T: Real>(z: T, batch: &SampleBatch<T>, phi: T) -> Result<T> {
    check_confidence(phi)?;
    let excess: T = batch.values.iter().map(|&x| (x - z).pos_part()).sum();
    let n = T::from_usize(batch.len()).unwrap();
    Ok(z + excess / (n * phi))
}

/// Exact minimum of [`cvar_objective`] over `z` via order statistics.
///
/// With `k = phi * n`, the top `floor(k)` samples enter with unit weight, the
/// next one with the fractional remainder, and the total is divided by `k`.
/// Written as `v + sum(x_j - v) / k` with `v` that next sample.
pub fn empirical_cvar<T: Real>(batch: &SampleBatch<T>, phi: T) -> Result<T> {
    check_confidence(phi)?;
    if phi == T::one() {
        return Ok(batch.mean());
    }
    let sorted = batch.sorted_descending();
    let n = T::from_usize(sorted.len()).unwrap();
    let k = phi * n;
    // snap k to an integer when it is one up to rounding
    let nearest = k.round();
    let k_eff = if (k - nearest).abs() <= T::epsilon() * n * T::lit(4.0) {
        nearest
    } else {
        k
    };
    let whole = k_eff.floor().to_usize().unwrap().min(sorted.len());
    // centred on the order statistic at the boundary, so ties return it exactly
    let pivot = sorted[whole.min(sorted.len() - 1)];
    let excess: T = sorted[..whole].iter().map(|&x| x - pivot).sum();
    Ok(pivot + excess / k_eff)
}

/// Empirical upper `phi`-quantile: the largest sample `v` such that at least a
/// `phi` fraction of the samples is `>= v`.
pub fn value_at_risk<T: Real>(batch: &SampleBatch<T>, phi: T) -> Result<T> {
    check_confidence(phi)?;
    let sorted = batch.sorted_descending();
    let n = T::from_usize(sorted.len()).unwrap();
    let need = phi * n * (T::one() - T::lit(1e-12));
    // samples >= sorted[j] number at least j + 1 (more with ties below)
    let mut idx = 0;
    while idx < sorted.len() && T::from_usize(idx + 1).unwrap() < need {
        idx += 1;
    }
    let idx = idx.min(sorted.len() - 1);
    Ok(sorted[idx])
}
