//! Summary statistics over solver trajectories.

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Fraction of a trajectory treated as converged.
pub const TAIL_FRACTION: f64 = 0.2;
/// Batches used for the batch-means standard error.
pub const BATCHES: usize = 20;

/// Index of the first tail iteration (0-based) for a run of `n` iterations.
pub fn tail_start(n: usize) -> usize {
    let len = ((n as f64) * TAIL_FRACTION).round() as usize;
    n - len.clamp(n.min(1), n)
}

pub fn mean<T: Real>(xs: &[T]) -> T {
    crate::scalar::mean(xs)
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance<T: Real>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / T::from_usize(xs.len() - 1).unwrap()
}

/// Standard error of the mean from non-overlapping batch means, which
/// accounts for serial correlation along a trajectory.
pub fn batch_means_se<T: Real>(xs: &[T], batches: usize) -> T {
    let b = batches.min(xs.len());
    if b < 2 {
        return T::zero();
    }
    let size = xs.len() / b;
    let means: Vec<T> = (0..b)
        .map(|k| mean(&xs[k * size..(k + 1) * size]))
        .collect();
    (variance(&means) / T::from_usize(b).unwrap()).sqrt()
}

/// Empirical CDF of `sorted` evaluated at each grid point.
pub fn empirical_cdf<T: Real>(sorted: &[T], grid: &[T]) -> Vec<T> {
    let n = T::from_usize(sorted.len().max(1)).unwrap();
    grid.iter()
        .map(|&x| T::from_usize(sorted.partition_point(|&v| v <= x)).unwrap() / n)
        .collect()
}

/// `points` evenly spaced values from 0 to `max` inclusive.
pub fn grid_from_zero<T: Real>(max: T, points: usize) -> Vec<T> {
    if points < 2 {
        return vec![T::zero(); points];
    }
    let last = T::from_usize(points - 1).unwrap();
    (0..points)
        .map(|k| max * T::from_usize(k).unwrap() / last)
        .collect()
}

/// Trailing moving average over at most `window` values.
///
/// Each output is the in-order sum of the values currently in the window
/// divided by their count, so it can be recomputed bit-for-bit from the
/// raw series.
#[derive(Debug, Clone)]
pub struct MovingAverage<T> {
    window: usize,
    values: std::collections::VecDeque<T>,
}

impl<T: Real> MovingAverage<T> {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        Ok(Self {
            window,
            values: std::collections::VecDeque::with_capacity(window),
        })
    }

    pub fn push(&mut self, x: T) -> T {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(x);
        let s: T = self.values.iter().copied().sum();
        s / T::from_usize(self.values.len()).unwrap()
    }
}

/// Moving average of a whole series, matching [`MovingAverage`].
pub fn moving_average<T: Real>(xs: &[T], window: usize) -> Result<Vec<T>> {
    let mut ma = MovingAverage::new(window)?;
    Ok(xs.iter().map(|&x| ma.push(x)).collect())
}
