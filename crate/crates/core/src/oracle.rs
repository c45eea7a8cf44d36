//! Brute-force reference computations used to check the closed forms.
//!
//! Nothing here calls the analytic solvers: powers come from golden-section
//! search, levels from grid search over a Monte Carlo objective, gradients
//! from finite differences and the waterfilling multiplier from bisection.

use crate::error::{invalid, Result};
use crate::policy::rate;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximises a unimodal `f` on `[a, b]`; returns `(argmax, max)`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = ((a + b) / 2.0, f((a + b) / 2.0));
    for x in [a, b, c, d] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Per-draw power objective `lambda r(p) - (mu/phi)(p - z)_+`.
pub fn power_objective(
    p: f64,
    h: f64,
    lambda: f64,
    mu: f64,
    phi: f64,
    noise_var: f64,
    z: f64,
) -> f64 {
    lambda * rate(p, h, noise_var) - mu / phi * (p - z).max(0.0)
}

/// Golden-section maximiser of the power objective over `[0, p_max]`,
/// with `p_max` chosen to contain every maximiser.
pub fn power_oracle(h: f64, lambda: f64, mu: f64, phi: f64, noise_var: f64, z: f64) -> (f64, f64) {
    let p_max = 2.0 * (z.max(0.0) + lambda * phi / mu) + 1.0;
    golden_section_max(
        |p| power_objective(p, h, lambda, mu, phi, noise_var, z),
        0.0,
        p_max,
        1e-12 * p_max,
    )
}

/// Parameters of the level subproblem for one terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelProblem {
    pub lambda: f64,
    pub mu: f64,
    pub phi: f64,
    pub noise_var: f64,
}

impl LevelProblem {
    pub fn water_level(&self) -> f64 {
        self.lambda * self.phi / self.mu
    }
}

/// Monte Carlo level objective
/// `-mu z + mean_h[max_p {lambda r(p) - (mu/phi)(p - z)_+}]`.
pub struct LevelObjective {
    problem: LevelProblem,
    /// `h^2 / sigma^2` per sample.
    snr: Vec<f64>,
}

impl LevelObjective {
    pub fn new(problem: LevelProblem, h: &[f64]) -> Result<Self> {
        if h.is_empty() {
            return Err(invalid("samples", "need at least one fading sample"));
        }
        Ok(Self {
            problem,
            snr: h.iter().map(|&h| h * h / problem.noise_var).collect(),
        })
    }

    fn inner(&self, z: f64, a: f64) -> f64 {
        let LevelProblem {
            lambda, mu, phi, ..
        } = self.problem;
        // below the kink the objective only grows with p, so the optimum over
        // [z, inf) (stationary point clamped at the kink) is global
        let p = (lambda * phi / mu - 1.0 / a).max(z.max(0.0));
        lambda * p.mul_add(a, 1.0).ln() - mu / phi * (p - z).max(0.0)
    }

    pub fn value(&self, z: f64) -> f64 {
        let s: f64 = self.snr.iter().map(|&a| self.inner(z, a)).sum();
        s / self.snr.len() as f64 - self.problem.mu * z
    }
}

/// Maximiser of the level objective over `[0, L / phi]` by successively
/// refined grids, ending at spacing `final_step` (absolute). Valid because
/// the objective is concave in `z`.
pub fn grid_var_level(objective: &LevelObjective, final_step: f64) -> f64 {
    let p = objective.problem;
    let upper = p.water_level() / p.phi;
    const POINTS: usize = 20;
    let (mut lo, mut hi) = (0.0, upper);
    loop {
        let step = (hi - lo) / POINTS as f64;
        let best = (0..=POINTS)
            .map(|k| lo + step * k as f64)
            .map(|z| (z, objective.value(z)))
            .fold(
                (lo, f64::NEG_INFINITY),
                |acc, c| if c.1 > acc.1 { c } else { acc },
            );
        if step <= final_step {
            return best.0;
        }
        lo = (best.0 - step).max(0.0);
        hi = (best.0 + step).min(upper);
    }
}

/// Central finite difference of the level objective and its Monte Carlo
/// standard error (per-sample differences share the samples).
pub fn fd_level_gradient(objective: &LevelObjective, z: f64, delta: f64) -> (f64, f64) {
    let mu = objective.problem.mu;
    let d: Vec<f64> = objective
        .snr
        .iter()
        .map(|&a| {
            (objective.inner(z + delta, a) - objective.inner(z - delta, a)) / (2.0 * delta) - mu
        })
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Classical ergodic waterfilling `p_i = (w_i / mu - sigma_i^2 / h^2)_+`
/// with `mu` bisected so the summed mean power equals `p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterfilling {
    pub mu: f64,
    pub mean_power: Vec<f64>,
}

/// `samples[i]` holds fading magnitudes for terminal `i`.
pub fn waterfilling(
    weights: &[f64],
    noise_var: &[f64],
    samples: &[Vec<f64>],
    p0: f64,
) -> Result<Waterfilling> {
    if weights.len() != noise_var.len() || weights.len() != samples.len() || weights.is_empty() {
        return Err(invalid("waterfilling", "mismatched terminal counts"));
    }
    if !(p0 > 0.0) {
        return Err(invalid("p0", "must be positive"));
    }
    let inv_snr: Vec<Vec<f64>> = samples
        .iter()
        .zip(noise_var)
        .map(|(s, &nv)| s.iter().map(|&h| nv / (h * h)).collect())
        .collect();
    let powers = |mu: f64| -> Vec<f64> {
        weights
            .iter()
            .zip(&inv_snr)
            .map(|(&w, xs)| {
                xs.iter().map(|&x| (w / mu - x).max(0.0)).sum::<f64>() / xs.len() as f64
            })
            .collect()
    };
    let total = |mu: f64| powers(mu).iter().sum::<f64>();
    let (mut lo, mut hi) = (1e-12_f64, 1e12_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if total(mid) > p0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = (lo * hi).sqrt();
    Ok(Waterfilling {
        mu,
        mean_power: powers(mu),
    })
}
