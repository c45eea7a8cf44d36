//! Optimal CVaR quantile (Value-at-Risk) levels `z`.
//!
//! Two routes are provided. The model-based route evaluates the expectation
//! form of the `z`-subgradient against the fading law (a fixed Monte Carlo
//! sample set or quadrature against the density) and bisects for its root.
//! The model-free route takes one stochastic supergradient step per observed
//! fading draw.
//!
//! Notation used below, for a terminal with multipliers `(lambda, mu)`,
//! confidence `phi` and noise power `sigma^2`:
//!
//! ```text
//! kappa    = lambda phi / (mu sigma^2)
//! C_z(h)   = sigma^2 kappa h^2 / (sigma^2 + z h^2)
//! Hbar(z)  = sqrt(sigma^2 / (sigma^2 kappa - z))      (+inf for z >= sigma^2 kappa)
//! ```

use std::collections::HashMap;

use rand::Rng;

use crate::cvar::check_confidence;
use crate::error::{invalid, Error, Result};
use crate::fading::FadingModel;
use crate::policy::{c_parameter, optimal_power};
use crate::quadrature::GaussLegendre;
use crate::scalar::Real;

/// Default bisection tolerance on the normalised subgradient `g phi / mu`.
pub const DEFAULT_LEVEL_TOL: f64 = 1e-6;
/// Absolute tolerance for detecting the measure-zero tie `p* = z`.
pub const TIE_TOL: f64 = 1e-12;
const BRACKET_CAP_EXP: i32 = 30;

/// Per-terminal quantile levels `z_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarLevels<T> {
    pub z: Vec<T>,
}

impl<T: Real> VarLevels<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            z: vec![T::zero(); n],
        }
    }
}

/// Which inclusion the optimal level falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `z* = 0`
    AtZero,
    /// `z*` in `(0, sigma^2 kappa]`
    Low,
    /// `z*` in `(sigma^2 kappa, inf)`
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEval<T> {
    pub kappa: T,
    /// `Hbar(0)`, the gain threshold of the at-zero test.
    pub h_bar: T,
    pub branch: Branch,
}

/// Multipliers and terminal constants a level solve depends on. Both
/// multipliers must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams<T> {
    pub lambda: T,
    pub mu: T,
    pub phi: T,
    pub noise_var: T,
}

impl<T: Real> LevelParams<T> {
    pub fn new(lambda: T, mu: T, phi: T, noise_var: T) -> Result<Self> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(invalid(
                "lambda",
                format!("level solve needs lambda > 0, got {lambda}"),
            ));
        }
        if !(mu > T::zero() && mu.is_finite()) {
            return Err(invalid("mu", format!("level solve needs mu > 0, got {mu}")));
        }
        check_confidence(phi)?;
        if !(noise_var > T::zero()) {
            return Err(invalid(
                "noise_var",
                format!("must be positive, got {noise_var}"),
            ));
        }
        Ok(Self {
            lambda,
            mu,
            phi,
            noise_var,
        })
    }

    /// Parameters with unit `mu` reproducing waterfilling level `level`.
    pub fn from_water_level(level: T, phi: T, noise_var: T) -> Result<Self> {
        Self::new(level / phi, T::one(), phi, noise_var)
    }

    pub fn kappa(&self) -> T {
        self.lambda * self.phi / (self.mu * self.noise_var)
    }

    /// `sigma^2 kappa = lambda phi / mu`, the boundary between the low and
    /// high branches.
    pub fn water_level(&self) -> T {
        self.lambda * self.phi / self.mu
    }

    pub fn c_z(&self, z: T, h: T) -> T {
        let g = h * h;
        self.water_level() * g / (self.noise_var + z * g)
    }

    pub fn h_bar(&self, z: T) -> T {
        let gap = self.water_level() - z;
        if gap <= T::zero() {
            T::infinity()
        } else {
            (self.noise_var / gap).sqrt()
        }
    }
}

/// Expectations over the fading magnitude `h` of one terminal.
pub trait FadingExpectation<T: Real> {
    /// `E[f(h) 1{h <= upper}]`; `upper = +inf` covers the whole support.
    fn truncated_mean(&self, upper: T, f: &dyn Fn(T) -> T) -> T;
    /// `P(h <= x)`.
    fn cdf(&self, x: T) -> T;
}

/// Fixed Monte Carlo sample set (common random numbers across `z`).
#[derive(Debug, Clone)]
pub struct SampleSet<T> {
    sorted: Vec<T>,
}

impl<T: Real> SampleSet<T> {
    pub fn from_samples(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if samples
            .iter()
            .any(|h| !(*h >= T::zero()) || h.is_infinite())
        {
            return Err(invalid("fading sample", "must be finite and nonnegative"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { sorted: samples })
    }

    pub fn draw<R: Rng + ?Sized>(model: &FadingModel<T>, rng: &mut R, n: usize) -> Result<Self> {
        Self::from_samples(model.sample_n(rng, n))
    }

    pub fn samples(&self) -> &[T] {
        &self.sorted
    }

    fn count_le(&self, x: T) -> usize {
        self.sorted.partition_point(|&h| h <= x)
    }
}

impl<T: Real> FadingExpectation<T> for SampleSet<T> {
    fn truncated_mean(&self, upper: T, f: &dyn Fn(T) -> T) -> T {
        let end = self.count_le(upper);
        let s: T = self.sorted[..end].iter().map(|&h| f(h)).sum();
        s / T::from_usize(self.sorted.len()).unwrap()
    }

    fn cdf(&self, x: T) -> T {
        T::from_usize(self.count_le(x)).unwrap() / T::from_usize(self.sorted.len()).unwrap()
    }
}

/// Composite Gauss-Legendre quadrature against the analytic fading density.
#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    model: FadingModel<T>,
    rule: GaussLegendre<T>,
    panels: usize,
    support_max: T,
}

impl<T: Real> Quadrature<T> {
    pub fn new(model: FadingModel<T>) -> Self {
        Self::with_rule(model, 16, 8)
    }

    pub fn with_rule(model: FadingModel<T>, nodes: usize, panels: usize) -> Self {
        // mass beyond the truncation point is below the scalar's resolution
        let tail = T::lit(1e-15).max(T::epsilon() * T::lit(8.0));
        let support_max = model.quantile(T::one() - tail);
        Self {
            model,
            rule: GaussLegendre::new(nodes),
            panels,
            support_max,
        }
    }
}

impl<T: Real> FadingExpectation<T> for Quadrature<T> {
    fn truncated_mean(&self, upper: T, f: &dyn Fn(T) -> T) -> T {
        let b = upper.min(self.support_max);
        self.rule
            .integrate(T::zero(), b, self.panels, |h| f(h) * self.model.pdf(h))
    }

    fn cdf(&self, x: T) -> T {
        self.model.cdf(x.max(T::zero()))
    }
}

/// Subgradient scaled by `phi / mu`; its sign decides every bisection step.
fn normalized_subgradient<T: Real, E: FadingExpectation<T> + ?Sized>(
    z: T,
    p: &LevelParams<T>,
    eval: &E,
) -> T {
    let base = T::one() - p.phi;
    if z < T::zero() {
        return base;
    }
    let c = |h: T| p.c_z(z, h);
    if z >= p.water_level() {
        return base + eval.truncated_mean(T::infinity(), &c) - T::one();
    }
    let hb = p.h_bar(z);
    base + eval.truncated_mean(hb, &c) - eval.cdf(hb)
}

/// Subgradient of the `z`-subproblem objective
/// `-mu z + E[lambda r(p*, h) - (mu/phi)(p* - z)_+]` at `z`.
///
/// At `z = 0` the lower semicontinuous selection `C_0 = kappa h^2` is used.
pub fn z_subgradient<T: Real, E: FadingExpectation<T> + ?Sized>(
    z: T,
    params: &LevelParams<T>,
    eval: &E,
) -> T {
    params.mu / params.phi * normalized_subgradient(z, params, eval)
}

/// Classifies the optimal level into one of the three inclusions.
pub fn classify<T: Real, E: FadingExpectation<T> + ?Sized>(
    params: &LevelParams<T>,
    eval: &E,
) -> BranchEval<T> {
    let branch = if normalized_subgradient(T::zero(), params, eval) <= T::zero() {
        Branch::AtZero
    } else if normalized_subgradient(params.water_level(), params, eval) <= T::zero() {
        Branch::Low
    } else {
        Branch::High
    };
    BranchEval {
        kappa: params.kappa(),
        h_bar: params.h_bar(T::zero()),
        branch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarLevelSolution<T> {
    pub z: T,
    pub branch: BranchEval<T>,
}

/// Optimal quantile level for one terminal.
///
/// The subgradient is nonincreasing in `z`, so after classification the
/// root is bisected on `[0, sigma^2 kappa]` (low branch) or on a doubling
/// bracket above `sigma^2 kappa` (high branch). Terminates once
/// `|g| <= tol * mu / phi`.
pub fn solve_var_level<T: Real, E: FadingExpectation<T> + ?Sized>(
    params: &LevelParams<T>,
    eval: &E,
    tol: T,
) -> Result<VarLevelSolution<T>> {
    if !(tol > T::zero()) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let branch = classify(params, eval);
    let boundary = params.water_level();
    let g = |z: T| normalized_subgradient(z, params, eval);
    let (lo, hi) = match branch.branch {
        Branch::AtZero => {
            return Ok(VarLevelSolution {
                z: T::zero(),
                branch,
            })
        }
        Branch::Low => (T::zero(), boundary),
        Branch::High => {
            let cap = boundary * T::lit(2.0).powi(BRACKET_CAP_EXP);
            let (mut lo, mut hi) = (boundary, boundary * T::lit(2.0));
            while g(hi) > T::zero() {
                lo = hi;
                hi = hi * T::lit(2.0);
                if hi > cap {
                    return Err(Error::BracketExpansion { cap: cap.as_f64() });
                }
            }
            (lo, hi)
        }
    };
    Ok(VarLevelSolution {
        z: bisect(g, lo, hi, tol),
        branch,
    })
}

/// Bisection for a nonincreasing `g` with `g(lo) > 0 >= g(hi)`.
fn bisect<T: Real>(g: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> T {
    let two = T::lit(2.0);
    for _ in 0..256 {
        let mid = (lo + hi) / two;
        let v = g(mid);
        if v.abs() <= tol {
            return mid;
        }
        if v > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * T::lit(4.0) * hi.abs().max(T::min_positive_value()) {
            break;
        }
    }
    (lo + hi) / two
}

/// Stochastic supergradient `-mu + (mu/phi) C` of the `z`-subproblem for one
/// observed draw, where `C` follows the policy branch: 1 if `p* > z`, the
/// tie value of the power subgradient (clamped to `[0, 1]`) if `p* = z`,
/// and 0 if `p* < z`.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_z_gradient<T: Real>(
    z: T,
    p_star: T,
    h: T,
    lambda: T,
    mu: T,
    phi: T,
    noise_var: T,
) -> Result<T> {
    if !(mu > T::zero()) {
        return Err(invalid("mu", "supergradient step needs mu > 0"));
    }
    let c = if (p_star - z).abs() <= T::lit(TIE_TOL) {
        c_parameter(z, h, lambda, mu, phi, noise_var)?
            .max(T::zero())
            .min(T::one())
    } else if p_star > z {
        T::one()
    } else {
        T::zero()
    };
    Ok(-mu + mu / phi * c)
}

/// One model-free update `z + step * g~` using the policy response to `h`.
pub fn var_supergradient_step<T: Real>(
    z: T,
    h: T,
    lambda: T,
    mu: T,
    phi: T,
    noise_var: T,
    step: T,
) -> Result<T> {
    if !(mu > T::zero()) {
        return Err(invalid("mu", "supergradient step needs mu > 0"));
    }
    let p_star = optimal_power(h, lambda, mu, phi, noise_var, z)?;
    Ok(z + step * stochastic_z_gradient(z, p_star, h, lambda, mu, phi, noise_var)?)
}

/// Optimal level as a function of the waterfilling level `lambda phi / mu`
/// for one terminal.
///
/// `z*` depends on the multipliers only through that ratio. With a grid
/// step the curve is solved lazily at nodes `exp(k * step)` and linearly
/// interpolated in `log` of the level; without one every query is an exact
/// solve.
pub struct VarLevelCurve<T: Real, E> {
    phi: T,
    noise_var: T,
    eval: E,
    tol: T,
    log_step: Option<T>,
    nodes: HashMap<i64, T>,
}

impl<T: Real, E: FadingExpectation<T>> VarLevelCurve<T, E> {
    pub fn new(phi: T, noise_var: T, eval: E, tol: T, log_step: Option<T>) -> Result<Self> {
        check_confidence(phi)?;
        if let Some(s) = log_step {
            if !(s > T::zero()) {
                return Err(invalid("level_grid", format!("must be positive, got {s}")));
            }
        }
        Ok(Self {
            phi,
            noise_var,
            eval,
            tol,
            log_step,
            nodes: HashMap::new(),
        })
    }

    fn solve_at(&self, level: T) -> Result<T> {
        let p = LevelParams::from_water_level(level, self.phi, self.noise_var)?;
        Ok(solve_var_level(&p, &self.eval, self.tol)?.z)
    }

    fn node(&mut self, k: i64, step: T) -> Result<T> {
        if let Some(&z) = self.nodes.get(&k) {
            return Ok(z);
        }
        let z = self.solve_at((step * T::from_i64(k).unwrap()).exp())?;
        self.nodes.insert(k, z);
        Ok(z)
    }

    /// `z*` at waterfilling level `level`; zero for a nonpositive level.
    pub fn level(&mut self, level: T) -> Result<T> {
        if !(level > T::zero()) {
            return Ok(T::zero());
        }
        if self.phi == T::one() {
            return Ok(T::zero());
        }
        let Some(step) = self.log_step else {
            return self.solve_at(level);
        };
        let x = level.ln() / step;
        let k0 = x.floor();
        let t = x - k0;
        let k = k0.to_i64().unwrap();
        let a = self.node(k, step)?;
        if t == T::zero() {
            return Ok(a);
        }
        let b = self.node(k + 1, step)?;
        Ok(a + t * (b - a))
    }

    pub fn cached_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn samples(n: usize, seed: u64) -> SampleSet<f64> {
        let m = FadingModel::unit_rayleigh();
        SampleSet::draw(&m, &mut ChaCha8Rng::seed_from_u64(seed), n).unwrap()
    }

    fn quad() -> Quadrature<f64> {
        Quadrature::new(FadingModel::unit_rayleigh())
    }

    #[test]
    fn negative_z_gives_constant_branch() {
        let p = LevelParams::new(0.8, 0.3, 0.7, 2.0).unwrap();
        let s = samples(1000, 1);
        for z in [-5.0, -0.1, -1e-9] {
            let g = z_subgradient(z, &p, &s);
            assert!((g - 0.3 * 0.3 / 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn risk_neutral_subgradient_nonpositive_at_zero() {
        let s = samples(5000, 2);
        for &(l, m, v) in &[(1.0, 1.0, 1.0), (3.0, 0.2, 2.0), (0.1, 2.0, 0.5)] {
            let p = LevelParams::new(l, m, 1.0, v).unwrap();
            assert!(z_subgradient(0.0, &p, &s) <= 0.0);
            assert!(z_subgradient(0.0, &p, &quad()) <= 1e-15);
        }
    }

    #[test]
    fn piecewise_form_matches_policy_form() {
        // g phi / mu = -phi + E[min(1, C_z)] for z >= 0
        let s = samples(20_000, 3);
        let p = LevelParams::new(1.2, 0.4, 0.6, 1.5).unwrap();
        for i in 0..60 {
            let z = i as f64 * 0.2;
            let direct: f64 = s
                .samples()
                .iter()
                .map(|&h| p.c_z(z, h).min(1.0))
                .sum::<f64>()
                / s.samples().len() as f64
                - p.phi;
            let g = z_subgradient(z, &p, &s) * p.phi / p.mu;
            assert!((g - direct).abs() < 1e-12, "z = {z}: {g} vs {direct}");
        }
    }

    #[test]
    fn subgradient_nonincreasing_on_common_samples() {
        let s = samples(20_000, 4);
        let p = LevelParams::new(0.9, 0.5, 0.75, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in -10..400 {
            let g = z_subgradient(i as f64 * 0.01, &p, &s);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn continuous_across_branch_boundary() {
        let p = LevelParams::new(1.0, 0.5, 0.8, 2.0).unwrap();
        let b = p.water_level();
        let q = quad();
        let left = z_subgradient(b * (1.0 - 1e-9), &p, &q);
        let right = z_subgradient(b, &p, &q);
        assert!((left - right).abs() < 1e-6, "{left} vs {right}");
    }

    #[test]
    fn risk_neutral_level_is_zero() {
        for &(l, m, v) in &[(1.0, 1.0, 1.0), (5.0, 0.01, 3.0), (0.01, 4.0, 0.2)] {
            let p = LevelParams::new(l, m, 1.0, v).unwrap();
            let sol = solve_var_level(&p, &quad(), 1e-9).unwrap();
            assert_eq!(sol.z, 0.0);
            assert_eq!(sol.branch.branch, Branch::AtZero);
        }
    }

    #[test]
    fn vanishing_water_level_gives_zero() {
        let p = LevelParams::new(1e-6, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(solve_var_level(&p, &quad(), 1e-9).unwrap().z, 0.0);
    }

    #[test]
    fn solution_satisfies_its_branch() {
        let q = quad();
        for &(l, m, phi, v) in &[
            (1.0, 1.0, 0.9, 1.0),
            (1.0, 0.1, 0.5, 1.0),
            (2.0, 0.05, 0.3, 3.0),
            (0.3, 0.2, 0.85, 2.0),
        ] {
            let p = LevelParams::new(l, m, phi, v).unwrap();
            let sol = solve_var_level(&p, &q, 1e-9).unwrap();
            assert!(sol.z >= 0.0);
            match sol.branch.branch {
                Branch::AtZero => assert_eq!(sol.z, 0.0),
                Branch::Low => assert!(sol.z > 0.0 && sol.z <= p.water_level()),
                Branch::High => assert!(sol.z > p.water_level()),
            }
            if sol.branch.branch != Branch::AtZero {
                assert!(z_subgradient(sol.z, &p, &q).abs() <= 1e-9 * m / phi * 1.0001);
            }
        }
    }

    #[test]
    fn high_branch_root_equation() {
        // small phi pushes the level above sigma^2 kappa: E[C_z*] = phi
        let p = LevelParams::new(1.0, 0.1, 0.2, 1.0).unwrap();
        let q = quad();
        let sol = solve_var_level(&p, &q, 1e-10).unwrap();
        assert_eq!(sol.branch.branch, Branch::High);
        let ec = q.truncated_mean(f64::INFINITY, &|h| p.c_z(sol.z, h));
        assert!((ec - p.phi).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_and_quadrature_agree() {
        let p = LevelParams::new(1.0, 0.2, 0.7, 1.5).unwrap();
        let a = solve_var_level(&p, &quad(), 1e-9).unwrap().z;
        let b = solve_var_level(&p, &samples(200_000, 9), 1e-9).unwrap().z;
        assert!((a - b).abs() / a < 0.01, "{a} vs {b}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LevelParams::new(0.0, 1.0, 0.5, 1.0).is_err());
        assert!(LevelParams::new(1.0, 0.0, 0.5, 1.0).is_err());
        let p = LevelParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!(solve_var_level(&p, &quad(), 0.0).is_err());
        assert!(var_supergradient_step(0.0, 1.0, 1.0, 0.0, 0.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn supergradient_branches() {
        // p* > z: C = 1
        let g = stochastic_z_gradient(1.0, 2.0, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(g, 1.0);
        let z = var_supergradient_step(0.0_f64, 3.0, 4.0, 1.0, 0.5, 1.0, 0.1).unwrap();
        assert!((z - 0.1).abs() < 1e-15);
        // p* < z: C = 0
        assert_eq!(
            stochastic_z_gradient(3.0, 2.0, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap(),
            -1.0
        );
        // lambda = 0 pins p* to z and the tie gives C = 0
        let z = var_supergradient_step(2.0_f64, 1.0, 0.0, 1.0, 0.5, 1.0, 0.25).unwrap();
        assert!((z - 1.75).abs() < 1e-15);
    }

    #[test]
    fn tie_uses_clamped_c_parameter() {
        // p* = z = 5 with C = 1/6
        let g = stochastic_z_gradient(5.0_f64, 5.0, 1.0, 2.0, 1.0, 0.5, 1.0).unwrap();
        assert!((g - (-1.0 + 2.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn interpolated_curve_tracks_exact_solves() {
        let mut exact = VarLevelCurve::new(0.8, 2.0, quad(), 1e-10, None).unwrap();
        let mut grid = VarLevelCurve::new(0.8, 2.0, quad(), 1e-10, Some(1e-3)).unwrap();
        for i in 1..40 {
            let level = 0.25 * i as f64;
            let a = exact.level(level).unwrap();
            let b = grid.level(level).unwrap();
            assert!((a - b).abs() <= 1e-6 * level, "level {level}: {a} vs {b}");
        }
        assert!(grid.cached_nodes() > 0);
        assert_eq!(grid.level(0.0).unwrap(), 0.0);
    }

    #[test]
    fn f32_solve() {
        let p = LevelParams::new(1.0_f32, 0.2, 0.7, 1.5).unwrap();
        let q = Quadrature::new(FadingModel::<f32>::unit_rayleigh());
        let z32 = solve_var_level(&p, &q, 1e-4).unwrap().z as f64;
        let p64 = LevelParams::new(1.0, 0.2, 0.7, 1.5).unwrap();
        let z64 = solve_var_level(&p64, &quad(), 1e-9).unwrap().z;
        assert!((z32 - z64).abs() / z64 < 1e-3);
    }
}
