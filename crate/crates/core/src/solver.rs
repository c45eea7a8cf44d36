//! Stochastic dual descent for CVaR-constrained power allocation.
//!
//! Each iteration observes one fading vector, sets the quantile levels
//! (model-based: optimal levels for the current multipliers; model-free:
//! one stochastic supergradient step), applies the closed-form power
//! policy, sets the optimal rate vector and takes a projected stochastic
//! subgradient step on the multipliers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fading::FadingModel;
use crate::policy::{optimal_power, rate, water_level, DualState, TerminalConfig};
use crate::scalar::Real;
use crate::utility::{optimal_rate_vector, UtilityKind};
use crate::var_levels::{
    var_supergradient_step, FadingExpectation, Quadrature, SampleSet, VarLevelCurve, VarLevels,
};

/// Floor on proportional-fairness rate multipliers after each update.
pub const LAMBDA_MIN: f64 = 1e-6;
/// Floor on the power multiplier; keeps the policy bounded.
pub const MU_MIN: f64 = 1e-8;
/// The run aborts once `mu` exceeds this value.
pub const MU_DIVERGENCE: f64 = 1e6;
/// Relative multiplier drift that forces a model-based level re-solve.
pub const RESOLVE_DRIFT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Levels from the expectation form of the level subproblem.
    ModelBased,
    /// Levels by stochastic supergradient ascent.
    ModelFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant,
    /// `step / sqrt(n)` at iteration `n`, for both multipliers and levels.
    Diminishing,
}

/// How model-based mode evaluates expectations over the fading law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationMethod {
    Quadrature,
    /// Fixed sample set of `mc_samples` draws per terminal.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Total power budget.
    pub p0: T,
    pub step_dual: T,
    /// Level step size (model-free only).
    pub step_z: T,
    pub iterations: usize,
    pub seed: u64,
    pub mode: Mode,
    pub utility: UtilityKind<T>,
    pub schedule: StepSchedule,
    /// Model-based levels are re-solved every this many iterations, and
    /// whenever a multiplier moved by more than 1% since the last solve.
    pub z_resolve_period: usize,
    pub mc_samples: usize,
    pub expectation: ExpectationMethod,
    /// Log-spacing of the memoised level curve; `None` solves exactly at
    /// every re-solve.
    pub level_grid: Option<T>,
    pub level_tol: T,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(p0: T, utility: UtilityKind<T>) -> Self {
        Self {
            p0,
            step_dual: T::lit(3e-5),
            step_z: T::one(),
            iterations: 200_000,
            seed: 0,
            mode: Mode::ModelBased,
            utility,
            schedule: StepSchedule::Constant,
            z_resolve_period: 1,
            mc_samples: 100_000,
            expectation: ExpectationMethod::Quadrature,
            level_grid: Some(T::lit(1e-3)),
            level_tol: T::lit(1e-9),
        }
    }

    pub fn validate(&self, terminals: usize) -> Result<()> {
        let positive = |name, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("p0", self.p0)?;
        positive("step_dual", self.step_dual)?;
        positive("step_z", self.step_z)?;
        positive("level_tol", self.level_tol)?;
        if let Some(g) = self.level_grid {
            positive("level_grid", g)?;
        }
        if self.z_resolve_period == 0 {
            return Err(invalid("z_resolve_period", "must be at least 1"));
        }
        if self.expectation == ExpectationMethod::MonteCarlo && self.mc_samples == 0 {
            return Err(invalid("mc_samples", "must be at least 1"));
        }
        if terminals == 0 {
            return Err(invalid("terminals", "need at least one terminal"));
        }
        if let UtilityKind::Sumrate(w) = &self.utility {
            if w.len() != terminals {
                return Err(invalid(
                    "weights",
                    format!("{} sumrate weights for {terminals} terminals", w.len()),
                ));
            }
        }
        Ok(())
    }
}

/// One fading realisation and everything the iteration derived from it.
/// `duals` are the multipliers the policy was evaluated with.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub t: usize,
    pub h: Vec<T>,
    pub p: Vec<T>,
    pub z: Vec<T>,
    pub duals: DualState<T>,
    pub rates: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub records: Vec<IterationRecord<T>>,
    pub final_duals: DualState<T>,
    pub final_z: VarLevels<T>,
}

/// Stochastic subgradient of the dual function:
/// `g_lambda = r(p*, h) - x*` and
/// `g_mu = P0 - sum_i [z_i + (p_i - z_i)_+ / phi_i]`.
pub fn dual_subgradient<T: Real>(
    record: &IterationRecord<T>,
    x_star: &[T],
    config: &SolverConfig<T>,
    terminals: &[TerminalConfig<T>],
) -> (Vec<T>, T) {
    let g_lambda = record
        .rates
        .iter()
        .zip(x_star)
        .map(|(&r, &x)| r - x)
        .collect();
    let spent: T = terminals
        .iter()
        .zip(record.p.iter().zip(&record.z))
        .map(|(c, (&p, &z))| z + (p - z).pos_part() / c.phi)
        .sum();
    (g_lambda, config.p0 - spent)
}

/// Projected step `(duals - step * g)_+`. Pinned rate multipliers are left
/// untouched.
pub fn dual_update<T: Real>(
    duals: &DualState<T>,
    g_lambda: &[T],
    g_mu: T,
    step: T,
    pin_lambda: bool,
) -> DualState<T> {
    let lambda = if pin_lambda {
        duals.lambda.clone()
    } else {
        duals
            .lambda
            .iter()
            .zip(g_lambda)
            .map(|(&l, &g)| (l - step * g).pos_part())
            .collect()
    };
    DualState {
        lambda,
        mu: (duals.mu - step * g_mu).pos_part(),
    }
}

/// Signature of the rule producing the multiplier subgradient.
pub type DualRule<T> =
    fn(&IterationRecord<T>, &[T], &SolverConfig<T>, &[TerminalConfig<T>]) -> (Vec<T>, T);

enum LevelEvaluator<T> {
    Quadrature(Quadrature<T>),
    Samples(SampleSet<T>),
}

impl<T: Real> FadingExpectation<T> for LevelEvaluator<T> {
    fn truncated_mean(&self, upper: T, f: &dyn Fn(T) -> T) -> T {
        match self {
            Self::Quadrature(q) => q.truncated_mean(upper, f),
            Self::Samples(s) => s.truncated_mean(upper, f),
        }
    }

    fn cdf(&self, x: T) -> T {
        match self {
            Self::Quadrature(q) => q.cdf(x),
            Self::Samples(s) => s.cdf(x),
        }
    }
}

/// Stepwise driver; [`run`] collects its records.
pub struct Solver<T: Real> {
    config: SolverConfig<T>,
    terminals: Vec<TerminalConfig<T>>,
    fading: Vec<FadingModel<T>>,
    rng: ChaCha8Rng,
    duals: DualState<T>,
    z: Vec<T>,
    t: usize,
    curves: Vec<VarLevelCurve<T, LevelEvaluator<T>>>,
    last_solve: Option<DualState<T>>,
    rate_sum: Vec<T>,
    rule: DualRule<T>,
}

impl<T: Real> Solver<T> {
    /// `fading` holds one model per terminal, or a single model shared by all.
    pub fn new(
        config: SolverConfig<T>,
        terminals: &[TerminalConfig<T>],
        fading: &[FadingModel<T>],
    ) -> Result<Self> {
        config.validate(terminals.len())?;
        for t in terminals {
            t.validate()?;
        }
        let n = terminals.len();
        let fading = match fading.len() {
            1 => vec![fading[0]; n],
            k if k == n => fading.to_vec(),
            k => {
                return Err(invalid(
                    "fading",
                    format!("{k} fading models for {n} terminals"),
                ))
            }
        };
        let curves = if config.mode == Mode::ModelBased {
            terminals
                .iter()
                .zip(&fading)
                .enumerate()
                .map(|(i, (term, model))| {
                    let eval = match config.expectation {
                        ExpectationMethod::Quadrature => {
                            LevelEvaluator::Quadrature(Quadrature::new(*model))
                        }
                        ExpectationMethod::MonteCarlo => {
                            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                            rng.set_stream(i as u64 + 1);
                            LevelEvaluator::Samples(SampleSet::draw(
                                model,
                                &mut rng,
                                config.mc_samples,
                            )?)
                        }
                    };
                    VarLevelCurve::new(
                        term.phi,
                        term.noise_var,
                        eval,
                        config.level_tol,
                        config.level_grid,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let duals = DualState::new(terminals.iter().map(|t| t.weight).collect(), T::one())?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            terminals: terminals.to_vec(),
            fading,
            duals,
            z: vec![T::zero(); n],
            t: 0,
            curves,
            last_solve: None,
            rate_sum: vec![T::zero(); n],
            rule: dual_subgradient,
        })
    }

    /// Replaces the multiplier subgradient rule.
    pub fn with_dual_rule(mut self, rule: DualRule<T>) -> Self {
        self.rule = rule;
        self
    }

    pub fn duals(&self) -> &DualState<T> {
        &self.duals
    }

    pub fn levels(&self) -> VarLevels<T> {
        VarLevels { z: self.z.clone() }
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    fn needs_resolve(&self, n: usize) -> bool {
        let Some(last) = &self.last_solve else {
            return true;
        };
        if (n - 1).is_multiple_of(self.config.z_resolve_period) {
            return true;
        }
        let drift = T::lit(RESOLVE_DRIFT);
        let moved = |old: T, new: T| (new - old).abs() > drift * old.abs();
        moved(last.mu, self.duals.mu)
            || last
                .lambda
                .iter()
                .zip(&self.duals.lambda)
                .any(|(&a, &b)| moved(a, b))
    }

    /// Runs one iteration and returns its record.
    pub fn step(&mut self) -> Result<IterationRecord<T>> {
        self.t += 1;
        let n = self.t;
        let scale = match self.config.schedule {
            StepSchedule::Constant => T::one(),
            StepSchedule::Diminishing => T::from_usize(n).unwrap().sqrt().recip(),
        };
        let h: Vec<T> = self
            .fading
            .iter()
            .map(|m| m.sample(&mut self.rng))
            .collect();
        let mu = self.duals.mu;

        match self.config.mode {
            Mode::ModelBased => {
                if self.needs_resolve(n) {
                    for (i, curve) in self.curves.iter_mut().enumerate() {
                        let term = &self.terminals[i];
                        let level = water_level(self.duals.lambda[i], mu, term.phi);
                        self.z[i] = curve.level(level)?;
                    }
                    self.last_solve = Some(self.duals.clone());
                }
            }
            Mode::ModelFree => {
                let step_z = self.config.step_z * scale;
                for (i, term) in self.terminals.iter().enumerate() {
                    self.z[i] = var_supergradient_step(
                        self.z[i],
                        h[i],
                        self.duals.lambda[i],
                        mu,
                        term.phi,
                        term.noise_var,
                        step_z,
                    )?;
                }
            }
        }

        let mut p = Vec::with_capacity(h.len());
        let mut rates = Vec::with_capacity(h.len());
        for (i, term) in self.terminals.iter().enumerate() {
            let pi = optimal_power(
                h[i],
                self.duals.lambda[i],
                mu,
                term.phi,
                term.noise_var,
                self.z[i],
            )?;
            let ri = rate(pi, h[i], term.noise_var);
            self.rate_sum[i] = self.rate_sum[i] + ri;
            p.push(pi);
            rates.push(ri);
        }
        let nf = T::from_usize(n).unwrap();
        let running_mean: Vec<T> = self.rate_sum.iter().map(|&s| s / nf).collect();
        let x_star = optimal_rate_vector(&self.config.utility, &self.duals.lambda, &running_mean)?;

        let record = IterationRecord {
            t: n,
            h,
            p,
            z: self.z.clone(),
            duals: self.duals.clone(),
            rates,
        };
        let (g_lambda, g_mu) = (self.rule)(&record, &x_star, &self.config, &self.terminals);
        let mut next = dual_update(
            &self.duals,
            &g_lambda,
            g_mu,
            self.config.step_dual * scale,
            self.config.utility.pins_lambda(),
        );
        if matches!(self.config.utility, UtilityKind::ProportionalFairness) {
            for l in &mut next.lambda {
                *l = l.max(T::lit(LAMBDA_MIN));
            }
        }
        next.mu = next.mu.max(T::lit(MU_MIN));
        if !(next.mu <= T::lit(MU_DIVERGENCE)) || next.lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Divergence {
                iteration: n,
                mu: next.mu.as_f64(),
                lambda: next.lambda.iter().map(|l| l.as_f64()).collect(),
            });
        }
        self.duals = next;
        Ok(record)
    }
}

/// Runs the configured number of iterations and returns the trajectory.
pub fn run<T: Real>(
    config: &SolverConfig<T>,
    terminals: &[TerminalConfig<T>],
    fading: &[FadingModel<T>],
) -> Result<Trajectory<T>> {
    run_with_rule(config, terminals, fading, dual_subgradient)
}

pub fn run_with_rule<T: Real>(
    config: &SolverConfig<T>,
    terminals: &[TerminalConfig<T>],
    fading: &[FadingModel<T>],
    rule: DualRule<T>,
) -> Result<Trajectory<T>> {
    let mut solver = Solver::new(config.clone(), terminals, fading)?.with_dual_rule(rule);
    let mut records = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        records.push(solver.step()?);
    }
    Ok(Trajectory {
        records,
        final_duals: solver.duals().clone(),
        final_z: solver.levels(),
    })
}
