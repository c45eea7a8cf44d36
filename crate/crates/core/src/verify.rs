//! Self-check suite: oracle comparisons plus consistency checks on any
//! tables found in an output directory. Results go to `verify_report.json`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cvar::{empirical_cvar, SampleBatch};
use crate::error::Result;
use crate::experiment::{self, read_summary, read_table, simulate};
use crate::fading::FadingModel;
use crate::oracle::{
    grid_var_level, power_objective, power_oracle, waterfilling, LevelObjective, LevelProblem,
};
use crate::policy::optimal_power;
use crate::scenario::preset;
use crate::solver::{dual_subgradient, DualRule, Solver};
use crate::stats;
use crate::var_levels::{solve_var_level, LevelParams, SampleSet};

pub const REPORT: &str = "verify_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Knobs for the solver-backed checks.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiplier subgradient used by the solver-backed checks.
    pub dual_rule: DualRule<f64>,
    pub iterations: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            dual_rule: dual_subgradient,
            iterations: 100_000,
        }
    }
}

fn outcome(name: &str, result: Result<std::result::Result<String, String>>) -> Check {
    let (status, detail) = match result {
        Ok(Ok(d)) => (Status::Pass, d),
        Ok(Err(d)) => (Status::Fail, d),
        Err(e) => (Status::Fail, format!("error: {e}")),
    };
    Check {
        name: name.into(),
        status,
        detail,
    }
}

type Verdict = Result<std::result::Result<String, String>>;
type DataCheck = (&'static str, &'static str, fn(&Path) -> Verdict);

fn cvar_axioms(rng: &mut ChaCha8Rng) -> Verdict {
    let phis: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    for trial in 0..200 {
        let n = rng.gen_range(1..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let batch = SampleBatch::new(xs.clone())?;
        if empirical_cvar(&batch, 1.0)? != batch.mean() {
            return Ok(Err(format!(
                "batch {trial}: cvar at phi = 1 differs from the mean"
            )));
        }
        let vals = phis
            .iter()
            .map(|&p| empirical_cvar(&batch, p))
            .collect::<Result<Vec<_>>>()?;
        if vals.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Ok(Err(format!("batch {trial}: cvar increases with phi")));
        }
        let c = rng.gen_range(-3.0..3.0);
        let a = rng.gen_range(0.1..4.0);
        for &p in &phis {
            let base = empirical_cvar(&batch, p)?;
            let shifted =
                empirical_cvar(&SampleBatch::new(xs.iter().map(|x| x + c).collect())?, p)?;
            let scaled = empirical_cvar(&SampleBatch::new(xs.iter().map(|x| a * x).collect())?, p)?;
            if (shifted - base - c).abs() > 1e-12 || (scaled - a * base).abs() > 1e-12 {
                return Ok(Err(format!(
                    "batch {trial}, phi {p}: equivariance violated"
                )));
            }
        }
    }
    Ok(Ok("200 batches".into()))
}

fn policy_brute_force(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0_f64;
    for _ in 0..300 {
        let lambda = rng.gen_range(0.05..3.0);
        let mu = rng.gen_range(0.05..3.0);
        let phi = rng.gen_range(0.05..=1.0);
        let nv = rng.gen_range(0.1..10.0);
        let z = rng.gen_range(0.0..5.0);
        let h = rng.gen_range(0.0..3.0);
        let p = optimal_power(h, lambda, mu, phi, nv, z)?;
        let got = power_objective(p, h, lambda, mu, phi, nv, z);
        let (_, best) = power_oracle(h, lambda, mu, phi, nv, z);
        worst = worst.max(best - got);
    }
    let detail = format!("worst objective gap {worst:.3e} over 300 tuples");
    Ok(if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    })
}

fn var_level_grid(rng: &mut ChaCha8Rng) -> Verdict {
    let model = FadingModel::unit_rayleigh();
    let mut worst = 0.0_f64;
    let mut branches = [0usize; 3];
    for _ in 0..6 {
        let problem = LevelProblem {
            lambda: rng.gen_range(0.2..3.0),
            mu: rng.gen_range(0.05..1.0),
            phi: rng.gen_range(0.1..0.95),
            noise_var: rng.gen_range(0.1..2.0),
        };
        let h = model.sample_n(rng, 200_000);
        let level = problem.water_level();
        let reference = grid_var_level(&LevelObjective::new(problem, &h)?, 1e-3 * level);
        let params = LevelParams::new(problem.lambda, problem.mu, problem.phi, problem.noise_var)?;
        let sol = solve_var_level(&params, &SampleSet::from_samples(h)?, 1e-10)?;
        branches[sol.branch.branch as usize] += 1;
        worst = worst.max((sol.z - reference).abs() / level);
    }
    let detail = format!(
        "worst |z - z_grid| / level {worst:.3e} over 6 tuples (at zero / low / high: {branches:?})"
    );
    Ok(if worst <= 2e-3 {
        Ok(detail)
    } else {
        Err(detail)
    })
}

/// Risk-neutral sumrate run against classical waterfilling.
fn waterfilling_reduction(opts: &VerifyOptions) -> Verdict {
    let scenario = preset("table1-3term")
        .expect("preset")
        .with_uniform_phi(1.0)?
        .with_seed(opts.seed)
        .with_iterations(opts.iterations);
    let terms = scenario.terminal_configs();
    let mut solver = Solver::new(scenario.solver.clone(), &terms, &scenario.fading_models())?
        .with_dual_rule(opts.dual_rule);
    let start = stats::tail_start(opts.iterations);
    let mut sums = vec![0.0; terms.len()];
    for k in 0..opts.iterations {
        let rec = solver.step()?;
        if k >= start {
            for (s, p) in sums.iter_mut().zip(&rec.p) {
                *s += p;
            }
        }
    }
    let tail = (opts.iterations - start) as f64;
    let mean_p: Vec<f64> = sums.iter().map(|s| s / tail).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let samples: Vec<Vec<f64>> = scenario
        .fading_models()
        .iter()
        .map(|m| m.sample_n(&mut rng, 200_000))
        .collect();
    let weights: Vec<f64> = terms.iter().map(|t| t.weight).collect();
    let noise: Vec<f64> = terms.iter().map(|t| t.noise_var).collect();
    let wf = waterfilling(&weights, &noise, &samples, scenario.solver.p0)?;
    let worst = mean_p
        .iter()
        .zip(&wf.mean_power)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    let total: f64 = mean_p.iter().sum::<f64>() / scenario.solver.p0;
    let detail = format!("worst per-terminal deviation {worst:.3e}, total / p0 {total:.4}");
    Ok(if worst <= 0.02 && (0.98..=1.02).contains(&total) {
        Ok(detail)
    } else {
        Err(detail)
    })
}

/// Tail utility must not decrease as every confidence level is raised.
fn phi_monotonicity(opts: &VerifyOptions) -> Verdict {
    let base = preset("table1-3term")
        .expect("preset")
        .with_seed(opts.seed)
        .with_iterations(opts.iterations);
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut values = Vec::new();
    for phi in [0.6, 0.8, 1.0] {
        let s = base.clone().with_uniform_phi(phi)?;
        let sum = simulate(&s)?.summary;
        if let Some((p_phi, u, se)) = prev {
            if sum.utility_value + se.max(sum.utility_se) < u {
                return Ok(Err(format!(
                    "utility fell from {u} (phi {p_phi}) to {} (phi {phi})",
                    sum.utility_value
                )));
            }
        }
        values.push(format!("{phi}: {:.5}", sum.utility_value));
        prev = Some((phi, sum.utility_value, sum.utility_se));
    }
    Ok(Ok(values.join(", ")))
}

fn skipped(name: &str, file: &str) -> Check {
    Check {
        name: name.into(),
        status: Status::Skipped,
        detail: format!("{file} not present in output directory"),
    }
}

fn cdf_columns(out_dir: &Path, file: &str, prefix: &str) -> Verdict {
    let t = read_table(&out_dir.join(file))?;
    for (k, name) in t
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(prefix))
    {
        let col: Vec<f64> = t.rows.iter().map(|r| r[k]).collect();
        if col.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Ok(Err(format!("{name} leaves [0, 1]")));
        }
        if col.windows(2).any(|w| w[1] < w[0]) {
            return Ok(Err(format!("{name} decreases")));
        }
        if col.last() != Some(&1.0) {
            return Ok(Err(format!("{name} does not reach 1")));
        }
    }
    Ok(Ok(format!("{} rows", t.rows.len())))
}

fn power_rows(out_dir: &Path) -> Verdict {
    let t = read_table(&out_dir.join(experiment::P_INSTANCES))?;
    let n = t.header.len() - 2;
    for row in &t.rows {
        let p = &row[1..=n];
        if p.iter().any(|&v| v < 0.0) {
            return Ok(Err(format!("negative power at time {}", row[0])));
        }
        let s: f64 = p.iter().sum();
        if (s - row[n + 1]).abs() > 1e-9 * s.max(1.0) {
            return Ok(Err(format!("sum_p mismatch at time {}", row[0])));
        }
    }
    Ok(Ok(format!("{} rows", t.rows.len())))
}

fn rate_recurrence(out_dir: &Path) -> Verdict {
    let summary = out_dir.join(experiment::SUMMARY);
    let window: usize = match read_summary(&summary) {
        Ok(s) => match s
            .get("window")
            .and_then(|v| v.first())
            .and_then(|v| v.parse().ok())
        {
            Some(w) => w,
            None => return Ok(Err("summary has no window".into())),
        },
        Err(_) => return Ok(Err("summary needed for the window length".into())),
    };
    let t = read_table(&out_dir.join(experiment::RATE_INSTANCES))?;
    let n = (t.header.len() - 2) / 2;
    for i in 1..=n {
        let raw = t.column(&format!("r{i}")).unwrap_or_default();
        let cum = t.column(&format!("cum_r{i}")).unwrap_or_default();
        if stats::moving_average(&raw, window)? != cum {
            return Ok(Err(format!(
                "cum_r{i} does not match its window recurrence"
            )));
        }
    }
    for row in &t.rows {
        if stats::mean(&row[1..=n]) != row[n + 1] {
            return Ok(Err(format!("sum_cum_r mismatch at time {}", row[0])));
        }
    }
    Ok(Ok(format!("{} rows, window {window}", t.rows.len())))
}

fn summary_shape(out_dir: &Path) -> Verdict {
    let s = read_summary(&out_dir.join(experiment::SUMMARY))?;
    let n = match s.get("lambda") {
        Some(v) => v.len(),
        None => return Ok(Err("missing lambda".into())),
    };
    for key in ["z", "mean_p", "mean_rate", "cvar_p"] {
        match s.get(key) {
            Some(v) if v.len() == n => {}
            _ => return Ok(Err(format!("{key} missing or not {n} values"))),
        }
    }
    for key in ["mu", "p0", "sum_cvar_p", "rate"] {
        if s.get(key)
            .and_then(|v| v.first())
            .and_then(|v| v.parse::<f64>().ok())
            .is_none()
        {
            return Ok(Err(format!("{key} missing or not numeric")));
        }
    }
    Ok(Ok(format!("{n} terminals")))
}

fn surface_corner(out_dir: &Path) -> Verdict {
    let t = read_table(&out_dir.join(experiment::SURFACE))?;
    let max = t
        .rows
        .iter()
        .map(|r| r[2])
        .fold(f64::NEG_INFINITY, f64::max);
    match t.rows.iter().find(|r| r[0] == 1.0 && r[1] == 1.0) {
        Some(corner) if corner[2] == max => Ok(Ok(format!("corner rate {}", corner[2]))),
        Some(corner) => Ok(Err(format!(
            "corner rate {} below grid max {max}",
            corner[2]
        ))),
        None => Ok(Ok("grid has no (1, 1) corner".into())),
    }
}

/// Runs the full suite with default options and writes the report.
pub fn verify(out_dir: &Path) -> Result<VerifyReport> {
    verify_with(out_dir, &VerifyOptions::default())
}

pub fn verify_with(out_dir: &Path, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = vec![
        outcome("cvar_axioms", cvar_axioms(&mut rng)),
        outcome("policy_brute_force", policy_brute_force(&mut rng)),
        outcome("var_level_grid", var_level_grid(&mut rng)),
        outcome("waterfilling_reduction", waterfilling_reduction(opts)),
        outcome("phi_monotonicity", phi_monotonicity(opts)),
    ];

    let data: [DataCheck; 6] = [
        ("p_cdf_monotone", experiment::P_CDF, |d| {
            cdf_columns(d, experiment::P_CDF, "cdf_p")
        }),
        ("rate_cdf_monotone", experiment::RATE_CDF, |d| {
            cdf_columns(d, experiment::RATE_CDF, "cdf_rate")
        }),
        ("power_rows", experiment::P_INSTANCES, power_rows),
        (
            "rate_recurrence",
            experiment::RATE_INSTANCES,
            rate_recurrence,
        ),
        ("summary_shape", experiment::SUMMARY, summary_shape),
        ("surface_corner_max", experiment::SURFACE, surface_corner),
    ];
    for (name, file, check) in data {
        if out_dir.join(file).is_file() {
            checks.push(outcome(name, check(out_dir)));
        } else {
            checks.push(skipped(name, file));
        }
    }

    let report = VerifyReport {
        passed: checks.iter().all(|c| c.status != Status::Fail),
        checks,
    };
    std::fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    std::fs::write(out_dir.join(REPORT), json + "\n")?;
    Ok(report)
}
