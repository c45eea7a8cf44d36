//! Scenario execution and table output.
//!
//! Tables are space-delimited text with a header row. Numbers use the
//! shortest representation that parses back to the same `f64`, so reruns
//! are byte-identical and derived columns can be rechecked exactly.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::cvar::{empirical_cvar, SampleBatch};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::solver::Solver;
use crate::stats::{self, MovingAverage};
use crate::utility::{utility_value, UtilityKind};

pub const P_INSTANCES: &str = "p_instances.txt";
pub const P_CDF: &str = "p_CDF.txt";
pub const RATE_CDF: &str = "rate_CDF.txt";
pub const RATE_INSTANCES: &str = "rate_instances.txt";
pub const SUMMARY: &str = "summary.txt";
pub const SURFACE: &str = "surface.txt";

/// Converged statistics of one run, computed over the trajectory tail.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub utility: String,
    pub iterations: usize,
    pub seed: u64,
    pub tail_start: usize,
    /// Moving-average window of `rate_instances`.
    pub window: usize,
    pub p0: f64,
    /// Multipliers after the last iteration.
    pub mu: f64,
    pub lambda: Vec<f64>,
    /// Tail mean of the quantile levels.
    pub z: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub mean_rate: Vec<f64>,
    pub cvar_p: Vec<f64>,
    pub sum_cvar_p: f64,
    pub sum_mean_p: f64,
    /// Tail-mean rate averaged over terminals.
    pub rate: f64,
    /// Utility at the tail-mean rates.
    pub utility_value: f64,
    /// Batch-means standard error of `utility_value` (delta method).
    pub utility_se: f64,
    pub sum_p_variance: f64,
}

/// Everything a run emits, kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    /// Powers over the last `p_rows` iterations.
    pub p_instances: Vec<Vec<f64>>,
    /// `(moving averages, raw rates)` over the last `rate_rows`
    /// iterations; the average restarts at the first row.
    pub rate_instances: Vec<(Vec<f64>, Vec<f64>)>,
    /// Tail powers and rates, one vector per terminal.
    pub tail_p: Vec<Vec<f64>>,
    pub tail_rates: Vec<Vec<f64>>,
    pub tail_sum_p: Vec<f64>,
}

fn utility_gradient(utility: &UtilityKind<f64>, x: &[f64]) -> Vec<f64> {
    match utility {
        UtilityKind::Sumrate(w) => w.clone(),
        UtilityKind::ProportionalFairness => x.iter().map(|v| 1.0 / v).collect(),
    }
}

/// Runs a scenario without touching the filesystem.
pub fn simulate(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let cfg = &scenario.solver;
    let n = scenario.terminals.len();
    let iters = cfg.iterations;
    let start = stats::tail_start(iters);
    let out = &scenario.output;
    let rate_rows = if out.rate_rows == 0 {
        iters
    } else {
        out.rate_rows.min(iters)
    };

    let mut solver = Solver::new(
        cfg.clone(),
        &scenario.terminal_configs(),
        &scenario.fading_models(),
    )?;
    let mut p_instances = VecDeque::with_capacity(out.p_rows);
    let mut rate_excerpt = VecDeque::with_capacity(rate_rows);
    let tail_len = iters - start;
    let mut tail_p = vec![Vec::with_capacity(tail_len); n];
    let mut tail_rates = vec![Vec::with_capacity(tail_len); n];
    let mut tail_sum_p = Vec::with_capacity(tail_len);
    let mut z_sum = vec![0.0; n];

    for k in 0..iters {
        let rec = solver.step()?;
        if k + rate_rows >= iters {
            rate_excerpt.push_back(rec.rates.clone());
        }
        if k + out.p_rows >= iters {
            p_instances.push_back(rec.p.clone());
        }
        if k >= start {
            for i in 0..n {
                tail_p[i].push(rec.p[i]);
                tail_rates[i].push(rec.rates[i]);
                z_sum[i] += rec.z[i];
            }
            tail_sum_p.push(rec.p.iter().sum());
        }
    }

    let mut averages = (0..n)
        .map(|_| MovingAverage::new(out.window))
        .collect::<Result<Vec<_>>>()?;
    let rate_instances = rate_excerpt
        .into_iter()
        .map(|raw| {
            let cum = raw
                .iter()
                .zip(&mut averages)
                .map(|(&r, ma)| ma.push(r))
                .collect();
            (cum, raw)
        })
        .collect();

    let mean_p: Vec<f64> = tail_p.iter().map(|v| stats::mean(v)).collect();
    let mean_rate: Vec<f64> = tail_rates.iter().map(|v| stats::mean(v)).collect();
    let cvar_p = tail_p
        .iter()
        .zip(&scenario.terminals)
        .map(|(v, t)| empirical_cvar(&SampleBatch::new(v.clone())?, t.config.phi))
        .collect::<Result<Vec<_>>>()?;
    let grad = utility_gradient(&cfg.utility, &mean_rate);
    let linearised: Vec<f64> = (0..tail_len)
        .map(|k| (0..n).map(|i| grad[i] * tail_rates[i][k]).sum())
        .collect();
    let duals = solver.duals();
    let summary = RunSummary {
        name: scenario.name.clone(),
        utility: cfg.utility.name().to_string(),
        iterations: iters,
        seed: cfg.seed,
        tail_start: start,
        window: out.window,
        p0: cfg.p0,
        mu: duals.mu,
        lambda: duals.lambda.clone(),
        z: z_sum.iter().map(|s| s / tail_len.max(1) as f64).collect(),
        sum_cvar_p: cvar_p.iter().sum(),
        sum_mean_p: mean_p.iter().sum(),
        rate: stats::mean(&mean_rate),
        utility_value: utility_value(&cfg.utility, &mean_rate)?,
        utility_se: stats::batch_means_se(&linearised, stats::BATCHES),
        sum_p_variance: stats::variance(&tail_sum_p),
        mean_p,
        mean_rate,
        cvar_p,
    };
    Ok(RunOutput {
        summary,
        p_instances: p_instances.into_iter().collect(),
        rate_instances,
        tail_p,
        tail_rates,
        tail_sum_p,
    })
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Writes a space-delimited table with a header row.
pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut s = header.join(" ");
    s.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Header and rows of a space-delimited table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Scenario(format!("{}: empty table", path.display())))?
        .split_whitespace()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Scenario(format!("{} line {}: {e}", path.display(), k + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Scenario(format!(
                "{} line {}: {} fields, header has {}",
                path.display(),
                k + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl RunSummary {
    /// `key value...` lines.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} {v}").unwrap();
        kv("name", self.name.clone());
        kv("utility", self.utility.clone());
        kv("iterations", self.iterations.to_string());
        kv("seed", self.seed.to_string());
        kv("tail_start", self.tail_start.to_string());
        kv("window", self.window.to_string());
        kv("p0", self.p0.to_string());
        kv("mu", self.mu.to_string());
        kv("lambda", join(&self.lambda));
        kv("z", join(&self.z));
        kv("mean_p", join(&self.mean_p));
        kv("mean_rate", join(&self.mean_rate));
        kv("cvar_p", join(&self.cvar_p));
        kv("sum_cvar_p", self.sum_cvar_p.to_string());
        kv("sum_mean_p", self.sum_mean_p.to_string());
        kv("rate", self.rate.to_string());
        kv("utility_value", self.utility_value.to_string());
        kv("utility_se", self.utility_se.to_string());
        kv("sum_p_variance", self.sum_p_variance.to_string());
        s
    }
}

/// Parses a summary file into its key/value lines.
pub fn read_summary(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let key = it.next()?.to_string();
            Some((key, it.map(String::from).collect()))
        })
        .collect())
}

/// Writes all tables for `output` into `out_dir`.
pub fn write_outputs(scenario: &Scenario, output: &RunOutput, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let n = scenario.terminals.len();

    let mut header: Vec<String> = vec!["time".into()];
    header.extend(numbered("p", n));
    header.push("sum_p".into());
    write_table(
        &out_dir.join(P_INSTANCES),
        &header,
        output.p_instances.iter().enumerate().map(|(k, p)| {
            let mut row = vec![(k + 1) as f64];
            row.extend(p);
            row.push(p.iter().sum());
            row
        }),
    )?;

    let cdf_table = |path: &Path, x: &str, col: &str, tail: &[Vec<f64>]| -> Result<()> {
        let sorted: Vec<Vec<f64>> = tail
            .iter()
            .map(|v| {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                s
            })
            .collect();
        let max = sorted
            .iter()
            .filter_map(|s| s.last().copied())
            .fold(0.0, f64::max);
        let grid = stats::grid_from_zero(max, scenario.output.cdf_points);
        let cdfs: Vec<Vec<f64>> = sorted
            .iter()
            .map(|s| stats::empirical_cdf(s, &grid))
            .collect();
        let mut header: Vec<String> = vec![x.into()];
        header.extend(numbered(col, n));
        write_table(
            path,
            &header,
            grid.iter().enumerate().map(|(k, &g)| {
                let mut row = vec![g];
                row.extend(cdfs.iter().map(|c| c[k]));
                row
            }),
        )
    };
    cdf_table(&out_dir.join(P_CDF), "power", "cdf_p", &output.tail_p)?;
    cdf_table(
        &out_dir.join(RATE_CDF),
        "rate",
        "cdf_rate",
        &output.tail_rates,
    )?;

    let mut header: Vec<String> = vec!["time_r".into()];
    header.extend(numbered("cum_r", n));
    header.push("sum_cum_r".into());
    header.extend(numbered("r", n));
    write_table(
        &out_dir.join(RATE_INSTANCES),
        &header,
        output
            .rate_instances
            .iter()
            .enumerate()
            .map(|(k, (cum, raw))| {
                let mut row = vec![(k + 1) as f64];
                row.extend(cum);
                row.push(stats::mean(cum));
                row.extend(raw);
                row
            }),
    )?;

    fs::write(out_dir.join(SUMMARY), output.summary.render())?;
    Ok(())
}

/// Runs a scenario and writes its tables into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    let output = simulate(scenario)?;
    write_outputs(scenario, &output, out_dir)?;
    Ok(output)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub phi_low: f64,
    pub phi_high: f64,
    /// Tail-mean rate averaged over terminals.
    pub rate: f64,
}

/// Computes the rate surface over the scenario's sweep grid without
/// writing files. Point `k` (row-major) uses seed `seed + k`.
pub fn compute_surface(scenario: &Scenario) -> Result<Vec<SurfacePoint>> {
    let grid = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Scenario("sweep: scenario has no [sweep] grid".into()))?
        .points();
    grid.par_iter()
        .enumerate()
        .map(|(k, &(phi_low, phi_high))| {
            let wrap = |e: Error| Error::SweepPoint {
                phi_low,
                phi_high,
                source: Box::new(e),
            };
            let point = scenario
                .at_sweep_point(phi_low, phi_high)
                .map_err(wrap)?
                .with_seed(scenario.solver.seed.wrapping_add(k as u64));
            let out = simulate(&point).map_err(wrap)?;
            Ok(SurfacePoint {
                phi_low,
                phi_high,
                rate: out.summary.rate,
            })
        })
        .collect()
}

/// Writes `surface.txt` with columns `x y z` (`phi_low`, `phi_high`, rate).
pub fn sweep_surface(scenario: &Scenario, out_dir: &Path) -> Result<Vec<SurfacePoint>> {
    let surface = compute_surface(scenario)?;
    fs::create_dir_all(out_dir)?;
    write_table(
        &out_dir.join(SURFACE),
        &["x".into(), "y".into(), "z".into()],
        surface.iter().map(|p| vec![p.phi_low, p.phi_high, p.rate]),
    )?;
    Ok(surface)
}
