//! Scenario files and built-in presets.
//!
//! A scenario is a TOML document with a `[solver]` table, optional
//! `[output]` and `[sweep]` tables and one `[[terminal]]` block per
//! terminal. See the README for the full grammar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{FadingKind, FadingModel};
use crate::policy::TerminalConfig;
use crate::radius::{confidence_from_radius, AmbiguityRadius};
use crate::solver::{ExpectationMethod, Mode, SolverConfig, StepSchedule};
use crate::utility::UtilityKind;

pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_P_ROWS: usize = 100;
pub const DEFAULT_RATE_ROWS: usize = 500;
pub const DEFAULT_CDF_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityName {
    Sumrate,
    ProportionalFairness,
}

/// Terminal group targeted by the `phi_low` / `phi_high` sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Moving-average window for `rate_instances`.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Rows of `p_instances`, taken from the end of the trajectory.
    #[serde(default = "default_p_rows")]
    pub p_rows: usize,
    /// Rows of `rate_instances`, from the end; 0 writes every iteration.
    #[serde(default = "default_rate_rows")]
    pub rate_rows: usize,
    /// Grid points of the CDF tables.
    #[serde(default = "default_cdf_points")]
    pub cdf_points: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_p_rows() -> usize {
    DEFAULT_P_ROWS
}
fn default_rate_rows() -> usize {
    DEFAULT_RATE_ROWS
}
fn default_cdf_points() -> usize {
    DEFAULT_CDF_POINTS
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            p_rows: DEFAULT_P_ROWS,
            rate_rows: DEFAULT_RATE_ROWS,
            cdf_points: DEFAULT_CDF_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub phi_low: Vec<f64>,
    pub phi_high: Vec<f64>,
}

impl SweepGrid {
    /// Grid points in row-major order `(phi_low, phi_high)`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.phi_low
            .iter()
            .flat_map(|&l| self.phi_high.iter().map(move |&h| (l, h)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub p0: f64,
    pub utility: UtilityName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_dual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_resolve_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectation: Option<ExpectationMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    /// 0 disables the memoised level curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_grid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSection {
    pub kind: FadingKind,
    pub mean_square: f64,
}

impl Default for FadingSection {
    fn default() -> Self {
        Self {
            kind: FadingKind::Rayleigh,
            mean_square: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSection {
    pub noise_var: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Ambiguity radius in nats, as an alternative to `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Group>,
    #[serde(default)]
    pub fading: FadingSection,
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(rename = "terminal", default)]
    pub terminals: Vec<TerminalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSetup {
    pub config: TerminalConfig<f64>,
    pub fading: FadingModel<f64>,
    pub group: Option<Group>,
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub solver: SolverConfig<f64>,
    pub terminals: Vec<TerminalSetup>,
    pub output: OutputConfig,
    pub sweep: Option<SweepGrid>,
}

fn field_err(field: impl std::fmt::Display, e: impl std::fmt::Display) -> Error {
    Error::Scenario(format!("{field}: {e}"))
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.terminals.is_empty() {
            return Err(field_err(
                "terminal",
                "at least one [[terminal]] block is required",
            ));
        }
        let n = file.terminals.len();
        let mut terminals = Vec::with_capacity(n);
        for (i, t) in file.terminals.iter().enumerate() {
            let at = |f: &str| format!("terminal[{i}].{f}");
            let phi = match (t.phi, t.radius) {
                (Some(_), Some(_)) => {
                    return Err(field_err(at("phi"), "give either phi or radius, not both"))
                }
                (Some(phi), None) => phi,
                (None, Some(r)) => {
                    let radius = AmbiguityRadius::new(r).map_err(|e| field_err(at("radius"), e))?;
                    confidence_from_radius(radius)
                        .level()
                        .map_err(|e| field_err(at("radius"), e))?
                }
                (None, None) => return Err(field_err(at("phi"), "missing (or give radius)")),
            };
            let weight = t.weight.unwrap_or(1.0 / n as f64);
            let config = TerminalConfig::new(t.noise_var, phi, weight)
                .map_err(|e| field_err(format!("terminal[{i}]"), e))?;
            let fading = match t.fading.kind {
                FadingKind::Rayleigh => FadingModel::rayleigh(t.fading.mean_square)
                    .map_err(|e| field_err(at("fading"), e))?,
            };
            terminals.push(TerminalSetup {
                config,
                fading,
                group: t.group,
            });
        }

        let s = &file.solver;
        let utility = match s.utility {
            UtilityName::Sumrate => {
                UtilityKind::sumrate(terminals.iter().map(|t| t.config.weight).collect())
                    .map_err(|e| field_err("solver.utility", e))?
            }
            UtilityName::ProportionalFairness => UtilityKind::ProportionalFairness,
        };
        let mut solver = SolverConfig::new(s.p0, utility);
        if let Some(v) = s.step_dual {
            solver.step_dual = v;
        }
        if let Some(v) = s.step_z {
            solver.step_z = v;
        }
        if let Some(v) = s.iterations {
            solver.iterations = v;
        }
        if let Some(v) = s.seed {
            solver.seed = v;
        }
        if let Some(v) = s.mode {
            solver.mode = v;
        }
        if let Some(v) = s.schedule {
            solver.schedule = v;
        }
        if let Some(v) = s.z_resolve_period {
            solver.z_resolve_period = v;
        }
        if let Some(v) = s.expectation {
            solver.expectation = v;
        }
        if let Some(v) = s.mc_samples {
            solver.mc_samples = v;
        }
        if let Some(v) = s.level_grid {
            solver.level_grid = (v != 0.0).then_some(v);
        }
        if let Some(v) = s.level_tol {
            solver.level_tol = v;
        }

        let scenario = Self {
            name: file.name,
            solver,
            terminals,
            output: file.output,
            sweep: file.sweep,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(field_err("name", "must not be empty"));
        }
        if self.terminals.is_empty() {
            return Err(field_err("terminal", "at least one terminal is required"));
        }
        for (i, t) in self.terminals.iter().enumerate() {
            t.config
                .validate()
                .map_err(|e| field_err(format!("terminal[{i}]"), e))?;
        }
        self.solver
            .validate(self.terminals.len())
            .map_err(|e| field_err("solver", e))?;
        let o = &self.output;
        if o.window == 0 {
            return Err(field_err("output.window", "must be at least 1"));
        }
        if o.cdf_points < 2 {
            return Err(field_err("output.cdf_points", "must be at least 2"));
        }
        if let Some(sweep) = &self.sweep {
            for (name, axis) in [
                ("sweep.phi_low", &sweep.phi_low),
                ("sweep.phi_high", &sweep.phi_high),
            ] {
                if axis.is_empty() {
                    return Err(field_err(name, "grid must be nonempty"));
                }
                if let Some(bad) = axis.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                    return Err(field_err(
                        name,
                        format!("confidence level {bad} outside (0, 1]"),
                    ));
                }
            }
            if self.terminals.iter().all(|t| t.group.is_none()) {
                return Err(field_err("sweep", "no terminal has a group to sweep"));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ScenarioFile = toml::from_str(&text)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    /// Loads a built-in preset by name, or else a scenario file at `arg`.
    pub fn resolve(arg: &str) -> Result<Self> {
        match preset(arg) {
            Some(s) => Ok(s),
            None => Self::load(Path::new(arg)),
        }
    }

    pub fn to_file(&self) -> ScenarioFile {
        let s = &self.solver;
        let weights_default = 1.0 / self.terminals.len() as f64;
        ScenarioFile {
            name: self.name.clone(),
            solver: SolverSection {
                p0: s.p0,
                utility: self.utility_name(),
                step_dual: Some(s.step_dual),
                step_z: Some(s.step_z),
                iterations: Some(s.iterations),
                seed: Some(s.seed),
                mode: Some(s.mode),
                schedule: Some(s.schedule),
                z_resolve_period: Some(s.z_resolve_period),
                expectation: Some(s.expectation),
                mc_samples: Some(s.mc_samples),
                level_grid: Some(s.level_grid.unwrap_or(0.0)),
                level_tol: Some(s.level_tol),
            },
            output: self.output.clone(),
            terminals: self
                .terminals
                .iter()
                .map(|t| TerminalSection {
                    noise_var: t.config.noise_var,
                    phi: Some(t.config.phi),
                    radius: None,
                    weight: (t.config.weight != weights_default).then_some(t.config.weight),
                    group: t.group,
                    fading: FadingSection {
                        kind: t.fading.kind(),
                        mean_square: t.fading.mean_square(),
                    },
                })
                .collect(),
            sweep: self.sweep.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serialises")
    }

    pub fn utility_name(&self) -> UtilityName {
        match self.solver.utility {
            UtilityKind::Sumrate(_) => UtilityName::Sumrate,
            UtilityKind::ProportionalFairness => UtilityName::ProportionalFairness,
        }
    }

    pub fn terminal_configs(&self) -> Vec<TerminalConfig<f64>> {
        self.terminals.iter().map(|t| t.config).collect()
    }

    pub fn fading_models(&self) -> Vec<FadingModel<f64>> {
        self.terminals.iter().map(|t| t.fading).collect()
    }

    pub fn with_utility(mut self, utility: UtilityName) -> Self {
        self.solver.utility = match utility {
            UtilityName::Sumrate => {
                UtilityKind::Sumrate(self.terminals.iter().map(|t| t.config.weight).collect())
            }
            UtilityName::ProportionalFairness => UtilityKind::ProportionalFairness,
        };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.solver.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.solver.iterations = iterations;
        self
    }

    /// Sets every terminal's confidence level to `phi`.
    pub fn with_uniform_phi(mut self, phi: f64) -> Result<Self> {
        for t in &mut self.terminals {
            t.config.phi = phi;
        }
        self.validate()?;
        Ok(self)
    }

    /// Scenario at one sweep point: grouped terminals take the point's
    /// levels, ungrouped ones keep their own.
    pub fn at_sweep_point(&self, phi_low: f64, phi_high: f64) -> Result<Self> {
        let mut s = self.clone();
        for t in &mut s.terminals {
            match t.group {
                Some(Group::Low) => t.config.phi = phi_low,
                Some(Group::High) => t.config.phi = phi_high,
                None => {}
            }
        }
        s.sweep = None;
        s.validate()?;
        Ok(s)
    }
}

/// Names and one-line descriptions of the built-in presets.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "table1-3term",
        "3 terminals, sumrate, noise (1, 2, 3), phi (0.9, 0.85, 0.8), P0 = 15",
    ),
    (
        "table2-toy8",
        "8 terminals, proportional fairness, noise 1..8, phi 0.8, P0 = 40",
    ),
    (
        "table2-realistic8",
        "6 low-noise (phi 0.4) + 2 high-noise (phi 0.8) terminals, proportional fairness, P0 = 40, with a phi sweep",
    ),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn terminal(noise_var: f64, phi: f64, weight: f64, group: Option<Group>) -> TerminalSection {
    TerminalSection {
        noise_var,
        phi: Some(phi),
        radius: None,
        weight: Some(weight),
        group,
        fading: FadingSection::default(),
    }
}

fn solver_section(p0: f64, utility: UtilityName) -> SolverSection {
    SolverSection {
        p0,
        utility,
        step_dual: Some(3e-5),
        step_z: None,
        iterations: None,
        seed: None,
        mode: None,
        schedule: None,
        z_resolve_period: None,
        expectation: None,
        mc_samples: None,
        level_grid: None,
        level_tol: None,
    }
}

/// Built-in preset by name.
pub fn preset(name: &str) -> Option<Scenario> {
    let file = match name {
        "table1-3term" => ScenarioFile {
            name: name.into(),
            solver: solver_section(15.0, UtilityName::Sumrate),
            output: OutputConfig::default(),
            terminals: vec![
                terminal(1.0, 0.9, 1.0 / 3.0, None),
                terminal(2.0, 0.85, 1.0 / 3.0, None),
                terminal(3.0, 0.8, 1.0 / 3.0, None),
            ],
            sweep: None,
        },
        "table2-toy8" => ScenarioFile {
            name: name.into(),
            solver: solver_section(40.0, UtilityName::ProportionalFairness),
            output: OutputConfig::default(),
            terminals: (1..=8)
                .map(|k| terminal(k as f64, 0.8, 0.125, None))
                .collect(),
            sweep: None,
        },
        "table2-realistic8" => ScenarioFile {
            name: name.into(),
            solver: solver_section(40.0, UtilityName::ProportionalFairness),
            output: OutputConfig::default(),
            terminals: (0..8)
                .map(|k| {
                    if k < 6 {
                        terminal(1.0, 0.4, 0.125, Some(Group::Low))
                    } else {
                        terminal(10.0, 0.8, 0.125, Some(Group::High))
                    }
                })
                .collect(),
            sweep: Some(SweepGrid {
                phi_low: vec![0.7, 0.8, 0.9, 1.0],
                phi_high: vec![0.7, 0.8, 0.9, 1.0],
            }),
        },
        _ => return None,
    };
    Some(Scenario::from_file(file).expect("presets are valid"))
}
