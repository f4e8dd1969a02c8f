//! Declarative run configuration (JSON).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cpf_core::experiment::{CountBudget, ExperimentConfig};
use cpf_core::{BathKernel, InitialState, MeasurementScheme, Outcome};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<SchemeName>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Output directory; not part of the echoed configuration.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    /// Worker threads; not part of the echoed configuration.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BathSpec {
    Lorentzian {
        gamma: f64,
        tau_c: f64,
    },
    /// `time,re[,im]` CSV. `gamma` sets the unit of the `gamma_t` time axis.
    Tabulated {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

/// Either `p` (excited population, real amplitudes) or complex `a`, `b`
/// given as `[re, im]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Zzz,
    Xzx,
    Yzy,
}

impl From<SchemeName> for MeasurementScheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Zzz => MeasurementScheme::Zzz,
            SchemeName::Xzx => MeasurementScheme::Xzx,
            SchemeName::Yzy => MeasurementScheme::Yzy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Times are multiples of `1/γ`.
    #[default]
    GammaT,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_max: f64,
    /// Number of intervals; the grid has `steps + 1` points.
    pub steps: usize,
    #[serde(default = "yes")]
    pub equal_times: bool,
    /// Fixed second interval when `equal_times` is false; a full `(t, τ)`
    /// product grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default)]
    pub units: Units,
}

fn yes() -> bool {
    true
}

impl GridSpec {
    pub fn new(t_max: f64, steps: usize) -> Self {
        Self {
            t_max,
            steps,
            equal_times: true,
            tau: None,
            units: Units::GammaT,
        }
    }

    pub fn step(&self) -> f64 {
        self.t_max / self.steps as f64
    }

    /// Grid times in the configured units.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| i as f64 * self.t_max / self.steps as f64)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            bail!("grid.t_max: must be positive, got {}", self.t_max);
        }
        if self.steps < 1 {
            bail!("grid.steps: the grid needs at least 2 points (steps >= 1)");
        }
        match (self.equal_times, self.tau) {
            (true, Some(_)) => bail!("grid.tau: only allowed with \"equal_times\": false"),
            (false, Some(tau)) if !(tau >= 0.0 && tau.is_finite()) => {
                bail!("grid.tau: must be non-negative, got {tau}")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub total_counts: f64,
    pub visibility: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub budget: BudgetName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetName {
    #[default]
    PerSweep,
    PerSetting,
}

impl NoiseSpec {
    pub fn experiment(&self, visibility: f64, seed: u64) -> Result<ExperimentConfig> {
        let budget = match self.budget {
            BudgetName::PerSweep => CountBudget::PerSweep,
            BudgetName::PerSetting => CountBudget::PerSetting,
        };
        Ok(ExperimentConfig::new(self.total_counts, visibility, self.replicas, seed)
            .context("noise")?
            .with_budget(budget))
    }

    fn validate(&self) -> Result<()> {
        if self.visibility.is_empty() {
            bail!("noise.visibility: at least one value is required");
        }
        for &v in &self.visibility {
            self.experiment(v, self.seed)?;
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses JSON; relative kernel paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).context("invalid config")?;
        if let Some(BathSpec::Tabulated { file, .. }) = &mut cfg.bath {
            if file.is_relative() {
                *file = base_dir.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bath) = &self.bath {
            match bath {
                BathSpec::Lorentzian { gamma, tau_c } => {
                    BathKernel::lorentzian(*gamma, *tau_c).context("bath.lorentzian")?;
                }
                BathSpec::Tabulated { file, gamma } => {
                    if !file.exists() {
                        bail!("bath.tabulated.file: {} does not exist", file.display());
                    }
                    if let Some(g) = gamma {
                        if !(*g > 0.0 && g.is_finite()) {
                            bail!("bath.tabulated.gamma: must be positive, got {g}");
                        }
                    }
                }
            }
        }
        if let Some(state) = &self.state {
            state.build().context("state")?;
        }
        if let Some(schemes) = &self.schemes {
            if schemes.is_empty() {
                bail!("schemes: at least one scheme is required");
            }
        }
        if let Some(y) = self.y {
            Outcome::from_sign(y).context("y")?;
        }
        if let Some(grid) = &self.grid {
            grid.validate()?;
            let tabulated_without_gamma =
                matches!(self.bath, Some(BathSpec::Tabulated { gamma: None, .. }));
            if tabulated_without_gamma && grid.units == Units::GammaT {
                bail!("grid.units: \"gamma_t\" needs bath.tabulated.gamma; use \"absolute\"");
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        if self.threads == Some(0) {
            bail!("threads: must be at least 1");
        }
        Ok(())
    }

    /// Compact JSON of the physics parameters, echoed into outputs.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

impl StateSpec {
    pub fn population(p: f64) -> Self {
        Self {
            p: Some(p),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<InitialState> {
        match (self.p, self.a, self.b) {
            (Some(p), None, None) => Ok(InitialState::from_excited_population(p)?),
            (None, Some(a), Some(b)) => Ok(InitialState::new(
                Complex64::new(a[0], a[1]),
                Complex64::new(b[0], b[1]),
            )?),
            _ => bail!("give either \"p\" or both \"a\" and \"b\""),
        }
    }
}

impl BathSpec {
    pub fn kernel(&self) -> Result<BathKernel> {
        match self {
            BathSpec::Lorentzian { gamma, tau_c } => Ok(BathKernel::lorentzian(*gamma, *tau_c)?),
            BathSpec::Tabulated { file, .. } => Ok(BathKernel::from_csv_path(file)?),
        }
    }

    /// Rate setting the `gamma_t` time unit.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            BathSpec::Lorentzian { gamma, .. } => Some(*gamma),
            BathSpec::Tabulated { gamma, .. } => *gamma,
        }
    }
}
