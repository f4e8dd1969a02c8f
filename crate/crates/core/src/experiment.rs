//! Finite-statistics model of the coincidence-count estimator.
//!
//! Each conditional cell is drawn independently from a Poisson law and the
//! correlation is recomputed from the normalised counts. Reduced
//! interferometer visibility scales the interference term of the coherent
//! schemes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::cpf::{
    build_table, conditioning_probability, cpf_from_table, CpfResult, InitialState,
    MeasurementScheme, Outcome, ProbabilityTable,
};
use crate::error::{Error, Result};
use crate::propagator::Dynamics;

/// How the expected number of coincidences is distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountBudget {
    /// `total_counts` is shared by all points of a sweep.
    #[default]
    PerSweep,
    /// Every `(t, τ)` point gets `total_counts`.
    PerSetting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub total_counts: f64,
    pub visibility: f64,
    pub replicas: usize,
    pub seed: u64,
    pub budget: CountBudget,
}

impl ExperimentConfig {
    pub fn new(total_counts: f64, visibility: f64, replicas: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            total_counts,
            visibility,
            replicas,
            seed,
            budget: CountBudget::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_budget(mut self, budget: CountBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_counts > 0.0 && self.total_counts.is_finite()) {
            return Err(Error::invalid(
                "total_counts",
                format!("must be positive, got {}", self.total_counts),
            ));
        }
        check_visibility(self.visibility)?;
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "at least one replica is required"));
        }
        Ok(())
    }

    /// Expected coincidences at one point of a sweep with `points` points,
    /// before conditioning.
    pub fn counts_per_point(&self, points: usize) -> f64 {
        match self.budget {
            CountBudget::PerSweep => self.total_counts / points.max(1) as f64,
            CountBudget::PerSetting => self.total_counts,
        }
    }
}

fn check_visibility(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid("visibility", format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Coincidence counts `N_{z,x}` for one conditioning outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountsTable {
    pub scheme: MeasurementScheme,
    pub y: Outcome,
    /// `counts[z][x]`, index 0 for +1.
    pub counts: [[u64; 2]; 2],
}

impl CountsTable {
    pub fn get(&self, z: Outcome, x: Outcome) -> u64 {
        self.counts[z.index()][x.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Scales the interference term of a coherent-scheme table by `v`.
///
/// The incoherent ẑ-ẑ-ẑ scheme is returned unchanged.
pub fn apply_visibility(table: &ProbabilityTable, v: f64) -> Result<ProbabilityTable> {
    check_visibility(v)?;
    if !table.scheme().is_coherent() {
        return Ok(*table);
    }
    let mut e = table.entries();
    for x in Outcome::BOTH {
        let half = 0.5 * table.past_marginal(x);
        for z in Outcome::BOTH {
            let p = table.get(z, x);
            e[z.index()][x.index()] = half + v * (p - half);
        }
    }
    ProbabilityTable::new(table.scheme(), table.y(), e)
}

/// Independent Poisson draw per cell with mean `expected_total · P(z,x|y)`.
pub fn sample_counts<R: Rng + ?Sized>(
    table: &ProbabilityTable,
    expected_total: f64,
    rng: &mut R,
) -> CountsTable {
    let mut counts = [[0u64; 2]; 2];
    for z in Outcome::BOTH {
        for x in Outcome::BOTH {
            let mean = expected_total * table.get(z, x);
            counts[z.index()][x.index()] = if mean > 0.0 {
                Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
            } else {
                0
            };
        }
    }
    CountsTable {
        scheme: table.scheme(),
        y: table.y(),
        counts,
    }
}

/// Correlation estimated from normalised counts.
pub fn estimate_cpf(counts: &CountsTable) -> Result<CpfResult> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::NoData);
    }
    let mut e = [[0.0; 2]; 2];
    for z in Outcome::BOTH {
        for x in Outcome::BOTH {
            e[z.index()][x.index()] = counts.get(z, x) as f64 / total as f64;
        }
    }
    cpf_from_table(&ProbabilityTable::new(counts.scheme, counts.y, e)?)
}

/// Generator for one replica at one point; independent of execution order.
pub fn replica_rng(seed: u64, point: usize, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | replica as u64);
    rng
}

/// Ideal and Monte Carlo statistics at one sweep point.
///
/// `ideal` is NaN where the conditioning outcome is impossible; `mc_mean`
/// and `mc_std` are NaN when fewer than one (two) replicas produced data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePoint {
    pub t: f64,
    pub tau: f64,
    pub ideal: f64,
    pub degraded: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    /// Replicas with at least one count.
    pub n_valid: usize,
}

impl NoisePoint {
    /// Some replicas recorded no counts at all.
    pub fn flagged(&self, replicas: usize) -> bool {
        self.n_valid < replicas
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Replica estimates at every `(t, τ)` point.
pub fn run_noise_study(
    state: &InitialState,
    scheme: MeasurementScheme,
    y: Outcome,
    dynamics: &Dynamics,
    points: &[(f64, f64)],
    cfg: &ExperimentConfig,
) -> Result<Vec<NoisePoint>> {
    cfg.validate()?;
    state.validate()?;
    let per_point = cfg.counts_per_point(points.len());
    points
        .par_iter()
        .enumerate()
        .map(|(ip, &(t, tau))| {
            let sample = dynamics.sample(t, tau)?;
            let table = match build_table(scheme, state, &sample, y) {
                Ok(table) => table,
                Err(Error::ConditioningImpossible { .. }) => {
                    return Ok(NoisePoint {
                        t,
                        tau,
                        ideal: f64::NAN,
                        degraded: f64::NAN,
                        mc_mean: f64::NAN,
                        mc_std: f64::NAN,
                        n_valid: 0,
                    })
                }
                Err(e) => return Err(e),
            };
            let degraded = apply_visibility(&table, cfg.visibility)?;
            let expected = per_point * conditioning_probability(scheme, state, sample.g_t, y);
            let estimates: Vec<f64> = (0..cfg.replicas)
                .filter_map(|r| {
                    let mut rng = replica_rng(cfg.seed, ip, r);
                    estimate_cpf(&sample_counts(&degraded, expected, &mut rng))
                        .ok()
                        .map(|c| c.value)
                })
                .collect();
            let (mc_mean, mc_std) = mean_std(&estimates);
            Ok(NoisePoint {
                t,
                tau,
                ideal: cpf_from_table(&table)?.value,
                degraded: cpf_from_table(&degraded)?.value,
                mc_mean,
                mc_std,
                n_valid: estimates.len(),
            })
        })
        .collect()
}
