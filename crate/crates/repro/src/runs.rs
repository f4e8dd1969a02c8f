//! Dataset producers behind each subcommand.

use std::io::Write;

use anyhow::{bail, Context, Result};
use cpf_core::channel::{angles_from_propagator, simulate_sequence};
use cpf_core::cpf::{build_table, cpf_closed_form, cpf_from_table};
use cpf_core::experiment::run_noise_study;
use cpf_core::propagator::{
    compute_two_time_strided, default_step, rates_from_g, solve_volterra, PropagatorGrid,
    SolverWarning, StepPolicy,
};
use cpf_core::{BathKernel, Dynamics, Error, InitialState, MeasurementScheme, Outcome};
use rayon::prelude::*;

use crate::config::{
    BathSpec, BudgetName, GridSpec, NoiseSpec, RunConfig, SchemeName, StateSpec, Units,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table with a `#`-prefixed provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: &'static str,
    pub config_echo: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Dataset {
    pub fn write(&self, out: impl Write) -> Result<()> {
        let mut out = out;
        writeln!(out, "# cpf-repro {VERSION}")?;
        writeln!(out, "# command: {}", self.name.replace('_', "-"))?;
        writeln!(out, "# config: {}", self.config_echo)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf)?)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }
}

/// Empty cell for undefined values; no negative zero.
fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == 0.0 {
        "0".to_string()
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Closed-form and table-path correlation; `None` where conditioning is
/// impossible.
fn both_paths(
    scheme: MeasurementScheme,
    state: &InitialState,
    dynamics: &Dynamics,
    t: f64,
    tau: f64,
    y: Outcome,
) -> Result<(Option<f64>, Option<f64>)> {
    let s = dynamics.sample(t, tau)?;
    let closed = match cpf_closed_form(scheme, state, &s, y) {
        Ok(c) => Some(c.value),
        Err(Error::ConditioningImpossible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let table = match build_table(scheme, state, &s, y) {
        Ok(t) => Some(cpf_from_table(&t)?.value),
        Err(Error::ConditioningImpossible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((closed, table))
}

fn install<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

/// One curve of the figure: scheme, `γτ_c`, excited population.
pub const FIGURE2_CURVES: [(MeasurementScheme, f64, f64); 6] = [
    (MeasurementScheme::Zzz, 1.0, 0.8),
    (MeasurementScheme::Zzz, 0.5, 0.8),
    (MeasurementScheme::Xzx, 0.5, 1.0),
    (MeasurementScheme::Xzx, 1.0, 1.0),
    (MeasurementScheme::Zzz, 0.01, 0.8),
    (MeasurementScheme::Xzx, 0.01, 1.0),
];

/// Equal-time correlations conditioned on `y = -1` for the fixed set of
/// curves; only the grid is taken from the config.
pub fn figure2(cfg: &RunConfig) -> Result<Dataset> {
    let grid = cfg.grid.clone().unwrap_or(GridSpec::new(5.0, 50));
    if grid.units != Units::GammaT || !grid.equal_times {
        bail!("grid: figure2 uses equal times in gamma_t units");
    }
    let echo = RunConfig {
        grid: Some(grid.clone()),
        ..RunConfig::default()
    };
    let y = Outcome::Minus;
    let jobs: Vec<_> = FIGURE2_CURVES
        .iter()
        .flat_map(|&c| grid.times().into_iter().map(move |t| (c, t)))
        .collect();
    let rows = install(cfg.threads, || {
        jobs.par_iter()
            .map(|&((scheme, gtc, p), t)| {
                let state = InitialState::from_excited_population(p)?;
                let dynamics = Dynamics::lorentzian(1.0, gtc)?;
                let (closed, table) = both_paths(scheme, &state, &dynamics, t, t, y)?;
                Ok(vec![
                    scheme.to_string(),
                    y.to_string(),
                    num(p),
                    num(gtc),
                    num(t),
                    num(t),
                    opt(closed),
                    opt(table),
                ])
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Dataset {
        name: "figure2",
        config_echo: echo.echo(),
        columns: vec!["scheme", "y", "p", "gamma_tau_c", "t", "tau", "cpf_closed", "cpf_table"],
        rows,
    })
}

/// One noise-study block: scheme, `γτ_c`, population, conditioning outcome,
/// visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBlock {
    pub scheme: MeasurementScheme,
    pub gamma_tau_c: f64,
    pub p: f64,
    pub y: Outcome,
    pub visibility: f64,
}

pub fn default_noise() -> NoiseSpec {
    NoiseSpec {
        total_counts: 1e4,
        visibility: vec![1.0, 0.9, 0.8],
        replicas: 200,
        seed: 1,
        budget: BudgetName::PerSweep,
    }
}

/// Coherent scheme at `γτ_c = 1` for every visibility, then the
/// near-Markovian ẑ-ẑ-ẑ case and the excited-conditioning case.
pub fn appendix_d_blocks(noise: &NoiseSpec) -> Vec<NoiseBlock> {
    let mut blocks: Vec<NoiseBlock> = noise
        .visibility
        .iter()
        .map(|&v| NoiseBlock {
            scheme: MeasurementScheme::Xzx,
            gamma_tau_c: 1.0,
            p: 1.0,
            y: Outcome::Minus,
            visibility: v,
        })
        .collect();
    blocks.push(NoiseBlock {
        scheme: MeasurementScheme::Zzz,
        gamma_tau_c: 0.1,
        p: 0.8,
        y: Outcome::Minus,
        visibility: 1.0,
    });
    blocks.push(NoiseBlock {
        scheme: MeasurementScheme::Xzx,
        gamma_tau_c: 1.0,
        p: 1.0,
        y: Outcome::Plus,
        visibility: 1.0,
    });
    blocks
}

pub fn appendix_d(cfg: &RunConfig) -> Result<Dataset> {
    let grid = cfg.grid.clone().unwrap_or(GridSpec::new(5.0, 20));
    if grid.units != Units::GammaT || !grid.equal_times {
        bail!("grid: appendix-d uses equal times in gamma_t units");
    }
    let noise = cfg.noise.clone().unwrap_or_else(default_noise);
    let echo = RunConfig {
        grid: Some(grid.clone()),
        noise: Some(noise.clone()),
        ..RunConfig::default()
    };
    let points: Vec<(f64, f64)> = grid.times().into_iter().map(|t| (t, t)).collect();
    let mut rows = Vec::new();
    for (i, block) in appendix_d_blocks(&noise).into_iter().enumerate() {
        let seed = noise.seed.wrapping_add(i as u64);
        let exp = noise.experiment(block.visibility, seed)?;
        let state = InitialState::from_excited_population(block.p)?;
        let dynamics = Dynamics::lorentzian(1.0, block.gamma_tau_c)?;
        let study = install(cfg.threads, || {
            run_noise_study(&state, block.scheme, block.y, &dynamics, &points, &exp)
        })??;
        for pt in study {
            rows.push(vec![
                block.scheme.to_string(),
                block.y.to_string(),
                num(block.p),
                num(block.gamma_tau_c),
                num(noise.total_counts),
                num(block.visibility),
                num(pt.t),
                num(pt.ideal),
                num(pt.degraded),
                num(pt.mc_mean),
                num(pt.mc_std),
                pt.n_valid.to_string(),
                seed.to_string(),
            ]);
        }
    }
    Ok(Dataset {
        name: "appendix_d",
        config_echo: echo.echo(),
        columns: vec![
            "scheme",
            "y",
            "p",
            "gamma_tau_c",
            "N",
            "V",
            "t",
            "ideal",
            "degraded_ideal",
            "mc_mean",
            "mc_std",
            "n_replicas",
            "seed",
        ],
        rows,
    })
}

/// Solver step that resolves the kernel and divides the output step.
fn solver_stride(kernel: &BathKernel, out_step: f64) -> usize {
    let target = match kernel {
        BathKernel::Lorentzian { gamma, tau_c } => default_step(*gamma, *tau_c),
        BathKernel::Tabulated { times, .. } => times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min),
    };
    ((out_step / target) - 1e-9).ceil().max(1.0) as usize
}

/// Physical time per unit of the configured axis.
fn time_unit(grid: &GridSpec, bath: &BathSpec) -> Result<f64> {
    match grid.units {
        Units::Absolute => Ok(1.0),
        Units::GammaT => match bath.gamma() {
            Some(g) => Ok(1.0 / g),
            None => bail!("grid.units: \"gamma_t\" needs a decay rate for the bath"),
        },
    }
}

/// Propagator values on the configured grid: closed forms for Lorentzian
/// baths, solved grids otherwise.
struct Prepared {
    dynamics: Dynamics,
    propagator: PropagatorGrid,
    stride: usize,
    unit: f64,
}

fn prepare(bath: &BathSpec, grid: &GridSpec, with_two_time: bool) -> Result<Prepared> {
    let kernel = bath.kernel()?;
    let unit = time_unit(grid, bath)?;
    let out_step = grid.step() * unit;
    let stride = solver_stride(&kernel, out_step);
    let h = out_step / stride as f64;
    let tau_max = match (grid.equal_times, grid.tau) {
        (false, Some(tau)) => tau * unit,
        _ => grid.t_max * unit,
    };
    let t_max = grid.t_max * unit;
    let propagator = solve_volterra(&kernel, t_max.max(tau_max), h, StepPolicy::Warn)
        .context("solving for G(t)")?;
    let dynamics = match (&kernel, with_two_time) {
        (BathKernel::Lorentzian { gamma, tau_c }, _) => Dynamics::lorentzian(*gamma, *tau_c)?,
        (BathKernel::Tabulated { .. }, true) => {
            let tau_stride = match (grid.equal_times, grid.tau) {
                (false, Some(_)) => {
                    let n = tau_max / h;
                    if (n - n.round()).abs() > 1e-6 {
                        bail!("grid.tau: must be a multiple of the solver step {h} for tabulated baths");
                    }
                    (n.round() as usize).max(1)
                }
                _ => stride,
            };
            let two_time =
                compute_two_time_strided(&kernel, &propagator, t_max, tau_max, stride, tau_stride)
                    .context("computing G(t,τ)")?;
            Dynamics::Numerical {
                propagator: propagator.clone(),
                two_time,
            }
        }
        (BathKernel::Tabulated { .. }, false) => bail!("internal: two-time grid required"),
    };
    Ok(Prepared {
        dynamics,
        propagator,
        stride,
        unit,
    })
}

/// Rates, populations and equal-time correlations side by side.
pub fn witness(cfg: &RunConfig) -> Result<Dataset> {
    let bath = cfg
        .bath
        .clone()
        .unwrap_or(BathSpec::Lorentzian { gamma: 1.0, tau_c: 0.5 });
    let state_spec = cfg.state.clone().unwrap_or(StateSpec::population(0.8));
    let grid = cfg.grid.clone().unwrap_or(GridSpec::new(5.0, 50));
    if !grid.equal_times {
        bail!("grid.equal_times: witness uses equal times");
    }
    let echo = RunConfig {
        bath: Some(bath.clone()),
        state: Some(state_spec.clone()),
        grid: Some(grid.clone()),
        ..RunConfig::default()
    };
    let state = state_spec.build()?;
    let prep = prepare(&bath, &grid, true)?;
    let values = prep.propagator.values();

    let (rates, cutoff, note) = match rates_from_g(&prep.propagator) {
        Ok(r) => (Some(r), values.len(), None),
        Err(Error::ZeroCrossing { index, t }) => {
            let truncated = PropagatorGrid::from_samples(prep.propagator.t_step(), values[..index].to_vec());
            let rates = truncated.ok().and_then(|g| rates_from_g(&g).ok());
            let axis_t = t / prep.unit;
            (rates, index, Some(format!("G(t) crosses zero at t={axis_t}; grid truncated")))
        }
        Err(e) => return Err(e.into()),
    };
    let coarse = prep
        .propagator
        .warnings()
        .iter()
        .map(|w| match w {
            SolverWarning::CoarseStep { t_step, limit } => {
                format!("solver step {t_step} exceeds tau_c/4 = {limit}")
            }
        })
        .next();

    let mut rows = Vec::new();
    let times = grid.times();
    let last_row = times
        .iter()
        .enumerate()
        .filter(|(i, _)| i * prep.stride < cutoff)
        .count();
    for (i, &t) in times.iter().enumerate().take(last_row) {
        let node = i * prep.stride;
        let phys = t * prep.unit;
        let corr = |scheme| -> Result<Option<f64>> {
            Ok(both_paths(scheme, &state, &prep.dynamics, phys, phys, Outcome::Minus)?.0)
        };
        let (gamma_t, omega_t) = match &rates {
            Some(r) if node < r.gamma_t.len() => (Some(r.gamma_t[node]), Some(r.omega_t[node])),
            _ => (None, None),
        };
        let mut warning = coarse.clone().unwrap_or_default();
        if i + 1 == last_row {
            if let Some(n) = &note {
                warning = n.clone();
            }
        }
        rows.push(vec![
            num(t),
            opt(gamma_t),
            opt(omega_t),
            num(prep.dynamics.sample(phys, phys)?.g_t.norm_sqr()),
            opt(corr(MeasurementScheme::Zzz)?),
            opt(corr(MeasurementScheme::Xzx)?),
            warning,
        ]);
    }
    Ok(Dataset {
        name: "witness",
        config_echo: echo.echo(),
        columns: vec!["t", "gamma_t", "omega_t", "g_abs2", "cpf_zzz", "cpf_xzx", "warning"],
        rows,
    })
}

/// Every configured scheme on the configured grid, with the state-vector
/// enumeration alongside the two analytic paths.
pub fn sweep(cfg: &RunConfig) -> Result<Dataset> {
    let bath = cfg
        .bath
        .clone()
        .unwrap_or(BathSpec::Lorentzian { gamma: 1.0, tau_c: 1.0 });
    let state_spec = cfg.state.clone().unwrap_or(StateSpec::population(0.8));
    let schemes = cfg
        .schemes
        .clone()
        .unwrap_or(vec![SchemeName::Zzz, SchemeName::Xzx, SchemeName::Yzy]);
    let y_sign = cfg.y.unwrap_or(-1);
    let grid = cfg.grid.clone().unwrap_or(GridSpec::new(5.0, 50));
    let echo = RunConfig {
        bath: Some(bath.clone()),
        state: Some(state_spec.clone()),
        schemes: Some(schemes.clone()),
        y: Some(y_sign),
        grid: Some(grid.clone()),
        ..RunConfig::default()
    };
    let state = state_spec.build()?;
    let y = Outcome::from_sign(y_sign)?;
    let prep = prepare(&bath, &grid, true)?;
    let times = grid.times();
    let points: Vec<(f64, f64)> = match (grid.equal_times, grid.tau) {
        (true, _) => times.iter().map(|&t| (t, t)).collect(),
        (false, Some(tau)) => times.iter().map(|&t| (t, tau)).collect(),
        (false, None) => times
            .iter()
            .flat_map(|&t| times.iter().map(move |&tau| (t, tau)))
            .collect(),
    };
    let jobs: Vec<_> = schemes
        .iter()
        .flat_map(|&s| points.iter().map(move |&p| (MeasurementScheme::from(s), p)))
        .collect();
    let rows = install(cfg.threads, || {
        jobs.par_iter()
            .map(|&(scheme, (t, tau))| {
                let (pt, ptau) = (t * prep.unit, tau * prep.unit);
                let s = prep.dynamics.sample(pt, ptau)?;
                let (closed, table) = both_paths(scheme, &state, &prep.dynamics, pt, ptau, y)?;
                let oracle = match angles_from_propagator(s.g_t, s.g_tau, s.g_two) {
                    Ok(angles) => match simulate_sequence(&state, scheme, &angles)?.conditional_table(y) {
                        Ok(t) => Some(cpf_from_table(&t)?.value),
                        Err(_) => None,
                    },
                    Err(Error::UnsupportedRegime { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                Ok(vec![
                    scheme.to_string(),
                    y.to_string(),
                    num(t),
                    num(tau),
                    num(s.g_t.re),
                    num(s.g_t.im),
                    num(s.g_two.re),
                    num(s.g_two.im),
                    opt(closed),
                    opt(table),
                    opt(oracle),
                ])
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Dataset {
        name: "sweep",
        config_echo: echo.echo(),
        columns: vec![
            "scheme", "y", "t", "tau", "g_t_re", "g_t_im", "g_two_re", "g_two_im", "cpf_closed",
            "cpf_table", "cpf_oracle",
        ],
        rows,
    })
}
