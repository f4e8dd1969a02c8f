//! Wave-vector propagator `G(t)`, the two-time convolution `G(t,τ)`, the
//! reduced density matrix and the time-local rates.
//!
//! `G` solves `dG/dt = -∫₀ᵗ f(t-s) G(s) ds` with `G(0) = 1`. The solver
//! integrates the derivative with the trapezoidal rule and evaluates the
//! memory integral with trapezoidal product weights on the same grid, which
//! makes each step a scalar implicit update and the whole scheme second
//! order. `G(t,τ)` is a pure double integral of already-known quantities and
//! reuses the solved grid.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cpf::InitialState;
use crate::error::{Error, Result};
use crate::kernel::BathKernel;

/// Relative tolerance for deciding that a time lies on a grid node.
const GRID_TOL: f64 = 1e-7;

/// What to do when the step does not resolve the kernel (`t_step > τ_c/4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepPolicy {
    #[default]
    Warn,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverWarning {
    CoarseStep { t_step: f64, limit: f64 },
}

/// `G(t_i)` at `t_i = i·t_step`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorGrid {
    t_step: f64,
    values: Vec<Complex64>,
    warnings: Vec<SolverWarning>,
}

impl PropagatorGrid {
    /// Wraps externally computed samples; `values[0]` must be exactly 1.
    pub fn from_samples(t_step: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(t_step > 0.0) {
            return Err(Error::invalid("t_step", format!("must be positive, got {t_step}")));
        }
        if values.len() < 2 {
            return Err(Error::invalid("values", "at least 2 samples are required"));
        }
        if values[0] != Complex64::new(1.0, 0.0) {
            return Err(Error::invalid("values", "G(0) must equal 1"));
        }
        if let Some(i) = values.iter().position(|v| v.norm() > 1.0 + 1e-9) {
            return Err(Error::invalid(
                "values",
                format!("|G| = {} > 1 at index {i}", values[i].norm()),
            ));
        }
        Ok(Self {
            t_step,
            values,
            warnings: Vec::new(),
        })
    }

    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn warnings(&self) -> &[SolverWarning] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.t_step
    }

    pub fn max_time(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Grid index of `t`, which must be a node.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        grid_index(t, self.t_step, self.values.len() - 1)
    }

    pub fn at(&self, t: f64) -> Result<Complex64> {
        Ok(self.values[self.index_of(t)?])
    }

    /// Long-format CSV: `t,re,im`.
    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "re", "im"])?;
        for (i, g) in self.values.iter().enumerate() {
            w.write_record([
                self.time(i).to_string(),
                g.re.to_string(),
                g.im.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn grid_index(t: f64, step: f64, last: usize) -> Result<usize> {
    let x = t / step;
    let i = x.round();
    if t < 0.0 || (x - i).abs() > GRID_TOL * x.max(1.0) || i as usize > last {
        return Err(Error::GridMismatch(format!(
            "t = {t} is not a node of the grid with step {step} and {} points",
            last + 1
        )));
    }
    Ok(i as usize)
}

/// Number of steps of size `step` needed to reach `t_max`.
fn steps_to(t_max: f64, step: f64) -> usize {
    let x = t_max / step;
    if (x - x.round()).abs() <= GRID_TOL * x.max(1.0) {
        x.round() as usize
    } else {
        x.ceil() as usize
    }
}

/// Default step resolving both the kernel and the decay: `min(τ_c, 1/γ)/100`.
pub fn default_step(gamma: f64, tau_c: f64) -> f64 {
    tau_c.min(1.0 / gamma) / 100.0
}

pub fn solve_volterra(
    kernel: &BathKernel,
    t_max: f64,
    t_step: f64,
    policy: StepPolicy,
) -> Result<PropagatorGrid> {
    if !(t_step > 0.0 && t_step.is_finite()) {
        return Err(Error::invalid("t_step", format!("must be positive, got {t_step}")));
    }
    if !(t_max >= t_step) {
        return Err(Error::invalid("t_max", format!("must be at least t_step, got {t_max}")));
    }
    let mut warnings = Vec::new();
    if let BathKernel::Lorentzian { tau_c, .. } = kernel {
        let limit = tau_c / 4.0;
        if t_step > limit {
            match policy {
                StepPolicy::Reject => return Err(Error::StepTooCoarse { t_step, limit }),
                StepPolicy::Warn => warnings.push(SolverWarning::CoarseStep { t_step, limit }),
            }
        }
    }

    let n = steps_to(t_max, t_step);
    let h = t_step;
    let f: Vec<Complex64> = (0..=n)
        .map(|k| kernel.eval(k as f64 * h))
        .collect::<Result<_>>()?;

    let mut g = vec![Complex64::new(0.0, 0.0); n + 1];
    g[0] = Complex64::new(1.0, 0.0);
    // F_k = -∫₀^{t_k} f(t_k - s) G(s) ds, trapezoid on the grid
    let mut deriv = Complex64::new(0.0, 0.0);
    let implicit = 1.0 + 0.25 * h * h * f[0];
    for m in 1..=n {
        // memory integral at t_m without its G_m endpoint
        let mut known = 0.5 * f[m] * g[0];
        for j in 1..m {
            known += f[m - j] * g[j];
        }
        let known = -h * known;
        g[m] = (g[m - 1] + 0.5 * h * (deriv + known)) / implicit;
        deriv = known - 0.5 * h * f[0] * g[m];
    }

    Ok(PropagatorGrid {
        t_step,
        values: g,
        warnings,
    })
}

/// Closed-form propagator for the Lorentzian kernel.
pub fn lorentzian_g(gamma: f64, tau_c: f64, t: f64) -> Result<Complex64> {
    check_lorentzian(gamma, tau_c)?;
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("must be non-negative, got {t}")));
    }
    let chi2 = 1.0 - 2.0 * gamma * tau_c;
    let x = t / (2.0 * tau_c);
    let value = if chi2.abs() < 1e-10 {
        (-x).exp() * (1.0 + x)
    } else if chi2 > 0.0 {
        let chi = chi2.sqrt();
        let slow = (-(1.0 - chi) * x).exp();
        let fast = (-(1.0 + chi) * x).exp();
        0.5 * (slow + fast) + 0.5 * (slow - fast) / chi
    } else {
        let w = (-chi2).sqrt();
        (-x).exp() * ((w * x).cos() + (w * x).sin() / w)
    };
    Ok(Complex64::new(value, 0.0))
}

/// Closed-form `G(t,τ)` for the Lorentzian kernel.
pub fn lorentzian_g_two_time(gamma: f64, tau_c: f64, t: f64, tau: f64) -> Result<Complex64> {
    check_lorentzian(gamma, tau_c)?;
    if !(t >= 0.0 && tau >= 0.0) {
        return Err(Error::invalid("t", format!("times must be non-negative, got ({t}, {tau})")));
    }
    let chi2 = 1.0 - 2.0 * gamma * tau_c;
    let x = t / (2.0 * tau_c);
    let y = tau / (2.0 * tau_c);
    let value = if chi2.abs() < 1e-10 {
        gamma / (2.0 * tau_c) * t * tau * (-(x + y)).exp()
    } else if chi2 > 0.0 {
        let chi = chi2.sqrt();
        // e^{-x} sinh(χx) without overflow
        let damped_sinh = |u: f64| 0.5 * ((-(1.0 - chi) * u).exp() - (-(1.0 + chi) * u).exp());
        2.0 * gamma * tau_c / chi2 * damped_sinh(x) * damped_sinh(y)
    } else {
        let w2 = -chi2;
        let w = w2.sqrt();
        2.0 * gamma * tau_c / w2 * (-(x + y)).exp() * (w * x).sin() * (w * y).sin()
    };
    Ok(Complex64::new(value, 0.0))
}

fn check_lorentzian(gamma: f64, tau_c: f64) -> Result<()> {
    BathKernel::lorentzian(gamma, tau_c).map(|_| ())
}

/// `G(t_i, τ_j)` on a product grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeGrid {
    t_step: f64,
    tau_step: f64,
    n_t: usize,
    n_tau: usize,
    values: Vec<Complex64>,
}

impl TwoTimeGrid {
    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn tau_step(&self) -> f64 {
        self.tau_step
    }

    /// Number of `(t, τ)` nodes along each axis.
    pub fn shape(&self) -> (usize, usize) {
        (self.n_t, self.n_tau)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.n_tau + j]
    }

    pub fn at(&self, t: f64, tau: f64) -> Result<Complex64> {
        let i = grid_index(t, self.t_step, self.n_t - 1)?;
        let j = grid_index(tau, self.tau_step, self.n_tau - 1)?;
        Ok(self.get(i, j))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, Complex64)> + '_ {
        (0..self.n_t).flat_map(move |i| {
            (0..self.n_tau).map(move |j| {
                (i as f64 * self.t_step, j as f64 * self.tau_step, self.get(i, j))
            })
        })
    }

    /// Long-format CSV: `t,tau,re,im`.
    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "tau", "re", "im"])?;
        for (t, tau, g) in self.iter() {
            w.write_record([t.to_string(), tau.to_string(), g.re.to_string(), g.im.to_string()])?;
        }
        w.flush()
    }
}

pub fn compute_two_time(
    kernel: &BathKernel,
    g: &PropagatorGrid,
    t_max: f64,
    tau_max: f64,
) -> Result<TwoTimeGrid> {
    compute_two_time_strided(kernel, g, t_max, tau_max, 1, 1)
}

/// Double convolution `G(t,τ) = ∫₀ᵗ∫₀^τ f(τ'+t') G(t-t') G(τ-τ') dτ' dt'`
/// by tensor-product trapezoid at the propagator's step, reported on every
/// `t_stride`-th / `tau_stride`-th node.
pub fn compute_two_time_strided(
    kernel: &BathKernel,
    g: &PropagatorGrid,
    t_max: f64,
    tau_max: f64,
    t_stride: usize,
    tau_stride: usize,
) -> Result<TwoTimeGrid> {
    let h = g.t_step();
    let last = g.len() - 1;
    let n_t = grid_index(t_max, h, last)
        .map_err(|_| Error::GridMismatch(format!("t_max = {t_max} is not a node of the propagator grid (step {h}, max {})", g.max_time())))?;
    let n_tau = grid_index(tau_max, h, last)
        .map_err(|_| Error::GridMismatch(format!("tau_max = {tau_max} is not a node of the propagator grid (step {h}, max {})", g.max_time())))?;
    for (name, stride, n) in [("t", t_stride, n_t), ("tau", tau_stride, n_tau)] {
        if stride == 0 || n % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "{name} stride {stride} does not divide {n} steps"
            )));
        }
    }
    let gv = g.values();
    let f: Vec<Complex64> = (0..=n_t + n_tau)
        .map(|k| kernel.eval(k as f64 * h))
        .collect::<Result<_>>()?;

    let trap = |k: usize, n: usize| if k == 0 || k == n { 0.5 } else { 1.0 };

    // inner[jo][i'] = h Σ_{j'≤j} w f_{i'+j'} G_{j-j'}
    let inner: Vec<Vec<Complex64>> = (0..=n_tau / tau_stride)
        .into_par_iter()
        .map(|jo| {
            let j = jo * tau_stride;
            (0..=n_t)
                .map(|ip| {
                    if j == 0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for jp in 0..=j {
                        acc += trap(jp, j) * f[ip + jp] * gv[j - jp];
                    }
                    h * acc
                })
                .collect()
        })
        .collect();

    let rows = n_t / t_stride + 1;
    let cols = n_tau / tau_stride + 1;
    let values: Vec<Complex64> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|io| {
            let i = io * t_stride;
            let inner = &inner;
            (0..cols).map(move |jo| {
                if i == 0 {
                    return Complex64::new(0.0, 0.0);
                }
                let row = &inner[jo];
                let mut acc = Complex64::new(0.0, 0.0);
                for ip in 0..=i {
                    acc += trap(ip, i) * row[ip] * gv[i - ip];
                }
                h * acc
            })
        })
        .collect();

    Ok(TwoTimeGrid {
        t_step: h * t_stride as f64,
        tau_step: h * tau_stride as f64,
        n_t: rows,
        n_tau: cols,
        values,
    })
}

/// Qubit density matrix in the `{|↑⟩, |↓⟩}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    pub uu: Complex64,
    pub ud: Complex64,
    pub du: Complex64,
    pub dd: Complex64,
}

impl DensityMatrix {
    pub fn trace(&self) -> Complex64 {
        self.uu + self.dd
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.uu.im.abs() <= tol && self.dd.im.abs() <= tol && (self.ud - self.du.conj()).norm() <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.uu.re + self.dd.re);
        let half_gap = (0.25 * (self.uu.re - self.dd.re).powi(2) + self.ud.norm_sqr()).sqrt();
        [mean - half_gap, mean + half_gap]
    }
}

/// Reduced system state for an initial `(a|↑⟩ + b|↓⟩)⊗|0⟩` after the
/// propagator has reached `g`.
pub fn rho_t(state: &InitialState, g: Complex64) -> Result<DensityMatrix> {
    if g.norm() > 1.0 + 1e-9 {
        return Err(Error::invalid("g", format!("|G| = {} exceeds 1", g.norm())));
    }
    state.validate()?;
    let (a, b) = (state.a(), state.b());
    let excited = a.norm_sqr() * g.norm_sqr();
    let coherence = a * b.conj() * g;
    Ok(DensityMatrix {
        uu: Complex64::new(excited, 0.0),
        ud: coherence,
        du: coherence.conj(),
        dd: Complex64::new(1.0 - excited, 0.0),
    })
}

/// `γ(t) + iω(t) = -d/dt ln G(t)` sampled on the propagator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunctions {
    pub t_step: f64,
    pub gamma_t: Vec<f64>,
    pub omega_t: Vec<f64>,
}

impl RateFunctions {
    /// `exp(-∫₀ᵗ (γ + iω) ds)` with cumulative trapezoid.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.gamma_t.len());
        let mut integral = Complex64::new(0.0, 0.0);
        out.push(Complex64::new(1.0, 0.0));
        for i in 1..self.gamma_t.len() {
            let prev = Complex64::new(self.gamma_t[i - 1], self.omega_t[i - 1]);
            let cur = Complex64::new(self.gamma_t[i], self.omega_t[i]);
            integral += 0.5 * self.t_step * (prev + cur);
            out.push((-integral).exp());
        }
        out
    }
}

/// Central differences of `-ln G` (second-order one-sided at the ends).
///
/// Fails at the first node where `G` vanishes or a real-valued `G`
/// changes sign.
pub fn rates_from_g(g: &PropagatorGrid) -> Result<RateFunctions> {
    let v = g.values();
    if v.len() < 3 {
        return Err(Error::invalid("g", "at least 3 samples are required"));
    }
    if let Some(index) = first_zero_crossing(v) {
        return Err(Error::ZeroCrossing {
            index,
            t: g.time(index),
        });
    }
    // continuous branch of the logarithm
    let mut logs = Vec::with_capacity(v.len());
    let mut phase = v[0].arg();
    logs.push(Complex64::new(v[0].norm().ln(), phase));
    for w in v.windows(2) {
        phase += (w[1] / w[0]).arg();
        logs.push(Complex64::new(w[1].norm().ln(), phase));
    }
    let h = g.t_step();
    let n = logs.len() - 1;
    let rates: Vec<Complex64> = (0..=n)
        .map(|i| {
            let d = if i == 0 {
                (-3.0 * logs[0] + 4.0 * logs[1] - logs[2]) / (2.0 * h)
            } else if i == n {
                (3.0 * logs[n] - 4.0 * logs[n - 1] + logs[n - 2]) / (2.0 * h)
            } else {
                (logs[i + 1] - logs[i - 1]) / (2.0 * h)
            };
            -d
        })
        .collect();
    Ok(RateFunctions {
        t_step: h,
        gamma_t: rates.iter().map(|r| r.re).collect(),
        omega_t: rates.iter().map(|r| r.im).collect(),
    })
}

/// First index where `G` vanishes, or where a real `G` flips sign.
pub fn first_zero_crossing(values: &[Complex64]) -> Option<usize> {
    const ZERO: f64 = 1e-12;
    (0..values.len()).find(|&i| {
        let g = values[i];
        if g.norm() <= ZERO {
            return true;
        }
        if i == 0 {
            return false;
        }
        let p = values[i - 1];
        let real = g.im.abs() <= ZERO && p.im.abs() <= ZERO;
        real && g.re * p.re < 0.0
    })
}

/// `(P(↑,t|↑,0), P(↑,t+τ|↓,t;↑,0)) = (|G(t)|², |G(t,τ)|²/(1-|G(t)|²))`.
pub fn backflow_probabilities(g_t: Complex64, g_two: Complex64) -> Result<(f64, f64)> {
    let survive = g_t.norm_sqr();
    let decayed = 1.0 - survive;
    if decayed <= 0.0 {
        return Err(Error::ConditioningImpossible {
            probability: decayed.max(0.0),
        });
    }
    let reexcite = g_two.norm_sqr() / decayed;
    if reexcite > 1.0 + 1e-9 {
        return Err(Error::Inconsistent(format!(
            "re-excitation probability {reexcite} exceeds 1 (|G(t,τ)|² > 1 - |G(t)|²)"
        )));
    }
    Ok((survive, reexcite.min(1.0)))
}

/// `G(t)`, `G(τ)` and `G(t,τ)` at one measurement setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorSample {
    pub g_t: Complex64,
    pub g_tau: Complex64,
    pub g_two: Complex64,
}

/// Source of propagator values: closed forms or solved grids.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Lorentzian { gamma: f64, tau_c: f64 },
    Numerical { propagator: PropagatorGrid, two_time: TwoTimeGrid },
}

impl Dynamics {
    pub fn lorentzian(gamma: f64, tau_c: f64) -> Result<Self> {
        check_lorentzian(gamma, tau_c)?;
        Ok(Dynamics::Lorentzian { gamma, tau_c })
    }

    pub fn sample(&self, t: f64, tau: f64) -> Result<PropagatorSample> {
        match self {
            Dynamics::Lorentzian { gamma, tau_c } => Ok(PropagatorSample {
                g_t: lorentzian_g(*gamma, *tau_c, t)?,
                g_tau: lorentzian_g(*gamma, *tau_c, tau)?,
                g_two: lorentzian_g_two_time(*gamma, *tau_c, t, tau)?,
            }),
            Dynamics::Numerical { propagator, two_time } => Ok(PropagatorSample {
                g_t: propagator.at(t)?,
                g_tau: propagator.at(tau)?,
                g_two: two_time.at(t, tau)?,
            }),
        }
    }
}
