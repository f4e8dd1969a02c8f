//! Exact conditional past-future correlations.
//!
//! Three projective measurements at `0`, `t`, `t+τ` give outcomes `x`, `y`,
//! `z` (each ±1). Conditioned on the middle outcome `y`, the correlation is
//! `C(t,τ)|_y = ⟨zx⟩_y - ⟨z⟩_y⟨x⟩_y`. It is computed two ways: from the
//! conditional tables `P(z,x|y)` of the exact dynamics, and from the
//! closed forms those tables reduce to. The intermediate measurement is
//! always along ẑ.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::propagator::PropagatorSample;

/// Probability below which a conditioning outcome is treated as impossible.
pub const CONDITIONING_EPS: f64 = 1e-12;

/// A ±1 measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_sign(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(Error::invalid("outcome", format!("must be +1 or -1, got {s}"))),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "1",
            Outcome::Minus => "-1",
        })
    }
}

/// Directions of the first and last measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementScheme {
    Zzz,
    Xzx,
    Yzy,
}

impl MeasurementScheme {
    pub const ALL: [MeasurementScheme; 3] =
        [MeasurementScheme::Zzz, MeasurementScheme::Xzx, MeasurementScheme::Yzy];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementScheme::Zzz => "zzz",
            MeasurementScheme::Xzx => "xzx",
            MeasurementScheme::Yzy => "yzy",
        }
    }

    /// Whether the outer measurements probe coherences (and hence interfere).
    pub fn is_coherent(self) -> bool {
        !matches!(self, MeasurementScheme::Zzz)
    }
}

impl fmt::Display for MeasurementScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// System amplitudes `a|↑⟩ + b|↓⟩` of the prepared state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    a: Complex64,
    b: Complex64,
}

impl InitialState {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self> {
        let s = Self { a, b };
        s.validate()?;
        Ok(s)
    }

    /// `√p|↑⟩ + √(1-p)|↓⟩`.
    pub fn from_excited_population(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("p", format!("must lie in [0, 1], got {p}")));
        }
        Self::new(Complex64::new(p.sqrt(), 0.0), Complex64::new((1.0 - p).sqrt(), 0.0))
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn b(&self) -> Complex64 {
        self.b
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.a.norm_sqr() + self.b.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 || !norm.is_finite() {
            return Err(Error::invalid("state", format!("|a|² + |b|² = {norm}, expected 1")));
        }
        Ok(())
    }

    /// `P(x)` for a first measurement along the scheme's outer direction.
    pub fn outer_probability(&self, scheme: MeasurementScheme, x: Outcome) -> f64 {
        let s = x.sign();
        match scheme {
            MeasurementScheme::Zzz => match x {
                Outcome::Plus => self.a.norm_sqr(),
                Outcome::Minus => self.b.norm_sqr(),
            },
            MeasurementScheme::Xzx => 0.5 * (self.a + s * self.b).norm_sqr(),
            // ⟨y_x| = (⟨↑| - i x ⟨↓|)/√2
            MeasurementScheme::Yzy => 0.5 * (self.a - Complex64::i() * s * self.b).norm_sqr(),
        }
    }
}

/// The four conditionals `P(z,x|y)` for one scheme and one `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityTable {
    scheme: MeasurementScheme,
    y: Outcome,
    /// `entries[z][x]`, index 0 for +1.
    entries: [[f64; 2]; 2],
}

impl ProbabilityTable {
    pub fn new(scheme: MeasurementScheme, y: Outcome, entries: [[f64; 2]; 2]) -> Result<Self> {
        for row in &entries {
            for &p in row {
                if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::invalid("entries", format!("probability {p} outside [0, 1]")));
                }
            }
        }
        let total: f64 = entries.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("entries", format!("sum to {total}, expected 1")));
        }
        Ok(Self { scheme, y, entries })
    }

    pub fn scheme(&self) -> MeasurementScheme {
        self.scheme
    }

    pub fn y(&self) -> Outcome {
        self.y
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn get(&self, z: Outcome, x: Outcome) -> f64 {
        self.entries[z.index()][x.index()]
    }

    /// `P(z|y)`.
    pub fn future_marginal(&self, z: Outcome) -> f64 {
        Outcome::BOTH.iter().map(|&x| self.get(z, x)).sum()
    }

    /// `P(x|y)`.
    pub fn past_marginal(&self, x: Outcome) -> f64 {
        Outcome::BOTH.iter().map(|&z| self.get(z, x)).sum()
    }

    pub fn mean_future(&self) -> f64 {
        Outcome::BOTH.iter().map(|&z| z.sign() * self.future_marginal(z)).sum()
    }

    pub fn mean_past(&self) -> f64 {
        Outcome::BOTH.iter().map(|&x| x.sign() * self.past_marginal(x)).sum()
    }

    pub fn mean_product(&self) -> f64 {
        let mut acc = 0.0;
        for z in Outcome::BOTH {
            for x in Outcome::BOTH {
                acc += z.sign() * x.sign() * self.get(z, x);
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpfResult {
    pub value: f64,
    pub y: Outcome,
    pub scheme: MeasurementScheme,
    /// `(t, τ)` when known.
    pub times: Option<(f64, f64)>,
}

impl CpfResult {
    fn new(value: f64, y: Outcome, scheme: MeasurementScheme) -> Result<Self> {
        if !(value.abs() <= 1.0 + 1e-12) {
            return Err(Error::Inconsistent(format!("correlation {value} outside [-1, 1]")));
        }
        Ok(Self {
            value,
            y,
            scheme,
            times: None,
        })
    }

    pub fn at(mut self, t: f64, tau: f64) -> Self {
        self.times = Some((t, tau));
        self
    }
}

/// `⟨zx⟩_y - ⟨z⟩_y⟨x⟩_y` from a conditional table.
pub fn cpf_from_table(table: &ProbabilityTable) -> Result<CpfResult> {
    let value = table.mean_product() - table.mean_future() * table.mean_past();
    CpfResult::new(value, table.y(), table.scheme())
}

/// `P(y)` of the intermediate ẑ outcome.
pub fn conditioning_probability(
    scheme: MeasurementScheme,
    state: &InitialState,
    g_t: Complex64,
    y: Outcome,
) -> f64 {
    let survive = g_t.norm_sqr();
    match (scheme, y) {
        (MeasurementScheme::Zzz, Outcome::Plus) => survive * state.a().norm_sqr(),
        (MeasurementScheme::Zzz, Outcome::Minus) => {
            (1.0 - survive) * state.a().norm_sqr() + state.b().norm_sqr()
        }
        (_, Outcome::Plus) => 0.5 * survive,
        (_, Outcome::Minus) => 1.0 - 0.5 * survive,
    }
}

fn require_conditioning(probability: f64) -> Result<()> {
    if probability < CONDITIONING_EPS {
        Err(Error::ConditioningImpossible { probability })
    } else {
        Ok(())
    }
}

pub fn build_table_zzz(
    state: &InitialState,
    g_t: Complex64,
    g_tau: Complex64,
    g_two: Complex64,
    y: Outcome,
) -> Result<ProbabilityTable> {
    state.validate()?;
    let py = conditioning_probability(MeasurementScheme::Zzz, state, g_t, y);
    require_conditioning(py)?;
    let a2 = state.a().norm_sqr();
    let b2 = state.b().norm_sqr();
    let entries = match y {
        Outcome::Plus => {
            let up = g_tau.norm_sqr();
            [[up, 0.0], [1.0 - up, 0.0]]
        }
        Outcome::Minus => {
            let reexcite = g_two.norm_sqr();
            let stay_down = 1.0 - reexcite - g_t.norm_sqr();
            if stay_down < -1e-10 {
                return Err(Error::Inconsistent(format!(
                    "|G(t,τ)|² + |G(t)|² = {} exceeds 1",
                    1.0 - stay_down
                )));
            }
            [
                [reexcite * a2 / py, 0.0],
                [stay_down.max(0.0) * a2 / py, b2 / py],
            ]
        }
    };
    ProbabilityTable::new(MeasurementScheme::Zzz, y, entries)
}

fn build_table_coherent(
    scheme: MeasurementScheme,
    state: &InitialState,
    g_t: Complex64,
    g_two: Complex64,
    y: Outcome,
) -> Result<ProbabilityTable> {
    state.validate()?;
    require_conditioning(conditioning_probability(scheme, state, g_t, y))?;
    let contrast = match y {
        Outcome::Plus => 0.0,
        Outcome::Minus => {
            let k = 2.0 * g_two.re / (2.0 - g_t.norm_sqr());
            if k.abs() > 1.0 + 1e-12 {
                return Err(Error::Inconsistent(format!(
                    "interference contrast {k} exceeds 1"
                )));
            }
            k
        }
    };
    let mut entries = [[0.0; 2]; 2];
    for z in Outcome::BOTH {
        for x in Outcome::BOTH {
            entries[z.index()][x.index()] = 0.5
                * state.outer_probability(scheme, x)
                * (1.0 - z.sign() * x.sign() * contrast);
        }
    }
    ProbabilityTable::new(scheme, y, entries)
}

pub fn build_table_xzx(
    state: &InitialState,
    g_t: Complex64,
    g_two: Complex64,
    y: Outcome,
) -> Result<ProbabilityTable> {
    build_table_coherent(MeasurementScheme::Xzx, state, g_t, g_two, y)
}

pub fn build_table_yzy(
    state: &InitialState,
    g_t: Complex64,
    g_two: Complex64,
    y: Outcome,
) -> Result<ProbabilityTable> {
    build_table_coherent(MeasurementScheme::Yzy, state, g_t, g_two, y)
}

pub fn build_table(
    scheme: MeasurementScheme,
    state: &InitialState,
    sample: &PropagatorSample,
    y: Outcome,
) -> Result<ProbabilityTable> {
    match scheme {
        MeasurementScheme::Zzz => build_table_zzz(state, sample.g_t, sample.g_tau, sample.g_two, y),
        MeasurementScheme::Xzx => build_table_xzx(state, sample.g_t, sample.g_two, y),
        MeasurementScheme::Yzy => build_table_yzy(state, sample.g_t, sample.g_two, y),
    }
}

/// ẑ-ẑ-ẑ correlation conditioned on `y = -1`.
pub fn cpf_zzz(state: &InitialState, g_t: Complex64, g_two: Complex64) -> Result<CpfResult> {
    state.validate()?;
    let d = conditioning_probability(MeasurementScheme::Zzz, state, g_t, Outcome::Minus);
    require_conditioning(d)?;
    let a2 = state.a().norm_sqr();
    let b2 = state.b().norm_sqr();
    CpfResult::new(
        4.0 * a2 * b2 / (d * d) * g_two.norm_sqr(),
        Outcome::Minus,
        MeasurementScheme::Zzz,
    )
}

fn cpf_coherent(
    scheme: MeasurementScheme,
    overlap: f64,
    g_t: Complex64,
    g_two: Complex64,
) -> Result<CpfResult> {
    let value = -(1.0 - overlap * overlap) / (1.0 - 0.5 * g_t.norm_sqr()) * g_two.re;
    CpfResult::new(value, Outcome::Minus, scheme)
}

/// x̂-ẑ-x̂ correlation conditioned on `y = -1`.
pub fn cpf_xzx(state: &InitialState, g_t: Complex64, g_two: Complex64) -> Result<CpfResult> {
    state.validate()?;
    let overlap = 2.0 * (state.a() * state.b().conj()).re;
    cpf_coherent(MeasurementScheme::Xzx, overlap, g_t, g_two)
}

/// ŷ-ẑ-ŷ correlation conditioned on `y = -1`.
pub fn cpf_yzy(state: &InitialState, g_t: Complex64, g_two: Complex64) -> Result<CpfResult> {
    state.validate()?;
    let overlap = 2.0 * (state.a() * state.b().conj()).im;
    cpf_coherent(MeasurementScheme::Yzy, overlap, g_t, g_two)
}

/// Conditioned on an excited intermediate outcome the correlation vanishes
/// identically for every scheme.
pub fn cpf_y_plus(scheme: MeasurementScheme) -> CpfResult {
    CpfResult {
        value: 0.0,
        y: Outcome::Plus,
        scheme,
        times: None,
    }
}

/// Closed-form correlation for any scheme and conditioning outcome.
pub fn cpf_closed_form(
    scheme: MeasurementScheme,
    state: &InitialState,
    sample: &PropagatorSample,
    y: Outcome,
) -> Result<CpfResult> {
    require_conditioning(conditioning_probability(scheme, state, sample.g_t, y))?;
    match (scheme, y) {
        (_, Outcome::Plus) => Ok(cpf_y_plus(scheme)),
        (MeasurementScheme::Zzz, Outcome::Minus) => cpf_zzz(state, sample.g_t, sample.g_two),
        (MeasurementScheme::Xzx, Outcome::Minus) => cpf_xzx(state, sample.g_t, sample.g_two),
        (MeasurementScheme::Yzy, Outcome::Minus) => cpf_yzy(state, sample.g_t, sample.g_two),
    }
}
