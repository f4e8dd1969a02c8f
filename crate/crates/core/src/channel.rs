//! Brute-force oracle: the measurement sequence on an explicit
//! system ⊗ environment state vector.
//!
//! The environment is encoded as a single two-level mode (`|0⟩` empty,
//! `|1⟩` one excitation). Between measurements the joint state is moved by
//! angle-parameterised damping maps with `cos 2θ = G(t)`,
//! `cos 2θ̃ = G(τ)` and `sin 2θ̃' = -G(t,τ)/√(1-G(t)²)`. Only real
//! propagators can be encoded this way.

use std::io::Write;

use num_complex::Complex64;

use crate::cpf::{
    CpfResult, InitialState, MeasurementScheme, Outcome, ProbabilityTable, CONDITIONING_EPS,
};
use crate::error::{Error, Result};
use crate::propagator::DensityMatrix;

const DOWN0: usize = 0;
const UP0: usize = 1;
const DOWN1: usize = 2;
const UP1: usize = 3;

/// Branches below this probability are not collapsed onto.
const BRANCH_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAngles {
    pub theta: f64,
    pub theta_tilde: f64,
    pub theta_tilde_prime: f64,
}

pub fn angles_from_propagator(
    g_t: Complex64,
    g_tau: Complex64,
    g_two: Complex64,
) -> Result<ChannelAngles> {
    for g in [g_t, g_tau, g_two] {
        if g.im.abs() > 1e-9 {
            return Err(Error::UnsupportedRegime { imag: g.im });
        }
    }
    let (g_t, g_tau, g_two) = (g_t.re, g_tau.re, g_two.re);
    for g in [g_t, g_tau] {
        if g.abs() > 1.0 + 1e-12 {
            return Err(Error::Inconsistent(format!("|G| = {} exceeds 1", g.abs())));
        }
    }
    let decayed = 1.0 - g_t * g_t;
    let theta_tilde_prime = if decayed < 1e-14 {
        if g_two.abs() > 1e-7 {
            return Err(Error::Inconsistent(format!(
                "G(t,τ) = {g_two} with no decay at the intermediate time"
            )));
        }
        0.0
    } else {
        let s = -g_two / decayed.sqrt();
        if s.abs() > 1.0 + 1e-9 {
            return Err(Error::Inconsistent(format!(
                "|G(t,τ)|² exceeds 1 - |G(t)|² (sin 2θ̃' = {s})"
            )));
        }
        0.5 * s.clamp(-1.0, 1.0).asin()
    };
    Ok(ChannelAngles {
        theta: 0.5 * g_t.clamp(-1.0, 1.0).acos(),
        theta_tilde: 0.5 * g_tau.clamp(-1.0, 1.0).acos(),
        theta_tilde_prime,
    })
}

/// Measurement axis on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
    Z,
}

impl Direction {
    /// Eigenvector components `(⟨↑|n⟩, ⟨↓|n⟩)` for the given outcome.
    fn eigenvector(self, outcome: Outcome) -> (Complex64, Complex64) {
        let s = outcome.sign();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match (self, outcome) {
            (Direction::Z, Outcome::Plus) => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            (Direction::Z, Outcome::Minus) => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            (Direction::X, _) => (Complex64::new(r, 0.0), Complex64::new(s * r, 0.0)),
            (Direction::Y, _) => (Complex64::new(r, 0.0), Complex64::new(0.0, s * r)),
        }
    }

    pub fn outer(scheme: MeasurementScheme) -> Self {
        match scheme {
            MeasurementScheme::Zzz => Direction::Z,
            MeasurementScheme::Xzx => Direction::X,
            MeasurementScheme::Yzy => Direction::Y,
        }
    }
}

/// Amplitudes over `{|↓0⟩, |↑0⟩, |↓1⟩, |↑1⟩}` (system ⊗ environment).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    amps: [Complex64; 4],
}

impl JointState {
    pub fn from_amplitudes(amps: [Complex64; 4]) -> Self {
        Self { amps }
    }

    /// `(a|↑⟩ + b|↓⟩) ⊗ |0⟩`.
    pub fn prepare(state: &InitialState) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); 4];
        amps[UP0] = state.a();
        amps[DOWN0] = state.b();
        Self { amps }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        self.amps
    }

    pub fn down0(&self) -> Complex64 {
        self.amps[DOWN0]
    }

    pub fn up0(&self) -> Complex64 {
        self.amps[UP0]
    }

    pub fn down1(&self) -> Complex64 {
        self.amps[DOWN1]
    }

    pub fn up1(&self) -> Complex64 {
        self.amps[UP1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// System state with the environment traced out.
    pub fn reduced_system(&self) -> DensityMatrix {
        let up = [self.amps[UP0], self.amps[UP1]];
        let down = [self.amps[DOWN0], self.amps[DOWN1]];
        let dot = |u: &[Complex64; 2], v: &[Complex64; 2]| u[0] * v[0].conj() + u[1] * v[1].conj();
        DensityMatrix {
            uu: dot(&up, &up),
            ud: dot(&up, &down),
            du: dot(&down, &up),
            dd: dot(&down, &down),
        }
    }

    /// System projection amplitudes `⟨n|ψ_e⟩` for each environment level.
    fn overlaps(&self, direction: Direction, outcome: Outcome) -> [Complex64; 2] {
        let (nu, nd) = direction.eigenvector(outcome);
        [
            nu.conj() * self.amps[UP0] + nd.conj() * self.amps[DOWN0],
            nu.conj() * self.amps[UP1] + nd.conj() * self.amps[DOWN1],
        ]
    }

    pub fn probability(&self, direction: Direction, outcome: Outcome) -> f64 {
        self.overlaps(direction, outcome).iter().map(|o| o.norm_sqr()).sum()
    }
}

/// Amplitude-damping map over the first interval.
pub fn apply_u_t(state: &JointState, theta: f64) -> JointState {
    let (s, c) = (2.0 * theta).sin_cos();
    let mut amps = state.amps;
    amps[UP0] = c * state.amps[UP0] - s * state.amps[DOWN1];
    amps[DOWN1] = s * state.amps[UP0] + c * state.amps[DOWN1];
    JointState { amps }
}

/// Extended damping map over the second interval.
///
/// `|↑0⟩` and `|↓1⟩` are mapped with independent angles, which is only an
/// isometry when the two images are orthogonal or when the state is
/// supported on one of them.
pub fn apply_u_tau(state: &JointState, theta_tilde: f64, theta_tilde_prime: f64) -> Result<JointState> {
    let (s, c) = (2.0 * theta_tilde).sin_cos();
    let (sp, cp) = (2.0 * theta_tilde_prime).sin_cos();
    let up0 = state.amps[UP0];
    let down1 = state.amps[DOWN1];
    let overlap = c * sp + s * cp;
    if up0.norm() > 1e-12 && down1.norm() > 1e-12 && overlap.abs() > 1e-9 {
        return Err(Error::NonUnitaryMap { overlap });
    }
    let mut amps = state.amps;
    amps[UP0] = c * up0 + sp * down1;
    amps[DOWN1] = s * up0 + cp * down1;
    Ok(JointState { amps })
}

/// Projects the system onto an eigenvector of `direction`, leaving the
/// environment untouched.
pub fn project(state: &JointState, direction: Direction, outcome: Outcome) -> Result<(f64, JointState)> {
    let ov = state.overlaps(direction, outcome);
    let probability: f64 = ov.iter().map(|o| o.norm_sqr()).sum();
    if probability < BRANCH_EPS {
        return Err(Error::ZeroProbabilityBranch { probability });
    }
    let (nu, nd) = direction.eigenvector(outcome);
    let k = 1.0 / probability.sqrt();
    let mut amps = [Complex64::new(0.0, 0.0); 4];
    amps[UP0] = nu * ov[0] * k;
    amps[DOWN0] = nd * ov[0] * k;
    amps[UP1] = nu * ov[1] * k;
    amps[DOWN1] = nd * ov[1] * k;
    Ok((probability, JointState { amps }))
}

/// Joint outcome probabilities `P(z,y,x)` of one measurement sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    scheme: MeasurementScheme,
    /// `probs[z][y][x]`, index 0 for +1.
    probs: [[[f64; 2]; 2]; 2],
}

impl JointDistribution {
    pub fn scheme(&self) -> MeasurementScheme {
        self.scheme
    }

    pub fn get(&self, z: Outcome, y: Outcome, x: Outcome) -> f64 {
        self.probs[z.index()][y.index()][x.index()]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().flatten().sum()
    }

    /// `P(y)`.
    pub fn present_marginal(&self, y: Outcome) -> f64 {
        let mut acc = 0.0;
        for z in Outcome::BOTH {
            for x in Outcome::BOTH {
                acc += self.get(z, y, x);
            }
        }
        acc
    }

    /// `P(z,x|y) = P(z,y,x)/P(y)`.
    pub fn conditional_table(&self, y: Outcome) -> Result<ProbabilityTable> {
        let py = self.present_marginal(y);
        if py < CONDITIONING_EPS {
            return Err(Error::ConditioningImpossible { probability: py });
        }
        let mut entries = [[0.0; 2]; 2];
        for z in Outcome::BOTH {
            for x in Outcome::BOTH {
                entries[z.index()][x.index()] = self.get(z, y, x) / py;
            }
        }
        ProbabilityTable::new(self.scheme, y, entries)
    }

    /// `x,y,z,probability` rows.
    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z", "probability"])?;
        for x in Outcome::BOTH {
            for y in Outcome::BOTH {
                for z in Outcome::BOTH {
                    w.write_record([
                        x.to_string(),
                        y.to_string(),
                        z.to_string(),
                        self.get(z, y, x).to_string(),
                    ])?;
                }
            }
        }
        w.flush()
    }
}

/// Enumerates the eight outcome paths `X → U(t) → Y → U(τ) → Z`.
///
/// `Y` is always a ẑ measurement; `X` and `Z` follow the scheme. Paths
/// through a zero-probability branch contribute nothing.
pub fn simulate_sequence(
    state: &InitialState,
    scheme: MeasurementScheme,
    angles: &ChannelAngles,
) -> Result<JointDistribution> {
    state.validate()?;
    let outer = Direction::outer(scheme);
    let prepared = JointState::prepare(state);
    let mut probs = [[[0.0; 2]; 2]; 2];
    for x in Outcome::BOTH {
        if prepared.probability(outer, x) < BRANCH_EPS {
            continue;
        }
        let (px, after_x) = project(&prepared, outer, x)?;
        let evolved = apply_u_t(&after_x, angles.theta);
        for y in Outcome::BOTH {
            if evolved.probability(Direction::Z, y) < BRANCH_EPS {
                continue;
            }
            let (py, after_y) = project(&evolved, Direction::Z, y)?;
            let evolved = apply_u_tau(&after_y, angles.theta_tilde, angles.theta_tilde_prime)?;
            for z in Outcome::BOTH {
                probs[z.index()][y.index()][x.index()] = px * py * evolved.probability(outer, z);
            }
        }
    }
    Ok(JointDistribution { scheme, probs })
}

/// Correlation from the enumerated sequence.
pub fn oracle_cpf(
    state: &InitialState,
    scheme: MeasurementScheme,
    angles: &ChannelAngles,
    y: Outcome,
) -> Result<CpfResult> {
    let table = simulate_sequence(state, scheme, angles)?.conditional_table(y)?;
    crate::cpf::cpf_from_table(&table)
}

/// Conditional table written directly in the channel angles.
pub fn angle_table(
    scheme: MeasurementScheme,
    state: &InitialState,
    angles: &ChannelAngles,
    y: Outcome,
) -> Result<ProbabilityTable> {
    state.validate()?;
    let s2 = (2.0 * angles.theta).sin();
    let c2 = (2.0 * angles.theta).cos();
    let sp = (2.0 * angles.theta_tilde_prime).sin();
    let cp = (2.0 * angles.theta_tilde_prime).cos();
    let entries = match (scheme, y) {
        (MeasurementScheme::Zzz, Outcome::Plus) => {
            let (st, ct) = (2.0 * angles.theta_tilde).sin_cos();
            if c2 * c2 * state.a().norm_sqr() < CONDITIONING_EPS {
                return Err(Error::ConditioningImpossible {
                    probability: c2 * c2 * state.a().norm_sqr(),
                });
            }
            [[ct * ct, 0.0], [st * st, 0.0]]
        }
        (MeasurementScheme::Zzz, Outcome::Minus) => {
            let a2 = state.a().norm_sqr();
            let b2 = state.b().norm_sqr();
            let d = s2 * s2 * a2 + b2;
            if d < CONDITIONING_EPS {
                return Err(Error::ConditioningImpossible { probability: d });
            }
            [
                [s2 * s2 * sp * sp * a2 / d, 0.0],
                [s2 * s2 * cp * cp * a2 / d, b2 / d],
            ]
        }
        (_, y) => {
            let py = match y {
                Outcome::Plus => 0.5 * c2 * c2,
                Outcome::Minus => 1.0 - 0.5 * c2 * c2,
            };
            if py < CONDITIONING_EPS {
                return Err(Error::ConditioningImpossible { probability: py });
            }
            let contrast = match y {
                Outcome::Plus => 0.0,
                Outcome::Minus => 2.0 * s2 * sp / (2.0 - c2 * c2),
            };
            let mut e = [[0.0; 2]; 2];
            for z in Outcome::BOTH {
                for x in Outcome::BOTH {
                    e[z.index()][x.index()] = 0.5
                        * state.outer_probability(scheme, x)
                        * (1.0 + z.sign() * x.sign() * contrast);
                }
            }
            e
        }
    };
    ProbabilityTable::new(scheme, y, entries)
}

/// `y = -1` correlation written in the channel angles.
pub fn angle_cpf(
    scheme: MeasurementScheme,
    state: &InitialState,
    angles: &ChannelAngles,
) -> Result<f64> {
    state.validate()?;
    let s2 = (2.0 * angles.theta).sin();
    let c2 = (2.0 * angles.theta).cos();
    let sp = (2.0 * angles.theta_tilde_prime).sin();
    let ab = state.a() * state.b().conj();
    Ok(match scheme {
        MeasurementScheme::Zzz => {
            let a2 = state.a().norm_sqr();
            let b2 = state.b().norm_sqr();
            let d = s2 * s2 * a2 + b2;
            if d < CONDITIONING_EPS {
                return Err(Error::ConditioningImpossible { probability: d });
            }
            4.0 * a2 * b2 / (d * d) * s2 * s2 * sp * sp
        }
        MeasurementScheme::Xzx => (1.0 - (2.0 * ab.re).powi(2)) / (1.0 - 0.5 * c2 * c2) * s2 * sp,
        MeasurementScheme::Yzy => (1.0 - (2.0 * ab.im).powi(2)) / (1.0 - 0.5 * c2 * c2) * s2 * sp,
    })
}
