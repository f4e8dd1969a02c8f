//! Quick self-check of the numerical invariants.

use cpf_core::channel::{angles_from_propagator, simulate_sequence};
use cpf_core::cpf::{build_table, cpf_closed_form, cpf_from_table};
use cpf_core::propagator::{
    compute_two_time_strided, lorentzian_g, lorentzian_g_two_time, solve_volterra, StepPolicy,
};
use cpf_core::{BathKernel, Dynamics, Error, InitialState, MeasurementScheme, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn volterra() -> anyhow::Result<Check> {
    let mut worst: f64 = 0.0;
    for gtc in [0.1, 0.5, 1.0, 2.0] {
        let kernel = BathKernel::lorentzian(1.0, gtc)?;
        let g = solve_volterra(&kernel, 5.0, gtc / 100.0, StepPolicy::Reject)?;
        for (i, v) in g.values().iter().enumerate() {
            worst = worst.max((v - lorentzian_g(1.0, gtc, g.time(i))?).norm());
        }
    }
    Ok(check("volterra", worst <= 1e-5, format!("max |G_num - G| = {worst:.3e}")))
}

fn two_time() -> anyhow::Result<Check> {
    let kernel = BathKernel::lorentzian(1.0, 1.0)?;
    let g = solve_volterra(&kernel, 4.9, 0.01, StepPolicy::Reject)?;
    let grid = compute_two_time_strided(&kernel, &g, 4.9, 4.9, 10, 10)?;
    let worst = grid
        .iter()
        .map(|(t, tau, v)| Ok((v - lorentzian_g_two_time(1.0, 1.0, t, tau)?).norm()))
        .collect::<cpf_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(check("two_time", worst <= 1e-5, format!("max |G2_num - G2| = {worst:.3e}")))
}

fn oracle() -> anyhow::Result<Check> {
    let dynamics = Dynamics::lorentzian(1.0, 1.0)?;
    let step = 2.0 * std::f64::consts::PI / 4.0;
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for p in [1.0, 0.8, 0.5] {
        let state = InitialState::from_excited_population(p)?;
        for i in 0..5 {
            for j in 0..5 {
                let s = dynamics.sample(i as f64 * step, j as f64 * step)?;
                let angles = angles_from_propagator(s.g_t, s.g_tau, s.g_two)?;
                for scheme in MeasurementScheme::ALL {
                    let joint = simulate_sequence(&state, scheme, &angles)?;
                    for y in Outcome::BOTH {
                        match (joint.conditional_table(y), cpf_closed_form(scheme, &state, &s, y)) {
                            (Ok(t), Ok(c)) => {
                                worst = worst.max((cpf_from_table(&t)?.value - c.value).abs())
                            }
                            (
                                Err(Error::ConditioningImpossible { .. }),
                                Err(Error::ConditioningImpossible { .. }),
                            ) => {}
                            _ => mismatched += 1,
                        }
                    }
                }
            }
        }
    }
    Ok(check(
        "oracle",
        worst <= 1e-9 && mismatched == 0,
        format!("max deviation {worst:.3e}, {mismatched} mismatched cases"),
    ))
}

fn nullity() -> anyhow::Result<Check> {
    let mut worst: f64 = 0.0;
    for gtc in [0.1, 0.5, 1.0, 2.0] {
        let dynamics = Dynamics::lorentzian(1.0, gtc)?;
        for p in [1.0, 0.8, 0.5] {
            let state = InitialState::from_excited_population(p)?;
            for k in 0..=20 {
                let t = 0.25 * k as f64;
                for (a, b, y) in [
                    (t, t, Outcome::Plus),
                    (0.0, t, Outcome::Minus),
                    (t, 0.0, Outcome::Minus),
                ] {
                    let s = dynamics.sample(a, b)?;
                    for scheme in MeasurementScheme::ALL {
                        if let Ok(table) = build_table(scheme, &state, &s, y) {
                            worst = worst.max(cpf_from_table(&table)?.value.abs());
                        }
                    }
                }
            }
        }
    }
    Ok(check("nullity", worst <= 1e-12, format!("max |C| at y=+1 or a boundary = {worst:.3e}")))
}

pub fn run_all() -> anyhow::Result<Vec<Check>> {
    Ok(vec![volterra()?, two_time()?, oracle()?, nullity()?])
}
