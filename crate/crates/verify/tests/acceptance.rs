//! Release gate: one PASS/FAIL line per acceptance criterion.
//!
//! Runs without the libtest harness so the summary lines always appear in
//! the test output; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cpf_repro::runs::{self, NoiseBlock};
use cpf_repro::RunConfig;
use cpf_core::channel::{angles_from_propagator, simulate_sequence};
use cpf_core::cpf::{build_table, cpf_closed_form, cpf_from_table};
use cpf_core::experiment::{
    estimate_cpf, replica_rng, run_noise_study, sample_counts, ExperimentConfig,
};
use cpf_core::propagator::{
    compute_two_time_strided, lorentzian_g as g_closed, lorentzian_g_two_time,
    rates_from_g, solve_volterra, StepPolicy,
};
use cpf_core::{BathKernel, Dynamics, Error, InitialState, MeasurementScheme, Outcome};

type Outcome_ = anyhow::Result<(bool, String)>;

const COUPLINGS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

fn max_over<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn volterra_error(gtc: f64, step: f64) -> anyhow::Result<(f64, Duration)> {
    let kernel = BathKernel::lorentzian(1.0, gtc)?;
    let start = Instant::now();
    let g = solve_volterra(&kernel, 5.0, step, StepPolicy::Reject)?;
    let elapsed = start.elapsed();
    let err = max_over(
        g.values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - g_closed(1.0, gtc, g.time(i)).unwrap()).norm()),
    );
    Ok((err, elapsed))
}

fn c1_volterra() -> Outcome_ {
    let mut ok = true;
    let mut parts = Vec::new();
    for gtc in COUPLINGS {
        let (e1, t1) = volterra_error(gtc, gtc / 100.0)?;
        let (e2, _) = volterra_error(gtc, gtc / 200.0)?;
        let ratio = e1 / e2;
        ok &= e1 <= 1e-5 && ratio >= 3.5 && t1 < Duration::from_secs(1);
        parts.push(format!("γτc={gtc}: err {e1:.2e} ratio {ratio:.2} {:.0?}", t1));
    }
    Ok((ok, parts.join("; ")))
}

fn c2_two_time() -> Outcome_ {
    let mut ok = true;
    let mut parts = Vec::new();
    for gtc in COUPLINGS {
        let kernel = BathKernel::lorentzian(1.0, gtc)?;
        // 50 × 50 nodes over [0, 4.9/γ] at a solver step of τ_c/100
        let h = gtc / 100.0;
        let stride = (0.1 / h).round() as usize;
        let start = Instant::now();
        let g = solve_volterra(&kernel, 4.9, h, StepPolicy::Reject)?;
        let grid = compute_two_time_strided(&kernel, &g, 4.9, 4.9, stride, stride)?;
        let elapsed = start.elapsed();
        let err = max_over(
            grid.iter()
                .map(|(t, tau, v)| (v - lorentzian_g_two_time(1.0, gtc, t, tau).unwrap()).norm()),
        );
        ok &= grid.shape() == (50, 50) && err <= 1e-5 && elapsed < Duration::from_secs(10);
        parts.push(format!("γτc={gtc}: err {err:.2e} {:.0?}", elapsed));
    }
    Ok((ok, parts.join("; ")))
}

fn states() -> Vec<InitialState> {
    [1.0, 0.8, 0.5]
        .iter()
        .map(|&p| InitialState::from_excited_population(p).unwrap())
        .collect()
}

fn c3_oracle() -> Outcome_ {
    let start = Instant::now();
    let mut table_dev: f64 = 0.0;
    let mut cpf_dev: f64 = 0.0;
    let mut compared = 0;
    let mut both_impossible = 0;
    let mut mismatched = 0;
    for gtc in [1.0, 0.5, 0.1] {
        let dynamics = Dynamics::lorentzian(1.0, gtc)?;
        let nodes: Vec<f64> = (0..5).map(|i| i as f64 * 2.0 * PI * gtc / 4.0).collect();
        for state in states() {
            for &t in &nodes {
                for &tau in &nodes {
                    let s = dynamics.sample(t, tau)?;
                    let angles = angles_from_propagator(s.g_t, s.g_tau, s.g_two)?;
                    for scheme in MeasurementScheme::ALL {
                        let joint = simulate_sequence(&state, scheme, &angles)?;
                        for y in Outcome::BOTH {
                            match (
                                joint.conditional_table(y),
                                build_table(scheme, &state, &s, y),
                                cpf_closed_form(scheme, &state, &s, y),
                            ) {
                                (Ok(o), Ok(a), Ok(c)) => {
                                    for z in Outcome::BOTH {
                                        for x in Outcome::BOTH {
                                            table_dev = table_dev.max((o.get(z, x) - a.get(z, x)).abs());
                                        }
                                    }
                                    cpf_dev = cpf_dev.max((cpf_from_table(&o)?.value - c.value).abs());
                                    compared += 1;
                                }
                                (
                                    Err(Error::ConditioningImpossible { .. }),
                                    Err(Error::ConditioningImpossible { .. }),
                                    Err(Error::ConditioningImpossible { .. }),
                                ) => both_impossible += 1,
                                _ => mismatched += 1,
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = table_dev <= 1e-9 && cpf_dev <= 1e-9 && mismatched == 0 && elapsed < Duration::from_secs(5);
    Ok((
        ok,
        format!(
            "{compared} cases, max table dev {table_dev:.1e}, max CPF dev {cpf_dev:.1e}, \
             {both_impossible} impossible on both paths, {mismatched} mismatched, {elapsed:.0?}"
        ),
    ))
}

fn c4_y_plus() -> Outcome_ {
    let mut closed_max: f64 = 0.0;
    let mut enum_max: f64 = 0.0;
    for gtc in [0.01, 0.1, 0.5, 1.0, 2.0] {
        let dynamics = Dynamics::lorentzian(1.0, gtc)?;
        for state in states() {
            for i in 0..=12 {
                for j in 0..=12 {
                    let s = dynamics.sample(0.5 * i as f64, 0.5 * j as f64)?;
                    let angles = angles_from_propagator(s.g_t, s.g_tau, s.g_two)?;
                    for scheme in MeasurementScheme::ALL {
                        if let Ok(c) = cpf_closed_form(scheme, &state, &s, Outcome::Plus) {
                            closed_max = closed_max.max(c.value.abs());
                        }
                        let joint = simulate_sequence(&state, scheme, &angles)?;
                        if let Ok(t) = joint.conditional_table(Outcome::Plus) {
                            enum_max = enum_max.max(cpf_from_table(&t)?.value.abs());
                        }
                    }
                }
            }
        }
    }
    Ok((
        closed_max == 0.0 && enum_max <= 1e-12,
        format!("closed form max {closed_max:e}, enumeration max {enum_max:.1e}"),
    ))
}

fn c5_boundaries() -> Outcome_ {
    let mut worst: f64 = 0.0;
    for gtc in [0.01, 0.1, 0.5, 1.0, 2.0] {
        let dynamics = Dynamics::lorentzian(1.0, gtc)?;
        for state in states() {
            for k in 0..=40 {
                let u = 0.25 * k as f64;
                for (t, tau) in [(0.0, u), (u, 0.0)] {
                    let s = dynamics.sample(t, tau)?;
                    let angles = angles_from_propagator(s.g_t, s.g_tau, s.g_two)?;
                    for scheme in MeasurementScheme::ALL {
                        let joint = simulate_sequence(&state, scheme, &angles)?;
                        for y in Outcome::BOTH {
                            if let Ok(c) = cpf_closed_form(scheme, &state, &s, y) {
                                worst = worst.max(c.value.abs());
                            }
                            if let Ok(t) = joint.conditional_table(y) {
                                worst = worst.max(cpf_from_table(&t)?.value.abs());
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((worst <= 1e-12, format!("max |C(0,τ)|, |C(t,0)| = {worst:.1e}")))
}

/// `max_t |C(t,t)|` on a fine grid over `γt ∈ [0, 10]`.
fn equal_time_sup(scheme: MeasurementScheme, p: f64, dynamics: &Dynamics) -> anyhow::Result<f64> {
    let state = InitialState::from_excited_population(p)?;
    let mut sup: f64 = 0.0;
    for k in 0..=2000 {
        let t = 0.005 * k as f64;
        if let Ok(c) = cpf_closed_form(scheme, &state, &dynamics.sample(t, t)?, Outcome::Minus) {
            sup = sup.max(c.value.abs());
        }
    }
    Ok(sup)
}

fn c6_markov_limit() -> Outcome_ {
    let weak = Dynamics::lorentzian(1.0, 0.01)?;
    let zzz = equal_time_sup(MeasurementScheme::Zzz, 0.8, &weak)?;
    let xzx = equal_time_sup(MeasurementScheme::Xzx, 1.0, &weak)?;
    let mut ok = zzz <= 0.01 && xzx <= 0.01;
    let mut sups = Vec::new();
    for (scheme, p) in [(MeasurementScheme::Zzz, 0.8), (MeasurementScheme::Xzx, 1.0)] {
        let seq: Vec<f64> = [0.1, 0.03, 0.01]
            .iter()
            .map(|&eps| match BathKernel::markovian_limit(1.0, 1.0, eps).unwrap() {
                BathKernel::Lorentzian { gamma, tau_c } => {
                    equal_time_sup(scheme, p, &Dynamics::lorentzian(gamma, tau_c).unwrap()).unwrap()
                }
                _ => unreachable!(),
            })
            .collect();
        ok &= seq.windows(2).all(|w| w[1] < w[0]);
        sups.push(format!("{scheme} sup over ε=[0.1,0.03,0.01]: {:.2e} {:.2e} {:.2e}", seq[0], seq[1], seq[2]));
    }
    Ok((ok, format!("γτc=0.01: zzz {zzz:.2e}, xzx {xzx:.2e}; {}", sups.join("; "))))
}

fn c7_central_claim() -> Outcome_ {
    let tau_c = 0.5;
    let kernel = BathKernel::lorentzian(1.0, tau_c)?;
    let g = solve_volterra(&kernel, 10.0, tau_c / 100.0, StepPolicy::Reject)?;
    let rates = rates_from_g(&g)?;
    let min_rate = rates.gamma_t.iter().cloned().fold(f64::INFINITY, f64::min);
    let pops: Vec<f64> = g.values().iter().map(|v| v.norm_sqr()).collect();
    let monotone = pops.windows(2).all(|w| w[1] <= w[0]);
    let peak = equal_time_sup(MeasurementScheme::Zzz, 0.8, &Dynamics::lorentzian(1.0, tau_c)?)?;
    Ok((
        min_rate >= -1e-9 && monotone && peak >= 0.05,
        format!("min γ(t) {min_rate:.2e}, |G|² monotone: {monotone}, peak ZZZ C(t,t) {peak:.5}"),
    ))
}

fn c8_signs() -> Outcome_ {
    let mut violations = 0;
    let mut checked = 0;
    for gtc in [0.5, 1.0] {
        let dynamics = Dynamics::lorentzian(1.0, gtc)?;
        for p in [0.8, 1.0] {
            let state = InitialState::from_excited_population(p)?;
            for k in 0..=500 {
                let t = 0.02 * k as f64;
                let s = dynamics.sample(t, t)?;
                let zzz = cpf_closed_form(MeasurementScheme::Zzz, &state, &s, Outcome::Minus).ok();
                let xzx = cpf_closed_form(MeasurementScheme::Xzx, &state, &s, Outcome::Minus)?.value;
                checked += 1;
                if let Some(z) = zzz {
                    if z.value < 0.0 || (p == 1.0 && z.value.abs() > xzx.abs()) {
                        violations += 1;
                    }
                }
                if xzx > 0.0 {
                    violations += 1;
                }
            }
        }
    }
    Ok((violations == 0, format!("{checked} equal-time points, {violations} violations")))
}

fn c9_noise() -> Outcome_ {
    let start = Instant::now();
    let noise = runs::default_noise();
    let points: Vec<(f64, f64)> = (0..=20).map(|i| (0.25 * i as f64, 0.25 * i as f64)).collect();
    let block = NoiseBlock {
        scheme: MeasurementScheme::Xzx,
        gamma_tau_c: 1.0,
        p: 1.0,
        y: Outcome::Minus,
        visibility: 1.0,
    };
    let cfg = noise.experiment(1.0, noise.seed)?;
    let state = InitialState::from_excited_population(block.p)?;
    let dynamics = Dynamics::lorentzian(1.0, block.gamma_tau_c)?;
    let study = run_noise_study(&state, block.scheme, block.y, &dynamics, &points, &cfg)?;
    let worst_z = study
        .iter()
        .map(|p| (p.mc_mean - p.ideal).abs() / (p.mc_std / (p.n_valid as f64).sqrt()))
        .fold(0.0, f64::max);
    let tracks = worst_z <= 2.0;

    // individual replicas at the peak of |C|
    let (ip, peak) = study
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.ideal.abs().total_cmp(&b.1.ideal.abs()))
        .unwrap();
    let s = dynamics.sample(peak.t, peak.tau)?;
    let table = build_table(block.scheme, &state, &s, block.y)?;
    let expected = cfg.counts_per_point(points.len())
        * cpf_core::cpf::conditioning_probability(block.scheme, &state, s.g_t, block.y);
    let exceed = (0..cfg.replicas)
        .filter_map(|r| estimate_cpf(&sample_counts(&table, expected, &mut replica_rng(cfg.seed, ip, r))).ok())
        .filter(|e| e.value.abs() >= 1.15 * peak.ideal.abs())
        .count();

    // near-Markovian ẑ-ẑ-ẑ: ideal peak against replica spread
    let zcfg = ExperimentConfig { seed: noise.seed + 1, ..cfg };
    let zstate = InitialState::from_excited_population(0.8)?;
    let zdyn = Dynamics::lorentzian(1.0, 0.1)?;
    let zstudy = run_noise_study(&zstate, MeasurementScheme::Zzz, Outcome::Minus, &zdyn, &points, &zcfg)?;
    let zpeak = zstudy
        .iter()
        .max_by(|a, b| a.ideal.total_cmp(&b.ideal))
        .unwrap();
    let ratio = zpeak.mc_std / zpeak.ideal;
    let comparable = (1.0 / 3.0..=3.0).contains(&ratio);
    let elapsed = start.elapsed();
    Ok((
        tracks && exceed > 0 && comparable && elapsed < Duration::from_secs(30),
        format!(
            "xzx γτc=1: max |mean-ideal|/SE {worst_z:.2} over {} points; {exceed}/{} replicas ≥15% above |C|={:.4} at γt={}; \
             zzz γτc=0.1 peak {:.4} vs std {:.4} (ratio {ratio:.2}); {elapsed:.1?}",
            points.len(),
            cfg.replicas,
            peak.ideal.abs(),
            peak.t,
            zpeak.ideal,
            zpeak.mc_std,
        ),
    ))
}

const EMIT_VAR: &str = "CPF_ACCEPTANCE_EMIT";
const COMMANDS: [&str; 4] = ["figure2", "appendix_d", "witness", "sweep"];

/// Child-process mode: write every dataset for a fixed config and seed.
fn emit(dir: &Path, threads: usize) -> anyhow::Result<()> {
    let mut cfg = RunConfig::from_json(r#"{"noise": {"total_counts": 1e4, "visibility": [1.0, 0.9], "replicas": 200, "seed": 7}}"#, Path::new("."))?;
    cfg.threads = Some(threads);
    for ds in [runs::figure2(&cfg)?, runs::appendix_d(&cfg)?, runs::witness(&cfg)?, runs::sweep(&cfg)?] {
        std::fs::write(dir.join(format!("{}.csv", ds.name)), ds.to_csv_string()?)?;
    }
    Ok(())
}

fn c10_determinism() -> Outcome_ {
    let dir = tempfile::tempdir()?;
    let exe = std::env::current_exe()?;
    for (sub, threads) in [("first", "1"), ("second", "4")] {
        let out = dir.path().join(sub);
        std::fs::create_dir(&out)?;
        let status = Command::new(&exe).env(EMIT_VAR, &out).arg(threads).status()?;
        anyhow::ensure!(status.success(), "child run {sub} failed");
    }
    let mut identical = 0;
    for name in COMMANDS {
        let read = |sub: &str| std::fs::read(dir.path().join(sub).join(format!("{name}.csv")));
        if read("first")? == read("second")? {
            identical += 1;
        }
    }
    Ok((
        identical == COMMANDS.len(),
        format!("{identical}/{} datasets byte-identical across two processes (1 and 4 threads)", COMMANDS.len()),
    ))
}

fn main() {
    if let Some(dir) = std::env::var_os(EMIT_VAR) {
        let threads = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
        if let Err(e) = emit(Path::new(&dir), threads) {
            eprintln!("{e:#}");
            std::process::exit(1);
        }
        return;
    }
    // cargo test passes libtest flags; a name filter skips the gate
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let criteria: [(&str, fn() -> Outcome_); 10] = [
        ("volterra vs closed form", c1_volterra),
        ("two-time vs closed form", c2_two_time),
        ("channel oracle equivalence", c3_oracle),
        ("y=+1 nullity", c4_y_plus),
        ("boundary nullity", c5_boundaries),
        ("markov-limit vanishing", c6_markov_limit),
        ("memory despite positive rate", c7_central_claim),
        ("sign/magnitude structure", c8_signs),
        ("noise-study reproduction", c9_noise),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e:#}")));
        if !ok {
            failed += 1;
        }
        println!("criterion {:>2} {:<30} {}  {detail}", i + 1, name, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
