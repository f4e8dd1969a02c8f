//! Environment correlation functions.
//!
//! The bath enters the dynamics only through its two-time correlation
//! `f(t)`. The Lorentzian family `f(t) = (γ/2τ_c) exp(-|t|/τ_c)` has closed
//! forms for every derived quantity; tabulated kernels cover everything
//! else and are linearly interpolated.

use std::io::Read;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BathKernel {
    Lorentzian { gamma: f64, tau_c: f64 },
    Tabulated { times: Vec<f64>, values: Vec<Complex64> },
}

impl BathKernel {
    pub fn lorentzian(gamma: f64, tau_c: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !(tau_c > 0.0 && tau_c.is_finite()) {
            return Err(Error::invalid("tau_c", format!("must be positive, got {tau_c}")));
        }
        Ok(BathKernel::Lorentzian { gamma, tau_c })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid(
                "values",
                format!("{} samples for {} times", values.len(), times.len()),
            ));
        }
        if times.len() < 2 {
            return Err(Error::invalid("times", "at least 2 samples are required"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid("times", format!("must start at 0, got {}", times[0])));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "times",
                format!("must be strictly ascending ({} then {})", w[0], w[1]),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(BathKernel::Tabulated { times, values })
    }

    /// Samples `f` on `0, step, .., n·step`.
    pub fn sampled(f: impl Fn(f64) -> Complex64, step: f64, n: usize) -> Result<Self> {
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::tabulated(times, values)
    }

    /// Lorentzian kernel with its correlation time shrunk by `epsilon`.
    ///
    /// The integrated weight `∫₀^∞ f = γ/2` is independent of `epsilon`, so the
    /// family approaches a delta function as `epsilon → 0`.
    pub fn markovian_limit(gamma: f64, tau_c: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        Self::lorentzian(gamma, tau_c)?;
        Self::lorentzian(gamma, tau_c * epsilon)
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        match self {
            BathKernel::Lorentzian { gamma, tau_c } => Ok(Complex64::new(
                gamma / (2.0 * tau_c) * (-t.abs() / tau_c).exp(),
                0.0,
            )),
            BathKernel::Tabulated { times, values } => {
                let max = *times.last().expect("validated non-empty");
                if !(0.0..=max).contains(&t) {
                    return Err(Error::OutOfRange { t, max });
                }
                let hi = times.partition_point(|&s| s < t);
                if hi == 0 {
                    return Ok(values[0]);
                }
                let (t0, t1) = (times[hi - 1], times[hi]);
                let w = (t - t0) / (t1 - t0);
                Ok(values[hi - 1] * (1.0 - w) + values[hi] * w)
            }
        }
    }

    /// Largest time at which the kernel can be evaluated.
    pub fn max_time(&self) -> f64 {
        match self {
            BathKernel::Lorentzian { .. } => f64::INFINITY,
            BathKernel::Tabulated { times, .. } => *times.last().expect("validated non-empty"),
        }
    }

    /// `γτ_c` for Lorentzian kernels.
    pub fn coupling(&self) -> Option<f64> {
        match self {
            BathKernel::Lorentzian { gamma, tau_c } => Some(gamma * tau_c),
            BathKernel::Tabulated { .. } => None,
        }
    }

    /// Reads `time,re[,im]` rows with a mandatory header line.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::KernelFile(e.to_string()))?
            .clone();
        if !(2..=3).contains(&headers.len()) {
            return Err(Error::KernelFile(format!(
                "expected 2 or 3 columns (time, re[, im]), header has {}",
                headers.len()
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::KernelFile(e.to_string()))?;
            let line = row + 2;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::KernelFile(format!("line {line}: missing column {}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::KernelFile(format!("line {line}, column {}: {e}", i + 1)))
            };
            times.push(field(0)?);
            let im = if headers.len() == 3 { field(2)? } else { 0.0 };
            values.push(Complex64::new(field(1)?, im));
        }
        Self::tabulated(times, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::KernelFile(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_values() {
        let k = BathKernel::lorentzian(1.0, 1.0).unwrap();
        assert_eq!(k.eval(0.0).unwrap(), Complex64::new(0.5, 0.0));
        assert!(k.eval(800.0).unwrap().norm() < 1e-300);
        assert_eq!(k.eval(-0.3).unwrap(), k.eval(0.3).unwrap());

        // 2/e, evaluated independently at 50 digits
        let k = BathKernel::lorentzian(2.0, 0.5).unwrap();
        assert!((k.eval(0.5).unwrap().re - 0.735_758_882_342_884_6).abs() < 1e-15);
    }

    #[test]
    fn markovian_limit_rescales_tau_c() {
        assert_eq!(
            BathKernel::markovian_limit(1.0, 1.0, 0.01).unwrap(),
            BathKernel::Lorentzian { gamma: 1.0, tau_c: 0.01 }
        );
        assert_eq!(
            BathKernel::markovian_limit(1.0, 1.0, 1.0).unwrap(),
            BathKernel::Lorentzian { gamma: 1.0, tau_c: 1.0 }
        );
        assert!(BathKernel::markovian_limit(1.0, 1.0, 0.0).is_err());
        assert!(BathKernel::markovian_limit(-1.0, 1.0, 0.5).is_err());
        assert!(BathKernel::markovian_limit(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn tabulated_validation() {
        let c = |x: f64| Complex64::new(x, 0.0);
        assert!(BathKernel::tabulated(vec![0.0], vec![c(1.0)]).is_err());
        assert!(BathKernel::tabulated(vec![0.1, 0.2], vec![c(1.0), c(1.0)]).is_err());
        assert!(BathKernel::tabulated(vec![0.0, 0.2, 0.2], vec![c(1.0); 3]).is_err());
        assert!(BathKernel::tabulated(vec![0.0, 0.2], vec![c(1.0), c(f64::NAN)]).is_err());
        assert!(BathKernel::tabulated(vec![0.0, 0.2], vec![c(1.0)]).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_refuses_extrapolation() {
        let k = BathKernel::tabulated(
            vec![0.0, 1.0, 3.0],
            vec![Complex64::new(1.0, 0.0), Complex64::new(3.0, 1.0), Complex64::new(-1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(k.eval(0.5).unwrap(), Complex64::new(2.0, 0.5));
        assert_eq!(k.eval(2.0).unwrap(), Complex64::new(1.0, 0.5));
        assert_eq!(k.eval(3.0).unwrap(), Complex64::new(-1.0, 0.0));
        assert_eq!(k.eval(3.0001), Err(Error::OutOfRange { t: 3.0001, max: 3.0 }));
        assert!(k.eval(-0.1).is_err());
    }

    #[test]
    fn tabulated_lorentzian_error_is_second_order() {
        let lor = BathKernel::lorentzian(1.0, 0.5).unwrap();
        let max_err = |h: f64| {
            let tab = BathKernel::sampled(|t| lor.eval(t).unwrap(), h, (4.0 / h) as usize).unwrap();
            (0..4000)
                .map(|i| i as f64 * 1e-3 + 3.7e-4)
                .map(|t| (tab.eval(t).unwrap() - lor.eval(t).unwrap()).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (max_err(0.02), max_err(0.01));
        // f'' ≤ f(0)/τ_c² = 4, so h²/8·4 bounds the interpolation error
        assert!(e1 <= 0.02f64.powi(2) / 2.0);
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn csv_two_and_three_columns() {
        let k = BathKernel::from_csv_reader("t,re\n0,0.5\n1,0.25\n".as_bytes()).unwrap();
        assert_eq!(k.eval(0.5).unwrap(), Complex64::new(0.375, 0.0));
        let k = BathKernel::from_csv_reader("t, re, im\n0, 0.5, 0.1\n2, 0.5, -0.1\n".as_bytes())
            .unwrap();
        assert!((k.eval(1.0).unwrap() - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(matches!(
            BathKernel::from_csv_reader("t\n0\n1\n".as_bytes()),
            Err(Error::KernelFile(_))
        ));
        assert!(matches!(
            BathKernel::from_csv_reader("t,re\n0,x\n1,0\n".as_bytes()),
            Err(Error::KernelFile(_))
        ));
    }
}
