//! Real fields sampled on the uniform periodic grid x_j = -π + 2πj/n and the
//! FFT machinery shared by every spectral operation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// The periodic grid together with planned forward and inverse transforms.
///
/// Cheap to clone; the plans are shared.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl Grid {
    pub const MIN_SIZE: usize = 32;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_SIZE || !n.is_power_of_two() {
            return Err(Error::Argument(format!(
                "grid size must be a power of two >= {}, got {n}",
                Self::MIN_SIZE
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -PI + 2.0 * PI * j as f64 / self.n as f64
    }

    /// Signed wavenumber of FFT bin `index`; the Nyquist bin maps to +n/2.
    pub fn wavenumber(&self, index: usize) -> i64 {
        if index <= self.n / 2 {
            index as i64
        } else {
            index as i64 - self.n as i64
        }
    }

    fn is_nyquist(&self, index: usize) -> bool {
        index == self.n / 2
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> TorusField {
        TorusField::from_vec((0..self.n).map(|j| f(self.x(j))).collect())
    }

    pub fn constant(&self, c: f64) -> TorusField {
        TorusField::from_vec(vec![c; self.n])
    }

    fn check(&self, f: &TorusField) -> Result<()> {
        if f.n() != self.n {
            return Err(Error::Argument(format!(
                "field of size {} used on a grid of size {}",
                f.n(),
                self.n
            )));
        }
        Ok(())
    }

    /// Normalized Fourier coefficients c_k = (1/n) Σ_j f_j e^{-2πi jk/n}.
    pub fn coefficients(&self, f: &TorusField) -> Vec<Complex64> {
        debug_assert_eq!(f.n(), self.n);
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Inverse of [`Grid::coefficients`], keeping the real part.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> TorusField {
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        TorusField::from_vec(buf.iter().map(|c| c.re).collect())
    }

    /// Multiplies every mode by `multiplier(k)` (k signed, Nyquist = +n/2).
    pub fn apply_multiplier(
        &self,
        f: &TorusField,
        multiplier: impl Fn(i64) -> Complex64,
    ) -> Result<TorusField> {
        self.check(f)?;
        let mut c = self.coefficients(f);
        for (i, ck) in c.iter_mut().enumerate() {
            *ck *= multiplier(self.wavenumber(i));
        }
        Ok(self.synthesize(&c))
    }

    /// Spectral derivative; the Nyquist mode is discarded.
    pub fn derivative(&self, f: &TorusField) -> Result<TorusField> {
        self.check(f)?;
        let mut c = self.coefficients(f);
        self.differentiate_coefficients(&mut c);
        Ok(self.synthesize(&c))
    }

    pub fn differentiate_coefficients(&self, c: &mut [Complex64]) {
        for (i, ck) in c.iter_mut().enumerate() {
            if self.is_nyquist(i) {
                *ck = Complex64::new(0.0, 0.0);
            } else {
                *ck *= Complex64::new(0.0, self.wavenumber(i) as f64);
            }
        }
    }

    pub fn second_derivative(&self, f: &TorusField) -> Result<TorusField> {
        self.check(f)?;
        let mut c = self.coefficients(f);
        for (i, ck) in c.iter_mut().enumerate() {
            let k = self.wavenumber(i) as f64;
            *ck *= -k * k;
        }
        Ok(self.synthesize(&c))
    }

    /// Mean-zero periodic primitive of the mean-zero part of `f`.
    pub fn primitive(&self, f: &TorusField) -> Result<TorusField> {
        self.check(f)?;
        let mut c = self.coefficients(f);
        for (i, ck) in c.iter_mut().enumerate() {
            if i == 0 || self.is_nyquist(i) {
                *ck = Complex64::new(0.0, 0.0);
            } else {
                *ck /= Complex64::new(0.0, self.wavenumber(i) as f64);
            }
        }
        Ok(self.synthesize(&c))
    }

    /// Highest wavenumber kept by a dealiasing fraction.
    pub fn dealias_cutoff(&self, fraction: f64) -> i64 {
        (fraction * (self.n / 2) as f64 + 1e-9).floor() as i64
    }

    /// Zeroes every mode with |k| above the dealiasing cutoff.
    pub fn dealias(&self, f: &TorusField, fraction: f64) -> Result<TorusField> {
        self.check(f)?;
        if fraction >= 1.0 {
            return Ok(f.clone());
        }
        let cutoff = self.dealias_cutoff(fraction);
        let mut c = self.coefficients(f);
        self.truncate_coefficients(&mut c, cutoff);
        Ok(self.synthesize(&c))
    }

    pub fn truncate_coefficients(&self, c: &mut [Complex64], cutoff: i64) {
        for (i, ck) in c.iter_mut().enumerate() {
            if self.wavenumber(i).abs() > cutoff {
                *ck = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Energy in the top third of wavenumbers (|k| > n/3) divided by the
    /// energy of all non-zero modes. Zero for fields that are constant up to
    /// roundoff.
    pub fn tail_fraction(&self, f: &TorusField) -> Result<f64> {
        self.check(f)?;
        let c = self.coefficients(f);
        Ok(self.tail_fraction_of(&c))
    }

    pub fn tail_fraction_of(&self, c: &[Complex64]) -> f64 {
        let third = self.n as i64 / 3;
        let mut tail = 0.0;
        let mut total = 0.0;
        for (i, ck) in c.iter().enumerate().skip(1) {
            let e = ck.norm_sqr();
            total += e;
            if self.wavenumber(i).abs() > third {
                tail += e;
            }
        }
        // Roundoff around a constant is not resolution loss.
        if total <= 1e-26 * c[0].norm_sqr() || total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// Value of the trigonometric interpolant of `f` at an arbitrary point.
    pub fn interpolate(&self, coeffs: &[Complex64], x: f64) -> f64 {
        let s = x + PI;
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.wavenumber(i) as f64;
                if self.is_nyquist(i) {
                    c.re * (k * s).cos()
                } else {
                    (c * Complex64::from_polar(1.0, k * s)).re
                }
            })
            .sum()
    }
}

/// A real field on the periodic grid. The grid size is the sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    values: Vec<f64>,
}

impl TorusField {
    /// Checked constructor: the values must all be finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {j}")));
        }
        Ok(TorusField { values })
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        TorusField { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TorusField {
        TorusField::from_vec(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &TorusField, f: impl Fn(f64, f64) -> f64) -> TorusField {
        debug_assert_eq!(self.n(), other.n());
        TorusField::from_vec(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Pointwise a·self + b·other.
    pub fn combine(&self, a: f64, other: &TorusField, b: f64) -> TorusField {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    /// Samples in reversed orientation: g(x) = f(-x).
    pub fn reflect(&self) -> TorusField {
        // x_j = -π + jΔx, so -x_j = x_{n-j} (mod 2π).
        let n = self.n();
        TorusField::from_vec((0..n).map(|j| self.values[(n - j) % n]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(48).is_err());
        assert!(Grid::new(16).is_err());
        assert!(Grid::new(64).is_ok());
    }

    #[test]
    fn checked_constructor_rejects_nan() {
        assert!(TorusField::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn derivative_and_primitive_of_trig_polynomial() {
        let g = Grid::new(64).unwrap();
        let f = g.sample(|x| (3.0 * x).sin() + 0.5 * (7.0 * x).cos());
        let df = g.derivative(&f).unwrap();
        let expect = g.sample(|x| 3.0 * (3.0 * x).cos() - 3.5 * (7.0 * x).sin());
        assert!(df.combine(1.0, &expect, -1.0).max_abs() < 1e-12);
        let back = g.derivative(&g.primitive(&f).unwrap()).unwrap();
        assert!(back.combine(1.0, &f, -1.0).max_abs() < 1e-13);
    }

    #[test]
    fn interpolation_matches_trig_polynomial_off_grid() {
        let g = Grid::new(32).unwrap();
        let f = |x: f64| 1.0 + (2.0 * x).cos() - 0.3 * (5.0 * x).sin();
        let c = g.coefficients(&g.sample(f));
        for &x in &[0.123, -2.9, 3.1] {
            assert!((g.interpolate(&c, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn dealias_removes_high_modes() {
        let g = Grid::new(64).unwrap();
        let f = g.sample(|x| x.cos() + (30.0 * x).cos());
        let d = g.dealias(&f, 2.0 / 3.0).unwrap();
        assert!(d.combine(1.0, &g.sample(|x| x.cos()), -1.0).max_abs() < 1e-13);
        assert_eq!(g.dealias_cutoff(2.0 / 3.0), 21);
    }

    #[test]
    fn tail_fraction_of_pure_modes() {
        let g = Grid::new(64).unwrap();
        assert_eq!(g.tail_fraction(&g.constant(2.0)).unwrap(), 0.0);
        assert!(g.tail_fraction(&g.sample(|x| x.cos())).unwrap() < 1e-28);
        let t = g
            .tail_fraction(&g.sample(|x| x.cos() + (25.0 * x).cos()))
            .unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reflection_of_odd_function() {
        let g = Grid::new(32).unwrap();
        let f = g.sample(|x| x.sin());
        assert!(f.reflect().combine(1.0, &f, 1.0).max_abs() < 1e-15);
    }
}
