//! Truncated power series `Σ a_n z^n + O(z^{L+1})` with real coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    /// Coefficients `a_0..=a_L`; the truncation is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidConfig(
                "a power series needs at least a_0".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite series coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn zero(truncation: usize) -> Self {
        Self {
            coeffs: vec![0.0; truncation + 1],
        }
    }

    pub fn constant(c: f64, truncation: usize) -> Self {
        let mut s = Self::zero(truncation);
        s.coeffs[0] = c;
        s
    }

    /// `c z^n`, or zero if `n` exceeds the truncation.
    pub fn monomial(n: usize, c: f64, truncation: usize) -> Self {
        let mut s = Self::zero(truncation);
        if n <= truncation {
            s.coeffs[n] = c;
        }
        s
    }

    /// Sparse `(power, coefficient)` terms; repeated powers add up.
    pub fn from_terms(
        terms: impl IntoIterator<Item = (usize, f64)>,
        truncation: usize,
    ) -> Result<Self> {
        let mut s = Self::zero(truncation);
        for (n, c) in terms {
            if n > truncation {
                return Err(Error::UnsupportedSize {
                    size: n as u64,
                    truncation,
                });
            }
            s.coeffs[n] += c;
        }
        Self::new(s.coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Same series cut or zero-padded to a new truncation.
    pub fn with_truncation(&self, truncation: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(truncation + 1, 0.0);
        Self { coeffs }
    }

    /// Sum of coefficients, i.e. the value at `z = 1`.
    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    /// `Σ n a_n`, the derivative at `z = 1`.
    pub fn derivative_at_one(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a)
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a.abs()).sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(
            self.truncation(),
            other.truncation(),
            "series truncations differ"
        );
    }

    /// `alpha * self + beta * other`.
    pub fn scale_add(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        self.check_same(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self { coeffs }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn multiply(&self, other: &Self) -> Self {
        self.check_same(other);
        let len = self.coeffs.len();
        let mut out = vec![0.0; len];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs[..len - i].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    pub fn reciprocal(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0.abs() < 1e-300 {
            return Err(Error::ZeroConstantTerm(a0));
        }
        let len = self.coeffs.len();
        let nz: Vec<usize> = (1..len).filter(|&k| self.coeffs[k] != 0.0).collect();
        let mut b = vec![0.0; len];
        b[0] = 1.0 / a0;
        for n in 1..len {
            let mut acc = 0.0;
            for &k in nz.iter().take_while(|&&k| k <= n) {
                acc += self.coeffs[k] * b[n - k];
            }
            b[n] = -acc / a0;
        }
        Ok(Self { coeffs: b })
    }

    /// `exp(self)` via `n b_n = Σ_k k a_k b_{n-k}`.
    pub fn exponential(&self) -> Self {
        let len = self.coeffs.len();
        let nz: Vec<usize> = (1..len).filter(|&k| self.coeffs[k] != 0.0).collect();
        let mut b = vec![0.0; len];
        b[0] = self.coeffs[0].exp();
        for n in 1..len {
            let mut acc = 0.0;
            for &k in nz.iter().take_while(|&&k| k <= n) {
                acc += k as f64 * self.coeffs[k] * b[n - k];
            }
            b[n] = acc / n as f64;
        }
        Self { coeffs: b }
    }
}

pub fn multiply(a: &PowerSeries, b: &PowerSeries) -> PowerSeries {
    a.multiply(b)
}

pub fn reciprocal(a: &PowerSeries) -> Result<PowerSeries> {
    a.reciprocal()
}

pub fn exponential(a: &PowerSeries) -> PowerSeries {
    a.exponential()
}

pub fn scale_add(a: &PowerSeries, alpha: f64, b: &PowerSeries, beta: f64) -> PowerSeries {
    a.scale_add(alpha, b, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geometric_series() {
        let one_minus_z = PowerSeries::new(vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(one_minus_z.reciprocal().unwrap().coeffs(), &[1.0; 6]);
    }

    #[test]
    fn exp_of_z() {
        let e = PowerSeries::monomial(1, 1.0, 10).exponential();
        let mut fact = 1.0;
        for n in 0..=10 {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((e.coeff(n) - 1.0 / fact).abs() < 1e-16);
        }
    }

    #[test]
    fn zero_constant_term() {
        let z = PowerSeries::monomial(1, 1.0, 4);
        assert!(matches!(z.reciprocal(), Err(Error::ZeroConstantTerm(_))));
    }

    #[test]
    fn evaluation() {
        let s = PowerSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.eval(2.0), 17.0);
        assert_eq!(
            s.eval_complex(Complex64::new(0.0, 1.0)),
            Complex64::new(-2.0, 2.0)
        );
        assert_eq!(s.derivative_at_one(), 8.0);
        assert_eq!(s.sum(), 6.0);
    }

    #[test]
    fn terms_beyond_truncation_rejected() {
        assert!(PowerSeries::from_terms([(5, 1.0)], 4).is_err());
        let s = PowerSeries::from_terms([(1, 0.5), (3, 0.25), (1, 0.5)], 4).unwrap();
        assert_eq!(s.coeffs(), &[0.0, 1.0, 0.0, 0.25, 0.0]);
    }

    fn series() -> impl Strategy<Value = PowerSeries> {
        (0.5f64..2.0, prop::collection::vec(-1.0f64..1.0, 12)).prop_map(|(a0, rest)| {
            PowerSeries::new(std::iter::once(a0).chain(rest).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn reciprocal_is_inverse(a in series()) {
            let prod = a.reciprocal().unwrap().multiply(&a);
            prop_assert!((prod.coeff(0) - 1.0).abs() < 1e-9);
            for n in 1..=a.truncation() {
                prop_assert!(prod.coeff(n).abs() < 1e-9 * a.reciprocal().unwrap().l1_norm().max(1.0));
            }
        }

        #[test]
        fn exp_turns_sums_into_products(a in series(), b in series()) {
            let lhs = a.scale_add(1.0, &b, 1.0).exponential();
            let rhs = a.exponential().multiply(&b.exponential());
            for n in 0..=a.truncation() {
                prop_assert!((lhs.coeff(n) - rhs.coeff(n)).abs() < 1e-9 * (1.0 + rhs.coeff(n).abs()));
            }
        }

        #[test]
        fn multiply_commutes(a in series(), b in series()) {
            let (x, y) = (a.multiply(&b), b.multiply(&a));
            for n in 0..=a.truncation() {
                prop_assert!((x.coeff(n) - y.coeff(n)).abs() < 1e-12);
            }
        }
    }
}
