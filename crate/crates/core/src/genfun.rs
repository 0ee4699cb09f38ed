//! Exact solution of the random-kernel kinetic equations through their
//! generating functions `F±(z, t) = Σ_ℓ f±(ℓ, t) z^ℓ`, evaluated as
//! truncated power series. This is the oracle for the kinetic solver.
//!
//! The closed forms are written for arbitrary initial counts `N0 = F0(1)`;
//! they agree with the `N0 = 1` forms after the rescaling `f -> f / N0`,
//! `t -> N0 t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PowerSeries;

/// Initial data must have `a_0 = 0` and non-negative coefficients.
pub fn validate_initial(f0: &PowerSeries) -> Result<()> {
    if f0.coeff(0) != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "initial series has a_0 = {}",
            f0.coeff(0)
        )));
    }
    if let Some(n) = f0.coeffs().iter().position(|&a| a < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "initial series has negative a_{n}"
        )));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "time {t} must be finite and non-negative"
        )))
    }
}

/// `t / (2 + N0 t)`, with its limit `1 / N0` at infinite time.
fn contraction(n0: f64, t: f64) -> f64 {
    if t.is_infinite() {
        1.0 / n0
    } else {
        t / (2.0 + n0 * t)
    }
}

/// Per-direction spectrum for identical initial data in both directions.
pub fn exact_symmetric(f0: &PowerSeries, t: f64) -> Result<PowerSeries> {
    validate_initial(f0)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(f0.clone());
    }
    let n0 = f0.sum();
    let s = contraction(n0, t);
    let decay = (1.0 + 0.5 * n0 * t).powi(-2);
    let one = PowerSeries::constant(1.0, f0.truncation());
    let den = one.scale_add(1.0, f0, -s).reciprocal()?;
    Ok(f0.multiply(&den).scale(decay))
}

/// `(exp(-s g) - 1) / g` as a series, summed term by term so `g` is never
/// divided by. Requires `g(0) = 0`.
fn expm1_ratio(g: &PowerSeries, s: f64) -> PowerSeries {
    let trunc = g.truncation();
    let mut term = PowerSeries::constant(-s, trunc);
    let mut sum = term.clone();
    for k in 1..=trunc {
        term = term.multiply(g).scale(-s / (k + 1) as f64);
        let size = term.l1_norm();
        if size == 0.0 {
            break;
        }
        sum = sum.scale_add(1.0, &term, 1.0);
        if size < 1e-18 * sum.l1_norm() {
            break;
        }
    }
    sum
}

/// Spectra `(F+, F-)` for initial data with equal counts in both
/// directions.
pub fn exact_asymmetric(
    f0_plus: &PowerSeries,
    f0_minus: &PowerSeries,
    t: f64,
) -> Result<(PowerSeries, PowerSeries)> {
    validate_initial(f0_plus)?;
    validate_initial(f0_minus)?;
    check_time(t)?;
    let (n_plus, n_minus) = (f0_plus.sum(), f0_minus.sum());
    if (n_plus - n_minus).abs() > 1e-12 {
        return Err(Error::AsymmetricCounts {
            plus: n_plus,
            minus: n_minus,
        });
    }
    let trunc = f0_plus.truncation().max(f0_minus.truncation());
    let (fp, fm) = (
        f0_plus.with_truncation(trunc),
        f0_minus.with_truncation(trunc),
    );
    if t == 0.0 {
        return Ok((fp, fm));
    }
    let n0 = n_minus;
    let s = contraction(n0, t);
    let decay = (1.0 + 0.5 * n0 * t).powi(-2);
    let g0 = fp.scale_add(1.0, &fm, -1.0);
    let damping = g0.scale(-s).exponential();
    let den = fm
        .multiply(&expm1_ratio(&g0, s))
        .scale_add(1.0, &damping, 1.0);
    let minus = fm.multiply(&den.reciprocal()?).scale(decay);
    let plus = minus.scale_add(1.0, &g0, decay);
    Ok((plus, minus))
}

/// Total initial mass `M+(0) + M-(0)`, the length scale of the
/// self-similar profile.
pub fn ell0(f0_plus: &PowerSeries, f0_minus: &PowerSeries) -> f64 {
    f0_plus.derivative_at_one() + f0_minus.derivative_at_one()
}

/// Long-time profile `(8 / (ℓ0 t²)) exp(-4ℓ / (ℓ0 t))` on sizes divisible
/// by `d`, zero elsewhere.
pub fn selfsim_profile(l: u64, t: f64, ell0: f64, d: u64) -> f64 {
    if d == 0 || l % d != 0 {
        return 0.0;
    }
    8.0 / (ell0 * t * t) * (-4.0 * l as f64 / (ell0 * t)).exp()
}

/// [`selfsim_profile`] scaled by `d`, so that it carries the full mass
/// `ℓ0 / 2` per direction when only every `d`-th size is occupied.
pub fn selfsim_profile_mass_matched(l: u64, t: f64, ell0: f64, d: u64) -> f64 {
    d as f64 * selfsim_profile(l, t, ell0, d)
}

/// Distance of a spectrum from the self-similar profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarDeviation {
    pub t: f64,
    /// `t² Σ_ℓ ℓ |f(ℓ) - Φ(ℓ)|`
    pub weighted_sum: f64,
    /// `t² Σ_ℓ |f(ℓ) - Φ(ℓ)|`
    pub unweighted_sum: f64,
    /// `t sup_ℓ ℓ |f(ℓ) - Φ(ℓ)|`
    pub weighted_sup: f64,
}

/// Compares coefficients `1..=L` of `f` against `profile(ℓ)`.
pub fn selfsim_deviation(
    f: &PowerSeries,
    t: f64,
    profile: impl Fn(u64) -> f64,
) -> SelfSimilarDeviation {
    let (mut weighted_sum, mut unweighted_sum, mut sup) = (0.0, 0.0, 0.0f64);
    for l in 1..=f.truncation() {
        let diff = (f.coeff(l) - profile(l as u64)).abs();
        let l = l as f64;
        weighted_sum += l * diff;
        unweighted_sum += diff;
        sup = sup.max(l * diff);
    }
    SelfSimilarDeviation {
        t,
        weighted_sum: t * t * weighted_sum,
        unweighted_sum: t * t * unweighted_sum,
        weighted_sup: t * sup,
    }
}

/// Real root `x > 1` of `1 - (t / (2 + N0 t)) F0(x) = 0`, where the
/// symmetric solution's generating function has its pole.
pub fn pole_location(f0: &PowerSeries, t: f64) -> Result<f64> {
    validate_initial(f0)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "pole location needs t > 0, got {t}"
        )));
    }
    let target = 1.0 / contraction(f0.sum(), t);
    let (mut lo, mut hi) = (1.0, 2.0);
    const SEARCH_LIMIT: f64 = 1e8;
    while f0.eval(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > SEARCH_LIMIT {
            return Err(Error::NoRealRoot {
                target,
                searched: SEARCH_LIMIT,
            });
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f0.eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Denominator of `F-` divided by `F0-`'s contribution:
/// `F0-(ζ) (exp(-s G0) - 1) / G0 + exp(-s G0)`, holomorphic in ζ.
/// `t` may be `f64::INFINITY`.
pub fn asymmetric_denominator(
    f0_plus: &PowerSeries,
    f0_minus: &PowerSeries,
    t: f64,
    zeta: Complex64,
) -> Complex64 {
    let s = contraction(f0_minus.sum(), t);
    let fm = f0_minus.eval_complex(zeta);
    let g = f0_plus.eval_complex(zeta) - fm;
    let w = -s * g;
    let damping = w.exp();
    let ratio = if w.norm() < 1e-3 {
        // (e^w - 1) / g = -s (1 + w/2 + w²/6 + w³/24 + ...)
        -s * (1.0 + w * (0.5 + w * (1.0 / 6.0 + w * (1.0 / 24.0 + w / 120.0))))
    } else {
        (damping - 1.0) / g
    };
    fm * ratio + damping
}

/// Winding number of `f` around 0 along `|ζ| = radius`, which counts the
/// zeros inside when `f` is holomorphic. Sampling refines until every
/// phase increment is below π/4.
pub fn winding_number(f: impl Fn(Complex64) -> Complex64, radius: f64) -> Result<i64> {
    const BASE: usize = 512;
    const MAX_DEPTH: u32 = 40;
    let eval = |theta: f64| -> Result<Complex64> {
        let v = f(Complex64::from_polar(radius, theta));
        if !(v.norm() >= 1e-12) {
            return Err(Error::ContourThroughZero {
                angle: theta,
                modulus: v.norm(),
            });
        }
        Ok(v)
    };
    fn phase(
        eval: &dyn Fn(f64) -> Result<Complex64>,
        a: (f64, Complex64),
        b: (f64, Complex64),
        depth: u32,
    ) -> Result<f64> {
        let step = (b.1 / a.1).arg();
        if step.abs() < PI / 4.0 || depth >= MAX_DEPTH {
            return Ok(step);
        }
        let mid = 0.5 * (a.0 + b.0);
        let m = (mid, eval(mid)?);
        Ok(phase(eval, a, m, depth + 1)? + phase(eval, m, b, depth + 1)?)
    }
    let mut total = 0.0;
    let start = (0.0, eval(0.0)?);
    let mut prev = start;
    for k in 1..=BASE {
        let theta = 2.0 * PI * k as f64 / BASE as f64;
        let cur = if k == BASE {
            (theta, start.1)
        } else {
            (theta, eval(theta)?)
        };
        total += phase(&eval, prev, cur, 0)?;
        prev = cur;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Zeros of [`asymmetric_denominator`] inside `|ζ| = radius`.
pub fn winding_check(
    f0_plus: &PowerSeries,
    f0_minus: &PowerSeries,
    t: f64,
    radius: f64,
) -> Result<i64> {
    validate_initial(f0_plus)?;
    validate_initial(f0_minus)?;
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "winding check needs t > 0, got {t}"
        )));
    }
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "radius {radius} outside (0, 1]"
        )));
    }
    winding_number(|z| asymmetric_denominator(f0_plus, f0_minus, t, z), radius)
}
