//! Small text formats accepted on the command line.

use anyhow::{bail, Context, Result};
use num_complex::Complex64;

/// Parses a polynomial in `z` such as `z`, `0.5z + 0.5z^3` or `0.25*z^2`
/// into `(power, coefficient)` terms.
pub fn polynomial(text: &str) -> Result<Vec<(usize, f64)>> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty polynomial");
    }
    let mut terms = Vec::new();
    for raw in split_signed(&s) {
        let (sign, body) = match raw.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, raw.strip_prefix('+').unwrap_or(raw)),
        };
        let (coef, power) = match body.find('z') {
            None => (body, 0),
            Some(at) => {
                let coef = body[..at].trim_end_matches('*');
                let rest = &body[at + 1..];
                let power = if rest.is_empty() {
                    1
                } else {
                    rest.strip_prefix('^')
                        .with_context(|| format!("expected `^` after z in `{raw}`"))?
                        .parse::<usize>()
                        .with_context(|| format!("bad exponent in `{raw}`"))?
                };
                (coef, power)
            }
        };
        let c = if coef.is_empty() {
            1.0
        } else {
            coef.parse::<f64>()
                .with_context(|| format!("bad coefficient in `{raw}`"))?
        };
        terms.push((power, sign * c));
    }
    Ok(terms)
}

/// Splits at `+`/`-` signs that start a new term (not those in exponents
/// like `1e-3`).
fn split_signed(s: &str) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..bytes.len() {
        let c = bytes[i];
        if (c == b'+' || c == b'-') && !matches!(bytes[i - 1], b'e' | b'E' | b'^') {
            parts.push(&s[start..i]);
            start = i;
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Parses `1e-3i`, `-0.5`, `1+2i`, `i`.
pub fn complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let parts = split_signed(&s);
    let mut z = Complex64::new(0.0, 0.0);
    if parts.is_empty() || parts.len() > 2 || s.is_empty() {
        bail!("cannot read `{text}` as a complex number");
    }
    for p in parts {
        if let Some(im) = p.strip_suffix('i') {
            let v = match im {
                "" | "+" => 1.0,
                "-" => -1.0,
                other => other
                    .parse::<f64>()
                    .with_context(|| format!("bad imaginary part `{p}`"))?,
            };
            z.im += v;
        } else {
            z.re += p
                .parse::<f64>()
                .with_context(|| format!("bad real part `{p}`"))?;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials() {
        assert_eq!(polynomial("z").unwrap(), vec![(1, 1.0)]);
        assert_eq!(
            polynomial("0.5z + 0.5 z^3").unwrap(),
            vec![(1, 0.5), (3, 0.5)]
        );
        assert_eq!(
            polynomial("2.5e-1*z^2-z").unwrap(),
            vec![(2, 0.25), (1, -1.0)]
        );
        assert_eq!(polynomial("1").unwrap(), vec![(0, 1.0)]);
        assert!(polynomial("z^").is_err());
        assert!(polynomial("x").is_err());
        assert!(polynomial("").is_err());
    }

    #[test]
    fn complex_numbers() {
        assert_eq!(complex("1e-3i").unwrap(), Complex64::new(0.0, 1e-3));
        assert_eq!(complex("-1e-3i").unwrap(), Complex64::new(0.0, -1e-3));
        assert_eq!(complex("0.25").unwrap(), Complex64::new(0.25, 0.0));
        assert_eq!(complex("1-2i").unwrap(), Complex64::new(1.0, -2.0));
        assert_eq!(complex("i").unwrap(), Complex64::new(0.0, 1.0));
        assert!(complex("abc").is_err());
    }
}
