//! Real-root isolation for low-degree polynomials.
//!
//! Roots are isolated recursively: the critical points of `p` (roots of
//! `p'`) split `[lo, hi]` into pieces on which `p` is monotone, so every
//! sign change brackets exactly one root and bisection converges to it.
//! Roots of even multiplicity never change sign; they show up as critical
//! points where `p` vanishes to within rounding.

use crate::error::{Error, Result};
use crate::poly;

const MAX_BISECTIONS: usize = 2_000;

/// Real roots of `coeffs` (lowest degree first) inside `[lo, hi]`, ascending,
/// each reported once.
pub fn positive_real_roots(coeffs: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("bad root bracket [{lo}, {hi}]")));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("non-finite polynomial coefficient".into()));
    }
    let p = poly::trim(coeffs);
    if p.is_empty() {
        return Err(Error::ZeroPolynomial);
    }
    let mut roots = isolate(p, lo, hi)?;
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() <= 1e-8 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    Ok(roots)
}

fn isolate(p: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    match p.len() {
        0 | 1 => Ok(Vec::new()),
        2 => {
            let r = -p[0] / p[1];
            Ok(if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() })
        }
        _ => {
            let crit = isolate(poly::trim(&poly::derivative(p)), lo, hi)?;
            let mut knots = Vec::with_capacity(crit.len() + 2);
            knots.push(lo);
            knots.extend(crit.into_iter().filter(|&c| c > lo && c < hi));
            knots.push(hi);

            let values: Vec<f64> = knots.iter().map(|&x| poly::eval(p, x)).collect();
            if values.iter().any(|v| v.is_nan()) {
                return Err(Error::Numeric("polynomial evaluated to NaN".into()));
            }

            let mut out = Vec::new();
            for (&x, &f) in knots.iter().zip(&values) {
                if f == 0.0 || f.abs() <= rounding_bound(p, x) {
                    out.push(x);
                }
            }
            for w in 0..knots.len() - 1 {
                let (f0, f1) = (values[w], values[w + 1]);
                if f0 != 0.0 && f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
                    out.push(bisect(p, knots[w], knots[w + 1], f0 < 0.0)?);
                }
            }
            Ok(out)
        }
    }
}

/// Horner rounding-error bound at `x`.
fn rounding_bound(p: &[f64], x: f64) -> f64 {
    let abs: Vec<f64> = p.iter().map(|c| c.abs()).collect();
    64.0 * f64::EPSILON * poly::eval(&abs, x.abs())
}

fn bisect(p: &[f64], mut a: f64, mut b: f64, negative_at_a: bool) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Ok(mid);
        }
        let f = poly::eval(p, mid);
        if f.is_nan() {
            return Err(Error::Numeric(format!("NaN while bisecting near {mid}")));
        }
        if f == 0.0 {
            return Ok(mid);
        }
        if (f < 0.0) == negative_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Err(Error::Numeric(format!(
        "root bisection did not converge on [{a}, {b}]"
    )))
}
