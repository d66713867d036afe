//! Dense polynomial helpers. Coefficients are stored lowest degree first.

use crate::worldmodel::Vec2;

pub fn eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, &c)| l as f64 * c)
        .collect()
}

/// Drops trailing exact zeros. An all-zero input becomes empty.
pub fn trim(coeffs: &[f64]) -> &[f64] {
    let n = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    &coeffs[..n]
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &c) in a.iter().enumerate() {
        out[i] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        out[i] += c;
    }
    out
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of `q(s) = p(s + offset)`.
pub fn shift(coeffs: &[f64], offset: f64) -> Vec<f64> {
    if offset == 0.0 {
        return coeffs.to_vec();
    }
    let n = coeffs.len();
    let powers: Vec<f64> = (0..n).scan(1.0, |acc, _| {
        let cur = *acc;
        *acc *= offset;
        Some(cur)
    })
    .collect();
    (0..n)
        .map(|m| {
            (m..n)
                .map(|l| binomial(l, m) * coeffs[l] * powers[l - m])
                .sum()
        })
        .collect()
}

// Planar polynomials p(s) = sum c_l s^l with c_l in R^2.

pub fn eval_vec(coeffs: &[Vec2], t: f64) -> Vec2 {
    coeffs.iter().rev().fold(Vec2::ZERO, |acc, &c| acc * t + c)
}

pub fn derivative_vec(coeffs: &[Vec2]) -> Vec<Vec2> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, &c)| c * l as f64)
        .collect()
}

pub fn shift_vec(coeffs: &[Vec2], offset: f64) -> Vec<Vec2> {
    let xs: Vec<f64> = coeffs.iter().map(|c| c.x).collect();
    let ys: Vec<f64> = coeffs.iter().map(|c| c.y).collect();
    shift(&xs, offset)
        .into_iter()
        .zip(shift(&ys, offset))
        .map(|(x, y)| Vec2::new(x, y))
        .collect()
}

pub fn sub_vec(a: &[Vec2], b: &[Vec2]) -> Vec<Vec2> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            a.get(i).copied().unwrap_or(Vec2::ZERO) - b.get(i).copied().unwrap_or(Vec2::ZERO)
        })
        .collect()
}

/// Scalar polynomial `|p(s)|^2`.
pub fn norm_sq_vec(coeffs: &[Vec2]) -> Vec<f64> {
    let xs: Vec<f64> = coeffs.iter().map(|c| c.x).collect();
    let ys: Vec<f64> = coeffs.iter().map(|c| c.y).collect();
    add(&mul(&xs, &xs), &mul(&ys, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_naive() {
        let c = [1.0, -2.0, 0.5, 3.0];
        let t: f64 = 1.7;
        let naive: f64 = c.iter().enumerate().map(|(l, &x)| x * t.powi(l as i32)).sum();
        assert!((eval(&c, t) - naive).abs() < 1e-12);
    }

    #[test]
    fn shift_agrees_with_direct_evaluation() {
        let c = [0.3, -1.0, 2.0, 0.25, -0.125];
        for &off in &[0.0, 0.5, -1.25, 3.0] {
            let s = shift(&c, off);
            for &x in &[-1.0, 0.0, 0.7, 2.0] {
                let lhs = eval(&s, x);
                let rhs = eval(&c, x + off);
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{off} {x}");
            }
        }
    }

    #[test]
    fn trim_drops_trailing_zeros() {
        assert_eq!(trim(&[1.0, 0.0, 2.0, 0.0, 0.0]), &[1.0, 0.0, 2.0]);
        assert!(trim(&[0.0, 0.0]).is_empty());
    }
}
