//! Real-coefficient polynomials stored in descending powers.
//!
//! Roots come from the eigenvalues of the companion matrix, then each root
//! gets a few Newton polishing iterations on the original coefficients.

use nalgebra::{Complex, DMatrix};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Drops leading zero coefficients. Returns an empty slice for the zero polynomial.
pub fn trim_leading(coeffs: &[f64]) -> &[f64] {
    let first = coeffs.iter().position(|c| *c != 0.0).unwrap_or(coeffs.len());
    &coeffs[first..]
}

/// Horner evaluation at a complex point.
pub fn eval(coeffs: &[f64], z: C64) -> C64 {
    coeffs
        .iter()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Scale used for the relative residual test: sum of |c_i| |z|^i.
pub fn residual_scale(coeffs: &[f64], z: C64) -> f64 {
    let r = z.norm();
    coeffs.iter().fold(0.0, |acc, &c| acc * r + c.abs())
}

/// Sum of two polynomials in descending-power form, aligned on the constant term.
pub fn add_scaled(a: &[f64], b: &[f64], k: f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &c) in a.iter().rev().enumerate() {
        out[n - 1 - i] += c;
    }
    for (i, &c) in b.iter().rev().enumerate() {
        out[n - 1 - i] += k * c;
    }
    out
}

/// Product of two polynomials.
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

/// All complex roots of the polynomial, sorted by descending real part then
/// descending imaginary part.
pub fn roots(coeffs: &[f64]) -> Result<Vec<C64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficients"));
    }
    let p = trim_leading(coeffs);
    if p.is_empty() {
        return Err(Error::input("zero polynomial has no well-defined roots"));
    }
    let degree = p.len() - 1;
    if degree == 0 {
        return Err(Error::input("constant polynomial has no roots"));
    }

    // Exact zero roots are split off first so the companion matrix stays
    // well conditioned and s = 0 comes back exactly.
    let trailing_zeros = p.iter().rev().take_while(|c| **c == 0.0).count();
    let reduced = &p[..p.len() - trailing_zeros];
    let mut out: Vec<C64> = vec![C64::new(0.0, 0.0); trailing_zeros];

    let m = reduced.len() - 1;
    if m > 0 {
        let lead = reduced[0];
        let mut companion = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            companion[(0, j)] = -reduced[j + 1] / lead;
        }
        for i in 1..m {
            companion[(i, i - 1)] = 1.0;
        }
        for z in companion.complex_eigenvalues().iter() {
            out.push(polish(reduced, *z));
        }
    }

    out.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

fn polish(coeffs: &[f64], mut z: C64) -> C64 {
    let mut best = eval(coeffs, z).norm();
    for _ in 0..8 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let r = eval(coeffs, candidate).norm();
        if !(r < best) {
            break;
        }
        best = r;
        z = candidate;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        let r = roots(&[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].re - 1.0).abs() < 1e-14 && r[0].im.abs() < 1e-14);
        assert!((r[1].re + 1.0).abs() < 1e-14 && r[1].im.abs() < 1e-14);
    }

    #[test]
    fn complex_pair() {
        // s^2 + 2s + 5 -> -1 ± 2i
        let r = roots(&[1.0, 2.0, 5.0]).unwrap();
        assert!((r[0] - C64::new(-1.0, 2.0)).norm() < 1e-12);
        assert!((r[1] - C64::new(-1.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_root_is_exact() {
        let r = roots(&[1.0, -3.0, 2.0, 0.0]).unwrap();
        assert!(r.iter().any(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn zero_and_constant_rejected() {
        assert!(roots(&[0.0, 0.0]).is_err());
        assert!(roots(&[]).is_err());
        assert!(roots(&[3.0]).is_err());
        assert!(roots(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn leading_zeros_are_trimmed() {
        let r = roots(&[0.0, 0.0, 1.0, -2.0]).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn add_and_mul() {
        assert_eq!(add_scaled(&[1.0, 2.0, 3.0], &[1.0, 1.0], 2.0), vec![1.0, 4.0, 5.0]);
        assert_eq!(mul(&[1.0, 1.0], &[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
    }
}
