//! Continuous-time algebraic Riccati equation
//!
//! ```text
//! S A + Aᵀ S - S B R⁻¹ Bᵀ S + Q = 0
//! ```
//!
//! for a scalar control weight `R`. The stabilizing solution is seeded from
//! the stable invariant subspace of the Hamiltonian matrix and then refined
//! by Newton–Kleinman iteration, where each step solves a Lyapunov equation.

use nalgebra::{Complex, DMatrix, DVector};

use crate::plant::{controllability_matrix, numerical_rank};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
/// Newton–Kleinman stops below this normalized residual or once progress stalls.
pub const TARGET_RESIDUAL: f64 = 1e-15;
/// Solutions with a normalized residual above this are rejected.
pub const ACCEPT_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    /// Stabilizing solution, symmetric positive semidefinite.
    pub s: DMatrix<f64>,
    /// Feedback gain `R⁻¹ Bᵀ S` (m × n); the applied control is `u = -K x`.
    pub k: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual for the original `(Q, R)`.
    pub residual: f64,
    pub iterations: usize,
}

/// Frobenius norm of `S A + Aᵀ S - S B R⁻¹ Bᵀ S + Q`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64, s: &DMatrix<f64>) -> f64 {
    let sb = s * b;
    (s * a + a.transpose() * s - &sb * sb.transpose() / r + q).norm()
}

/// Solves the CARE for the stabilizing solution.
///
/// Internally the problem is normalized to `(Q / R, 1)`; `S` scales back by
/// `R` and `K` is unchanged, so jointly scaling `(Q, R)` leaves `K` invariant.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64) -> Result<CareSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n || b.ncols() == 0 {
        return Err(Error::input("CARE: dimension mismatch between A, B and Q"));
    }
    if a.iter().chain(b.iter()).chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CARE matrices"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::input(format!("CARE: R must be > 0, got {r}")));
    }
    let q_scale = q.norm().max(1.0);
    if (q - q.transpose()).norm() > 1e-12 * q_scale {
        return Err(Error::input("CARE: Q must be symmetric"));
    }
    let q_min = q.clone().symmetric_eigenvalues().min();
    if q_min < -1e-10 * q_scale {
        return Err(Error::input(format!("CARE: Q must be positive semidefinite (min eigenvalue {q_min:e})")));
    }
    let rank = numerical_rank(&controllability_matrix(a, b));
    if rank < n {
        return Err(Error::Uncontrollable { rank, n });
    }

    let qn = q / r;
    let tol = TARGET_RESIDUAL * (1.0 + qn.norm());
    let mut s = hamiltonian_seed(a, b, &qn)?;
    let mut best_residual = care_residual(a, b, &qn, 1.0, &s);
    let mut iterations = 0;
    let mut stalled = 0;

    while best_residual > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        let k = b.transpose() * &s;
        let closed = a - b * &k;
        let rhs = -(&qn + k.transpose() * &k);
        let candidate = match solve_lyapunov(&closed, &rhs) {
            Some(x) => symmetrize(&x),
            None => break,
        };
        let res = care_residual(a, b, &qn, 1.0, &candidate);
        if res < best_residual {
            stalled = if res > 0.5 * best_residual { stalled + 1 } else { 0 };
            best_residual = res;
            s = candidate;
        } else {
            stalled += 1;
        }
        if stalled >= 3 {
            break;
        }
    }

    if best_residual > ACCEPT_RESIDUAL * (1.0 + qn.norm()) {
        return Err(Error::NoConvergence { what: "CARE Newton–Kleinman iteration", residual: best_residual * r });
    }

    let k = b.transpose() * &s;
    let s = s * r;
    let residual = care_residual(a, b, q, r, &s);
    Ok(CareSolution { s, k, residual, iterations })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `Fᵀ X + X F = M` through its Kronecker form.
pub fn solve_lyapunov(f: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    let op = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = DVector::from_column_slice(m.as_slice());
    let x = op.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Stabilizing solution from the eigenvectors of
/// `H = [A, -B Bᵀ; -Q, -Aᵀ]` belonging to its `n` stable eigenvalues:
/// with those eigenvectors stacked as `[U₁; U₂]`, `S = U₂ U₁⁻¹`.
pub fn hamiltonian_seed(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let scale = h.norm().max(1.0);
    let stable: Vec<Complex<f64>> = h
        .complex_eigenvalues()
        .iter()
        .copied()
        .filter(|l| l.re < -1e-12 * scale)
        .collect();
    if stable.len() != n {
        return Err(Error::NoConvergence {
            what: "Hamiltonian stable-subspace extraction",
            residual: f64::NAN,
        });
    }

    let hc: DMatrix<Complex<f64>> = h.map(|v| Complex::new(v, 0.0));
    let mut basis = DMatrix::<Complex<f64>>::zeros(2 * n, n);
    for (j, lambda) in stable.iter().enumerate() {
        let mut shifted = hc.clone();
        for i in 0..2 * n {
            shifted[(i, i)] -= lambda;
        }
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::input("SVD failed"))?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.partial_cmp(y.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        for i in 0..2 * n {
            basis[(i, j)] = v_t[(idx, i)].conj();
        }
    }

    let u1 = basis.view((0, 0), (n, n)).clone_owned();
    let u2 = basis.view((n, 0), (n, n)).clone_owned();
    let u1_inv = u1.try_inverse().ok_or(Error::NoConvergence {
        what: "Hamiltonian stable-subspace extraction",
        residual: f64::NAN,
    })?;
    let s = (u2 * u1_inv).map(|c| c.re);
    Ok(symmetrize(&s))
}
