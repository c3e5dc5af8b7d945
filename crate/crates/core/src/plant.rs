//! Cart–pendulum physical model.
//!
//! Angle convention: `theta = π` is the upright equilibrium and `theta = 0`
//! hangs straight down. Every linear-model quantity in this module
//! ([`linearize`], [`transfer_functions`], [`controllability`]) is expressed in
//! the deviation coordinate `phi = theta - π`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::poly::{self, C64};
use crate::{Error, Result};

/// Angle of the upright equilibrium.
pub const UPRIGHT: f64 = PI;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// kg
    pub cart_mass: f64,
    /// kg
    pub pend_mass: f64,
    /// Viscous cart friction, N·s/m.
    pub friction: f64,
    /// Pendulum inertia about its center of mass, kg·m².
    pub inertia: f64,
    /// Pivot to center-of-mass distance, m.
    pub half_length: f64,
    /// m/s²
    pub gravity: f64,
}

impl PhysicalParams {
    /// Reference rig, with the uniform-rod inertia `m_p l² / 3 = 0.006`.
    pub fn reference() -> Self {
        PhysicalParams {
            cart_mass: 0.5,
            pend_mass: 0.2,
            friction: 0.1,
            inertia: 0.006,
            half_length: 0.3,
            gravity: 9.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pend_mass", self.pend_mass),
            ("inertia", self.inertia),
            ("half_length", self.half_length),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::params(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !self.friction.is_finite() || self.friction < 0.0 {
            return Err(Error::params(format!(
                "friction must be finite and >= 0, got {}",
                self.friction
            )));
        }
        if self.alpha() <= 0.0 {
            return Err(Error::params(format!("alpha = {} is not positive", self.alpha())));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.cart_mass + self.pend_mass
    }

    /// Pendulum inertia about the pivot, `J + m_p l²`.
    pub fn pivot_inertia(&self) -> f64 {
        self.inertia + self.pend_mass * self.half_length * self.half_length
    }

    /// `(m_c + m_p)(J + m_p l²) - (m_p l)²`, the determinant of the mass matrix
    /// at the equilibria.
    pub fn alpha(&self) -> f64 {
        let ml = self.pend_mass * self.half_length;
        self.total_mass() * self.pivot_inertia() - ml * ml
    }

    /// Mass-matrix determinant at angle `theta`.
    pub fn mass_matrix_det(&self, theta: f64) -> f64 {
        let mlc = self.pend_mass * self.half_length * theta.cos();
        self.total_mass() * self.pivot_inertia() - mlc * mlc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub t: f64,
}

impl PlantState {
    pub fn upright() -> Self {
        PlantState { x: 0.0, x_dot: 0.0, theta: UPRIGHT, theta_dot: 0.0, t: 0.0 }
    }

    /// Builds a state from `(x, x_dot, phi, theta_dot)` with `phi = theta - π`.
    pub fn from_deviation(dev: [f64; 4], t: f64) -> Self {
        PlantState { x: dev[0], x_dot: dev[1], theta: dev[2] + UPRIGHT, theta_dot: dev[3], t }
    }

    pub fn from_vector(v: [f64; 4], t: f64) -> Self {
        PlantState { x: v[0], x_dot: v[1], theta: v[2], theta_dot: v[3], t }
    }

    pub fn vector(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    /// `(x, x_dot, theta - π, theta_dot)`.
    pub fn deviation(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta - UPRIGHT, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.vector().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// State derivative `(x_dot, x_ddot, theta_dot, theta_ddot)` of the nonlinear
/// cart–pendulum under horizontal cart force `u`.
///
/// Solves the 2×2 mass-matrix system
///
/// ```text
/// [ m_c + m_p       m_p l cosθ ] [ẍ]   [ u - b ẋ + m_p l sinθ θ̇² ]
/// [ m_p l cosθ      J + m_p l² ] [θ̈] = [ -m_p g l sinθ           ]
/// ```
///
/// by Cramer's rule. The determinant is bounded below by `m_c (J + m_p l²) > 0`.
pub fn nonlinear_derivative(state: &PlantState, u: f64, params: &PhysicalParams) -> Result<[f64; 4]> {
    if !state.vector().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("plant input force"));
    }
    Ok(derivative_unchecked(&state.vector(), u, params))
}

#[inline]
pub(crate) fn derivative_unchecked(s: &[f64; 4], u: f64, p: &PhysicalParams) -> [f64; 4] {
    let [_, x_dot, theta, theta_dot] = *s;
    let (sin, cos) = theta.sin_cos();
    let ml = p.pend_mass * p.half_length;
    let m11 = p.total_mass();
    let m12 = ml * cos;
    let m22 = p.pivot_inertia();
    let r1 = u - p.friction * x_dot + ml * sin * theta_dot * theta_dot;
    let r2 = -ml * p.gravity * sin;
    let det = m11 * m22 - m12 * m12;
    let x_ddot = (m22 * r1 - m12 * r2) / det;
    let theta_ddot = (m11 * r2 - m12 * r1) / det;
    [x_dot, x_ddot, theta_dot, theta_ddot]
}

/// Kinetic energy of cart and pendulum.
pub fn kinetic_energy(state: &PlantState, p: &PhysicalParams) -> f64 {
    let ml = p.pend_mass * p.half_length;
    0.5 * p.total_mass() * state.x_dot * state.x_dot
        + ml * state.theta.cos() * state.x_dot * state.theta_dot
        + 0.5 * p.pivot_inertia() * state.theta_dot * state.theta_dot
}

/// Potential energy with the pivot height as reference.
pub fn potential_energy(state: &PlantState, p: &PhysicalParams) -> f64 {
    -p.pend_mass * p.gravity * p.half_length * state.theta.cos()
}

pub fn total_energy(state: &PlantState, p: &PhysicalParams) -> f64 {
    kinetic_energy(state, p) + potential_energy(state, p)
}

/// Entries of the linearized model in the usual `a1..a6` layout:
///
/// ```text
/// A = [0 1  0  0; 0 a1 a2 0; 0 0 0 1; 0 a3 a4 0],  B = [0 a5 0 a6]^T
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
}

impl LinearCoefficients {
    pub fn new(p: &PhysicalParams) -> Result<Self> {
        p.validate()?;
        let alpha = p.alpha();
        let ml = p.pend_mass * p.half_length;
        let ip = p.pivot_inertia();
        Ok(LinearCoefficients {
            a1: -ip * p.friction / alpha,
            a2: ml * ml * p.gravity / alpha,
            a3: -ml * p.friction / alpha,
            a4: p.total_mass() * ml * p.gravity / alpha,
            a5: ip / alpha,
            a6: ml / alpha,
        })
    }
}

/// Linear model `ẋ = A x + B u`, `y = C x + D u` in deviation coordinates
/// `(x, x_dot, phi, theta_dot)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStateSpace {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub c: Matrix2x4<f64>,
    pub d: Vector2<f64>,
}

impl LinearStateSpace {
    pub fn from_coefficients(k: &LinearCoefficients) -> Self {
        #[rustfmt::skip]
        let a = Matrix4::new(
            0.0, 1.0,  0.0,  0.0,
            0.0, k.a1, k.a2, 0.0,
            0.0, 0.0,  0.0,  1.0,
            0.0, k.a3, k.a4, 0.0,
        );
        let b = Vector4::new(0.0, k.a5, 0.0, k.a6);
        #[rustfmt::skip]
        let c = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        LinearStateSpace { a, b, c, d: Vector2::zeros() }
    }

    pub fn a_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(4, 4, self.a.iter().copied())
    }

    pub fn b_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(4, 1, self.b.iter().copied())
    }
}

/// Linearizes the plant about the upright equilibrium.
pub fn linearize(params: &PhysicalParams) -> Result<LinearStateSpace> {
    Ok(LinearStateSpace::from_coefficients(&LinearCoefficients::new(params)?))
}

/// Rational transfer function, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl TransferFunction {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if numerator.iter().chain(&denominator).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("transfer function coefficients"));
        }
        match denominator.first() {
            None => return Err(Error::input("empty denominator")),
            Some(&c) if c == 0.0 => {
                return Err(Error::input("leading denominator coefficient is zero"))
            }
            _ => {}
        }
        Ok(TransferFunction { numerator, denominator })
    }

    /// Same system with the denominator scaled to a unit leading coefficient.
    pub fn monic(&self) -> Self {
        let lead = self.denominator[0];
        TransferFunction {
            numerator: self.numerator.iter().map(|c| c / lead).collect(),
            denominator: self.denominator.iter().map(|c| c / lead).collect(),
        }
    }

    pub fn denominator_degree(&self) -> usize {
        self.denominator.len() - 1
    }
}

/// Transfer functions from cart force to cart position and to pendulum
/// deviation angle, both with monic denominators.
///
/// Returns `(cart, pendulum)`. The pendulum denominator is the third-order
/// polynomial `s³ + b(J+m_p l²)/α s² - (m_c+m_p) m_p g l/α s - b m_p g l/α`;
/// the cart denominator is the same polynomial times `s`.
pub fn transfer_functions(params: &PhysicalParams) -> Result<(TransferFunction, TransferFunction)> {
    params.validate()?;
    let alpha = params.alpha();
    let ml = params.pend_mass * params.half_length;
    let ip = params.pivot_inertia();
    let b = params.friction;
    let mgl = ml * params.gravity;

    let pendulum_den = vec![1.0, b * ip / alpha, -params.total_mass() * mgl / alpha, -b * mgl / alpha];
    let pendulum = TransferFunction::new(vec![ml / alpha, 0.0], pendulum_den.clone())?;

    let cart_den = poly::mul(&pendulum_den, &[1.0, 0.0]);
    let cart = TransferFunction::new(vec![ip / alpha, 0.0, -mgl / alpha], cart_den)?;
    Ok((cart, pendulum))
}

/// Roots of the denominator of `tf`.
pub fn poles(tf: &TransferFunction) -> Result<Vec<C64>> {
    poly::roots(&tf.denominator)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controllability {
    pub matrix: Matrix4<f64>,
    pub rank: usize,
    pub det: f64,
}

/// `[B | AB | A²B | A³B]` with its numerical rank and determinant.
pub fn controllability(ss: &LinearStateSpace) -> Controllability {
    let mut matrix = Matrix4::zeros();
    let mut col = ss.b;
    for j in 0..4 {
        matrix.set_column(j, &col);
        col = ss.a * col;
    }
    let dynm = DMatrix::from_iterator(4, 4, matrix.iter().copied());
    Controllability { rank: numerical_rank(&dynm), det: matrix.determinant(), matrix }
}

/// `[B | AB | ... | A^{n-1}B]` for arbitrary dimensions.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    out
}

/// Rank from singular values, zeroing those below [`RANK_TOLERANCE`] · σ_max.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusPoint {
    pub gain: f64,
    pub poles: Vec<C64>,
}

/// Closed-loop poles `roots(den + k·num)` for each gain.
pub fn root_locus_sweep(tf: &TransferFunction, gains: &[f64]) -> Result<Vec<LocusPoint>> {
    gains
        .iter()
        .map(|&k| {
            if !k.is_finite() || k < 0.0 {
                return Err(Error::input(format!("root-locus gain must be finite and >= 0, got {k}")));
            }
            let closed = poly::add_scaled(&tf.denominator, &tf.numerator, k);
            Ok(LocusPoint { gain: k, poles: poly::roots(&closed)? })
        })
        .collect()
}

pub fn write_poles_csv<W: Write>(mut w: W, systems: &[(&str, &[C64])]) -> std::io::Result<()> {
    writeln!(w, "system,index,re,im")?;
    for (label, poles) in systems {
        for (i, p) in poles.iter().enumerate() {
            writeln!(w, "{label},{i},{:?},{:?}", p.re, p.im)?;
        }
    }
    Ok(())
}

pub fn write_locus_csv<W: Write>(mut w: W, locus: &[LocusPoint]) -> std::io::Result<()> {
    writeln!(w, "gain,index,re,im")?;
    for point in locus {
        for (i, p) in point.poles.iter().enumerate() {
            writeln!(w, "{:?},{i},{:?},{:?}", point.gain, p.re, p.im)?;
        }
    }
    Ok(())
}
