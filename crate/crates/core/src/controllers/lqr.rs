use nalgebra::{DMatrix, Matrix4, RowVector4};
use serde::{Deserialize, Serialize};

use super::care::{care_residual, solve_care};
use super::Controller;
use crate::plant::{LinearStateSpace, PlantState};
use crate::poly::C64;
use crate::{Error, Result};

/// Infinite-horizon LQR design for the linearized plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub q: Matrix4<f64>,
    pub r: f64,
    pub s: Matrix4<f64>,
    pub k: RowVector4<f64>,
    pub residual: f64,
    pub closed_loop_poles: Vec<C64>,
}

impl LqrDesign {
    pub fn design(ss: &LinearStateSpace, q: Matrix4<f64>, r: f64) -> Result<Self> {
        let a = ss.a_dyn();
        let b = ss.b_dyn();
        let qd = DMatrix::from_iterator(4, 4, q.iter().copied());
        let sol = solve_care(&a, &b, &qd, r)?;
        let s = Matrix4::from_iterator(sol.s.iter().copied());
        let k = RowVector4::from_iterator(sol.k.iter().copied());
        let closed = ss.a - ss.b * k;
        let closed_loop_poles: Vec<C64> = closed.complex_eigenvalues().iter().copied().collect();
        if closed_loop_poles.iter().any(|p| p.re >= 0.0) {
            return Err(Error::NoConvergence { what: "LQR design (closed loop not Hurwitz)", residual: sol.residual });
        }
        Ok(LqrDesign { q, r, s, k, residual: sol.residual, closed_loop_poles })
    }

    pub fn from_diagonal(ss: &LinearStateSpace, q_diag: [f64; 4], r: f64) -> Result<Self> {
        Self::design(ss, Matrix4::from_diagonal(&q_diag.into()), r)
    }

    /// Riccati residual of this design against `ss`.
    pub fn residual_against(&self, ss: &LinearStateSpace) -> f64 {
        care_residual(
            &ss.a_dyn(),
            &ss.b_dyn(),
            &DMatrix::from_iterator(4, 4, self.q.iter().copied()),
            self.r,
            &DMatrix::from_iterator(4, 4, self.s.iter().copied()),
        )
    }

    pub fn max_closed_loop_real(&self) -> f64 {
        self.closed_loop_poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LqrDesignFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LqrDesignFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Command for the design: `-K (state - upright)`.
pub fn lqr_step(design: &LqrDesign, state: &PlantState) -> f64 {
    feedback(&design.k, state)
}

fn feedback(k: &RowVector4<f64>, state: &PlantState) -> f64 {
    let d = state.deviation();
    -(k[0] * d[0] + k[1] * d[1] + k[2] * d[2] + k[3] * d[3])
}

#[derive(Debug, Clone)]
pub struct LqrController {
    k: RowVector4<f64>,
}

impl LqrController {
    pub fn new(design: &LqrDesign) -> Self {
        LqrController { k: design.k }
    }

    pub fn from_gain(k: RowVector4<f64>) -> Self {
        LqrController { k }
    }
}

impl Controller for LqrController {
    fn command(&mut self, state: &PlantState, _dt: f64) -> Result<f64> {
        Ok(feedback(&self.k, state))
    }

    fn reset(&mut self) {}
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqrDesignFile {
    q: Vec<Vec<f64>>,
    r: f64,
    s: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    residual: f64,
    closed_loop_poles: Vec<[f64; 2]>,
}

fn rows(m: &Matrix4<f64>) -> Vec<Vec<f64>> {
    (0..4).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix4(name: &str, rows: &[Vec<f64>]) -> Result<Matrix4<f64>> {
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(Error::Malformed { kind: "LQR design", message: format!("`{name}` must be 4×4") });
    }
    Ok(Matrix4::from_fn(|i, j| rows[i][j]))
}

impl From<&LqrDesign> for LqrDesignFile {
    fn from(d: &LqrDesign) -> Self {
        LqrDesignFile {
            q: rows(&d.q),
            r: d.r,
            s: rows(&d.s),
            k: vec![d.k.iter().copied().collect()],
            residual: d.residual,
            closed_loop_poles: d.closed_loop_poles.iter().map(|p| [p.re, p.im]).collect(),
        }
    }
}

impl TryFrom<LqrDesignFile> for LqrDesign {
    type Error = Error;

    fn try_from(f: LqrDesignFile) -> Result<Self> {
        if f.k.len() != 1 || f.k[0].len() != 4 {
            return Err(Error::Malformed { kind: "LQR design", message: "`k` must be 1×4".into() });
        }
        if !(f.r > 0.0) {
            return Err(Error::Malformed { kind: "LQR design", message: "`r` must be > 0".into() });
        }
        Ok(LqrDesign {
            q: matrix4("q", &f.q)?,
            r: f.r,
            s: matrix4("s", &f.s)?,
            k: RowVector4::from_iterator(f.k[0].iter().copied()),
            residual: f.residual,
            closed_loop_poles: f.closed_loop_poles.iter().map(|p| C64::new(p[0], p[1])).collect(),
        })
    }
}
