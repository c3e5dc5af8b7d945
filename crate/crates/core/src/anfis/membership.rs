use serde::{Deserialize, Serialize};

/// Generalized bell membership function `1 / (1 + |(z - c) / a|^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellMf {
    /// Width, > 0.
    pub a: f64,
    /// Shape, > 0.
    pub b: f64,
    /// Center.
    pub c: f64,
}

/// Partial derivatives of a bell value with respect to `(a, b, c)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BellGrad {
    pub da: f64,
    pub db: f64,
    pub dc: f64,
}

impl BellMf {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        BellMf { a, b, c }
    }

    pub fn is_valid(&self) -> bool {
        self.a.is_finite() && self.a > 0.0 && self.b.is_finite() && self.b > 0.0 && self.c.is_finite()
    }

    pub fn eval(&self, z: f64) -> f64 {
        let t = ((z - self.c) / self.a).abs();
        1.0 / (1.0 + t.powf(2.0 * self.b))
    }

    /// Value and parameter gradient at `z`.
    pub fn eval_grad(&self, z: f64) -> (f64, BellGrad) {
        let t = (z - self.c) / self.a;
        let abs_t = t.abs();
        let q = abs_t.powf(2.0 * self.b);
        let mu = 1.0 / (1.0 + q);
        if abs_t == 0.0 {
            return (mu, BellGrad::default());
        }
        // dμ/dq = -μ²
        let dmu_dq = -mu * mu;
        let two_b = 2.0 * self.b;
        let dq_da = -two_b * q / self.a;
        let dq_dc = -two_b * q / (self.a * t);
        let dq_db = 2.0 * q * abs_t.ln();
        (mu, BellGrad { da: dmu_dq * dq_da, db: dmu_dq * dq_db, dc: dmu_dq * dq_dc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_is_exactly_one() {
        let mf = BellMf::new(0.7, 2.0, -1.3);
        assert_eq!(mf.eval(-1.3), 1.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        let mf = BellMf::new(0.5, 1.5, 2.0);
        for i in 1..200 {
            let d = i as f64 * 0.05;
            let lo = mf.eval(2.0 - d);
            let hi = mf.eval(2.0 + d);
            assert!((lo - hi).abs() <= 1e-14);
            assert!(lo > 0.0 && lo < 1.0);
        }
        // Half-height at |z - c| = a.
        assert!((mf.eval(2.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        for &(mf, z) in &[
            (BellMf::new(0.5, 2.0, 0.1), 0.4),
            (BellMf::new(1.2, 1.3, -0.7), -2.1),
            (BellMf::new(0.05, 3.0, 0.0), 0.02),
        ] {
            let (_, g) = mf.eval_grad(z);
            let fd = |f: &dyn Fn(f64) -> BellMf, p: f64| (f(p + h).eval(z) - f(p - h).eval(z)) / (2.0 * h);
            let da = fd(&|a| BellMf { a, ..mf }, mf.a);
            let db = fd(&|b| BellMf { b, ..mf }, mf.b);
            let dc = fd(&|c| BellMf { c, ..mf }, mf.c);
            for (an, num) in [(g.da, da), (g.db, db), (g.dc, dc)] {
                assert!((an - num).abs() <= 1e-6 * an.abs().max(1e-3), "{an} vs {num}");
            }
        }
    }
}
