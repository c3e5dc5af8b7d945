use pendulum_lab::plant::{
    controllability, linearize, nonlinear_derivative, poles, root_locus_sweep, total_energy, transfer_functions,
    LinearCoefficients, PhysicalParams, PlantState, TransferFunction,
};
use pendulum_lab::simulate::rk4_step;
use proptest::prelude::*;

fn rig() -> PhysicalParams {
    PhysicalParams::reference()
}

/// Central-difference Jacobian of the nonlinear vector field at upright.
fn numeric_jacobian(p: &PhysicalParams) -> ([[f64; 4]; 4], [f64; 4]) {
    let h = 1e-6;
    let f = |dev: [f64; 4], u: f64| nonlinear_derivative(&PlantState::from_deviation(dev, 0.0), u, p).unwrap();
    let mut a = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut plus = [0.0; 4];
        let mut minus = [0.0; 4];
        plus[j] = h;
        minus[j] = -h;
        let (fp, fm) = (f(plus, 0.0), f(minus, 0.0));
        for i in 0..4 {
            a[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let (fp, fm) = (f([0.0; 4], h), f([0.0; 4], -h));
    let mut b = [0.0; 4];
    for i in 0..4 {
        b[i] = (fp[i] - fm[i]) / (2.0 * h);
    }
    (a, b)
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

#[test]
fn linearization_matches_finite_differences() {
    for p in [
        rig(),
        PhysicalParams { cart_mass: 1.3, pend_mass: 0.4, friction: 0.7, inertia: 0.02, half_length: 0.5, gravity: 9.81 },
    ] {
        let ss = linearize(&p).unwrap();
        let (a, b) = numeric_jacobian(&p);
        for i in 0..4 {
            for j in 0..4 {
                assert!(close(ss.a[(i, j)], a[i][j], 1e-6, 1e-9), "A[{i}][{j}] {} vs {}", ss.a[(i, j)], a[i][j]);
            }
            assert!(close(ss.b[i], b[i], 1e-6, 1e-9), "B[{i}]");
        }
    }
}

#[test]
fn reference_state_matrices() {
    let k = LinearCoefficients::new(&rig()).unwrap();
    let ss = linearize(&rig()).unwrap();
    for (got, want) in [
        (ss.a[(1, 2)], 2.673),
        (ss.a[(3, 1)], -0.4545),
        (ss.a[(3, 2)], 31.18),
        (ss.b[1], 1.818),
        (ss.b[3], 4.545),
    ] {
        assert!((got - want).abs() <= 5e-4 * want.abs(), "{got} vs {want}");
    }
    // Damping term: b (J + m l²) / α with α = 0.0132.
    assert!((k.a1 + 0.1 * 0.024 / 0.0132).abs() < 1e-12);
}

#[test]
fn transfer_function_poles() {
    let (cart, pend) = transfer_functions(&rig()).unwrap();
    let mut p: Vec<f64> = poles(&pend).unwrap().iter().map(|z| z.re).collect();
    p.sort_by(f64::total_cmp);
    for (got, want) in p.iter().zip([-5.6041, -0.1428, 5.5651]) {
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
    let c = poles(&cart).unwrap();
    assert_eq!(c.len(), 4);
    assert!(c.iter().any(|z| z.norm() == 0.0));
    assert!(c.iter().all(|z| z.im.abs() < 1e-9));
}

#[test]
fn transfer_function_matches_state_space() {
    // G(s) = C (sI - A)^{-1} B, evaluated through a linear solve at test points.
    let p = rig();
    let ss = linearize(&p).unwrap();
    let (cart, pend) = transfer_functions(&p).unwrap();
    for s in [0.7, 2.0, -3.3, 10.0] {
        let m = nalgebra::Matrix4::identity() * s - ss.a;
        let x = m.lu().solve(&ss.b).unwrap();
        let ev = |c: &[f64]| c.iter().fold(0.0, |acc, v| acc * s + v);
        let g_cart = ev(&cart.numerator) / ev(&cart.denominator);
        let g_pend = ev(&pend.numerator) / ev(&pend.denominator);
        assert!(close(x[0], g_cart, 1e-10, 1e-12), "cart at {s}");
        assert!(close(x[2], g_pend, 1e-10, 1e-12), "pendulum at {s}");
    }
}

#[test]
fn controllability_of_reference_plant() {
    let co = controllability(&linearize(&rig()).unwrap());
    assert_eq!(co.rank, 4);
    let want = [
        [0.0, 1.8182, -0.3306, 12.2089],
        [1.8182, -0.3306, 12.2089, -4.4287],
        [0.0, 4.5455, -0.8264, 141.8858],
        [4.5455, -0.8264, 141.8858, -31.3196],
    ];
    for i in 0..4 {
        for j in 0..4 {
            assert!(close(co.matrix[(i, j)], want[i][j], 1e-2, 1e-12), "Co[{i}][{j}]");
        }
    }
}

#[test]
fn upright_is_unstable() {
    let p = rig();
    let ss = linearize(&p).unwrap();
    let max_re = ss.a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
    assert!(max_re > 5.0);
    // A tiny tilt grows in the nonlinear model too.
    let mut s = PlantState::from_deviation([0.0, 0.0, 1e-4, 0.0], 0.0);
    for _ in 0..1000 {
        s = rk4_step(&s, 0.0, 0.0, 1e-3, &p).unwrap();
    }
    assert!(s.deviation()[2].abs() > 1e-2);
}

#[test]
fn energy_conserved_without_friction() {
    let p = PhysicalParams { friction: 0.0, ..rig() };
    for theta in [1.0, 2.5, std::f64::consts::PI - 0.2] {
        let mut s = PlantState { x: 0.0, x_dot: 0.3, theta, theta_dot: -0.5, t: 0.0 };
        let e0 = total_energy(&s, &p);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            s = rk4_step(&s, 0.0, 0.0, 1e-3, &p).unwrap();
            worst = worst.max((total_energy(&s, &p) - e0).abs());
        }
        assert!(worst <= 1e-5 * e0.abs(), "theta {theta}: drift {worst}, E0 {e0}");
    }
}

#[test]
fn root_locus_zero_gain_is_open_loop() {
    let (_, pend) = transfer_functions(&rig()).unwrap();
    let locus = root_locus_sweep(&pend, &[0.0, 1.0]).unwrap();
    let open = poles(&pend).unwrap();
    for (a, b) in locus[0].poles.iter().zip(&open) {
        assert!((a - b).norm() < 1e-12);
    }
    assert!(root_locus_sweep(&pend, &[-1.0]).is_err());
}

proptest! {
    #[test]
    fn scaling_a_transfer_function_keeps_its_poles(k in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
        let (_, pend) = transfer_functions(&rig()).unwrap();
        let scaled = TransferFunction::new(
            pend.numerator.iter().map(|c| c * k).collect(),
            pend.denominator.iter().map(|c| c * k).collect(),
        ).unwrap();
        let (m0, m1) = (pend.monic(), scaled.monic());
        for (a, b) in m0.denominator.iter().zip(&m1.denominator) {
            prop_assert!(close(*a, *b, 1e-12, 1e-14));
        }
        for (a, b) in poles(&pend).unwrap().iter().zip(poles(&scaled).unwrap().iter()) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn mass_matrix_is_invertible(theta in -10.0..10.0f64) {
        prop_assert!(rig().mass_matrix_det(theta) > 0.0);
    }
}
