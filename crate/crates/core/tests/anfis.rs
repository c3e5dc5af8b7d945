use pendulum_lab::anfis::membership::BellGrad;
use pendulum_lab::anfis::train::{relative_error_percent, rmse, solve_consequents, sse, sse_premise_gradient};
use pendulum_lab::anfis::{normalize, train_hybrid, AnfisModel, Dataset, TrainConfig};
use pendulum_lab::cli::{build_dataset, design_lqr};
use pendulum_lab::config::RunConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stage1() -> (Dataset, [f64; 4]) {
    let cfg = RunConfig::default();
    let design = design_lqr(&cfg).unwrap();
    let ds = build_dataset(&cfg, &design).unwrap();
    let k = [design.k[0], design.k[1], design.k[2], design.k[3]];
    (ds, k)
}

#[test]
fn lqr_targets_are_exactly_representable() {
    let (ds, k) = stage1();
    let (inputs, targets) = ds.split_view(&ds.train);
    // Oracle: every rule consequent set to (-K, 0).
    let mut oracle = AnfisModel::grid(&ds.input_ranges(&ds.train).unwrap(), 2).unwrap();
    for row in &mut oracle.consequents {
        *row = vec![-k[0], -k[1], -k[2], -k[3], 0.0];
    }
    assert!(rmse(&oracle, &inputs, &targets).unwrap() < 1e-12);
}

#[test]
fn first_lse_pass_fits_stage1_data() {
    let (ds, k) = stage1();
    let report = train_hybrid(&ds, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert!(report.final_train_rmse() <= 1e-6, "{}", report.final_train_rmse());
    assert!(report.final_test_rmse() <= 1e-5, "{}", report.final_test_rmse());
    // Inside the training hull the policy reproduces -K·z.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ranges = ds.input_ranges(&ds.train).unwrap();
    for _ in 0..200 {
        let z: Vec<f64> = ranges.iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect();
        let want = -(k[0] * z[0] + k[1] * z[1] + k[2] * z[2] + k[3] * z[3]);
        assert!((report.model.infer(&z).unwrap() - want).abs() <= 1e-4);
    }
}

#[test]
fn full_training_stays_within_error_band() {
    let (ds, _) = stage1();
    let report = train_hybrid(&ds, &TrainConfig::default()).unwrap();
    assert_eq!(report.history.len(), 50);
    let (_, test_y) = ds.split_view(&ds.test);
    assert!(relative_error_percent(report.final_test_rmse(), &test_y) <= 0.05);
    for w in report.history.windows(2) {
        assert!(w[1].train_rmse <= w[0].train_rmse + 1e-9);
    }
}

#[test]
fn row_order_does_not_change_the_solution() {
    let (ds, _) = stage1();
    let (inputs, targets) = ds.split_view(&ds.train);
    let ranges = ds.input_ranges(&ds.train).unwrap();
    let mut a = AnfisModel::grid(&ranges, 2).unwrap();
    solve_consequents(&mut a, &inputs, &targets).unwrap();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.reverse();
    order.rotate_left(123);
    let pin: Vec<&[f64]> = order.iter().map(|&i| inputs[i]).collect();
    let pt: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
    let mut b = AnfisModel::grid(&ranges, 2).unwrap();
    solve_consequents(&mut b, &pin, &pt).unwrap();
    // The design matrix is ill conditioned, so parameters agree only to
    // roundoff times its condition number; predictions agree far tighter.
    for (ra, rb) in a.consequents.iter().zip(&b.consequents) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
    let (test_in, _) = ds.split_view(&ds.test);
    for z in test_in {
        let (ya, yb) = (a.infer(z).unwrap(), b.infer(z).unwrap());
        assert!((ya - yb).abs() <= 1e-9 * ya.abs().max(1.0), "{ya} vs {yb}");
    }
}

fn random_problem(seed: u64) -> (AnfisModel, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = vec![[-1.0, 1.0], [-2.0, 0.5], [0.0, 3.0], [-0.5, 0.5]];
    let mut model = AnfisModel::grid(&ranges, 2).unwrap();
    for row in &mut model.premises {
        for mf in row {
            mf.a *= rng.random_range(0.7..1.3);
            mf.b = rng.random_range(1.2..2.5);
            mf.c += rng.random_range(-0.1..0.1);
        }
    }
    let inputs: Vec<Vec<f64>> = (0..120)
        .map(|_| ranges.iter().map(|[lo, hi]| rng.random_range(*lo..*hi)).collect())
        .collect();
    let targets: Vec<f64> = inputs.iter().map(|z| (z[0] * z[1]).sin() + z[2] * z[2] - z[3]).collect();
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    solve_consequents(&mut model, &refs, &targets).unwrap();
    (model, inputs, targets)
}

#[test]
fn premise_gradient_matches_finite_differences() {
    for seed in [1, 2, 3] {
        let (model, inputs, targets) = random_problem(seed);
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let (_, grad) = sse_premise_gradient(&model, &refs, &targets).unwrap();
        let h = 1e-6;
        for i in 0..model.premises.len() {
            for m in 0..model.premises[i].len() {
                let fd = |set: &dyn Fn(&mut AnfisModel, f64)| {
                    let (mut p, mut q) = (model.clone(), model.clone());
                    set(&mut p, h);
                    set(&mut q, -h);
                    (sse(&p, &refs, &targets).unwrap() - sse(&q, &refs, &targets).unwrap()) / (2.0 * h)
                };
                let g: BellGrad = grad[i][m];
                let numeric = [
                    fd(&|md, d| md.premises[i][m].a += d),
                    fd(&|md, d| md.premises[i][m].b += d),
                    fd(&|md, d| md.premises[i][m].c += d),
                ];
                for (an, nu) in [g.da, g.db, g.dc].into_iter().zip(numeric) {
                    assert!((an - nu).abs() <= 1e-5 * an.abs().max(1.0), "seed {seed}: {an} vs {nu}");
                }
            }
        }
    }
}

#[test]
fn normalized_strengths_sum_to_one() {
    let (model, _, _) = random_problem(7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w = model.firing_strengths(&z).unwrap();
        assert!(w.iter().all(|v| *v > 0.0));
        let s: f64 = normalize(&w).unwrap().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn save_load_is_byte_identical() {
    let (model, _, _) = random_problem(5);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
    model.save(&p1).unwrap();
    let back = AnfisModel::load(&p1).unwrap();
    assert_eq!(back, model);
    back.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn truncated_model_file_names_the_gap() {
    let (model, _, _) = random_problem(5);
    let text = model.to_json().unwrap();
    let cut = &text[..text.find("\"input_ranges\"").unwrap()];
    let err = AnfisModel::from_json(cut).unwrap_err().to_string();
    assert!(err.contains("input_ranges"), "{err}");
}

proptest! {
    #[test]
    fn normalize_matches_direct_division(w in proptest::collection::vec(1e-12..1e3f64, 16)) {
        let total: f64 = w.iter().sum();
        let wn = normalize(&w).unwrap();
        for (a, b) in wn.iter().zip(&w) {
            prop_assert!((a - b / total).abs() <= 1e-15);
        }
        prop_assert!((wn.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn equal_consequents_give_their_affine_map(
        k in proptest::array::uniform4(-50.0..50.0f64),
        c in -5.0..5.0f64,
        z in proptest::array::uniform4(-3.0..3.0f64),
    ) {
        let mut model = AnfisModel::grid(&[[-1.0, 1.0]; 4], 2).unwrap();
        for row in &mut model.consequents {
            *row = vec![k[0], k[1], k[2], k[3], c];
        }
        let want = k[0] * z[0] + k[1] * z[1] + k[2] * z[2] + k[3] * z[3] + c;
        prop_assert!((model.infer(&z).unwrap() - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}
