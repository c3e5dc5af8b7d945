//! Hybrid learning: each epoch solves the consequents exactly by linear least
//! squares with the premises frozen, then takes one gradient-descent step on
//! the premise parameters with the consequents frozen.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::membership::BellGrad;
use super::model::AnfisModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub mfs_per_input: usize,
    /// Initial premise step length (parameter-space distance per epoch).
    pub learning_rate: f64,
    pub max_halvings: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, mfs_per_input: 2, learning_rate: 0.01, max_halvings: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Premise step length accepted after this epoch (0 if none).
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: AnfisModel,
    pub history: Vec<EpochRecord>,
    /// Set when any least-squares system was rank deficient and solved in
    /// the minimum-norm sense.
    pub rank_deficient: bool,
    /// Epochs whose premise step could not reduce the error within the
    /// halving budget.
    pub step_failures: usize,
}

impl TrainReport {
    pub fn final_train_rmse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_rmse)
    }

    pub fn final_test_rmse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.test_rmse)
    }

    pub fn write_history_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_rmse,test_rmse,step")?;
        for r in &self.history {
            writeln!(w, "{},{:?},{:?},{:?}", r.epoch, r.train_rmse, r.test_rmse, r.step)?;
        }
        Ok(())
    }
}

/// Outcome of one consequent solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LseOutcome {
    pub rank: usize,
    pub columns: usize,
}

impl LseOutcome {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.columns
    }
}

/// Solves the consequents of `model` by least squares on `(inputs, targets)`.
///
/// The design matrix row for sample `z` holds `w̄_j z_1 .. w̄_j z_n, w̄_j` for
/// every rule `j`. Singular values below `σ_max · max(rows, cols) · ε` are
/// dropped, giving the minimum-norm solution when the system is rank deficient.
pub fn solve_consequents(model: &mut AnfisModel, inputs: &[&[f64]], targets: &[f64]) -> Result<LseOutcome> {
    let n = model.n_inputs();
    let rules = model.rule_count();
    let cols = rules * (n + 1);
    let rows = inputs.len();
    if rows == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let strengths: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|z| model.normalized_strengths(z))
        .collect::<Result<_>>()?;
    let mut phi = DMatrix::<f64>::zeros(rows, cols);
    for (r, (z, wn)) in inputs.iter().zip(&strengths).enumerate() {
        for j in 0..rules {
            let base = j * (n + 1);
            for k in 0..n {
                phi[(r, base + k)] = wn[j] * z[k];
            }
            phi[(r, base + n)] = wn[j];
        }
    }
    let y = DVector::from_column_slice(targets);
    let svd = phi.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * rows.max(cols) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let theta = svd.solve(&y, eps).map_err(|e| Error::input(format!("least squares failed: {e}")))?;
    for j in 0..rules {
        for k in 0..=n {
            model.consequents[j][k] = theta[j * (n + 1) + k];
        }
    }
    Ok(LseOutcome { rank, columns: cols })
}

/// Sum of squared errors of `model` over the samples.
pub fn sse(model: &AnfisModel, inputs: &[&[f64]], targets: &[f64]) -> Result<f64> {
    let errs: Vec<f64> = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(z, y)| model.infer(z).map(|o| (o - y) * (o - y)))
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum())
}

pub fn rmse(model: &AnfisModel, inputs: &[&[f64]], targets: &[f64]) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    Ok((sse(model, inputs, targets)? / inputs.len() as f64).sqrt())
}

/// SSE and its gradient with respect to every premise parameter.
pub fn sse_premise_gradient(
    model: &AnfisModel,
    inputs: &[&[f64]],
    targets: &[f64],
) -> Result<(f64, Vec<Vec<BellGrad>>)> {
    let zero: Vec<Vec<BellGrad>> = model.premises.iter().map(|r| vec![BellGrad::default(); r.len()]).collect();
    let partials: Vec<(f64, Vec<Vec<BellGrad>>)> = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(z, y)| {
            let (out, g) = model.output_and_premise_grad(z)?;
            let e = out - y;
            let scaled = g
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|p| BellGrad { da: 2.0 * e * p.da, db: 2.0 * e * p.db, dc: 2.0 * e * p.dc })
                        .collect()
                })
                .collect();
            Ok((e * e, scaled))
        })
        .collect::<Result<_>>()?;
    // Sequential reduction keeps the sum order fixed.
    let mut total = 0.0;
    let mut grad = zero;
    for (s, g) in partials {
        total += s;
        for (acc_row, row) in grad.iter_mut().zip(g) {
            for (acc, p) in acc_row.iter_mut().zip(row) {
                acc.da += p.da;
                acc.db += p.db;
                acc.dc += p.dc;
            }
        }
    }
    Ok((total, grad))
}

fn grad_norm(g: &[Vec<BellGrad>]) -> f64 {
    g.iter()
        .flatten()
        .map(|p| p.da * p.da + p.db * p.db + p.dc * p.dc)
        .sum::<f64>()
        .sqrt()
}

fn stepped(model: &AnfisModel, g: &[Vec<BellGrad>], scale: f64) -> AnfisModel {
    let mut out = model.clone();
    for (row, grow) in out.premises.iter_mut().zip(g) {
        for (mf, p) in row.iter_mut().zip(grow) {
            mf.a -= scale * p.da;
            mf.b -= scale * p.db;
            mf.c -= scale * p.dc;
        }
    }
    out
}

/// Trains a grid-partitioned model on the dataset's training rows.
pub fn train_hybrid(dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    if config.epochs == 0 {
        return Err(Error::params("epochs must be >= 1"));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::params("learning_rate must be > 0"));
    }
    let (train_in, train_y) = dataset.split_view(&dataset.train);
    let (test_in, test_y) = dataset.split_view(&dataset.test);
    let ranges = dataset.input_ranges(&dataset.train)?;
    let mut model = AnfisModel::grid(&ranges, config.mfs_per_input)?;
    let params = model.rule_count() * (model.n_inputs() + 1);
    if train_in.len() < params {
        return Err(Error::InsufficientData { needed: params, got: train_in.len() });
    }

    let mut history = Vec::with_capacity(config.epochs);
    let mut rank_deficient = false;
    let mut step_failures = 0;
    let mut step = config.learning_rate;

    for epoch in 0..config.epochs {
        let outcome = solve_consequents(&mut model, &train_in, &train_y)?;
        rank_deficient |= outcome.rank_deficient();
        let train_rmse = rmse(&model, &train_in, &train_y)?;
        let test_rmse = rmse(&model, &test_in, &test_y)?;
        let mut accepted = 0.0;

        // The final epoch ends on a consequent solve so the saved model is
        // least-squares optimal for its premises.
        if epoch + 1 < config.epochs {
            let (current, grad) = sse_premise_gradient(&model, &train_in, &train_y)?;
            let norm = grad_norm(&grad);
            if norm > 0.0 && norm.is_finite() {
                let mut trial = step;
                let mut done = false;
                for _ in 0..=config.max_halvings {
                    let candidate = stepped(&model, &grad, trial / norm);
                    if candidate.premises.iter().flatten().all(|mf| mf.is_valid()) {
                        if let Ok(e) = sse(&candidate, &train_in, &train_y) {
                            if e <= current {
                                model = candidate;
                                accepted = trial;
                                step = trial;
                                done = true;
                                break;
                            }
                        }
                    }
                    trial *= 0.5;
                }
                if !done {
                    step_failures += 1;
                }
            }
        }
        history.push(EpochRecord { epoch: epoch + 1, train_rmse, test_rmse, step: accepted });
    }

    model.metadata.epochs = config.epochs;
    model.metadata.rmse.train = history.last().map(|r| r.train_rmse);
    model.metadata.rmse.test = history.last().map(|r| r.test_rmse);
    Ok(TrainReport { model, history, rank_deficient, step_failures })
}

/// RMSE as a percentage of the target range.
pub fn relative_error_percent(rmse: f64, targets: &[f64]) -> f64 {
    let (lo, hi) = targets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let range = hi - lo;
    if range > 0.0 {
        100.0 * rmse / range
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anfis::membership::BellMf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, seed: u64, f: impl Fn(&[f64; 4]) -> f64) -> Vec<[f64; 5]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z = [
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-2.0..2.0),
                ];
                [z[0], z[1], z[2], z[3], f(&z)]
            })
            .collect()
    }

    fn dataset(rows: Vec<[f64; 5]>, train: usize) -> Dataset {
        let n = rows.len();
        Dataset { rows, train: (0..train).collect(), test: (train..n).collect() }
    }

    #[test]
    fn constant_target_fits_after_one_pass() {
        let ds = dataset(random_rows(200, 1, |_| 3.25), 150);
        let report = train_hybrid(&ds, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        assert!(report.final_train_rmse() <= 1e-9);
        assert!(report.final_test_rmse() <= 1e-9);
    }

    #[test]
    fn rmse_history_non_increasing() {
        let ds = dataset(random_rows(300, 2, |z| (3.0 * z[0]).sin() + z[2] * z[3] - 0.5 * z[1] * z[1]), 250);
        let report = train_hybrid(&ds, &TrainConfig { epochs: 12, ..Default::default() }).unwrap();
        for pair in report.history.windows(2) {
            assert!(pair[1].train_rmse <= pair[0].train_rmse * (1.0 + 1e-9), "{pair:?}");
        }
        assert_eq!(report.model.metadata.epochs, 12);
    }

    #[test]
    fn lse_is_locally_optimal() {
        let rows = random_rows(250, 3, |z| z[0] * z[1] + (z[2] * 4.0).cos() + 0.3 * z[3]);
        let ds = dataset(rows, 250);
        let (inputs, y) = ds.split_view(&ds.train);
        let ranges = ds.input_ranges(&ds.train).unwrap();
        let mut model = AnfisModel::grid(&ranges, 2).unwrap();
        solve_consequents(&mut model, &inputs, &y).unwrap();
        let base = sse(&model, &inputs, &y).unwrap();
        for j in [0, 5, 15] {
            for k in 0..5 {
                for delta in [1e-3, -1e-3] {
                    let mut m = model.clone();
                    m.consequents[j][k] += delta;
                    assert!(sse(&m, &inputs, &y).unwrap() >= base * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let ds = dataset(random_rows(60, 4, |z| z[0]), 50);
        assert!(matches!(
            train_hybrid(&ds, &TrainConfig::default()),
            Err(Error::InsufficientData { needed: 80, got: 50 })
        ));
    }

    #[test]
    fn premise_gradient_matches_finite_differences() {
        let rows = random_rows(40, 5, |z| z[0] - 2.0 * z[3] + (z[1] * z[2]).sin());
        let ds = dataset(rows, 40);
        let (inputs, y) = ds.split_view(&ds.train);
        let mut model = AnfisModel::grid(&ds.input_ranges(&ds.train).unwrap(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for row in &mut model.consequents {
            for v in row.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let (_, grad) = sse_premise_gradient(&model, &inputs, &y).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            for i in 0..2 {
                let check = |set: &dyn Fn(&mut BellMf, f64), an: f64| {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    set(&mut plus.premises[k][i], h);
                    set(&mut minus.premises[k][i], -h);
                    let fd = (sse(&plus, &inputs, &y).unwrap() - sse(&minus, &inputs, &y).unwrap()) / (2.0 * h);
                    assert!((an - fd).abs() <= 1e-5 * an.abs().max(1e-2), "k={k} i={i}: {an} vs {fd}");
                };
                check(&|mf, d| mf.a += d, grad[k][i].da);
                check(&|mf, d| mf.b += d, grad[k][i].db);
                check(&|mf, d| mf.c += d, grad[k][i].dc);
            }
        }
    }
}
