use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simulate::TimeSeries;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "x,x_dot,theta_dev,theta_dot,u";

/// Logged `(x, x_dot, theta - π, theta_dot, u)` samples with a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<[f64; 5]>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Index sets written next to the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset rows"));
        }
        let n = self.rows.len();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n {
                return Err(Error::input(format!("split index {i} out of range ({n} rows)")));
            }
            if seen[i] {
                return Err(Error::input(format!("row {i} appears twice in the split")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Input slices and targets for a set of row indices.
    pub fn split_view(&self, idx: &[usize]) -> (Vec<&[f64]>, Vec<f64>) {
        idx.iter().map(|&i| (&self.rows[i][..4], self.rows[i][4])).unzip()
    }

    /// Per-input `[min, max]` over the given rows.
    pub fn input_ranges(&self, idx: &[usize]) -> Result<Vec<[f64; 2]>> {
        if idx.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut ranges = vec![[f64::INFINITY, f64::NEG_INFINITY]; 4];
        for &i in idx {
            for (k, r) in ranges.iter_mut().enumerate() {
                r[0] = r[0].min(self.rows[i][k]);
                r[1] = r[1].max(self.rows[i][k]);
            }
        }
        Ok(ranges)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{:?},{:?},{:?},{:?},{:?}", r[0], r[1], r[2], r[3], r[4])?;
        }
        Ok(())
    }

    pub fn manifest(&self, seed: u64) -> SplitManifest {
        SplitManifest { seed, train: self.train.clone(), test: self.test.clone() }
    }

    /// Reads rows from CSV and the split from its manifest.
    pub fn read<R: BufRead>(csv: R, manifest: &SplitManifest) -> Result<Self> {
        let bad = |message: String| Error::Malformed { kind: "dataset", message };
        let mut lines = csv.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == CSV_HEADER => {}
            Some(Ok(h)) => return Err(bad(format!("line 1: expected header `{CSV_HEADER}`, found `{h}`"))),
            Some(Err(e)) => return Err(e.into()),
            None => return Err(bad("empty file".into())),
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("line {}: expected 5 fields, found {}", n + 2, fields.len())));
            }
            let mut row = [0.0; 5];
            for (slot, f) in row.iter_mut().zip(&fields) {
                *slot = f.trim().parse().map_err(|_| bad(format!("line {}: cannot parse `{f}`", n + 2)))?;
            }
            rows.push(row);
        }
        let ds = Dataset { rows, train: manifest.train.clone(), test: manifest.test.clone() };
        ds.validate()?;
        Ok(ds)
    }
}

/// Smallest input spread, relative to its magnitude, accepted for a grid.
pub const MIN_SPREAD: f64 = 1e-9;

/// Subsamples logged closed-loop rows into a dataset of exactly
/// `train_count + test_count` rows with a seeded random split.
///
/// Rows keep their logged order; the split indices are sorted.
pub fn generate_dataset(runs: &[TimeSeries], train_count: usize, test_count: usize, seed: u64) -> Result<Dataset> {
    let pool: Vec<[f64; 5]> = runs
        .iter()
        .flat_map(|ts| ts.rows.iter())
        .map(|r| [r.x, r.x_dot, r.phi(), r.theta_dot, r.u])
        .collect();
    if pool.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logged rows"));
    }
    let total = train_count + test_count;
    if total == 0 || pool.len() < total {
        return Err(Error::InsufficientData { needed: total.max(1), got: pool.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), total).into_vec();
    picked.sort_unstable();
    let rows: Vec<[f64; 5]> = picked.iter().map(|&i| pool[i]).collect();

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut train = order[..train_count].to_vec();
    let mut test = order[train_count..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    let ds = Dataset { rows, train, test };
    let all: Vec<usize> = (0..total).collect();
    for (k, [lo, hi]) in ds.input_ranges(&all)?.into_iter().enumerate() {
        // Roundoff drift around the equilibrium counts as no spread.
        if !(hi - lo > MIN_SPREAD * lo.abs().max(hi.abs()).max(1.0)) {
            return Err(Error::Degenerate(format!("input {k} has zero variance across the sampled rows")));
        }
    }
    Ok(ds)
}
