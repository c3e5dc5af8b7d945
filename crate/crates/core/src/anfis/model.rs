use std::path::Path;

use serde::{Deserialize, Serialize};

use super::membership::{BellGrad, BellMf};
use crate::{Error, Result};

/// First-order Takagi–Sugeno model with a grid-partitioned rule base.
///
/// Rule `j` combines one membership function per input; rules are enumerated
/// in lexicographic order of the MF indices with the first input most
/// significant. Each consequent row holds `(θ_1 .. θ_n, θ_0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnfisModel {
    pub premises: Vec<Vec<BellMf>>,
    pub consequents: Vec<Vec<f64>>,
    pub input_ranges: Vec<[f64; 2]>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub epochs: usize,
    pub rmse: Rmse,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rmse {
    pub train: Option<f64>,
    pub test: Option<f64>,
}

const SECTIONS: [&str; 4] = ["premises", "consequents", "input_ranges", "metadata"];

impl AnfisModel {
    /// Grid-partition initialization: `mfs_per_input` bell functions per input
    /// with centers evenly spaced over the range (at min and max for two),
    /// width `range / (2 (m - 1))` and shape 2. Consequents start at zero.
    pub fn grid(input_ranges: &[[f64; 2]], mfs_per_input: usize) -> Result<Self> {
        if input_ranges.is_empty() || mfs_per_input == 0 {
            return Err(Error::input("ANFIS needs at least one input and one MF per input"));
        }
        let mut premises = Vec::with_capacity(input_ranges.len());
        for (k, &[lo, hi]) in input_ranges.iter().enumerate() {
            let range = hi - lo;
            if !(range.is_finite() && range > 0.0) {
                return Err(Error::Degenerate(format!("input {k} has empty range [{lo}, {hi}]")));
            }
            let row = if mfs_per_input == 1 {
                vec![BellMf::new(range / 2.0, 2.0, lo + range / 2.0)]
            } else {
                let step = range / (mfs_per_input - 1) as f64;
                (0..mfs_per_input).map(|i| BellMf::new(step / 2.0, 2.0, lo + i as f64 * step)).collect()
            };
            premises.push(row);
        }
        let n = input_ranges.len();
        let rules = mfs_per_input.pow(n as u32);
        Ok(AnfisModel {
            premises,
            consequents: vec![vec![0.0; n + 1]; rules],
            input_ranges: input_ranges.to_vec(),
            metadata: Metadata::default(),
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.premises.len()
    }

    pub fn mfs_per_input(&self) -> usize {
        self.premises.first().map_or(0, Vec::len)
    }

    pub fn rule_count(&self) -> usize {
        self.consequents.len()
    }

    /// MF index per input for rule `j`.
    pub fn rule_indices(&self, j: usize) -> Vec<usize> {
        let m = self.mfs_per_input();
        let n = self.n_inputs();
        let mut idx = vec![0; n];
        let mut rem = j;
        for k in (0..n).rev() {
            idx[k] = rem % m;
            rem /= m;
        }
        idx
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_inputs();
        let m = self.mfs_per_input();
        let bad = |message: String| Error::Malformed { kind: "ANFIS model", message };
        if n == 0 || m == 0 {
            return Err(bad("model has no inputs".into()));
        }
        if self.premises.iter().any(|row| row.len() != m) {
            return Err(bad("every input needs the same number of MFs".into()));
        }
        if let Some((k, i)) = self
            .premises
            .iter()
            .enumerate()
            .find_map(|(k, row)| row.iter().position(|mf| !mf.is_valid()).map(|i| (k, i)))
        {
            return Err(bad(format!("premise MF {i} of input {k} has invalid parameters")));
        }
        let rules = m.checked_pow(n as u32).ok_or_else(|| bad("rule count overflows".into()))?;
        if self.consequents.len() != rules {
            return Err(bad(format!("expected {rules} consequent rows, found {}", self.consequents.len())));
        }
        if let Some(j) = self.consequents.iter().position(|row| row.len() != n + 1) {
            return Err(bad(format!("consequent row {j} must have {} entries", n + 1)));
        }
        if let Some(j) = self.consequents.iter().position(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(bad(format!("consequent row {j} is not finite")));
        }
        if self.input_ranges.len() != n {
            return Err(bad(format!("expected {n} input ranges, found {}", self.input_ranges.len())));
        }
        Ok(())
    }

    fn membership_table(&self, input: &[f64]) -> Vec<Vec<f64>> {
        self.premises
            .iter()
            .zip(input)
            .map(|(row, &z)| row.iter().map(|mf| mf.eval(z)).collect())
            .collect()
    }

    fn strengths_from_table(&self, table: &[Vec<f64>]) -> Vec<f64> {
        (0..self.rule_count())
            .map(|j| {
                self.rule_indices(j)
                    .iter()
                    .zip(table)
                    .fold(1.0, |w, (&i, mu)| w * mu[i])
            })
            .collect()
    }

    /// Rule firing strengths: the product of each rule's membership values.
    pub fn firing_strengths(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.strengths_from_table(&self.membership_table(input)))
    }

    /// Affine consequent output of rule `j`.
    pub fn rule_output(&self, j: usize, input: &[f64]) -> f64 {
        let row = &self.consequents[j];
        let n = input.len();
        let mut acc = row[0] * input[0];
        for k in 1..n {
            acc += row[k] * input[k];
        }
        acc + row[n]
    }

    /// Weighted average of rule outputs under normalized firing strengths.
    ///
    /// The combination is evaluated relative to the strongest rule's output,
    /// `f* + Σ w̄_j (f_j - f*)`, which equals `Σ w̄_j f_j` and is exact when all
    /// rules agree.
    pub fn infer(&self, input: &[f64]) -> Result<f64> {
        let w = self.firing_strengths(input)?;
        let wn = normalize(&w)?;
        let outputs: Vec<f64> = (0..self.rule_count()).map(|j| self.rule_output(j, input)).collect();
        let anchor = argmax(&w);
        let base = outputs[anchor];
        let delta: f64 = wn.iter().zip(&outputs).map(|(wj, fj)| wj * (fj - base)).sum();
        Ok(base + delta)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.n_inputs() {
            return Err(Error::input(format!(
                "ANFIS expects {} inputs, got {}",
                self.n_inputs(),
                input.len()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ANFIS input"));
        }
        Ok(())
    }

    /// Normalized layer-3 strengths for every row, used by the LSE design matrix.
    pub(crate) fn normalized_strengths(&self, input: &[f64]) -> Result<Vec<f64>> {
        normalize(&self.firing_strengths(input)?)
    }

    /// Output and gradient of the output with respect to every premise
    /// parameter, laid out like `premises`.
    pub(crate) fn output_and_premise_grad(&self, input: &[f64]) -> Result<(f64, Vec<Vec<BellGrad>>)> {
        self.check_input(input)?;
        let evals: Vec<Vec<(f64, BellGrad)>> = self
            .premises
            .iter()
            .zip(input)
            .map(|(row, &z)| row.iter().map(|mf| mf.eval_grad(z)).collect())
            .collect();
        let table: Vec<Vec<f64>> = evals.iter().map(|row| row.iter().map(|e| e.0).collect()).collect();
        let w = self.strengths_from_table(&table);
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Degenerate("firing strengths sum to zero".into()));
        }
        let outputs: Vec<f64> = (0..self.rule_count()).map(|j| self.rule_output(j, input)).collect();
        let z: f64 = w.iter().zip(&outputs).map(|(wj, fj)| wj * fj).sum::<f64>() / sum;

        // dZ/dμ_ki = Σ_{rules using (k,i)} (f_j - Z)/Σw · w_j/μ_ki
        let mut dz_dmu: Vec<Vec<f64>> = table.iter().map(|row| vec![0.0; row.len()]).collect();
        for j in 0..self.rule_count() {
            let coeff = (outputs[j] - z) / sum * w[j];
            for (k, &i) in self.rule_indices(j).iter().enumerate() {
                dz_dmu[k][i] += coeff / table[k][i];
            }
        }
        let grads = evals
            .iter()
            .zip(&dz_dmu)
            .map(|(row, dmu)| {
                row.iter()
                    .zip(dmu)
                    .map(|((_, g), d)| BellGrad { da: d * g.da, db: d * g.db, dc: d * g.dc })
                    .collect()
            })
            .collect();
        Ok((z, grads))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a model document. Truncated input names the first section that
    /// never appeared (or the one that was cut off).
    pub fn from_json(text: &str) -> Result<Self> {
        let model: AnfisModel = serde_json::from_str(text).map_err(|e| {
            let position = format!("line {} column {}", e.line(), e.column());
            let message = if e.is_eof() {
                let present: Vec<&str> =
                    SECTIONS.iter().copied().filter(|s| text.contains(&format!("\"{s}\""))).collect();
                match SECTIONS.iter().find(|s| !present.contains(s)) {
                    Some(missing) => format!("truncated at {position}: missing section `{missing}`"),
                    None => format!("truncated at {position}: section `{}` is incomplete", SECTIONS[3]),
                }
            } else {
                format!("{e}")
            };
            Error::Malformed { kind: "ANFIS model", message }
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `w_j / Σ w`. Rejects vectors whose sum is not positive.
pub fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::Degenerate(format!("firing strengths sum to {sum}")));
    }
    Ok(w.iter().map(|x| x / sum).collect())
}
