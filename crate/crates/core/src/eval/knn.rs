//! Weighted k-nearest-neighbour scoring under cosine similarity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    /// Temperature of the `exp(sim / τ)` neighbour weights.
    pub temperature: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 15,
            temperature: 0.07,
        }
    }
}

/// Rows scaled to unit length; zero rows stay zero.
pub fn normalize_rows(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter().map(|v| v / n).collect()
            } else {
                r.clone()
            }
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stored reference set; predictions depend on nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    pub config: KnnConfig,
    reference: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], config: KnnConfig) -> Result<Self> {
        if config.k == 0 || config.k > x.len() {
            return Err(Error::Config(format!(
                "kNN k = {} must be in 1..={} (training set size; default 15)",
                config.k,
                x.len()
            )));
        }
        if !(config.temperature > 0.0) {
            return Err(Error::Config(format!(
                "kNN temperature must be > 0 (default 0.07), got {}",
                config.temperature
            )));
        }
        if y.len() != x.len() {
            return Err(Error::Input("kNN: embedding and label counts differ".into()));
        }
        Ok(Self {
            config,
            reference: normalize_rows(x),
            targets: y.to_vec(),
        })
    }

    /// Indices of the k most similar reference rows, most similar first, ties by index.
    pub fn neighbours(&self, query: &[f64]) -> Vec<(usize, f64)> {
        let q = normalize_rows(&[query.to_vec()]).remove(0);
        let mut sims: Vec<(usize, f64)> = self.reference.iter().enumerate().map(|(i, r)| (i, dot(r, &q))).collect();
        let k = self.config.k;
        let by_sim = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < sims.len() {
            sims.select_nth_unstable_by(k - 1, by_sim);
            sims.truncate(k);
        }
        sims.sort_by(by_sim);
        sims
    }

    /// Per-output similarity-weighted mean of neighbour targets.
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let tau = self.config.temperature;
        x.par_iter()
            .map(|q| {
                let nb = self.neighbours(q);
                let top = nb[0].1;
                let width = self.targets[0].len();
                let mut acc = vec![0.0; width];
                let mut wsum = 0.0;
                for &(i, s) in &nb {
                    // shifted by the top similarity; the ratio is unchanged
                    let w = ((s - top) / tau).exp();
                    wsum += w;
                    acc.iter_mut().zip(&self.targets[i]).for_each(|(a, &t)| *a += w * t);
                }
                acc.iter().map(|a| a / wsum).collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_returns_matching_label() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let y = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let m = KnnModel::fit(&x, &y, KnnConfig { k: 1, ..Default::default() }).unwrap();
        assert_eq!(m.predict(&[vec![0.0, 2.0]]), vec![vec![0.0, 1.0]]);
        assert!(KnnModel::fit(&x, &y, KnnConfig { k: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn constant_labels_and_scale_invariance() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.3]).collect();
        let y = vec![vec![1.0, 0.0]; 30];
        let m = KnnModel::fit(&x, &y, KnnConfig::default()).unwrap();
        let q = vec![vec![0.2, 0.9, 0.1], vec![-1.0, 0.1, 0.0]];
        for r in m.predict(&q) {
            assert!((r[0] - 1.0).abs() < 1e-12 && r[1].abs() < 1e-12);
        }
        let y2: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 2) as f64]).collect();
        let a = KnnModel::fit(&x, &y2, KnnConfig::default()).unwrap().predict(&q);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * 4.0).collect()).collect();
        let qs: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v * 0.5).collect()).collect();
        let b = KnnModel::fit(&xs, &y2, KnnConfig::default()).unwrap().predict(&qs);
        for (ra, rb) in a.iter().zip(&b) {
            assert!((ra[0] - rb[0]).abs() < 1e-12);
        }
    }
}
