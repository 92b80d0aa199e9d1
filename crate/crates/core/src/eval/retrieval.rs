//! Top-k cosine retrieval and per-class mean average precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::knn::{dot, normalize_rows};
use crate::eval::report::RetrievalScores;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    /// The retrieved image carries the class the anchor was sampled for.
    AnchorClass,
    /// The retrieved image shares any class with the anchor.
    AnyOverlap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub trials: usize,
    pub relevance: Relevance,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 20,
            trials: 100,
            relevance: Relevance::AnchorClass,
            seed: 0,
        }
    }
}

/// Indices of the `k` rows most cosine-similar to row `anchor`, anchor excluded,
/// ties broken by id.
fn topk_normalized(unit: &[Vec<f64>], ids: &[String], anchor: usize, k: usize) -> Vec<usize> {
    let a = &unit[anchor];
    let mut sims: Vec<(usize, f64)> = unit
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != anchor)
        .map(|(i, r)| (i, dot(r, a)))
        .collect();
    let cmp = |x: &(usize, f64), y: &(usize, f64)| y.1.total_cmp(&x.1).then_with(|| ids[x.0].cmp(&ids[y.0]));
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, cmp);
        sims.truncate(k);
    }
    sims.sort_by(cmp);
    sims.into_iter().map(|(i, _)| i).collect()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "retrieval k = {k} must be in 1..{n} (fewer than the number of embeddings; default 20)"
        )));
    }
    Ok(())
}

/// Rank the `k` nearest neighbours of `anchor_id`.
pub fn retrieve_topk(anchor_id: &str, ids: &[String], x: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if ids.len() != x.len() {
        return Err(Error::Input("retrieval: id and embedding counts differ".into()));
    }
    check_k(k, x.len())?;
    let anchor = ids
        .iter()
        .position(|i| i == anchor_id)
        .ok_or_else(|| Error::Input(format!("anchor '{anchor_id}' is not in the embedding set")))?;
    Ok(topk_normalized(&normalize_rows(x), ids, anchor, k))
}

/// Mean of precision@i over the relevant positions of a ranked list; 0 when nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Per-class mAP over randomly drawn anchors. `y` is the N×C label matrix.
///
/// Classes with fewer than two members are skipped (reported as `None`).
pub fn retrieval_map(
    x: &[Vec<f64>],
    ids: &[String],
    y: &[Vec<f64>],
    classes: &[String],
    config: &RetrievalConfig,
) -> Result<RetrievalScores> {
    if x.len() != ids.len() || x.len() != y.len() {
        return Err(Error::Input("retrieval: embedding, id and label counts differ".into()));
    }
    if y.iter().any(|r| r.len() != classes.len()) {
        return Err(Error::Input("retrieval: label width differs from class count".into()));
    }
    if config.trials == 0 {
        return Err(Error::Config("retrieval trials must be positive (default 100)".into()));
    }
    check_k(config.k, x.len())?;
    let unit = normalize_rows(x);
    let mut per_class = Vec::with_capacity(classes.len());
    for (c, name) in classes.iter().enumerate() {
        let members: Vec<usize> = (0..y.len()).filter(|&i| y[i][c] == 1.0).collect();
        if members.len() < 2 {
            log::warn!("retrieval: class '{name}' has {} member(s); skipped", members.len());
            per_class.push(None);
            continue;
        }
        let aps: Vec<f64> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = Rng::derive(config.seed, &[c as u64, t as u64]);
                let anchor = members[rng.below(members.len())];
                let ranked = topk_normalized(&unit, ids, anchor, config.k);
                let rel: Vec<bool> = ranked
                    .iter()
                    .map(|&j| match config.relevance {
                        Relevance::AnchorClass => y[j][c] == 1.0,
                        Relevance::AnyOverlap => y[j].iter().zip(&y[anchor]).any(|(&a, &b)| a == 1.0 && b == 1.0),
                    })
                    .collect();
                average_precision(&rel)
            })
            .collect();
        per_class.push(Some(aps.iter().sum::<f64>() / aps.len() as f64));
    }
    RetrievalScores::new(classes.to_vec(), per_class)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i:03}")).collect()
    }

    #[test]
    fn ap_hand_case() {
        assert!((average_precision(&[true, false, true]) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[false, false]), 0.0);
        assert_eq!(average_precision(&[true, true]), 1.0);
    }

    #[test]
    fn duplicate_and_correlated_rank_first() {
        let x = vec![
            vec![1.0, 0.2, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![2.0, 0.4, 0.0],
            vec![0.9, 0.3, 0.1],
        ];
        let r = retrieve_topk("i000", &ids(5), &x, 2).unwrap();
        assert_eq!(r, vec![3, 4]);
        assert!(retrieve_topk("i000", &ids(5), &x, 5).is_err());
        assert!(retrieve_topk("nope", &ids(5), &x, 2).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let x = vec![vec![1.0, 0.0]; 4];
        let names = vec!["d".to_string(), "c".into(), "b".into(), "a".into()];
        assert_eq!(retrieve_topk("d", &names, &x, 3).unwrap(), vec![3, 2, 1]);
    }

    #[test]
    fn one_hot_embeddings_are_perfect() {
        let n = 60;
        let x: Vec<Vec<f64>> = (0..n).map(|i| (0..3).map(|c| (i % 3 == c) as u8 as f64).collect()).collect();
        let y = x.clone();
        let classes = vec!["a".to_string(), "b".into(), "c".into()];
        let cfg = RetrievalConfig { k: 10, trials: 30, ..Default::default() };
        let s = retrieval_map(&x, &ids(n), &y, &classes, &cfg).unwrap();
        assert_eq!(s.map_mean, 1.0);
    }

    #[test]
    fn sparse_class_skipped() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let y: Vec<Vec<f64>> = (0..10).map(|i| vec![(i < 5) as u8 as f64, (i == 0) as u8 as f64]).collect();
        let classes = vec!["a".to_string(), "b".into()];
        let cfg = RetrievalConfig { k: 3, trials: 5, ..Default::default() };
        let s = retrieval_map(&x, &ids(10), &y, &classes, &cfg).unwrap();
        assert!(s.map_per_class[1].is_none());
        assert_eq!(s.map_mean, s.map_per_class[0].unwrap());
    }
}
