//! Losses and scores for multilabel classification and scalar regression.

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Sum over samples and classes of binary cross-entropy.
pub fn classification_loss(y: &[f64], p: &[f64]) -> f64 {
    assert_eq!(y.len(), p.len(), "classification_loss: length mismatch");
    y.iter()
        .zip(p)
        .map(|(&t, &q)| {
            let q = q.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        })
        .sum()
}

/// `Σ 0.1·|y − ŷ| + (y − ŷ)²`.
pub fn regression_loss(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len(), "regression_loss: length mismatch");
    y.iter()
        .zip(yhat)
        .map(|(&a, &b)| {
            let e = a - b;
            0.1 * e.abs() + e * e
        })
        .sum()
}

/// Derivative of [`regression_loss`] with respect to one prediction.
pub fn regression_loss_grad(y: f64, yhat: f64) -> f64 {
    let e = yhat - y;
    0.1 * e.signum() * (e != 0.0) as u8 as f64 + 2.0 * e
}

/// AUROC of pooled binary labels against scores, ties counted as one half.
///
/// Computed from average ranks (Mann-Whitney U).
pub fn auroc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    assert_eq!(labels.len(), scores.len(), "auroc: length mismatch");
    let n_pos = labels.iter().filter(|&&l| l > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Computation(format!("AUROC score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled ranks keep the tie average an integer
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            if labels[k] > 0.5 {
                rank_sum2 += avg2;
            }
        }
        i = j + 1;
    }
    let u2 = rank_sum2 - (n_pos as u64) * (n_pos as u64 + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Micro-averaged AUROC: every (sample, class) pair pooled into one binary problem.
pub fn micro_auroc(y: &[Vec<f64>], scores: &[Vec<f64>]) -> Result<f64> {
    let (l, s) = pool(y, scores)?;
    auroc(&l, &s)
}

/// AUROC per class; `None` where a class has only one label value.
pub fn per_class_auroc(y: &[Vec<f64>], scores: &[Vec<f64>]) -> Result<Vec<Option<f64>>> {
    pool(y, scores)?;
    let c = y.first().map_or(0, Vec::len);
    (0..c)
        .map(|k| {
            let l: Vec<f64> = y.iter().map(|r| r[k]).collect();
            let s: Vec<f64> = scores.iter().map(|r| r[k]).collect();
            match auroc(&l, &s) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn pool(y: &[Vec<f64>], scores: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != scores.len() || y.iter().zip(scores).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Input("label and score matrices differ in shape".into()));
    }
    Ok((y.concat(), scores.concat()))
}

pub fn binarize(scores: &[Vec<f64>], threshold: f64) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|r| r.iter().map(|&s| if s >= threshold { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Micro F1 = TP / (TP + ½(FP + FN)) over all (sample, class) pairs.
pub fn f1_micro(y: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    let (l, p) = pool(y, pred)?;
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for (&t, &q) in l.iter().zip(&p) {
        match (t > 0.5, q > 0.5) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fne += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fne == 0 {
        return Err(Error::UndefinedMetric("F1 with no positives and no predicted positives".into()));
    }
    Ok(tp as f64 / (tp as f64 + 0.5 * (fp + fne) as f64))
}

/// Mean absolute error and root mean squared error.
pub fn mae_rmse(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::Input("mae/rmse need equal, non-empty inputs".into()));
    }
    let n = y.len() as f64;
    let mae = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let rmse = (y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mae, rmse.max(mae)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let y = [1.0, 0.0, 1.0];
        assert!(classification_loss(&y, &y) < 1e-6);
        let half = [0.5; 6];
        assert!((classification_loss(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], &half) - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(regression_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((regression_loss(&[3.0], &[2.0]) - 1.1).abs() < 1e-15);
        assert!((regression_loss_grad(3.0, 2.0) - (-2.1)).abs() < 1e-15);
    }

    #[test]
    fn auroc_examples() {
        let l = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auroc(&l, &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auroc(&l, &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auroc(&l, &[0.4, 0.3, 0.2, 0.1]).unwrap(), 0.0);
        assert!(matches!(auroc(&[1.0, 1.0], &[0.1, 0.2]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn f1_examples() {
        let y = vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]];
        let p = vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]];
        // TP=2, FP=1, FN=1
        assert!((f1_micro(&y, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_micro(&y, &y).unwrap(), 1.0);
        let none = vec![vec![0.0, 0.0]; 3];
        assert_eq!(f1_micro(&y, &none).unwrap(), 0.0);
        assert!(f1_micro(&none, &none).is_err());
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae_rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        assert_eq!(mae_rmse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), (1.0, 1.0));
        let (m, r) = mae_rmse(&[0.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }
}
