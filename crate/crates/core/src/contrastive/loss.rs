//! Cosine similarity and the NT-Xent objective.

use crate::error::{Error, Result};

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Input(format!("cosine similarity of {}-d and {}-d vectors", u.len(), v.len())));
    }
    let su = u.iter().map(|x| x * x).sum::<f64>();
    let sv = v.iter().map(|x| x * x).sum::<f64>();
    if su == 0.0 || sv == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (su * sv).sqrt()).clamp(-1.0, 1.0))
}

/// Index of the positive partner of row `i` when pairs are adjacent rows.
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// Mean NT-Xent loss over all 2N ordered positive pairs and its gradient
/// with respect to every row of `z`.
///
/// Rows `2k` and `2k + 1` are the two views of image `k`.
pub fn nt_xent_loss(z: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0 (default 0.5), got {tau}")));
    }
    let m = z.len();
    if m < 2 || m % 2 != 0 {
        return Err(Error::Input(format!("NT-Xent needs an even number >= 2 of embeddings, got {m}")));
    }
    let dim = z[0].len();
    let mut norms = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    for (i, row) in z.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Input("embeddings of unequal dimension".into()));
        }
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Computation(format!("degenerate projection: embedding {i} has norm {n}")));
        }
        norms.push(n);
        u.push(row.iter().map(|x| x / n).collect::<Vec<f64>>());
    }
    let mut sim = vec![0.0; m * m];
    for i in 0..m {
        for k in i..m {
            let s: f64 = u[i].iter().zip(&u[k]).map(|(a, b)| a * b).sum();
            sim[i * m + k] = s;
            sim[k * m + i] = s;
        }
    }

    // coef[i][k] = dL/ds_ik for the ordered (anchor i, candidate k) entry
    let scale = 1.0 / (m as f64 * tau);
    let mut coef = vec![0.0; m * m];
    let mut loss = 0.0;
    for i in 0..m {
        let j = partner(i);
        let logits = |k: usize| sim[i * m + k] / tau;
        let max = (0..m).filter(|&k| k != i).map(logits).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..m).filter(|&k| k != i).map(|k| (logits(k) - max).exp()).sum();
        loss += if logits(j) == max {
            // positive dominates: log(1 + rest) avoids cancelling two near-equal terms
            (0..m).filter(|&k| k != i && k != j).map(|k| (logits(k) - max).exp()).sum::<f64>().ln_1p()
        } else {
            max + denom.ln() - logits(j)
        };
        for k in (0..m).filter(|&k| k != i) {
            let p = (logits(k) - max).exp() / denom;
            coef[i * m + k] = (p - if k == j { 1.0 } else { 0.0 }) * scale;
        }
    }
    loss /= m as f64;

    let mut grad = Vec::with_capacity(m);
    for i in 0..m {
        let mut du = vec![0.0; dim];
        for k in 0..m {
            let c = coef[i * m + k] + coef[k * m + i];
            if c != 0.0 {
                du.iter_mut().zip(&u[k]).for_each(|(d, &x)| *d += c * x);
            }
        }
        // project out the radial component and undo the normalization
        let radial: f64 = du.iter().zip(&u[i]).map(|(a, b)| a * b).sum();
        grad.push(
            du.iter()
                .zip(&u[i])
                .map(|(&d, &x)| (d - radial * x) / norms[i])
                .collect(),
        );
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let want = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_pair_is_zero_and_identical_is_log3() {
        let (l, g) = nt_xent_loss(&[vec![1.0, 2.0], vec![-3.0, 0.5]], 0.5).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().flatten().all(|&v| v == 0.0));
        for tau in [0.1, 0.5, 1.0] {
            let z = vec![vec![0.3, -0.4, 1.2]; 4];
            let (l, _) = nt_xent_loss(&z, tau).unwrap();
            assert!((l - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let z = vec![vec![1.0], vec![1.0]];
        assert!(matches!(nt_xent_loss(&z, 0.0), Err(Error::Config(_))));
        assert!(nt_xent_loss(&z[..1], 0.5).is_err());
        assert!(matches!(
            nt_xent_loss(&[vec![0.0], vec![1.0]], 0.5),
            Err(Error::Computation(_))
        ));
    }

    #[test]
    fn scale_and_pair_swap_invariance() {
        let mut rng = Rng::new(9);
        let z: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.normal()).collect()).collect();
        let (l, _) = nt_xent_loss(&z, 0.5).unwrap();
        let scaled: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|v| v * 3.7).collect()).collect();
        assert!((nt_xent_loss(&scaled, 0.5).unwrap().0 - l).abs() < 1e-12);
        let mut swapped = z.clone();
        swapped.swap(2, 3);
        assert!((nt_xent_loss(&swapped, 0.5).unwrap().0 - l).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(10);
        let z: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let (_, g) = nt_xent_loss(&z, 0.3).unwrap();
        let h = 1e-6;
        for i in 0..z.len() {
            for d in 0..4 {
                let mut a = z.clone();
                a[i][d] += h;
                let mut b = z.clone();
                b[i][d] -= h;
                let fd = (nt_xent_loss(&a, 0.3).unwrap().0 - nt_xent_loss(&b, 0.3).unwrap().0) / (2.0 * h);
                assert!((fd - g[i][d]).abs() < 1e-7, "{fd} vs {}", g[i][d]);
            }
        }
    }
}
