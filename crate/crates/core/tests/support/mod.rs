//! Independent reference implementations used by the integration and
//! acceptance tests. Deliberately naive: direct formulas, full sorts,
//! O(N⁴) transforms.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Cosine similarity straight from the definition.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// NT-Xent evaluated term by term: rows 2k and 2k+1 are a positive pair,
/// the loss is the mean over all 2N ordered positive pairs of
/// -log(exp(s_ij/τ) / Σ_{k≠i} exp(s_ik/τ)), written as
/// log(1 + Σ_{k≠i,j} exp((s_ik - s_ij)/τ)) so tiny losses keep their digits.
pub fn nt_xent_direct(z: &[Vec<f64>], tau: f64) -> f64 {
    let m = z.len();
    let mut total = 0.0;
    for i in 0..m {
        let j = if i % 2 == 0 { i + 1 } else { i - 1 };
        let pos = cosine(&z[i], &z[j]);
        let mut rest = 0.0;
        for k in 0..m {
            if k != i && k != j {
                rest += ((cosine(&z[i], &z[k]) - pos) / tau).exp();
            }
        }
        total += rest.ln_1p();
    }
    total / m as f64
}

/// CMOD5.N transcribed from the published coefficient table (1-based).
pub fn cmod5n_reference(v: f64, theta: f64, phi: f64) -> f64 {
    let c: [f64; 29] = [
        0.0, -0.6878, -0.7957, 0.3380, -0.1728, 0.0000, 0.0040, 0.1103, 0.0159, 6.7329, 2.7713, -2.2885, 0.4971,
        -0.7250, 0.0450, 0.0066, 0.3222, 0.0120, 22.7000, 2.0813, 3.0000, 8.3659, -3.3428, 1.3236, 6.2437, 2.3893,
        0.3249, 4.1590, 1.6930,
    ];
    let zpow = 1.6;
    let thetm = 40.0;
    let thethr = 25.0;
    let y0 = c[19];
    let pn = c[20];
    let a = c[19] - (c[19] - 1.0) / c[20];
    let b = 1.0 / (c[20] * (c[19] - 1.0).powf(3.0 - 1.0));

    let fi = phi / 180.0 * PI;
    let csfi = fi.cos();
    let cs2fi = 2.0 * csfi * csfi - 1.0;

    let x = (theta - thetm) / thethr;
    let xx = x * x;
    let a0 = c[1] + c[2] * x + c[3] * xx + c[4] * x * xx;
    let a1 = c[5] + c[6] * x;
    let a2 = c[7] + c[8] * x;
    let gam = c[9] + c[10] * x + c[11] * xx;
    let s0 = c[12] + c[13] * x;

    let s = a2 * v;
    let s_clamped = if s < s0 { s0 } else { s };
    let mut a3 = 1.0 / (1.0 + (-s_clamped).exp());
    if s < s0 {
        a3 *= (s / s0).powf(s0 * (1.0 - a3));
    }
    let b0 = a3.powf(gam) * 10f64.powf(a0 + a1 * v);

    let mut b1 = c[15] * v * (0.5 + x - (4.0 * (x + c[16] + c[17] * v)).tanh());
    b1 = c[14] * (1.0 + x) - b1;
    b1 /= (0.34 * (v - c[18])).exp() + 1.0;

    let v0 = c[21] + c[22] * x + c[23] * xx;
    let d1 = c[24] + c[25] * x + c[26] * xx;
    let d2 = c[27] + c[28] * x;
    let mut v2 = v / v0 + 1.0;
    if v2 < y0 {
        v2 = a + b * (v2 - 1.0).powf(pn);
    }
    let b2 = (-d1 + d2 * v2) * (-v2).exp();

    b0 * (1.0 + b1 * csfi + b2 * cs2fi).powf(zpow)
}

/// Naive 2-D DFT of an n×n complex grid given as (re, im) pairs.
pub fn dft2(input: &[(f64, f64)], n: usize, inverse: bool) -> Vec<(f64, f64)> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![(0.0, 0.0); n * n];
    for u in 0..n {
        for v in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..n {
                for y in 0..n {
                    let ang = sign * 2.0 * PI * ((u * x) as f64 / n as f64 + (v * y) as f64 / n as f64);
                    let (a, b) = input[x * n + y];
                    re += a * ang.cos() - b * ang.sin();
                    im += a * ang.sin() + b * ang.cos();
                }
            }
            if inverse {
                re /= (n * n) as f64;
                im /= (n * n) as f64;
            }
            out[u * n + v] = (re, im);
        }
    }
    out
}

/// Notch filter by naive DFT: rank conjugate-pair features of the
/// luminance spectrum by magnitude, zero the requested 1-based ranks in
/// every channel, invert, clamp. Returns the planes and the max |imag|.
pub fn notch_reference(planes: &[Vec<f64>], lum: &[f64], n: usize, ranks: &[usize]) -> (Vec<Vec<f64>>, f64) {
    let spec = dft2(&lum.iter().map(|&v| (v, 0.0)).collect::<Vec<_>>(), n, false);
    let mut feats: Vec<((usize, usize), (usize, usize), f64)> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let conj = ((n - r) % n, (n - c) % n);
            if (r, c) <= conj {
                let (re, im) = spec[r * n + c];
                feats.push(((r, c), conj, (re * re + im * im).sqrt()));
            }
        }
    }
    feats.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    let mut residue = 0.0f64;
    let out = planes
        .iter()
        .map(|p| {
            let mut s = dft2(&p.iter().map(|&v| (v, 0.0)).collect::<Vec<_>>(), n, false);
            for &r in ranks {
                let (a, b, _) = feats[r - 1];
                s[a.0 * n + a.1] = (0.0, 0.0);
                s[b.0 * n + b.1] = (0.0, 0.0);
            }
            dft2(&s, n, true)
                .into_iter()
                .map(|(re, im)| {
                    residue = residue.max(im.abs());
                    re.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    (out, residue)
}

/// Block means by explicit double loop over each window.
pub fn boxcar_reference(data: &[f64], rows: usize, cols: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for br in 0..rows / w {
        for bc in 0..cols / w {
            let mut s = 0.0;
            for r in 0..w {
                for c in 0..w {
                    s += data[(br * w + r) * cols + bc * w + c];
                }
            }
            out.push(s / (w * w) as f64);
        }
    }
    out
}

/// Percentile by sorting and interpolating linearly between order statistics.
pub fn percentile_reference(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor();
    v[lo as usize] + (h - lo) * (v[h.ceil() as usize] - v[lo as usize])
}

/// 255·(x − P01)/(P99 − P01), clamped, rounded half-up.
pub fn stretch_reference(values: &[f64]) -> Vec<u8> {
    let p1 = percentile_reference(values, 1.0);
    let p99 = percentile_reference(values, 99.0);
    values
        .iter()
        .map(|&x| {
            let y = 255.0 * (x - p1) / (p99 - p1);
            if y <= 0.0 {
                0
            } else if y >= 255.0 {
                255
            } else {
                (y + 0.5).floor() as u8
            }
        })
        .collect()
}

/// P(s⁺ > s⁻) + ½ P(s⁺ = s⁻) over every positive/negative pair.
pub fn pairwise_auroc(labels: &[f64], scores: &[f64]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for i in 0..labels.len() {
        if labels[i] != 1.0 {
            continue;
        }
        for j in 0..labels.len() {
            if labels[j] != 0.0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

/// Weighted kNN scores from an exhaustive sort of every reference row.
pub fn knn_reference(train: &[Vec<f64>], y: &[Vec<f64>], query: &[f64], k: usize, tau: f64) -> Vec<f64> {
    let mut sims: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, r)| (cosine(r, query), i)).collect();
    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut acc = vec![0.0; y[0].len()];
    let mut wsum = 0.0;
    for &(s, i) in &sims[..k] {
        let w = (s / tau).exp();
        wsum += w;
        for (a, t) in acc.iter_mut().zip(&y[i]) {
            *a += w * t;
        }
    }
    acc.iter().map(|a| a / wsum).collect()
}

/// Ranked ids of the k most similar rows to `anchor`, by full sort.
pub fn retrieval_reference(x: &[Vec<f64>], ids: &[String], anchor: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..x.len())
        .filter(|&i| i != anchor)
        .map(|i| (cosine(&x[i], &x[anchor]), i))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(ids[a.1].cmp(&ids[b.1])));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Truncated average precision from the definition: mean of precision@i at
/// each relevant position.
pub fn ap_reference(rel: &[bool]) -> f64 {
    let positions: Vec<usize> = (0..rel.len()).filter(|&i| rel[i]).collect();
    if positions.is_empty() {
        return 0.0;
    }
    positions
        .iter()
        .map(|&i| rel[..=i].iter().filter(|&&r| r).count() as f64 / (i + 1) as f64)
        .sum::<f64>()
        / positions.len() as f64
}

/// Mean and standard deviation of AP@k when the N−1 non-anchor items are
/// ranked uniformly at random and `relevant` of them are relevant.
pub fn null_ap(n_others: usize, relevant: usize, k: usize, draws: usize, seed: u64) -> (f64, f64) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut items: Vec<bool> = (0..n_others).map(|i| i < relevant).collect();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..draws {
        items.shuffle(&mut rng);
        let ap = ap_reference(&items[..k]);
        sum += ap;
        sum2 += ap * ap;
    }
    let mean = sum / draws as f64;
    (mean, (sum2 / draws as f64 - mean * mean).max(0.0).sqrt())
}

/// Relative difference with an absolute floor on the scale.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
