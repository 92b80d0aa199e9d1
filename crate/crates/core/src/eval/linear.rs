//! Linear probe on frozen embeddings.
//!
//! Features are standardized on the training rows. Classification fits one
//! L2-regularized logistic regression per class by damped Newton iterations;
//! regression solves the ridge normal equations directly. The bias is never
//! penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{check_training_set, sigmoid, Standardizer, Task};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    /// Penalty λ on the mean loss: `mean(loss) + λ/2·|w|²`.
    pub l2: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iterations: 100,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub task: Task,
    pub config: LinearConfig,
    pub standardizer: Standardizer,
    /// One row of weights per output, in standardized feature space.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let d = x[0].len();
    DMatrix::from_fn(x.len(), d + 1, |i, j| if j < d { x[i][j] } else { 1.0 })
}

fn logistic_objective(xm: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, l2: f64) -> f64 {
    let n = xm.nrows() as f64;
    let z = xm * beta;
    let mut loss = 0.0;
    for (zi, yi) in z.iter().zip(y.iter()) {
        // log(1 + e^z) - y z, stable
        loss += zi.max(0.0) + (-zi.abs()).exp().ln_1p() - yi * zi;
    }
    let d = beta.len() - 1;
    loss / n + 0.5 * l2 * beta.rows(0, d).norm_squared()
}

fn fit_logistic(xm: &DMatrix<f64>, y: &DVector<f64>, cfg: &LinearConfig) -> Result<DVector<f64>> {
    let (n, p) = xm.shape();
    let d = p - 1;
    let mut beta = DVector::zeros(p);
    let mut obj = logistic_objective(xm, y, &beta, cfg.l2);
    for _ in 0..cfg.max_iterations {
        let z = xm * &beta;
        let prob = z.map(sigmoid);
        let mut grad = xm.transpose() * (&prob - y) / n as f64;
        for j in 0..d {
            grad[j] += cfg.l2 * beta[j];
        }
        let w = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let mut xw = xm.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i] / n as f64;
        }
        let mut h = xm.transpose() * xw;
        for j in 0..d {
            h[(j, j)] += cfg.l2;
        }
        h[(d, d)] += 1e-12;
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Computation("linear probe Hessian is not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta - &step * t;
            let c_obj = logistic_objective(xm, y, &cand, cfg.l2);
            if c_obj <= obj {
                beta = cand;
                let gain = obj - c_obj;
                obj = c_obj;
                accepted = gain > cfg.tolerance * obj.abs().max(1.0);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !obj.is_finite() {
        return Err(Error::Training("linear probe objective is not finite".into()));
    }
    Ok(beta)
}

fn fit_ridge(xm: &DMatrix<f64>, y: &DVector<f64>, l2: f64) -> Result<DVector<f64>> {
    let (n, p) = xm.shape();
    let d = p - 1;
    let mut h = xm.transpose() * xm / n as f64;
    for j in 0..d {
        h[(j, j)] += l2;
    }
    h[(d, d)] += 1e-12;
    let rhs = xm.transpose() * y / n as f64;
    h.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Computation("ridge normal equations are singular".into()))
}

impl LinearProbe {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], task: Task, config: LinearConfig) -> Result<Self> {
        let (d, c) = check_training_set(x, y, task)?;
        if !(config.l2 > 0.0) {
            return Err(Error::Config(format!("linear probe l2 must be > 0 (default 1e-4), got {}", config.l2)));
        }
        let standardizer = Standardizer::fit(x);
        let xm = design(&standardizer.apply(x));
        let mut weights = Vec::with_capacity(c);
        let mut bias = Vec::with_capacity(c);
        for k in 0..c {
            let yk = DVector::from_iterator(y.len(), y.iter().map(|r| r[k]));
            let beta = match task {
                Task::Classification => fit_logistic(&xm, &yk, &config)?,
                Task::Regression => fit_ridge(&xm, &yk, config.l2)?,
            };
            weights.push(beta.rows(0, d).iter().copied().collect());
            bias.push(beta[d]);
        }
        Ok(Self {
            task,
            config,
            standardizer,
            weights,
            bias,
        })
    }

    /// Sigmoid scores (classification) or values (regression), one row per input.
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.standardizer
            .apply(x)
            .iter()
            .map(|r| {
                self.weights
                    .iter()
                    .zip(&self.bias)
                    .map(|(w, b)| {
                        let z = b + w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>();
                        match self.task {
                            Task::Classification => sigmoid(z),
                            Task::Regression => z,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Slope of output `k` with respect to raw feature `j`.
    pub fn raw_slope(&self, k: usize, j: usize) -> f64 {
        self.weights[k][j] / self.standardizer.scale[j]
    }
}
