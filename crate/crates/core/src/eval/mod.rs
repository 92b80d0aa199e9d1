//! Frozen-embedding probes, finetuning, metrics and retrieval.

pub mod finetune;
pub mod knn;
pub mod linear;
pub mod metrics;
pub mod mlp_probe;
pub mod plot;
pub mod report;
pub mod retrieval;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use finetune::{finetune, FinetuneConfig, FinetuneModel};
pub use knn::{KnnConfig, KnnModel};
pub use linear::{LinearConfig, LinearProbe};
pub use metrics::{
    auroc, binarize, classification_loss, f1_micro, mae_rmse, micro_auroc, per_class_auroc, regression_loss,
};
pub use mlp_probe::{MlpProbe, MlpProbeConfig};
pub use report::{render_table, MetricsReport, RetrievalScores};
pub use retrieval::{average_precision, retrieval_map, retrieve_topk, Relevance, RetrievalConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Multilabel targets in {0, 1}, scored by per-class sigmoid outputs.
    Classification,
    /// One scalar target per row.
    Regression,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::Config(format!(
                "unknown task '{other}' (expected classification or regression)"
            ))),
        }
    }
}

/// Check an (x, y) training pair for shape and value errors.
pub fn check_training_set(x: &[Vec<f64>], y: &[Vec<f64>], task: Task) -> Result<(usize, usize)> {
    if x.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Input(format!("{} feature rows but {} target rows", x.len(), y.len())));
    }
    let d = x[0].len();
    let c = y[0].len();
    if d == 0 || c == 0 {
        return Err(Error::Input("features and targets need at least one column".into()));
    }
    if x.iter().any(|r| r.len() != d) || y.iter().any(|r| r.len() != c) {
        return Err(Error::Input("ragged feature or target rows".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite feature value".into()));
    }
    match task {
        Task::Classification => {
            if y.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Input("classification targets must be 0 or 1".into()));
            }
        }
        Task::Regression => {
            if c != 1 {
                return Err(Error::Input(format!("regression expects one target column, got {c}")));
            }
            if y.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Input("regression targets must be finite".into()));
            }
        }
    }
    Ok((d, c))
}

/// Per-column mean and scale (std, or 1 for constant columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let d = x[0].len();
        let mut mean = vec![0.0; d];
        for r in x {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for r in x {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let scale = var.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|r| r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect())
            .collect()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// A fitted probe of any protocol.
#[derive(Clone, Debug)]
pub enum ProbeModel {
    Knn(KnnModel),
    Linear(LinearProbe),
    Mlp(MlpProbe),
    Finetune(Box<FinetuneModel>),
}

impl ProbeModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ProbeModel::Knn(_) => "knn",
            ProbeModel::Linear(_) => "linear",
            ProbeModel::Mlp(_) => "mlp",
            ProbeModel::Finetune(_) => "finetune",
        }
    }
}
