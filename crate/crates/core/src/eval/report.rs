//! Structured evaluation results.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{binarize, f1_micro, mae_rmse, micro_auroc, per_class_auroc};
use crate::eval::Task;

/// Per-class retrieval mAP; `None` for skipped classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub classes: Vec<String>,
    pub map_per_class: Vec<Option<f64>>,
    pub map_mean: f64,
}

impl RetrievalScores {
    pub fn new(classes: Vec<String>, map_per_class: Vec<Option<f64>>) -> Result<Self> {
        let scored: Vec<f64> = map_per_class.iter().flatten().copied().collect();
        if scored.is_empty() {
            return Err(Error::UndefinedMetric("no class has at least two members for retrieval".into()));
        }
        Ok(Self {
            classes,
            map_per_class,
            map_mean: scored.iter().sum::<f64>() / scored.len() as f64,
        })
    }
}

/// One evaluation record. Metrics that do not apply to the protocol are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub task: Option<Task>,
    pub split: String,
    pub n_train: usize,
    pub n_eval: usize,
    pub classes: Vec<String>,
    pub auroc_micro: Option<f64>,
    pub f1_micro: Option<f64>,
    pub f1_threshold: Option<f64>,
    pub auroc_per_class: Vec<Option<f64>>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    /// Target unit for `mae`/`rmse`.
    pub unit: Option<String>,
    pub map_per_class: Vec<Option<f64>>,
    pub map_mean: Option<f64>,
    /// (target, prediction) pairs of a regression evaluation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scatter: Vec<[f64; 2]>,
    /// Configuration that produced these numbers.
    pub provenance: serde_json::Value,
}

impl MetricsReport {
    pub fn new(protocol: &str, split: &str, provenance: serde_json::Value) -> Self {
        Self {
            protocol: protocol.to_string(),
            split: split.to_string(),
            provenance,
            ..Default::default()
        }
    }

    /// Fill classification metrics from N×C labels and scores.
    pub fn with_classification(
        mut self,
        classes: &[String],
        y: &[Vec<f64>],
        scores: &[Vec<f64>],
        threshold: f64,
    ) -> Result<Self> {
        self.task = Some(Task::Classification);
        self.classes = classes.to_vec();
        self.n_eval = y.len();
        self.auroc_micro = Some(micro_auroc(y, scores)?);
        self.auroc_per_class = per_class_auroc(y, scores)?;
        self.f1_micro = Some(f1_micro(y, &binarize(scores, threshold))?);
        self.f1_threshold = Some(threshold);
        Ok(self)
    }

    pub fn with_regression(mut self, y: &[f64], yhat: &[f64], unit: Option<&str>) -> Result<Self> {
        self.task = Some(Task::Regression);
        self.n_eval = y.len();
        let (mae, rmse) = mae_rmse(y, yhat)?;
        self.mae = Some(mae);
        self.rmse = Some(rmse);
        self.unit = unit.map(str::to_string);
        self.scatter = y.iter().zip(yhat).map(|(&a, &b)| [a, b]).collect();
        Ok(self)
    }

    pub fn with_retrieval(mut self, scores: &RetrievalScores, n: usize) -> Self {
        self.classes = scores.classes.clone();
        self.n_eval = n;
        self.map_per_class = scores.map_per_class.clone();
        self.map_mean = Some(scores.map_mean);
        self
    }

    /// Range checks on every populated metric.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: Option<f64>| match v {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                Err(Error::Computation(format!("{name} = {x} outside [0, 1]")))
            }
            _ => Ok(()),
        };
        unit("auroc_micro", self.auroc_micro)?;
        unit("f1_micro", self.f1_micro)?;
        unit("map_mean", self.map_mean)?;
        for v in self.auroc_per_class.iter().chain(&self.map_per_class) {
            unit("per-class metric", *v)?;
        }
        if let (Some(mae), Some(rmse)) = (self.mae, self.rmse) {
            if !(mae >= 0.0 && rmse >= mae) {
                return Err(Error::Computation(format!("rmse {rmse} < mae {mae}")));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Append one line to a JSONL file.
    pub fn append(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", self.to_json_line()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect()
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Fixed-width summary table, one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<10} {:<6} {:>7} {:>7} {:>9} {:>8} {:>8} {:>8} {:>8}\n",
        "protocol", "split", "n_train", "n_eval", "auroc", "f1", "mae", "rmse", "mAP"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:<6} {:>7} {:>7} {:>9} {:>8} {:>8} {:>8} {:>8}\n",
            r.protocol,
            r.split,
            r.n_train,
            r.n_eval,
            cell(r.auroc_micro),
            cell(r.f1_micro),
            cell(r.mae),
            cell(r.rmse),
            cell(r.map_mean)
        ));
        let per_class: Vec<(&String, Option<f64>, Option<f64>)> = r
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    c,
                    r.auroc_per_class.get(i).copied().flatten(),
                    r.map_per_class.get(i).copied().flatten(),
                )
            })
            .collect();
        for (c, a, m) in per_class {
            if a.is_some() || m.is_some() {
                out.push_str(&format!("  {:<24} auroc {:>8}  mAP {:>8}\n", c, cell(a), cell(m)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_checks() {
        let classes = vec!["a".to_string(), "b".into()];
        let y = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let s = vec![vec![0.9, 0.2], vec![0.1, 0.7], vec![0.6, 0.4]];
        let r = MetricsReport::new("knn", "test", serde_json::json!({"k": 15}))
            .with_classification(&classes, &y, &s, 0.5)
            .unwrap();
        r.validate().unwrap();
        let back = MetricsReport::parse_jsonl(&format!("{}\n\n{}\n", r.to_json_line(), r.to_json_line())).unwrap();
        assert_eq!(back, vec![r.clone(), r.clone()]);
        assert!(render_table(&back).contains("knn"));
        let bad = MetricsReport {
            mae: Some(2.0),
            rmse: Some(1.0),
            ..r
        };
        assert!(bad.validate().is_err());
        assert!(MetricsReport::parse_jsonl("{").is_err());
    }

    #[test]
    fn every_field_serialized() {
        let r = MetricsReport::new("linear", "test", serde_json::Value::Null);
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        for f in ["auroc_micro", "f1_micro", "auroc_per_class", "mae", "rmse", "map_per_class", "map_mean", "provenance"] {
            assert!(v.get(f).is_some(), "{f}");
        }
    }
}
