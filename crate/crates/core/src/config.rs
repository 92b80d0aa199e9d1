//! Layered run configuration: defaults, then a TOML (or JSON) file, then overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::PretrainConfig;
use crate::error::{Error, Result};
use crate::eval::{FinetuneConfig, KnnConfig, LinearConfig, MlpProbeConfig, RetrievalConfig, Task};
use crate::sar::PreprocessConfig;
use crate::store::{EmbeddingSpace, SynthSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub space: EmbeddingSpace,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            space: EmbeddingSpace::Backbone,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub task: Task,
    pub train_split: String,
    pub eval_split: String,
    /// Score threshold used for F1.
    pub f1_threshold: f64,
    /// Use only this many labelled training rows (drawn with the run seed).
    pub label_budget: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            task: Task::Classification,
            train_split: "train".into(),
            eval_split: "test".into(),
            f1_threshold: 0.5,
            label_budget: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub pretrain: PretrainConfig,
    pub embed: EmbedConfig,
    pub probe: ProbeConfig,
    pub knn: KnnConfig,
    pub linear: LinearConfig,
    pub mlp: MlpProbeConfig,
    pub finetune: FinetuneConfig,
    pub retrieval: RetrievalConfig,
}

fn parse_scalar(text: &str) -> toml::Value {
    // a bare word that is not valid TOML becomes a string
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

impl RunConfig {
    /// Defaults overlaid with an optional file and then `key.path=value` overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => Self::read_table(p)?,
            None => toml::Table::new(),
        };
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{ov}' must look like section.key=value")))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut cur = &mut table;
            for part in &parts[..parts.len() - 1] {
                let entry = cur
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                cur = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override '{ov}': '{part}' is not a section")))?;
            }
            cur.insert(parts[parts.len() - 1].to_string(), parse_scalar(value.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("configuration: {}", e.message())))?;
        Ok(cfg)
    }

    fn read_table(path: &Path) -> Result<toml::Table> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let t: toml::Table = serde_json::from_value::<toml::Table>(v)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(t)
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
        }
    }

    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("configuration: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes to JSON")
    }

    /// Check every section; all violations are reported together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>| {
            match r {
                Ok(()) => {}
                Err(Error::Config(m)) => problems.push(m),
                Err(e) => problems.push(e.to_string()),
            }
        };
        check(self.pretrain.validate());
        check(validate_synth(&self.synth));
        check(validate_preprocess(&self.preprocess));
        check(validate_probe(&self.probe));
        check(validate_knn(&self.knn));
        check(if self.linear.l2 > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("linear.l2 must be > 0 (default 1e-4), got {}", self.linear.l2)))
        });
        check(self.mlp.validate());
        check(self.finetune.validate());
        check(if self.retrieval.k > 0 && self.retrieval.trials > 0 {
            Ok(())
        } else {
            Err(Error::Config("retrieval.k and retrieval.trials must be positive (defaults 20, 100)".into()))
        });
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }
}

fn validate_synth(s: &SynthSpec) -> Result<()> {
    if s.count < 4 || s.side < 16 || s.classes.len() < 2 {
        return Err(Error::Config(
            "synth needs count >= 4, side >= 16 and two or more classes (defaults 2000, 64, 4 classes)".into(),
        ));
    }
    let f = s.train_fraction + s.val_fraction;
    if !(s.train_fraction > 0.0 && s.val_fraction >= 0.0 && f < 1.0) {
        return Err(Error::Config(format!(
            "synth split fractions must leave a test share (defaults 0.6 / 0.2), got {} / {}",
            s.train_fraction, s.val_fraction
        )));
    }
    Ok(())
}

fn validate_preprocess(p: &PreprocessConfig) -> Result<()> {
    if p.boxcar_window == 0 {
        return Err(Error::Config("preprocess.boxcar_window must be positive (default 10)".into()));
    }
    if !(0.0 <= p.lower_percentile && p.lower_percentile < p.upper_percentile && p.upper_percentile <= 100.0) {
        return Err(Error::Config(format!(
            "preprocess percentiles must satisfy 0 <= lower < upper <= 100 (defaults 1, 99), got {} / {}",
            p.lower_percentile, p.upper_percentile
        )));
    }
    Ok(())
}

fn validate_probe(p: &ProbeConfig) -> Result<()> {
    if !(p.f1_threshold > 0.0 && p.f1_threshold < 1.0) {
        return Err(Error::Config(format!(
            "probe.f1_threshold must be in (0, 1) (default 0.5), got {}",
            p.f1_threshold
        )));
    }
    for s in [&p.train_split, &p.eval_split] {
        s.parse::<crate::store::Split>().map_err(Error::Config)?;
    }
    if p.label_budget == Some(0) {
        return Err(Error::Config("probe.label_budget must be positive when set".into()));
    }
    Ok(())
}

fn validate_knn(k: &KnnConfig) -> Result<()> {
    if k.k == 0 {
        return Err(Error::Config("knn.k must be positive (default 15)".into()));
    }
    if !(k.temperature > 0.0) {
        return Err(Error::Config(format!("knn.temperature must be > 0 (default 0.07), got {}", k.temperature)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_sections_with_flattened_params() {
        let c = RunConfig::parse_toml(
            "[pretrain.pool.notch_filter]\nprobability = 0.5\ncandidates = 20\n[pretrain.pool.cutout]\nprobability = 0.25\n",
        )
        .unwrap();
        let notch = c.pretrain.pool.notch_filter.unwrap();
        assert_eq!((notch.probability, notch.params.candidates, notch.params.max_zeroed), (0.5, 20, 15));
        assert_eq!(c.pretrain.pool.cutout.unwrap().probability, 0.25);
        assert_eq!(RunConfig::parse_toml(&c.to_toml()).unwrap(), c);
        assert!(RunConfig::parse_toml("[pretrain.pool.notch_filter]\ncandidatez = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse_toml("").unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_layer_on_defaults() {
        let c = RunConfig::resolve(
            None,
            &["seed=7".into(), "pretrain.temperature=0.2".into(), "probe.task=regression".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.pretrain.temperature, 0.2);
        assert_eq!(c.probe.task, Task::Regression);
        assert!(RunConfig::resolve(None, &["nope=1".into()]).is_err());
        assert!(RunConfig::resolve(None, &["seed".into()]).is_err());
    }

    #[test]
    fn violations_name_defaults() {
        let mut c = RunConfig::default();
        c.pretrain.temperature = 0.0;
        c.knn.k = 0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("default 0.5") && msg.contains("default 15"), "{msg}");
    }
}
