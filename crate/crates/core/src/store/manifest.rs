//! Tab-separated image manifests.
//!
//! ```text
//! # classes: flat,streak,cells,slick
//! # target: wavelength px
//! # map: rain,front -> other
//! images/a.png	a	train	streak,cells	12.5
//! images/b.png	b	test		
//! ```
//! Columns: path, id, split, comma-joined labels, optional regression target
//! (empty when missing). Lines starting with `#` are directives or comments.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub id: String,
    pub split: Split,
    pub labels: Vec<String>,
    pub target: Option<f64>,
}

/// Many-to-one relabelling, e.g. rare classes folded into a catch-all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub from: Vec<String>,
    pub to: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    /// Whether `classes` was declared (checked) rather than inferred.
    pub declared_classes: bool,
    pub target: Option<TargetSpec>,
    pub label_maps: Vec<LabelMap>,
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

impl Manifest {
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m = Manifest {
            base_dir: base_dir.to_path_buf(),
            ..Default::default()
        };
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut raw: Vec<(usize, ManifestRecord)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("classes:") {
                    m.classes = split_list(v);
                    m.declared_classes = true;
                } else if let Some(v) = rest.strip_prefix("target:") {
                    let mut parts = v.split_whitespace();
                    let name = parts.next().ok_or_else(|| parse_err(ln, "target directive needs a name"))?;
                    m.target = Some(TargetSpec {
                        name: name.to_string(),
                        unit: parts.collect::<Vec<_>>().join(" "),
                    });
                } else if let Some(v) = rest.strip_prefix("map:") {
                    let (from, to) = v
                        .split_once("->")
                        .ok_or_else(|| parse_err(ln, "map directive must look like `a,b -> c`"))?;
                    let to = to.trim();
                    if to.is_empty() {
                        return Err(parse_err(ln, "map directive has an empty target label"));
                    }
                    m.label_maps.push(LabelMap {
                        from: split_list(from),
                        to: to.to_string(),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(parse_err(
                    ln,
                    format!("expected 4 or 5 tab-separated fields, found {}", fields.len()),
                ));
            }
            let id = fields[1].trim();
            if id.is_empty() || fields[0].trim().is_empty() {
                return Err(parse_err(ln, "empty path or id"));
            }
            if let Some(prev) = seen.insert(id.to_string(), ln) {
                return Err(parse_err(ln, format!("duplicate id {id:?} (lines {prev} and {ln})")));
            }
            let split = fields[2].trim().parse::<Split>().map_err(|e| parse_err(ln, e))?;
            let target = match fields.get(4).map(|s| s.trim()) {
                None | Some("") => None,
                Some(s) => {
                    let v: f64 = s.parse().map_err(|_| parse_err(ln, format!("bad target value {s:?}")))?;
                    if !v.is_finite() {
                        return Err(parse_err(ln, "regression target must be finite"));
                    }
                    Some(v)
                }
            };
            raw.push((
                ln,
                ManifestRecord {
                    path: PathBuf::from(fields[0].trim()),
                    id: id.to_string(),
                    split,
                    labels: split_list(fields[3]),
                    target,
                },
            ));
        }

        let mut inferred = BTreeSet::new();
        for (ln, rec) in &mut raw {
            let mut mapped = Vec::with_capacity(rec.labels.len());
            for l in &rec.labels {
                let l = m
                    .label_maps
                    .iter()
                    .find(|map| map.from.iter().any(|f| f == l))
                    .map_or(l.clone(), |map| map.to.clone());
                if m.declared_classes && !m.classes.contains(&l) {
                    return Err(parse_err(*ln, format!("unknown label {l:?}")));
                }
                if !mapped.contains(&l) {
                    mapped.push(l);
                }
            }
            inferred.extend(mapped.iter().cloned());
            rec.labels = mapped;
        }
        if !m.declared_classes {
            m.classes = inferred.into_iter().collect();
        }
        m.records = raw.into_iter().map(|(_, r)| r).collect();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse_str(&text, &base)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.declared_classes {
            let _ = writeln!(s, "# classes: {}", self.classes.join(","));
        }
        if let Some(t) = &self.target {
            let _ = writeln!(s, "# target: {} {}", t.name, t.unit);
        }
        for m in &self.label_maps {
            let _ = writeln!(s, "# map: {} -> {}", m.from.join(","), m.to);
        }
        for r in &self.records {
            let _ = write!(
                s,
                "{}\t{}\t{}\t{}",
                r.path.display(),
                r.id,
                r.split.as_str(),
                r.labels.join(",")
            );
            match r.target {
                Some(t) => {
                    let _ = writeln!(s, "\t{t}");
                }
                None if self.target.is_some() => s.push_str("\t\n"),
                None => s.push('\n'),
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, rec: &ManifestRecord) -> PathBuf {
        if rec.path.is_absolute() {
            rec.path.clone()
        } else {
            self.base_dir.join(&rec.path)
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Row-major N×C binary label matrix for the given records.
    pub fn label_matrix(&self, records: &[&ManifestRecord]) -> Vec<f64> {
        let c = self.classes.len();
        let mut y = vec![0.0; records.len() * c];
        for (i, r) in records.iter().enumerate() {
            for l in &r.labels {
                if let Some(k) = self.class_index(l) {
                    y[i * c + k] = 1.0;
                }
            }
        }
        y
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    /// Check that every image file exists; returns the ids of missing ones.
    pub fn missing_files(&self) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| !self.resolve(r).is_file())
            .map(|r| r.id.clone())
            .collect()
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
