//! Versioned JSON run reports.
//!
//! Field order is fixed by the struct definitions and the configuration echo
//! is a sorted map, so emitting the same report twice gives the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackResult;
use crate::classifier::container::write_file;
use crate::error::{Error, Result};
use crate::eval::norms::pixel_fraction;

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: usize,
    pub label: usize,
    pub target: usize,
    pub success: bool,
    pub predicted: usize,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub pixel_fraction: f64,
    pub iterations: usize,
    pub binarized: bool,
    pub seconds: f64,
}

impl ImageRecord {
    pub fn from_result(image_id: usize, label: usize, target: usize, r: &AttackResult) -> Self {
        Self {
            image_id,
            label,
            target,
            success: r.success,
            predicted: r.predicted,
            l0: r.norms.l0,
            l1: r.norms.l1,
            l2: r.norms.l2,
            linf: r.norms.linf,
            pixel_fraction: pixel_fraction(r.norms.l0, r.perturbation.len()),
            iterations: r.iterations,
            binarized: r.binarized,
            seconds: r.seconds,
        }
    }
}

/// Means over a set of records; every field is `None` for an empty set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
    pub pixel_fraction: Option<f64>,
    pub seconds: Option<f64>,
}

impl Means {
    fn over<'a>(records: impl Iterator<Item = &'a ImageRecord> + Clone) -> Self {
        let n = records.clone().count();
        let mean = |f: fn(&ImageRecord) -> f64| (n > 0).then(|| records.clone().map(f).sum::<f64>() / n as f64);
        Self {
            l0: mean(|r| r.l0),
            l1: mean(|r| r.l1),
            l2: mean(|r| r.l2),
            linf: mean(|r| r.linf),
            pixel_fraction: mean(|r| r.pixel_fraction),
            seconds: mean(|r| r.seconds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub attempted: usize,
    pub successes: usize,
    /// Percent; `None` when nothing was attempted.
    pub asr: Option<f64>,
    pub binarized: usize,
    /// Over every attempted image.
    pub all: Means,
    /// Over successful attacks only.
    pub successful: Means,
}

impl Aggregate {
    pub fn from_records(records: &[ImageRecord]) -> Self {
        let successes = records.iter().filter(|r| r.success).count();
        Self {
            attempted: records.len(),
            successes,
            asr: (!records.is_empty()).then(|| 100.0 * successes as f64 / records.len() as f64),
            binarized: records.iter().filter(|r| r.binarized).count(),
            all: Means::over(records.iter()),
            successful: Means::over(records.iter().filter(|r| r.success)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub records: Vec<ImageRecord>,
    pub aggregate: Aggregate,
}

impl VariantReport {
    pub fn new(name: impl Into<String>, records: Vec<ImageRecord>) -> Self {
        let aggregate = Aggregate::from_records(&records);
        Self {
            name: name.into(),
            records,
            aggregate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    /// Every resolved configuration key; replaying it reproduces the run.
    pub config: BTreeMap<String, String>,
    /// SHA-256 over the attacked `(image id, target)` list.
    pub image_list_hash: String,
    pub variants: Vec<VariantReport>,
    /// Set when the run stopped early; `error` then says why.
    pub truncated: bool,
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: BTreeMap<String, String>, image_list_hash: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.into(),
            config,
            image_list_hash,
            variants: Vec::new(),
            truncated: false,
            error: None,
        }
    }

    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Format {
            offset: e.column(),
            detail: format!("line {}: {e}", e.line()),
        })?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Format {
                offset: 0,
                detail: format!("unsupported report schema {}", report.schema_version),
            });
        }
        Ok(report)
    }

    pub fn emit(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Copy with every wall-clock field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for v in &mut r.variants {
            for rec in &mut v.records {
                rec.seconds = 0.0;
            }
            v.aggregate = Aggregate::from_records(&v.records);
        }
        r
    }

    /// Stored aggregates agree with the ones recomputed from the records.
    pub fn aggregates_consistent(&self) -> bool {
        self.variants.iter().all(|v| Aggregate::from_records(&v.records) == v.aggregate)
    }

    /// Plain-text table of the variants' aggregates.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let mut out = String::new();
        let _ = writeln!(out, "{} report (schema {}, version {})", self.command, self.schema_version, self.artifact_version);
        let _ = writeln!(out, "images {}", self.image_list_hash);
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>9} {:>8} {:>7} {:>7} {:>9} {:>8}",
            "variant", "n", "ASR %", "l0", "pixels %", "l2", "linf", "binary", "sec/img"
        );
        for v in &self.variants {
            let a = &v.aggregate;
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>8} {:>9} {:>8} {:>7} {:>7} {:>9} {:>8}",
                v.name,
                a.attempted,
                opt(a.asr, 1),
                opt(a.all.l0, 1),
                opt(a.all.pixel_fraction, 2),
                opt(a.all.l2, 3),
                opt(a.all.linf, 4),
                format!("{}/{}", a.binarized, a.attempted),
                opt(a.all.seconds, 3),
            );
        }
        if self.truncated {
            let _ = writeln!(out, "TRUNCATED: {}", self.error.as_deref().unwrap_or("unknown error"));
        }
        out
    }
}
