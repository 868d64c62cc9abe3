//! Run records and their file outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::stable_limits::{Estimate, Provenance};

pub const RUN_SCHEMA: &str = "valleywalk.run/1";
pub const REPLICATE_SCHEMA: &str = "valleywalk.replicates/1";
pub const SUMMARY_SCHEMA: &str = "valleywalk.summary/1";
pub const TABLE_SCHEMA: &str = "valleywalk.table/1";

/// One replicate's outcome. `values` holds only quantities that are pure
/// functions of (config, seed, id); wall time is kept apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub id: u64,
    pub values: BTreeMap<String, f64>,
    pub censored: bool,
    pub wall_time_s: f64,
}

impl ReplicateRecord {
    pub fn new(id: u64) -> Self {
        ReplicateRecord {
            id,
            values: BTreeMap::new(),
            censored: false,
            wall_time_s: 0.0,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }
}

/// A reported number: estimate, stderr or exactness, sample size, censoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub exact: bool,
    pub samples: u64,
    pub censored: u64,
}

impl Stat {
    pub fn mc(name: &str, value: f64, stderr: f64, samples: u64, censored: u64) -> Self {
        Stat {
            name: name.into(),
            value,
            stderr: Some(stderr),
            exact: false,
            samples,
            censored,
        }
    }

    pub fn exact(name: &str, value: f64) -> Self {
        Stat {
            name: name.into(),
            value,
            stderr: None,
            exact: true,
            samples: 0,
            censored: 0,
        }
    }

    /// Deterministic function of sampled data without a stderr (counts,
    /// distances, quantiles).
    pub fn derived(name: &str, value: f64, samples: u64, censored: u64) -> Self {
        Stat {
            name: name.into(),
            value,
            stderr: None,
            exact: false,
            samples,
            censored,
        }
    }

    pub fn from_estimate(name: &str, e: &Estimate) -> Self {
        Stat {
            name: name.into(),
            value: e.value,
            stderr: (e.provenance != Provenance::ClosedForm).then_some(e.stderr),
            exact: e.provenance == Provenance::ClosedForm,
            samples: e.samples,
            censored: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Human-readable acceptance region.
    pub bound: String,
}

impl Gate {
    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Gate {
            name: name.into(),
            passed: value <= max,
            value,
            bound: format!("<= {max}"),
        }
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Gate {
            name: name.into(),
            passed: value >= min,
            value,
            bound: format!(">= {min}"),
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Gate {
            name: name.into(),
            passed: value >= lo && value <= hi,
            value,
            bound: format!("in [{lo}, {hi}]"),
        }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Gate {
            name: name.into(),
            passed,
            value: f64::from(u8::from(passed)),
            bound: "true".into(),
        }
    }
}

/// Plot-ready table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub workers: usize,
    pub replicates: Vec<ReplicateRecord>,
    pub summary: Vec<Stat>,
    pub tables: Vec<Table>,
    pub gates: Vec<Gate>,
    pub censored: u64,
    pub wall_time_s: f64,
    /// Free-form notes (flags such as low-confidence predictions).
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn all_gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn stat(&self, name: &str) -> Option<&Stat> {
        self.summary.iter().find(|s| s.name == name)
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Replicate values without wall times, for reproducibility checks.
    pub fn outcomes(&self) -> Vec<(u64, &BTreeMap<String, f64>, bool)> {
        self.replicates.iter().map(|r| (r.id, &r.values, r.censored)).collect()
    }

    /// Write `<stem>.json`, `<stem>.replicates.jsonl`, `<stem>.summary.csv`
    /// and one `<stem>.<table>.csv` per table; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = self.config.kind.name();
        let mut paths = Vec::new();

        let p = dir.join(format!("{stem}.json"));
        let mut head = serde_json::to_value(self)?;
        if let Some(obj) = head.as_object_mut() {
            obj.remove("replicates");
        }
        std::fs::write(&p, serde_json::to_string_pretty(&head)?)?;
        paths.push(p);

        let p = dir.join(format!("{stem}.replicates.jsonl"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
        let header = serde_json::json!({
            "schema": REPLICATE_SCHEMA,
            "config_digest": self.config_digest,
            "config": self.config,
        });
        writeln!(w, "{header}")?;
        for r in &self.replicates {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        w.flush()?;
        paths.push(p);

        let p = dir.join(format!("{stem}.summary.csv"));
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["schema", SUMMARY_SCHEMA, "", "", "", ""])?;
        w.write_record(["name", "value", "stderr", "exact", "samples", "censored"])?;
        for s in &self.summary {
            w.write_record([
                s.name.clone(),
                s.value.to_string(),
                s.stderr.map_or(String::new(), |e| e.to_string()),
                s.exact.to_string(),
                s.samples.to_string(),
                s.censored.to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(p);

        for t in &self.tables {
            let p = dir.join(format!("{stem}.{}.csv", t.name));
            let mut w = csv::Writer::from_path(&p)?;
            let mut first = vec![String::from("schema"), TABLE_SCHEMA.to_string()];
            first.resize(t.columns.len().max(2), String::new());
            w.write_record(&first)?;
            let mut cols = t.columns.clone();
            cols.resize(first.len(), String::new());
            w.write_record(&cols)?;
            for row in &t.rows {
                let mut cells: Vec<String> = row.iter().map(f64::to_string).collect();
                cells.resize(first.len(), String::new());
                w.write_record(&cells)?;
            }
            w.flush()?;
            paths.push(p);
        }
        Ok(paths)
    }
}
