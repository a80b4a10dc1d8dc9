//! Prediction logs and their CSV form.
//!
//! ```text
//! # manifest_sha256=<hex>        optional leading comment lines (key=value)
//! # model=ds_T5_seed1
//! example_id,true_label,predicted_label,attr_<name>...
//! 17,2,2,0,1,3
//! ```
//!
//! The header is mandatory and strict: besides the three fixed columns only
//! `attr_`-prefixed columns are accepted.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub example_id: u64,
    pub true_label: usize,
    pub predicted_label: usize,
    /// Group index per attribute, aligned with [`PredictionLog::attribute_names`].
    pub attributes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionLog {
    pub num_classes: usize,
    pub attribute_names: Vec<String>,
    pub records: Vec<PredictionRecord>,
    /// Free-form metadata carried in the comment preamble (`model`, `split`,
    /// `manifest_sha256`, ...).
    pub meta: BTreeMap<String, String>,
}

const FIXED: [&str; 3] = ["example_id", "true_label", "predicted_label"];

impl PredictionLog {
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|a| a == name)
    }

    /// Group index of every record for one attribute.
    pub fn attribute_column(&self, name: &str) -> Result<Vec<usize>> {
        let a = self
            .attribute_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown attribute `{name}`")))?;
        Ok(self.records.iter().map(|r| r.attributes[a]).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !ids.insert(r.example_id) {
                return Err(Error::InvalidInput(format!("duplicate example id {}", r.example_id)));
            }
            if r.true_label >= self.num_classes || r.predicted_label >= self.num_classes {
                return Err(Error::InvalidInput(format!("example {}: label out of range", r.example_id)));
            }
            if r.attributes.len() != self.attribute_names.len() {
                return Err(Error::InvalidInput(format!("example {}: wrong attribute count", r.example_id)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&FIXED.join(","));
        for name in &self.attribute_names {
            let _ = write!(out, ",attr_{name}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{}", r.example_id, r.true_label, r.predicted_label);
            for g in &r.attributes {
                let _ = write!(out, ",{g}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Reads a prediction-log CSV; labels must lie in `[0, num_classes)`.
pub fn load_prediction_log(path: impl AsRef<Path>, num_classes: usize) -> Result<PredictionLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_prediction_log(&text, num_classes, &path.display().to_string())
}

/// Parses prediction-log CSV text. `source` names the input in error messages.
pub fn parse_prediction_log(text: &str, num_classes: usize, source: &str) -> Result<PredictionLog> {
    let schema_err = |reason: String| Error::Schema { path: source.to_string(), reason };

    let mut meta = BTreeMap::new();
    let mut body_start = 0;
    let mut preamble_lines = 0;
    for line in text.split_inclusive('\n') {
        let Some(comment) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = comment.trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        body_start += line.len();
        preamble_lines += 1;
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(&text.as_bytes()[body_start..]);
    let header = reader.headers().map_err(|e| schema_err(format!("unreadable header: {e}")))?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(schema_err("missing header".into()));
    }

    let mut fixed_pos = [None; 3];
    let mut attr_cols = Vec::new();
    let mut seen = HashSet::new();
    for (i, col) in header.iter().enumerate() {
        let col = col.trim();
        if !seen.insert(col.to_string()) {
            return Err(schema_err(format!("duplicate column `{col}`")));
        }
        if let Some(f) = FIXED.iter().position(|&f| f == col) {
            fixed_pos[f] = Some(i);
        } else if let Some(name) = col.strip_prefix("attr_").filter(|n| !n.is_empty()) {
            attr_cols.push((i, name.to_string()));
        } else {
            return Err(schema_err(format!("unknown column `{col}`")));
        }
    }
    let fixed_pos: Vec<usize> = fixed_pos
        .iter()
        .zip(FIXED)
        .map(|(p, name)| p.ok_or_else(|| schema_err(format!("missing column `{name}`"))))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = preamble_lines + row_idx + 2;
        let row_err = |reason: String| schema_err(format!("row {} (line {line}): {reason}", row_idx + 1));
        let row = row.map_err(|e| row_err(format!("malformed: {e}")))?;
        if row.len() != header.len() {
            return Err(row_err(format!("expected {} fields, found {}", header.len(), row.len())));
        }
        let int = |i: usize, name: &str| -> Result<u64> {
            row[i].trim().parse::<u64>().map_err(|_| row_err(format!("`{name}` is not a non-negative integer: `{}`", &row[i])))
        };
        let example_id = int(fixed_pos[0], FIXED[0])?;
        let true_label = int(fixed_pos[1], FIXED[1])? as usize;
        let predicted_label = int(fixed_pos[2], FIXED[2])? as usize;
        for (name, v) in [("true_label", true_label), ("predicted_label", predicted_label)] {
            if v >= num_classes {
                return Err(row_err(format!("{name} = {v} out of range for {num_classes} classes")));
            }
        }
        if !ids.insert(example_id) {
            return Err(row_err(format!("duplicate example_id {example_id}")));
        }
        let attributes = attr_cols
            .iter()
            .map(|(i, name)| int(*i, &format!("attr_{name}")).map(|g| g as usize))
            .collect::<Result<_>>()?;
        records.push(PredictionRecord { example_id, true_label, predicted_label, attributes });
    }

    Ok(PredictionLog {
        num_classes,
        attribute_names: attr_cols.into_iter().map(|(_, n)| n).collect(),
        records,
        meta,
    })
}
