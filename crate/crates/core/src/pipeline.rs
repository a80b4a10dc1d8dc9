//! The four pipeline stages behind the command-line tool.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/dataset/                         dataset.json, examples.csv, pixels.bin
//! <out>/runs/run.json                    index of trained groups
//! <out>/runs/logs/<model>_seed<s>.csv    test-split prediction logs
//! <out>/runs/groups/<model>.json         per-group accuracies
//! <out>/audit/summary.csv                one row per temperature
//! <out>/audit/significance/{sc,tc}_T<t>.csv
//! <out>/audit/disagreement/<pair>_T<t>.csv
//! <out>/audit/fairness_<attribute>.csv
//! <out>/audit/audit.json                 master report
//! <out>/report/bias_figure.csv
//! <out>/report/fairness_figure_<attribute>.csv
//! ```
//!
//! Every file carries the SHA-256 of the manifest (a `# manifest_sha256=`
//! comment line in CSVs, a `manifest_sha256` field in JSON), and later stages
//! refuse artifacts produced under a different manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bias::{average_matrices, disagreement_matrix, significant_classes, SignificanceReport};
use crate::data::{
    balance_by_label, generate_trifeature, load_prediction_log, read_dataset, split_stratified, write_dataset, Dataset,
    GenerationConfig, PredictionLog,
};
use crate::distill::{run_group, ExperimentPlan, ModelKind, RunGroup};
use crate::error::{Error, Result};
use crate::fairness::{fairness_sweep, fairness_table_csv, FairnessRow, SweepEntry};
use crate::io::{write_atomic, write_json, DirLock};
use crate::stats::{mean, sample_std};

pub const FORMAT_VERSION: u32 = 1;
/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "KDFAIR_OUT";

fn default_generation_seed() -> u64 {
    7
}

fn default_train_fraction() -> f64 {
    0.75
}

fn default_split_seed() -> u64 {
    11
}

fn default_threshold() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Attributes audited for fairness.
    #[serde(default)]
    pub attributes: Vec<String>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { threshold: default_threshold(), attributes: Vec::new() }
    }
}

/// A complete experiment description (one JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub name: String,
    pub generation: GenerationConfig,
    #[serde(default = "default_generation_seed")]
    pub generation_seed: u64,
    /// Undersample every class to the smallest class count after generation.
    #[serde(default)]
    pub balance_labels: bool,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Attributes stratified in the train/test split in addition to the label.
    #[serde(default)]
    pub split_strata: Vec<String>,
    pub plan: ExperimentPlan,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentManifest {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema { path: source.to_string(), reason: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let m = Self::from_json(&text, &path.display().to_string())?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty plain name"));
        }
        self.generation.validate_at("generation.")?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        self.plan.validate_at("plan.")?;
        if self.plan.seeds.len() < 2 {
            return Err(Error::config("plan.seeds", "at least 2 seeds are needed for Welch's t-test"));
        }
        if !(0.0..=1.0).contains(&self.analysis.threshold) {
            return Err(Error::config("analysis.threshold", "must lie in [0, 1]"));
        }
        let schema = self.generation.schema();
        for a in &self.split_strata {
            if !schema.iter().any(|s| &s.name == a) {
                return Err(Error::config("split_strata", format!("`{a}` is not in the dataset schema")));
            }
        }
        for a in &self.analysis.attributes {
            if !schema.iter().any(|s| &s.name == a) {
                return Err(Error::config("analysis.attributes", format!("`{a}` is not in the dataset schema")));
            }
        }
        Ok(())
    }

    /// SHA-256 (hex) of the manifest's canonical compact JSON, excluding
    /// `output_dir`, which does not affect results.
    pub fn hash(&self) -> String {
        let canonical = Self { output_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Output directory: explicit `out`, else the manifest's `output_dir`,
    /// else `$KDFAIR_OUT/<name>`, else `kdfair-out/<name>`.
    pub fn resolve_out(&self, out: Option<&Path>) -> PathBuf {
        if let Some(o) = out {
            return o.to_path_buf();
        }
        if let Some(o) = &self.output_dir {
            return o.clone();
        }
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("kdfair-out"));
        root.join(&self.name)
    }

    /// Train/test split of a generated dataset.
    pub fn split(&self, dataset: &Dataset) -> Result<(Dataset, Dataset)> {
        split_stratified(dataset, self.train_fraction, self.split_seed, &self.split_strata)
    }
}

fn hash_comment(hash: &str) -> String {
    format!("# manifest_sha256={hash}\n")
}

fn check_hash(path: &Path, expected: &str, found: Option<&str>) -> Result<()> {
    match found {
        Some(f) if f == expected => Ok(()),
        other => Err(Error::HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: other.unwrap_or("<none>").to_string(),
        }),
    }
}

/// Generates (and optionally label-balances) the dataset into `<out>/dataset`.
pub fn cmd_generate(manifest: &ExperimentManifest, out: &Path) -> Result<Dataset> {
    manifest.validate()?;
    let _lock = DirLock::acquire(out)?;
    let mut d = generate_trifeature(&manifest.generation, manifest.generation_seed)?;
    if manifest.balance_labels {
        d = balance_by_label(&d, manifest.generation_seed)?;
    }
    write_dataset(&out.join("dataset"), &d, &manifest.hash())?;
    info!("wrote {} examples to {}", d.len(), out.join("dataset").display());
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunIndex {
    pub format_version: u32,
    pub manifest_sha256: String,
    pub num_classes: usize,
    pub attributes: Vec<String>,
    pub seeds: Vec<u64>,
    pub temperatures: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    pub manifest_sha256: String,
    #[serde(flatten)]
    pub group: RunGroup,
}

fn log_path(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join("runs").join("logs").join(format!("{label}_seed{seed}.csv"))
}

fn group_path(out: &Path, label: &str) -> PathBuf {
    out.join("runs").join("groups").join(format!("{label}.json"))
}

/// Trains teacher, NDS and DS(T) groups and writes their logs and summaries.
pub fn cmd_run(manifest: &ExperimentManifest, out: &Path, jobs: usize) -> Result<RunIndex> {
    manifest.validate()?;
    let dataset_dir = out.join("dataset");
    let (dataset, meta) = read_dataset(&dataset_dir)?;
    let hash = manifest.hash();
    check_hash(&dataset_dir.join("dataset.json"), &hash, Some(&meta.manifest_hash))?;
    let _lock = DirLock::acquire(out)?;
    let plan = &manifest.plan;
    if plan.seeds.len() < 5 {
        warn!("only {} seeds configured; significance tests are weak below 5 runs", plan.seeds.len());
    }
    let (train, test) = manifest.split(&dataset)?;
    info!("train {} / test {} examples", train.len(), test.len());

    let write_group = |outcome: &crate::distill::GroupOutcome| -> Result<()> {
        let label = outcome.group.label();
        for (log, &seed) in outcome.logs.iter().zip(&plan.seeds) {
            let mut log = log.clone();
            log.meta.insert("manifest_sha256".into(), hash.clone());
            log.write(&log_path(out, &label, seed))?;
        }
        write_json(&group_path(out, &label), &GroupFile { manifest_sha256: hash.clone(), group: outcome.group.clone() })
    };

    let teachers = run_group(plan, ModelKind::Teacher, None, &train, &test, None, jobs)?;
    write_group(&teachers)?;
    let nds = run_group(plan, ModelKind::Nds, None, &train, &test, None, jobs)?;
    write_group(&nds)?;
    for &t in &plan.temperatures {
        let ds = run_group(plan, ModelKind::Ds, Some(t), &train, &test, Some(&teachers.models), jobs)?;
        write_group(&ds)?;
    }
    let index = RunIndex {
        format_version: FORMAT_VERSION,
        manifest_sha256: hash,
        num_classes: train.num_classes,
        attributes: train.attributes.iter().map(|a| a.name.clone()).collect(),
        seeds: plan.seeds.clone(),
        temperatures: plan.temperatures.clone(),
        alpha: plan.alpha,
    };
    write_json(&out.join("runs").join("run.json"), &index)?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSummary {
    pub model: String,
    pub temperature: Option<f64>,
    pub overall_acc_mean: f64,
    pub overall_acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisagreementSummary {
    pub pair: String,
    pub file: String,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureAudit {
    pub temperature: f64,
    pub overall_acc_mean: f64,
    pub overall_acc_std: f64,
    pub num_sc: usize,
    pub num_tc: usize,
    /// NDS vs DS(T).
    pub sc: SignificanceReport,
    /// Teacher vs DS(T).
    pub tc: SignificanceReport,
    pub disagreement: Vec<DisagreementSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeFairness {
    pub attribute: String,
    pub rows: Vec<FairnessRow>,
}

/// Contents of `audit/audit.json`. Accuracies and fairness values are
/// fractions; standard deviations are sample (n − 1) deviations over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditReport {
    pub format_version: u32,
    pub manifest_sha256: String,
    pub threshold: f64,
    pub num_classes: usize,
    pub seeds: Vec<u64>,
    pub baselines: Vec<GroupSummary>,
    pub temperatures: Vec<TemperatureAudit>,
    pub fairness: Vec<AttributeFairness>,
}

fn summarize(g: &RunGroup) -> GroupSummary {
    GroupSummary {
        model: g.model_kind.label(None),
        temperature: g.temperature,
        overall_acc_mean: mean(&g.overall_acc),
        overall_acc_std: sample_std(&g.overall_acc),
    }
}

struct LoadedGroup {
    group: RunGroup,
    logs: Vec<PredictionLog>,
}

fn load_group(out: &Path, label: &str, index: &RunIndex) -> Result<LoadedGroup> {
    let gp = group_path(out, label);
    let file: GroupFile = serde_json::from_slice(&fs::read(&gp)?)?;
    check_hash(&gp, &index.manifest_sha256, Some(&file.manifest_sha256))?;
    if file.group.seeds != index.seeds {
        return Err(Error::Schema { path: gp.display().to_string(), reason: "seeds disagree with run.json".into() });
    }
    let logs = index
        .seeds
        .iter()
        .map(|&s| {
            let lp = log_path(out, label, s);
            let log = load_prediction_log(&lp, index.num_classes)?;
            check_hash(&lp, &index.manifest_sha256, log.meta.get("manifest_sha256").map(String::as_str))?;
            Ok(log)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedGroup { group: file.group, logs })
}

fn run_labels(index: &RunIndex) -> Vec<String> {
    let mut labels = vec![ModelKind::Teacher.label(None), ModelKind::Nds.label(None)];
    labels.extend(index.temperatures.iter().map(|&t| ModelKind::Ds.label(Some(t))));
    labels
}

fn missing_run_artifacts(out: &Path, index: &RunIndex) -> Vec<String> {
    let mut paths = Vec::new();
    for label in run_labels(index) {
        paths.push(group_path(out, &label));
        paths.extend(index.seeds.iter().map(|&s| log_path(out, &label, s)));
    }
    paths.into_iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect()
}

/// Significance tests, disagreement matrices and fairness tables for a
/// completed run directory.
pub fn cmd_audit(manifest: &ExperimentManifest, out: &Path) -> Result<AuditReport> {
    manifest.validate()?;
    let hash = manifest.hash();
    let index_path = out.join("runs").join("run.json");
    if !index_path.exists() {
        return Err(Error::MissingArtifacts(vec![index_path.display().to_string()]));
    }
    let index: RunIndex = serde_json::from_slice(&fs::read(&index_path)?)?;
    check_hash(&index_path, &hash, Some(&index.manifest_sha256))?;
    let missing = missing_run_artifacts(out, &index);
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let _lock = DirLock::acquire(out)?;
    let threshold = manifest.analysis.threshold;
    let teacher = load_group(out, &ModelKind::Teacher.label(None), &index)?;
    let nds = load_group(out, &ModelKind::Nds.label(None), &index)?;
    let ds: Vec<LoadedGroup> = index
        .temperatures
        .iter()
        .map(|&t| load_group(out, &ModelKind::Ds.label(Some(t)), &index))
        .collect::<Result<_>>()?;

    let audit_dir = out.join("audit");
    let mut summary = hash_comment(&hash);
    summary.push_str("temperature,overall_acc_mean,overall_acc_std,num_SC,num_TC\n");
    let mut temperatures = Vec::new();
    for (&t, d) in index.temperatures.iter().zip(&ds) {
        let sc = significant_classes(&nds.group, &d.group, threshold)?;
        let tc = significant_classes(&teacher.group, &d.group, threshold)?;
        for (name, report) in [("sc", &sc), ("tc", &tc)] {
            let path = audit_dir.join("significance").join(format!("{name}_T{t}.csv"));
            write_atomic(&path, format!("{}{}", hash_comment(&hash), report.to_csv()).as_bytes())?;
        }
        let mut disagreement = Vec::new();
        for (base_label, base) in [("nds", &nds), ("teacher", &teacher)] {
            let pair = format!("{base_label}_vs_ds");
            let ms = base
                .logs
                .iter()
                .zip(&d.logs)
                .map(|(a, b)| disagreement_matrix(a, b, &pair))
                .collect::<Result<Vec<_>>>()?;
            let avg = average_matrices(&ms)?;
            let file = format!("disagreement/{pair}_T{t}.csv");
            write_atomic(&audit_dir.join(&file), format!("{}{}", hash_comment(&hash), avg.to_csv()).as_bytes())?;
            disagreement.push(DisagreementSummary { pair, file, total: avg.total() });
        }
        let acc = summarize(&d.group);
        let _ = writeln!(
            summary,
            "{t},{:.2},{:.2},{},{}",
            100.0 * acc.overall_acc_mean,
            100.0 * acc.overall_acc_std,
            sc.num_significant,
            tc.num_significant
        );
        temperatures.push(TemperatureAudit {
            temperature: t,
            overall_acc_mean: acc.overall_acc_mean,
            overall_acc_std: acc.overall_acc_std,
            num_sc: sc.num_significant,
            num_tc: tc.num_significant,
            sc,
            tc,
            disagreement,
        });
    }
    write_atomic(&audit_dir.join("summary.csv"), summary.as_bytes())?;

    let mut fairness = Vec::new();
    for attribute in &manifest.analysis.attributes {
        let mut entries = vec![
            SweepEntry { kind: ModelKind::Teacher, temperature: None, logs: &teacher.logs },
            SweepEntry { kind: ModelKind::Nds, temperature: None, logs: &nds.logs },
        ];
        for (&t, d) in index.temperatures.iter().zip(&ds) {
            entries.push(SweepEntry { kind: ModelKind::Ds, temperature: Some(t), logs: &d.logs });
        }
        let rows = fairness_sweep(&entries, attribute)?;
        let csv = format!("{}{}", hash_comment(&hash), fairness_table_csv(&rows));
        write_atomic(&audit_dir.join(format!("fairness_{attribute}.csv")), csv.as_bytes())?;
        fairness.push(AttributeFairness { attribute: attribute.clone(), rows });
    }

    let report = AuditReport {
        format_version: FORMAT_VERSION,
        manifest_sha256: hash,
        threshold,
        num_classes: index.num_classes,
        seeds: index.seeds.clone(),
        baselines: vec![summarize(&teacher.group), summarize(&nds.group)],
        temperatures,
        fairness,
    };
    write_json(&audit_dir.join("audit.json"), &report)?;
    Ok(report)
}

pub fn load_audit(out: &Path) -> Result<AuditReport> {
    let path = out.join("audit").join("audit.json");
    if !path.exists() {
        return Err(Error::MissingArtifacts(vec![path.display().to_string()]));
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.display().to_string(), reason: e.to_string() })
}

/// Files written by [`cmd_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub bias: PathBuf,
    pub fairness: Vec<PathBuf>,
}

/// Long-format plot data (`temperature,series,value,std`) derived from the
/// audit report. Values are percentages except the class counts.
pub fn cmd_report(out: &Path) -> Result<ReportFiles> {
    let audit = load_audit(out)?;
    let _lock = DirLock::acquire(out)?;
    let header = format!("{}temperature,series,value,std\n", hash_comment(&audit.manifest_sha256));
    let pct = |v: f64| format!("{:.4}", 100.0 * v);

    let mut bias = header.clone();
    for t in &audit.temperatures {
        let temp = t.temperature;
        let _ = writeln!(bias, "{temp},test_acc,{},{}", pct(t.overall_acc_mean), pct(t.overall_acc_std));
        let _ = writeln!(bias, "{temp},num_SC,{},0", t.num_sc);
        let _ = writeln!(bias, "{temp},num_TC,{},0", t.num_tc);
    }
    let report_dir = out.join("report");
    let bias_path = report_dir.join("bias_figure.csv");
    write_atomic(&bias_path, bias.as_bytes())?;

    let mut fairness_paths = Vec::new();
    for af in &audit.fairness {
        let mut csv = header.clone();
        let baselines: Vec<&FairnessRow> = af.rows.iter().filter(|r| r.model != ModelKind::Ds).collect();
        for row in af.rows.iter().filter(|r| r.model == ModelKind::Ds) {
            let temp = row.temperature.unwrap_or_default();
            let _ = writeln!(csv, "{temp},EOD,{},{}", pct(row.eod_mean), pct(row.eod_std));
            let _ = writeln!(csv, "{temp},DPD,{},{}", pct(row.dpd_mean), pct(row.dpd_std));
            for b in &baselines {
                let name = b.model.label(None);
                let _ = writeln!(csv, "{temp},{name}_EOD,{},{}", pct(b.eod_mean), pct(b.eod_std));
                let _ = writeln!(csv, "{temp},{name}_DPD,{},{}", pct(b.dpd_mean), pct(b.dpd_std));
            }
        }
        let path = report_dir.join(format!("fairness_figure_{}.csv", af.attribute));
        write_atomic(&path, csv.as_bytes())?;
        fairness_paths.push(path);
    }
    Ok(ReportFiles { bias: bias_path, fairness: fairness_paths })
}
