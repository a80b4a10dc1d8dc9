//! Demographic parity difference (DPD) and equalized odds difference (EOD)
//! over one attribute, for a single positive class and averaged one-vs-rest
//! over all classes.
//!
//! Rates are kept as integer ratios; max/min selection and the max − min
//! difference are exact, and each difference is converted to `f64` once.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::PredictionLog;
use crate::distill::ModelKind;
use crate::error::{Error, Result};
use crate::stats::{mean, sample_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// `max - min` over the defined ratios, or `None` with fewer than two.
fn spread(rates: &[Ratio]) -> Option<f64> {
    if rates.len() < 2 {
        return None;
    }
    let max = rates.iter().max_by(|a, b| a.cmp(b))?;
    let min = rates.iter().min_by(|a, b| a.cmp(b))?;
    let num = max.num as u128 * min.den as u128 - min.num as u128 * max.den as u128;
    let den = max.den as u128 * min.den as u128;
    Some(num as f64 / den as f64)
}

/// Confusion counts for one group after binarizing at the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCell {
    pub group: usize,
    pub n: u64,
    pub predicted_positive: u64,
    pub actual_positive: u64,
    pub true_positive: u64,
    pub actual_negative: u64,
    pub false_positive: u64,
}

impl GroupCell {
    fn positive_ratio(&self) -> Option<Ratio> {
        Ratio::new(self.predicted_positive, self.n)
    }

    fn tpr_ratio(&self) -> Option<Ratio> {
        Ratio::new(self.true_positive, self.actual_positive)
    }

    fn fpr_ratio(&self) -> Option<Ratio> {
        Ratio::new(self.false_positive, self.actual_negative)
    }

    /// `P(Ŷ = 1 | A = a)`; `None` for an empty group.
    pub fn positive_rate(&self) -> Option<f64> {
        self.positive_ratio().map(|r| r.num as f64 / r.den as f64)
    }

    /// `P(Ŷ = 1 | Y = 1, A = a)`; `None` when the group has no positives.
    pub fn tpr(&self) -> Option<f64> {
        self.tpr_ratio().map(|r| r.num as f64 / r.den as f64)
    }

    /// `P(Ŷ = 1 | Y = 0, A = a)`; `None` when the group has no negatives.
    pub fn fpr(&self) -> Option<f64> {
        self.fpr_ratio().map(|r| r.num as f64 / r.den as f64)
    }
}

/// Per-group counts for every group index that occurs in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub attribute: String,
    pub positive_class: usize,
    pub cells: Vec<GroupCell>,
}

pub fn group_rates(log: &PredictionLog, attribute: &str, positive_class: usize) -> Result<GroupRates> {
    if positive_class >= log.num_classes {
        return Err(Error::InvalidInput(format!(
            "positive class {positive_class} out of range for {} classes",
            log.num_classes
        )));
    }
    let column = log.attribute_column(attribute)?;
    let mut cells: BTreeMap<usize, GroupCell> = BTreeMap::new();
    for (r, &g) in log.records.iter().zip(&column) {
        let c = cells.entry(g).or_insert(GroupCell { group: g, ..Default::default() });
        let y = r.true_label == positive_class;
        let yhat = r.predicted_label == positive_class;
        c.n += 1;
        c.predicted_positive += yhat as u64;
        if y {
            c.actual_positive += 1;
            c.true_positive += yhat as u64;
        } else {
            c.actual_negative += 1;
            c.false_positive += yhat as u64;
        }
    }
    Ok(GroupRates { attribute: attribute.to_string(), positive_class, cells: cells.into_values().collect() })
}

impl GroupRates {
    fn defined(&self, f: impl Fn(&GroupCell) -> Option<Ratio>) -> (Vec<Ratio>, Vec<usize>) {
        self.cells.iter().filter_map(|c| f(c).map(|r| (r, c.group))).unzip()
    }

    /// DPD and the groups it was computed over.
    pub fn dpd(&self) -> Result<(f64, Vec<usize>)> {
        let (rates, groups) = self.defined(GroupCell::positive_ratio);
        let v = spread(&rates).ok_or_else(|| {
            Error::Undefined(format!("DPD for `{}` needs at least 2 non-empty groups", self.attribute))
        })?;
        Ok((v, groups))
    }

    pub fn eod(&self) -> Result<EqualizedOdds> {
        let (tprs, tpr_groups) = self.defined(GroupCell::tpr_ratio);
        let (fprs, fpr_groups) = self.defined(GroupCell::fpr_ratio);
        let undefined =
            |what: &str| Error::Undefined(format!("EOD for `{}` needs at least 2 groups with {what}", self.attribute));
        let tpr_diff = spread(&tprs).ok_or_else(|| undefined("positives"))?;
        let fpr_diff = spread(&fprs).ok_or_else(|| undefined("negatives"))?;
        Ok(EqualizedOdds { tpr_diff, fpr_diff, eod: tpr_diff.max(fpr_diff), tpr_groups, fpr_groups })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizedOdds {
    pub tpr_diff: f64,
    pub fpr_diff: f64,
    pub eod: f64,
    pub tpr_groups: Vec<usize>,
    pub fpr_groups: Vec<usize>,
}

/// Binary DPD with `positive_class` as the positive outcome.
pub fn dpd(log: &PredictionLog, attribute: &str, positive_class: usize) -> Result<f64> {
    group_rates(log, attribute, positive_class)?.dpd().map(|(v, _)| v)
}

/// Binary EOD with `positive_class` as the positive outcome.
pub fn eod(log: &PredictionLog, attribute: &str, positive_class: usize) -> Result<EqualizedOdds> {
    group_rates(log, attribute, positive_class)?.eod()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FairnessMetric {
    Dpd,
    Eod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFairness {
    pub class: usize,
    pub value: f64,
    /// Set for EOD only.
    pub tpr_diff: Option<f64>,
    pub fpr_diff: Option<f64>,
    pub groups_used: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub metric: FairnessMetric,
    /// Unweighted mean of the per-class values.
    pub value: f64,
    pub per_class: Vec<ClassFairness>,
}

/// One-vs-rest aggregation: the metric is computed with each class in turn as
/// the positive outcome (`[y = c]`, `[ŷ = c]`) and averaged over classes.
pub fn multiclass_fairness(log: &PredictionLog, attribute: &str, metric: FairnessMetric) -> Result<FairnessReport> {
    if log.num_classes < 2 {
        return Err(Error::InvalidInput("fairness needs at least 2 classes".into()));
    }
    let per_class = (0..log.num_classes)
        .map(|class| {
            let rates = group_rates(log, attribute, class)?;
            let at_class = |e: Error| match e {
                Error::Undefined(m) => Error::Undefined(format!("class {class}: {m}")),
                other => other,
            };
            Ok(match metric {
                FairnessMetric::Dpd => {
                    let (value, groups_used) = rates.dpd().map_err(at_class)?;
                    ClassFairness { class, value, tpr_diff: None, fpr_diff: None, groups_used }
                }
                FairnessMetric::Eod => {
                    let e = rates.eod().map_err(at_class)?;
                    let mut groups_used = e.tpr_groups.clone();
                    groups_used.retain(|g| e.fpr_groups.contains(g));
                    ClassFairness {
                        class,
                        value: e.eod,
                        tpr_diff: Some(e.tpr_diff),
                        fpr_diff: Some(e.fpr_diff),
                        groups_used,
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = per_class.iter().map(|c| c.value).sum::<f64>() / per_class.len() as f64;
    Ok(FairnessReport { attribute: attribute.to_string(), metric, value, per_class })
}

/// All runs of one model kind (and temperature, for distilled students).
#[derive(Debug, Clone, Copy)]
pub struct SweepEntry<'a> {
    pub kind: ModelKind,
    pub temperature: Option<f64>,
    pub logs: &'a [PredictionLog],
}

/// Mean and sample std over runs, stored as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRow {
    pub model: ModelKind,
    pub temperature: Option<f64>,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub eod_mean: f64,
    pub eod_std: f64,
    pub dpd_mean: f64,
    pub dpd_std: f64,
}

fn accuracy(log: &PredictionLog) -> f64 {
    log.records.iter().filter(|r| r.true_label == r.predicted_label).count() as f64 / log.records.len() as f64
}

/// Multiclass DPD/EOD per run, summarized per entry. Teacher and NDS baseline
/// entries are required.
pub fn fairness_sweep(entries: &[SweepEntry<'_>], attribute: &str) -> Result<Vec<FairnessRow>> {
    for baseline in [ModelKind::Teacher, ModelKind::Nds] {
        if !entries.iter().any(|e| e.kind == baseline && !e.logs.is_empty()) {
            return Err(Error::MissingArtifacts(vec![format!("{} baseline logs", baseline.label(None))]));
        }
    }
    entries
        .iter()
        .map(|e| {
            if e.logs.is_empty() {
                return Err(Error::MissingArtifacts(vec![format!("{} logs", e.kind.label(e.temperature))]));
            }
            let acc: Vec<f64> = e.logs.iter().map(accuracy).collect();
            let eod = e
                .logs
                .iter()
                .map(|l| multiclass_fairness(l, attribute, FairnessMetric::Eod).map(|r| r.value))
                .collect::<Result<Vec<_>>>()?;
            let dpd = e
                .logs
                .iter()
                .map(|l| multiclass_fairness(l, attribute, FairnessMetric::Dpd).map(|r| r.value))
                .collect::<Result<Vec<_>>>()?;
            Ok(FairnessRow {
                model: e.kind,
                temperature: e.temperature,
                test_acc_mean: mean(&acc),
                test_acc_std: sample_std(&acc),
                eod_mean: mean(&eod),
                eod_std: sample_std(&eod),
                dpd_mean: mean(&dpd),
                dpd_std: sample_std(&dpd),
            })
        })
        .collect()
}

/// `model,temperature,test_acc_mean,test_acc_std,eod_mean,eod_std,dpd_mean,dpd_std`
/// with every value in percent, 2 decimals. Baselines leave `temperature` empty.
pub fn fairness_table_csv(rows: &[FairnessRow]) -> String {
    let mut out = String::from("model,temperature,test_acc_mean,test_acc_std,eod_mean,eod_std,dpd_mean,dpd_std\n");
    for r in rows {
        let t = r.temperature.map(|t| t.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{t}", r.model.label(None));
        for v in [r.test_acc_mean, r.test_acc_std, r.eod_mean, r.eod_std, r.dpd_mean, r.dpd_std] {
            let _ = write!(out, ",{:.2}", 100.0 * v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionRecord;

    /// Rows of (true, predicted, group) with a single attribute `g`.
    fn log(rows: &[(usize, usize, usize)], k: usize) -> PredictionLog {
        PredictionLog {
            num_classes: k,
            attribute_names: vec!["g".into()],
            records: rows
                .iter()
                .enumerate()
                .map(|(i, &(y, p, g))| PredictionRecord {
                    example_id: i as u64,
                    true_label: y,
                    predicted_label: p,
                    attributes: vec![g],
                })
                .collect(),
            meta: BTreeMap::new(),
        }
    }

    /// Binary log from target per-group rates over `n` rows per group.
    fn with_positive_rates(rates: &[(usize, usize)]) -> PredictionLog {
        let mut rows = Vec::new();
        for (g, &(pos, n)) in rates.iter().enumerate() {
            for i in 0..n {
                rows.push((0, usize::from(i < pos), g));
            }
        }
        log(&rows, 2)
    }

    #[test]
    fn all_positive_predictions() {
        let l = log(&[(1, 1, 0), (0, 1, 0), (1, 1, 1), (1, 1, 1)], 2);
        let r = group_rates(&l, "g", 1).unwrap();
        assert!(r.cells.iter().all(|c| c.positive_rate() == Some(1.0)));
        assert_eq!(r.cells[0].fpr(), Some(1.0));
        assert_eq!(r.cells[1].fpr(), None);
    }

    #[test]
    fn tpr_undefined_without_positives() {
        let l = log(&[(0, 1, 0), (0, 0, 0), (1, 1, 1), (0, 0, 1)], 2);
        let r = group_rates(&l, "g", 1).unwrap();
        assert_eq!(r.cells[0].tpr(), None);
        assert_eq!(r.cells[1].tpr(), Some(1.0));
        assert_eq!(r.cells[0].fpr(), Some(0.5));
        assert!(matches!(r.eod(), Err(Error::Undefined(_))));
    }

    #[test]
    fn eight_row_hand_count() {
        // group 0: (1,1) (1,0) (0,1) (0,0); group 1: (1,1) (1,1) (0,0) (0,1)
        let l = log(&[(1, 1, 0), (1, 0, 0), (0, 1, 0), (0, 0, 0), (1, 1, 1), (1, 1, 1), (0, 0, 1), (0, 1, 1)], 2);
        let r = group_rates(&l, "g", 1).unwrap();
        assert_eq!(r.cells[0].positive_rate(), Some(0.5));
        assert_eq!(r.cells[0].tpr(), Some(0.5));
        assert_eq!(r.cells[0].fpr(), Some(0.5));
        assert_eq!(r.cells[1].positive_rate(), Some(0.75));
        assert_eq!(r.cells[1].tpr(), Some(1.0));
        assert_eq!(r.cells[1].fpr(), Some(0.5));
        assert_eq!(dpd(&l, "g", 1).unwrap(), 0.25);
        let e = eod(&l, "g", 1).unwrap();
        assert_eq!((e.tpr_diff, e.fpr_diff, e.eod), (0.5, 0.0, 0.5));
    }

    #[test]
    fn dpd_examples() {
        assert_eq!(dpd(&with_positive_rates(&[(3, 10), (3, 10)]), "g", 1).unwrap(), 0.0);
        assert!((dpd(&with_positive_rates(&[(7, 10), (4, 10)]), "g", 1).unwrap() - 0.3).abs() < 1e-15);
        assert!((dpd(&with_positive_rates(&[(2, 10), (5, 10), (9, 10)]), "g", 1).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(dpd(&with_positive_rates(&[(2, 10)]), "g", 1), Err(Error::Undefined(_))));
        assert!(dpd(&with_positive_rates(&[(2, 10)]), "missing", 1).is_err());
    }

    /// Per group: positives with `tp` of `np` predicted positive, negatives
    /// with `fp` of `nn` predicted positive.
    fn with_odds(cells: &[(usize, usize, usize, usize)]) -> PredictionLog {
        let mut rows = Vec::new();
        for (g, &(tp, np, fp, nn)) in cells.iter().enumerate() {
            rows.extend((0..np).map(|i| (1, usize::from(i < tp), g)));
            rows.extend((0..nn).map(|i| (0, usize::from(i < fp), g)));
        }
        log(&rows, 2)
    }

    #[test]
    fn eod_examples() {
        let e = eod(&with_odds(&[(9, 10, 2, 10), (8, 10, 1, 10)]), "g", 1).unwrap();
        assert!((e.eod - 0.1).abs() < 1e-15);
        let e = eod(&with_odds(&[(5, 10, 3, 20), (5, 10, 3, 20)]), "g", 1).unwrap();
        assert_eq!(e.eod, 0.0);
        let e = eod(&with_odds(&[(4, 5, 6, 20), (4, 5, 1, 20)]), "g", 1).unwrap();
        assert_eq!(e.tpr_diff, 0.0);
        assert!((e.eod - 0.25).abs() < 1e-15);
    }

    #[test]
    fn binary_complement_identity() {
        let l = log(&[(1, 1, 0), (0, 1, 0), (1, 0, 0), (0, 0, 1), (1, 1, 1), (0, 1, 2), (1, 0, 2)], 2);
        let binary = dpd(&l, "g", 1).unwrap();
        let multi = multiclass_fairness(&l, "g", FairnessMetric::Dpd).unwrap();
        assert_eq!(multi.per_class[0].value, multi.per_class[1].value);
        assert_eq!(multi.value, binary);
    }

    #[test]
    fn perfect_balanced_classifier_has_zero_dpd() {
        let rows: Vec<_> = (0..24).map(|i| (i % 3, i % 3, (i / 3) % 2)).collect();
        let r = multiclass_fairness(&log(&rows, 3), "g", FairnessMetric::Dpd).unwrap();
        assert_eq!(r.value, 0.0);
        let r = multiclass_fairness(&log(&rows, 3), "g", FairnessMetric::Eod).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn multiclass_failure_names_the_class() {
        // Class 2 never occurs, so its TPR is undefined everywhere.
        let l = log(&[(0, 0, 0), (1, 1, 0), (0, 1, 1), (1, 0, 1)], 3);
        let err = multiclass_fairness(&l, "g", FairnessMetric::Eod).unwrap_err().to_string();
        assert!(err.contains("class 2"), "{err}");
    }

    #[test]
    fn sweep_rows_and_csv() {
        let l = log(&[(1, 1, 0), (0, 1, 0), (1, 0, 0), (0, 0, 1), (1, 1, 1), (0, 0, 1)], 2);
        let one = std::slice::from_ref(&l);
        let entries = [
            SweepEntry { kind: ModelKind::Teacher, temperature: None, logs: one },
            SweepEntry { kind: ModelKind::Nds, temperature: None, logs: one },
            SweepEntry { kind: ModelKind::Ds, temperature: Some(2.0), logs: one },
            SweepEntry { kind: ModelKind::Ds, temperature: Some(3.0), logs: one },
        ];
        let rows = fairness_sweep(&entries, "g").unwrap();
        assert!(rows.iter().all(|r| r.dpd_std == 0.0 && r.eod_std == 0.0));
        assert_eq!(rows[2].dpd_mean, rows[3].dpd_mean);
        let csv = fairness_table_csv(&rows);
        assert!(csv.lines().nth(3).unwrap().starts_with("ds,2,66.67,0.00,"), "{csv}");
        assert!(fairness_sweep(&entries[1..], "g").is_err());
    }
}
