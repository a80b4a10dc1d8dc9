//! Class-wise accuracy, prediction disagreement matrices, and significance
//! tests on per-run normalized class accuracies.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::PredictionLog;
use crate::distill::RunGroup;
use crate::error::{Error, Result};
use crate::stats::{welch_t_test, TTestResult};

/// Fraction of each class's instances predicted correctly.
pub fn class_accuracies(log: &PredictionLog) -> Result<Vec<f64>> {
    let k = log.num_classes;
    let mut total = vec![0usize; k];
    let mut correct = vec![0usize; k];
    for r in &log.records {
        if r.true_label >= k || r.predicted_label >= k {
            return Err(Error::InvalidInput(format!("example {}: label out of range", r.example_id)));
        }
        total[r.true_label] += 1;
        if r.true_label == r.predicted_label {
            correct[r.true_label] += 1;
        }
    }
    if let Some(c) = total.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("class {c} does not occur in the log")));
    }
    Ok(correct.iter().zip(&total).map(|(&c, &n)| c as f64 / n as f64).collect())
}

/// `counts[i][j]` (i ≠ j): instances where model A predicts `i` and model B
/// predicts `j`. The diagonal is always zero. After averaging, entries are
/// mean counts over `pairs` model pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementMatrix {
    pub pair: String,
    pub counts: Vec<Vec<f64>>,
    pub pairs: usize,
}

impl DisagreementMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    /// K rows of K comma-separated values, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn disagreement_matrix(a: &PredictionLog, b: &PredictionLog, pair: &str) -> Result<DisagreementMatrix> {
    if a.num_classes != b.num_classes {
        return Err(Error::InvalidInput("logs disagree on the number of classes".into()));
    }
    if a.records.len() != b.records.len() {
        return Err(Error::InvalidInput("logs cover different example sets".into()));
    }
    let k = a.num_classes;
    let by_id: HashMap<u64, usize> = b.records.iter().map(|r| (r.example_id, r.predicted_label)).collect();
    let mut counts = vec![vec![0.0; k]; k];
    for r in &a.records {
        let pb = *by_id
            .get(&r.example_id)
            .ok_or_else(|| Error::InvalidInput(format!("example {} missing from the second log", r.example_id)))?;
        let pa = r.predicted_label;
        if pa >= k || pb >= k {
            return Err(Error::InvalidInput(format!("example {}: prediction out of range", r.example_id)));
        }
        if pa != pb {
            counts[pa][pb] += 1.0;
        }
    }
    Ok(DisagreementMatrix { pair: pair.to_string(), counts, pairs: 1 })
}

/// Element-wise mean of matrices for the same model pair.
pub fn average_matrices(ms: &[DisagreementMatrix]) -> Result<DisagreementMatrix> {
    let first = ms.first().ok_or_else(|| Error::InvalidInput("no matrices to average".into()))?;
    let k = first.num_classes();
    if let Some(m) = ms.iter().find(|m| m.num_classes() != k || m.pair != first.pair) {
        return Err(Error::InvalidInput(format!("cannot average `{}` ({}×{0}) with `{}` ({k}×{k})", m.pair, m.num_classes(), first.pair)));
    }
    let mut counts = vec![vec![0.0; k]; k];
    for m in ms {
        for (acc, row) in counts.iter_mut().zip(&m.counts) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    let n = ms.len() as f64;
    counts.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(DisagreementMatrix { pair: first.pair.clone(), counts, pairs: ms.iter().map(|m| m.pairs).sum() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignificance {
    pub class: usize,
    pub test: TTestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub threshold: f64,
    pub classes: Vec<ClassSignificance>,
    pub num_significant: usize,
}

impl SignificanceReport {
    /// `class,p_value,t,df,significant`, one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,p_value,t,df,significant\n");
        for c in &self.classes {
            out.push_str(&format!("{},{},{},{},{}\n", c.class, c.test.p, c.test.t, c.test.df, c.significant));
        }
        out
    }
}

fn normalized(group: &RunGroup, class: usize) -> Vec<f64> {
    group.class_acc.iter().zip(&group.overall_acc).map(|(row, &overall)| row[class] / overall).collect()
}

/// Welch's t-test per class on `class_acc / overall_acc`, each run normalized
/// by its own overall accuracy. A class is flagged when `p <= threshold`.
pub fn significant_classes(x: &RunGroup, y: &RunGroup, threshold: f64) -> Result<SignificanceReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config("threshold", "must lie in [0, 1]"));
    }
    x.validate()?;
    y.validate()?;
    if x.num_classes() != y.num_classes() {
        return Err(Error::InvalidInput("run groups disagree on the number of classes".into()));
    }
    if x.runs() != y.runs() || x.runs() < 2 {
        return Err(Error::InvalidInput(format!(
            "run groups need the same number of runs, at least 2 (got {} and {})",
            x.runs(),
            y.runs()
        )));
    }
    for g in [x, y] {
        if let Some(r) = g.overall_acc.iter().position(|&a| a == 0.0) {
            return Err(Error::InvalidInput(format!("{} run {r} has zero overall accuracy", g.label())));
        }
    }
    let classes = (0..x.num_classes())
        .map(|class| {
            let test = welch_t_test(&normalized(x, class), &normalized(y, class))?;
            Ok(ClassSignificance { class, significant: test.p <= threshold, test })
        })
        .collect::<Result<Vec<_>>>()?;
    let num_significant = classes.iter().filter(|c| c.significant).count();
    Ok(SignificanceReport { threshold, classes, num_significant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionRecord;
    use crate::distill::ModelKind;

    fn log(rows: &[(u64, usize, usize)], k: usize) -> PredictionLog {
        PredictionLog {
            num_classes: k,
            records: rows
                .iter()
                .map(|&(id, y, p)| PredictionRecord { example_id: id, true_label: y, predicted_label: p, attributes: vec![] })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn class_accuracy_extremes_and_hand_count() {
        let right = log(&[(0, 0, 0), (1, 1, 1), (2, 2, 2)], 3);
        assert_eq!(class_accuracies(&right).unwrap(), vec![1.0; 3]);
        let wrong = log(&[(0, 0, 1), (1, 1, 2), (2, 2, 0)], 3);
        assert_eq!(class_accuracies(&wrong).unwrap(), vec![0.0; 3]);
        let rows = [(0, 0, 0), (1, 0, 1), (2, 0, 0), (3, 1, 1), (4, 1, 1), (5, 1, 2), (6, 2, 2), (7, 2, 0), (8, 2, 1), (9, 0, 0)];
        assert_eq!(class_accuracies(&log(&rows, 3)).unwrap(), vec![0.75, 2.0 / 3.0, 1.0 / 3.0]);
        assert!(class_accuracies(&log(&[(0, 0, 0)], 2)).is_err());
    }

    #[test]
    fn disagreement_basics() {
        let a = log(&[(0, 1, 2), (1, 0, 0)], 6);
        assert_eq!(disagreement_matrix(&a, &a, "x").unwrap().total(), 0.0);
        let b = log(&[(1, 0, 0), (0, 1, 5)], 6);
        let m = disagreement_matrix(&a, &b, "a_vs_b").unwrap();
        assert_eq!(m.counts[2][5], 1.0);
        assert_eq!(m.total(), 1.0);
        let c = log(&[(0, 1, 2), (7, 0, 0)], 6);
        assert!(disagreement_matrix(&a, &c, "x").is_err());
    }

    #[test]
    fn averaging() {
        let mut m1 = DisagreementMatrix { pair: "p".into(), counts: vec![vec![0.0; 4]; 4], pairs: 1 };
        let mut m2 = m1.clone();
        m1.counts[1][3] = 2.0;
        m2.counts[1][3] = 4.0;
        let avg = average_matrices(&[m1.clone(), m2]).unwrap();
        assert_eq!(avg.counts[1][3], 3.0);
        assert_eq!(avg.pairs, 2);
        assert!((0..4).all(|i| avg.counts[i][i] == 0.0));
        assert_eq!(average_matrices(&[m1.clone()]).unwrap(), m1);
        assert!(average_matrices(&[]).is_err());
        let other = DisagreementMatrix { pair: "p".into(), counts: vec![vec![0.0; 3]; 3], pairs: 1 };
        assert!(average_matrices(&[m1, other]).is_err());
    }

    fn group(class_acc: Vec<Vec<f64>>, overall: Vec<f64>) -> RunGroup {
        RunGroup {
            model_kind: ModelKind::Nds,
            temperature: None,
            alpha: None,
            seeds: (1..=class_acc.len() as u64).collect(),
            overall_acc: overall,
            class_acc,
        }
    }

    #[test]
    fn identical_groups_flag_nothing() {
        let g = group(vec![vec![0.8, 0.6, 0.7]; 5], vec![0.7; 5]);
        let r = significant_classes(&g, &g, 0.05).unwrap();
        assert_eq!(r.num_significant, 0);
        assert!(r.classes.iter().all(|c| c.test.p == 1.0));
    }

    #[test]
    fn uniform_scaling_is_invisible() {
        let x = group(
            vec![vec![0.8, 0.6], vec![0.82, 0.58], vec![0.79, 0.63], vec![0.81, 0.61], vec![0.84, 0.57]],
            vec![0.7, 0.7, 0.71, 0.71, 0.705],
        );
        let mut y = x.clone();
        y.class_acc.iter_mut().flatten().for_each(|v| *v *= 0.5);
        y.overall_acc.iter_mut().for_each(|v| *v *= 0.5);
        assert_eq!(significant_classes(&x, &y, 0.05).unwrap().num_significant, 0);
    }

    #[test]
    fn rejects_bad_groups() {
        let g = group(vec![vec![0.5, 0.5]; 3], vec![0.5; 3]);
        let zero = group(vec![vec![0.0, 0.0]; 3], vec![0.0; 3]);
        assert!(significant_classes(&g, &zero, 0.05).is_err());
        let short = group(vec![vec![0.5, 0.5]; 2], vec![0.5; 2]);
        assert!(significant_classes(&g, &short, 0.05).is_err());
        assert!(significant_classes(&g, &g, 1.5).is_err());
    }

    #[test]
    fn report_csv() {
        let g = group(vec![vec![0.5, 0.5]; 3], vec![0.5; 3]);
        let csv = significant_classes(&g, &g, 0.05).unwrap().to_csv();
        assert_eq!(csv.lines().next(), Some("class,p_value,t,df,significant"));
        assert_eq!(csv.lines().count(), 3);
    }
}
