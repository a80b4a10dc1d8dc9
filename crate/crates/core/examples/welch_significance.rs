//! Per-class significance between two groups of runs, the test behind the
//! #SC / #TC counts.
//!
//! ```text
//! cargo run --example welch_significance
//! ```

use kdfair::bias::significant_classes;
use kdfair::distill::{ModelKind, RunGroup};
use kdfair::stats::{student_t_cdf, welch_t_test};

fn group(kind: ModelKind, temperature: Option<f64>, class_acc: Vec<Vec<f64>>) -> RunGroup {
    let overall_acc = class_acc.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let seeds = (1..=class_acc.len() as u64).collect();
    RunGroup { model_kind: kind, temperature, alpha: temperature.map(|_| 0.8), seeds, overall_acc, class_acc }
}

fn main() -> kdfair::Result<()> {
    let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0])?;
    println!("t = {}, df = {}, p = {:.4}", r.t, r.df, r.p);
    println!("F_t(2.776; 4) = {:.4}\n", student_t_cdf(2.776, 4.0)?);

    let nds = group(
        ModelKind::Nds,
        None,
        vec![
            vec![0.91, 0.72, 0.66, 0.80],
            vec![0.89, 0.70, 0.69, 0.82],
            vec![0.92, 0.74, 0.64, 0.79],
            vec![0.90, 0.71, 0.67, 0.81],
            vec![0.93, 0.73, 0.65, 0.78],
        ],
    );
    let mut shifted = nds.class_acc.clone();
    for row in &mut shifted {
        row[2] += 0.08;
    }
    let ds = group(ModelKind::Ds, Some(5.0), shifted);

    let report = significant_classes(&nds, &ds, 0.05)?;
    for c in &report.classes {
        println!("class {}  t {:>7.3}  p {:.4}  {}", c.class, c.test.t, c.test.p, if c.significant { "*" } else { "" });
    }
    println!("#SC = {}", report.num_significant);
    Ok(())
}
