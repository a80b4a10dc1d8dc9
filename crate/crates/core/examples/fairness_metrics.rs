//! Demographic parity and equalized odds on a hand-written prediction log.
//!
//! ```text
//! cargo run --example fairness_metrics
//! ```

use kdfair::data::parse_prediction_log;
use kdfair::fairness::{group_rates, multiclass_fairness, FairnessMetric};

const LOG: &str = "\
example_id,true_label,predicted_label,attr_group
0,1,1,0
1,1,1,0
2,0,1,0
3,0,0,0
4,1,1,1
5,1,0,1
6,0,0,1
7,0,0,1
8,2,2,0
9,2,0,1
";

fn main() -> kdfair::Result<()> {
    let log = parse_prediction_log(LOG, 3, "inline")?;

    let rates = group_rates(&log, "group", 1)?;
    for c in &rates.cells {
        println!(
            "group {}: P(pred=1) {:?}  TPR {:?}  FPR {:?}",
            c.group,
            c.positive_rate(),
            c.tpr(),
            c.fpr()
        );
    }
    let (dpd, _) = rates.dpd()?;
    let eod = rates.eod()?;
    println!("class 1 as positive: DPD {dpd:.4}, EOD {:.4} (TPR gap {:.4}, FPR gap {:.4})\n", eod.eod, eod.tpr_diff, eod.fpr_diff);

    for metric in [FairnessMetric::Dpd, FairnessMetric::Eod] {
        let report = multiclass_fairness(&log, "group", metric)?;
        let per: Vec<String> = report.per_class.iter().map(|c| format!("{:.3}", c.value)).collect();
        println!("{metric:?}: one-vs-rest [{}] -> mean {:.4}", per.join(", "), report.value);
    }
    Ok(())
}
