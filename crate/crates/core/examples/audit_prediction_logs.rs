//! Audit a finished run directory: load its prediction logs, rebuild the
//! disagreement matrix between the non-distilled and a distilled student, and
//! recompute fairness for one attribute.
//!
//! ```text
//! kdfair generate --config crates/core/manifests/desk_smoke.json --out /tmp/smoke
//! kdfair run      --config crates/core/manifests/desk_smoke.json --out /tmp/smoke
//! cargo run --example audit_prediction_logs -- /tmp/smoke ds_T5 age_proxy
//! ```

use std::path::PathBuf;

use kdfair::bias::{average_matrices, class_accuracies, disagreement_matrix};
use kdfair::data::load_prediction_log;
use kdfair::fairness::{multiclass_fairness, FairnessMetric};
use kdfair::pipeline::RunIndex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or("usage: audit_prediction_logs <run dir> [ds label] [attribute]")?);
    let label = args.next().unwrap_or_else(|| "ds_T5".into());
    let attribute = args.next().unwrap_or_else(|| "age_proxy".into());

    let index: RunIndex = serde_json::from_str(&std::fs::read_to_string(out.join("runs/run.json"))?)?;
    let logs = |name: &str| -> kdfair::Result<Vec<_>> {
        index
            .seeds
            .iter()
            .map(|s| load_prediction_log(out.join(format!("runs/logs/{name}_seed{s}.csv")), index.num_classes))
            .collect()
    };
    let (nds, ds) = (logs("nds")?, logs(&label)?);

    let matrices = nds.iter().zip(&ds).map(|(a, b)| disagreement_matrix(a, b, "nds_vs_ds")).collect::<Result<Vec<_>, _>>()?;
    let avg = average_matrices(&matrices)?;
    println!("mean disagreement NDS vs {label} over {} seeds: {:.1} examples", avg.pairs, avg.total());
    print!("{}", avg.to_csv());

    for (name, group) in [("nds", &nds), (label.as_str(), &ds)] {
        let acc = class_accuracies(&group[0])?;
        let dpd = multiclass_fairness(&group[0], &attribute, FairnessMetric::Dpd)?;
        let eod = multiclass_fairness(&group[0], &attribute, FairnessMetric::Eod)?;
        println!("{name:>8} seed {}: class acc {acc:.3?}  DPD {:.4}  EOD {:.4}", index.seeds[0], dpd.value, eod.value);
    }
    Ok(())
}
