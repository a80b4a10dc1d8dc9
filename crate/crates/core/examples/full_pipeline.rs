//! All four stages (generate, run, audit, report) through the library API.
//!
//! ```text
//! cargo run --release --example full_pipeline -- crates/core/manifests/desk_smoke.json /tmp/smoke
//! ```

use std::path::PathBuf;

use kdfair::pipeline::{cmd_audit, cmd_generate, cmd_report, cmd_run, ExperimentManifest};

fn main() -> kdfair::Result<()> {
    let mut args = std::env::args().skip(1);
    let manifest_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("manifests/desk_smoke.json"));
    let manifest = ExperimentManifest::load(&manifest_path)?;
    let out = manifest.resolve_out(args.next().map(PathBuf::from).as_deref());
    println!("manifest {} ({})", manifest.name, &manifest.hash()[..12]);

    let data = cmd_generate(&manifest, &out)?;
    println!("generated {} examples", data.len());
    let index = cmd_run(&manifest, &out, 1)?;
    println!("trained {} seeds for teacher, NDS and {} temperatures", index.seeds.len(), index.temperatures.len());
    let audit = cmd_audit(&manifest, &out)?;
    for b in &audit.baselines {
        println!("{:>8}: {:.2}%", b.model, 100.0 * b.overall_acc_mean);
    }
    for t in &audit.temperatures {
        println!("   T={:<3}: {:.2}%  #SC {}  #TC {}", t.temperature, 100.0 * t.overall_acc_mean, t.num_sc, t.num_tc);
    }
    let files = cmd_report(&out)?;
    println!("figure data: {}", files.bias.display());
    Ok(())
}
