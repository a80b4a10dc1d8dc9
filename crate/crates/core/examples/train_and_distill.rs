//! Train a teacher, a student from scratch and a distilled student on the same
//! split and compare test accuracy.
//!
//! ```text
//! cargo run --release --example train_and_distill
//! ```

use std::collections::BTreeMap;

use kdfair::data::{generate_trifeature, split, GenerationConfig};
use kdfair::distill::{
    distill, mean_kl_to_teacher, prediction_log, train_student_scratch, train_teacher, ExperimentPlan, ModelKind,
};
use kdfair::nn::{ModelParams, TrainConfig};

fn accuracy(model: &ModelParams, data: &kdfair::data::Dataset) -> kdfair::Result<f64> {
    let log = prediction_log(model, data, BTreeMap::new())?;
    Ok(log.records.iter().filter(|r| r.true_label == r.predicted_label).count() as f64 / log.records.len() as f64)
}

fn main() -> kdfair::Result<()> {
    let config = GenerationConfig { samples_per_cell: 20, ..Default::default() };
    let (train, test) = split(&generate_trifeature(&config, 7)?, 0.75, 11)?;
    println!("train {} / test {}", train.len(), test.len());

    let base = TrainConfig { epochs: 20, batch_size: 32, base_lr: 0.05, lr_drop_epochs: vec![10, 16], ..Default::default() };
    let plan = ExperimentPlan {
        teacher: base.clone(),
        student: TrainConfig { t_squared_scaling: true, cache_teacher_targets: true, ..base },
        ..Default::default()
    };

    let teacher = train_teacher(&train, plan.architecture(ModelKind::Teacher), &plan.config_for(ModelKind::Teacher, None, 1)?)?;
    let nds = train_student_scratch(&train, plan.architecture(ModelKind::Nds), &plan.config_for(ModelKind::Nds, None, 1)?)?;
    println!("teacher {:.2}%  ({} parameters)", 100.0 * accuracy(&teacher, &test)?, teacher.num_parameters());
    println!("NDS     {:.2}%  ({} parameters)", 100.0 * accuracy(&nds, &test)?, nds.num_parameters());

    for t in [1.0, 5.0, 20.0] {
        let cfg = plan.config_for(ModelKind::Ds, Some(t), 1)?;
        let ds = distill(&teacher, &train, plan.architecture(ModelKind::Ds), &cfg)?;
        let kl = mean_kl_to_teacher(&ds, &teacher, &test, t)?;
        println!("DS T={t:<4} {:.2}%  KL to teacher at T {kl:.4}", 100.0 * accuracy(&ds, &test)?);
    }
    Ok(())
}
