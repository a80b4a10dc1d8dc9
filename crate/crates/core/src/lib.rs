//! Class-bias and group-fairness audits of knowledge distillation.
//!
//! A teacher network, a student trained from scratch (NDS) and students
//! distilled at a range of temperatures (DS) are trained on a synthetic
//! shape/texture/color dataset. Their test predictions are then compared class
//! by class with Welch's t-test, and scored for demographic parity and
//! equalized odds over dataset attributes.
//!
//! | module       | contents                                                        |
//! |--------------|-----------------------------------------------------------------|
//! | [`data`]     | trifeature generator, splits, dataset files, prediction logs    |
//! | [`nn`]       | temperature softmax, losses, backprop, SGD, checkpoints         |
//! | [`distill`]  | teacher / student / distilled-student training and run groups   |
//! | [`bias`]     | class accuracy, disagreement matrices, significance counts      |
//! | [`fairness`] | DPD and EOD, binary and one-vs-rest                             |
//! | [`stats`]    | incomplete beta, Student t, Welch's test, Spearman              |
//! | [`pipeline`] | manifest-driven `generate` / `run` / `audit` / `report` stages  |
//!
//! Runnable examples live in `examples/`: `generate_dataset`,
//! `softmax_temperature`, `train_and_distill`, `welch_significance`,
//! `fairness_metrics`, `audit_prediction_logs` and `full_pipeline`.

pub mod bias;
pub mod data;
pub mod distill;
pub mod error;
pub mod fairness;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
