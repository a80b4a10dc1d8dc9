//! Teacher, non-distilled student (NDS) and distilled student (DS) training,
//! seeded run groups, and prediction logs on the test split.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bias::class_accuracies;
use crate::data::{Dataset, PredictionLog, PredictionRecord};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, sgd_step, softmax_into, Architecture, LossMode, LossSpec, ModelParams, Scratch, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Teacher,
    Nds,
    Ds,
}

impl ModelKind {
    /// Short name used in file names and report rows: `teacher`, `nds`, `ds_T5`.
    pub fn label(self, temperature: Option<f64>) -> String {
        match (self, temperature) {
            (ModelKind::Ds, Some(t)) => format!("ds_T{t}"),
            (ModelKind::Teacher, _) => "teacher".into(),
            (ModelKind::Nds, _) => "nds".into(),
            (ModelKind::Ds, None) => "ds".into(),
        }
    }
}

fn default_temperatures() -> Vec<f64> {
    let mut t: Vec<f64> = (1..=10).map(f64::from).collect();
    t.extend([20.0, 30.0, 40.0]);
    t
}

fn default_alpha() -> f64 {
    0.8
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

/// What to train. Teacher run `k` and every student run `k` share `seeds[k]`,
/// and DS run `k` distills from teacher run `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "Architecture::teacher_default")]
    pub teacher_architecture: Architecture,
    #[serde(default = "Architecture::student_default")]
    pub student_architecture: Architecture,
    /// Must be `hard_only`; `seed` is replaced per run.
    pub teacher: TrainConfig,
    /// Must be `hard_only`; DS runs switch to `distill` with the plan's
    /// temperature and alpha. `seed` is replaced per run.
    pub student: TrainConfig,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            teacher_architecture: Architecture::teacher_default(),
            student_architecture: Architecture::student_default(),
            teacher: TrainConfig::default(),
            student: TrainConfig::default(),
            temperatures: default_temperatures(),
            alpha: default_alpha(),
            seeds: default_seeds(),
        }
    }
}

impl ExperimentPlan {
    /// Validates the plan; `prefix` is prepended to field names in errors.
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        let field = |f: &str| format!("{prefix}{f}");
        let with_prefix = |e: Error, section: &str| match e {
            Error::Config { field: f, reason } => Error::Config { field: format!("{prefix}{section}.{f}"), reason },
            other => other,
        };
        self.teacher.validate().map_err(|e| with_prefix(e, "teacher"))?;
        self.student.validate().map_err(|e| with_prefix(e, "student"))?;
        if self.teacher.loss_mode != LossMode::HardOnly {
            return Err(Error::config(field("teacher.loss_mode"), "must be hard_only"));
        }
        if self.student.loss_mode != LossMode::HardOnly {
            return Err(Error::config(
                field("student.loss_mode"),
                "must be hard_only; distillation settings come from the plan",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config(field("seeds"), "must not be empty"));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(Error::config(field("seeds"), "must be distinct"));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(**t >= 1.0 && t.is_finite())) {
            return Err(Error::config(field("temperatures"), format!("every temperature must be >= 1 (got {t})")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(field("alpha"), "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("")
    }

    /// Training configuration for run `seed` of the given kind.
    pub fn config_for(&self, kind: ModelKind, temperature: Option<f64>, seed: u64) -> Result<TrainConfig> {
        let mut cfg = match kind {
            ModelKind::Teacher => self.teacher.clone(),
            ModelKind::Nds | ModelKind::Ds => self.student.clone(),
        };
        cfg.seed = seed;
        if kind == ModelKind::Ds {
            let t = temperature.ok_or_else(|| Error::InvalidInput("distilled runs need a temperature".into()))?;
            cfg.loss_mode = LossMode::Distill;
            cfg.temperature = t;
            cfg.alpha = self.alpha;
        }
        Ok(cfg)
    }

    pub fn architecture(&self, kind: ModelKind) -> &Architecture {
        match kind {
            ModelKind::Teacher => &self.teacher_architecture,
            ModelKind::Nds | ModelKind::Ds => &self.student_architecture,
        }
    }
}

/// Epoch-by-epoch trainer. Parameters are initialized from `cfg.seed`, and the
/// same generator then drives the per-epoch shuffles, so distillation adds no
/// random draws compared with hard-label training.
pub struct Trainer<'a> {
    params: ModelParams,
    cfg: TrainConfig,
    train: &'a Dataset,
    teacher: Option<(&'a ModelParams, Scratch)>,
    cached_targets: Option<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        arch: &Architecture,
        train: &'a Dataset,
        cfg: &TrainConfig,
        teacher: Option<&'a ModelParams>,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        let teacher = match cfg.loss_mode {
            LossMode::HardOnly => None,
            LossMode::Distill => {
                let t = teacher.ok_or_else(|| Error::InvalidInput("distillation needs a teacher".into()))?;
                if t.num_classes() != train.num_classes {
                    return Err(Error::Shape(format!(
                        "teacher predicts {} classes but the dataset has {}",
                        t.num_classes(),
                        train.num_classes
                    )));
                }
                if t.input != train.image {
                    return Err(Error::Shape("teacher input shape does not match the dataset".into()));
                }
                Some((t, Scratch::new(t)))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = ModelParams::init(arch, train.image, train.num_classes, &mut rng)?;
        let mut trainer = Self {
            params,
            cfg: cfg.clone(),
            train,
            teacher,
            cached_targets: None,
            rng,
            order: (0..train.len()).collect(),
            epoch: 0,
        };
        if cfg.cache_teacher_targets {
            if let Some((t, scratch)) = trainer.teacher.as_mut() {
                let k = train.num_classes;
                let targets = train
                    .examples
                    .iter()
                    .map(|e| {
                        let mut q = vec![0.0; k];
                        teacher_targets(t, scratch, &e.pixels, cfg.temperature, &mut q);
                        q
                    })
                    .collect();
                trainer.cached_targets = Some(targets);
            }
        }
        Ok(trainer)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// Runs one pass over the shuffled training set; returns the mean batch loss.
    pub fn step_epoch(&mut self) -> Result<f64> {
        let epoch = self.epoch;
        let diverged = |detail: String| Error::Diverged { seed: self.cfg.seed, epoch, detail };
        self.order.shuffle(&mut self.rng);
        let k = self.train.num_classes;
        let mut targets: Vec<Vec<f64>> = Vec::with_capacity(self.cfg.batch_size);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for batch in self.order.chunks(self.cfg.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| self.train.examples[i].pixels.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| self.train.examples[i].label).collect();
            let spec = match self.teacher.as_mut() {
                None => LossSpec::Hard,
                Some((teacher, scratch)) => {
                    targets.clear();
                    for (&i, x) in batch.iter().zip(&inputs) {
                        match &self.cached_targets {
                            Some(cache) => targets.push(cache[i].clone()),
                            None => {
                                let mut q = vec![0.0; k];
                                teacher_targets(teacher, scratch, x, self.cfg.temperature, &mut q);
                                targets.push(q);
                            }
                        }
                    }
                    LossSpec::Distill {
                        teacher_probs: &targets,
                        temperature: self.cfg.temperature,
                        alpha: self.cfg.alpha,
                        t_squared_scaling: self.cfg.t_squared_scaling,
                    }
                }
            };
            let (loss, grads) = self.params.backward(&inputs, &labels, &spec)?;
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss {loss}")));
            }
            sgd_step(&mut self.params, &grads, epoch, &self.cfg)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        if !self.params.is_finite() {
            return Err(diverged("non-finite parameters".into()));
        }
        self.epoch += 1;
        Ok(loss_sum / seen as f64)
    }

    /// Trains for the remaining configured epochs.
    pub fn run(mut self) -> Result<ModelParams> {
        while self.epoch < self.cfg.epochs {
            let loss = self.step_epoch()?;
            debug!("seed {} epoch {}: loss {loss:.5}", self.cfg.seed, self.epoch);
        }
        Ok(self.params)
    }
}

fn teacher_targets(teacher: &ModelParams, scratch: &mut Scratch, x: &[f64], temperature: f64, out: &mut [f64]) {
    teacher.forward_into(x, scratch);
    softmax_into(scratch.logits(), temperature, out);
}

pub fn train_model(
    arch: &Architecture,
    train: &Dataset,
    cfg: &TrainConfig,
    teacher: Option<&ModelParams>,
) -> Result<ModelParams> {
    Trainer::new(arch, train, cfg, teacher)?.run()
}

fn require_hard(cfg: &TrainConfig) -> Result<()> {
    if cfg.loss_mode != LossMode::HardOnly {
        return Err(Error::config("loss_mode", "must be hard_only"));
    }
    Ok(())
}

pub fn train_teacher(train: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<ModelParams> {
    require_hard(cfg)?;
    train_model(arch, train, cfg, None)
}

pub fn train_student_scratch(train: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<ModelParams> {
    require_hard(cfg)?;
    train_model(arch, train, cfg, None)
}

/// Trains a student against `softmax(teacher_logits / T)` and the hard labels.
pub fn distill(teacher: &ModelParams, train: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<ModelParams> {
    if cfg.loss_mode != LossMode::Distill {
        return Err(Error::config("loss_mode", "must be distill"));
    }
    train_model(arch, train, cfg, Some(teacher))
}

/// Mean `KL(softmax(teacher / T) || softmax(student / T))` over a dataset.
pub fn mean_kl_to_teacher(student: &ModelParams, teacher: &ModelParams, data: &Dataset, temperature: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let k = data.num_classes;
    let (mut ss, mut ts) = (Scratch::new(student), Scratch::new(teacher));
    let (mut p, mut q) = (vec![0.0; k], vec![0.0; k]);
    let mut total = 0.0;
    for e in &data.examples {
        teacher_targets(teacher, &mut ts, &e.pixels, temperature, &mut q);
        teacher_targets(student, &mut ss, &e.pixels, temperature, &mut p);
        total += q.iter().zip(&p).filter(|(qi, _)| **qi > 0.0).map(|(qi, pi)| qi * (qi / pi).ln()).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Predictions of `params` on every example of `data`, in dataset order.
pub fn prediction_log(params: &ModelParams, data: &Dataset, meta: BTreeMap<String, String>) -> Result<PredictionLog> {
    if params.num_classes() != data.num_classes || params.input != data.image {
        return Err(Error::Shape("model does not match the dataset".into()));
    }
    let mut scratch = Scratch::new(params);
    let records = data
        .examples
        .iter()
        .map(|e| {
            params.forward_into(&e.pixels, &mut scratch);
            PredictionRecord {
                example_id: e.id,
                true_label: e.label,
                predicted_label: argmax(scratch.logits()),
                attributes: e.attributes.clone(),
            }
        })
        .collect();
    Ok(PredictionLog {
        num_classes: data.num_classes,
        attribute_names: data.attributes.iter().map(|a| a.name.clone()).collect(),
        records,
        meta,
    })
}

/// Per-run accuracies of one model kind. Row `r` of `class_acc` and
/// `overall_acc[r]` belong to `seeds[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunGroup {
    pub model_kind: ModelKind,
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    pub seeds: Vec<u64>,
    pub overall_acc: Vec<f64>,
    pub class_acc: Vec<Vec<f64>>,
}

impl RunGroup {
    pub fn from_logs(
        model_kind: ModelKind,
        temperature: Option<f64>,
        alpha: Option<f64>,
        seeds: Vec<u64>,
        logs: &[PredictionLog],
    ) -> Result<Self> {
        if logs.len() != seeds.len() {
            return Err(Error::InvalidInput(format!("{} logs for {} seeds", logs.len(), seeds.len())));
        }
        let class_acc = logs.iter().map(class_accuracies).collect::<Result<Vec<_>>>()?;
        let overall_acc = logs
            .iter()
            .map(|l| {
                let correct = l.records.iter().filter(|r| r.true_label == r.predicted_label).count();
                correct as f64 / l.records.len() as f64
            })
            .collect();
        Ok(Self { model_kind, temperature, alpha, seeds, overall_acc, class_acc })
    }

    pub fn label(&self) -> String {
        self.model_kind.label(self.temperature)
    }

    pub fn runs(&self) -> usize {
        self.overall_acc.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_acc.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.runs();
        if self.seeds.len() != r || self.class_acc.len() != r {
            return Err(Error::Shape("run group rows disagree".into()));
        }
        let k = self.num_classes();
        if self.class_acc.iter().any(|row| row.len() != k) {
            return Err(Error::Shape("run group class columns disagree".into()));
        }
        if self.overall_acc.iter().chain(self.class_acc.iter().flatten()).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("accuracy outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Output of [`run_group`]: accuracies, one test-split log per seed, and the
/// trained models (same order as the plan's seeds).
#[derive(Debug, Clone)]
pub struct GroupOutcome {
    pub group: RunGroup,
    pub logs: Vec<PredictionLog>,
    pub models: Vec<ModelParams>,
}

/// Trains one model per plan seed and evaluates each on `test`.
///
/// `teachers` is required for [`ModelKind::Ds`] and must hold one trained
/// teacher per seed. Up to `jobs` runs train concurrently.
pub fn run_group(
    plan: &ExperimentPlan,
    kind: ModelKind,
    temperature: Option<f64>,
    train: &Dataset,
    test: &Dataset,
    teachers: Option<&[ModelParams]>,
    jobs: usize,
) -> Result<GroupOutcome> {
    plan.validate()?;
    let teachers = match kind {
        ModelKind::Ds => {
            let t = teachers.ok_or_else(|| Error::InvalidInput("distilled runs need trained teachers".into()))?;
            if t.len() != plan.seeds.len() {
                return Err(Error::InvalidInput(format!("{} teachers for {} seeds", t.len(), plan.seeds.len())));
            }
            Some(t)
        }
        _ => None,
    };
    let temperature = if kind == ModelKind::Ds { temperature } else { None };
    let label = kind.label(temperature);
    let runs: Vec<(usize, u64)> = plan.seeds.iter().copied().enumerate().collect();
    let results = parallel_map(&runs, jobs, |&(k, seed)| {
        let cfg = plan.config_for(kind, temperature, seed)?;
        let teacher = teachers.map(|t| &t[k]);
        info!("training {label} seed {seed}");
        let model = train_model(plan.architecture(kind), train, &cfg, teacher).map_err(|e| match e {
            e @ Error::Diverged { .. } => e,
            other => Error::InvalidInput(format!("{label} seed {seed}: {other}")),
        })?;
        let meta = BTreeMap::from([
            ("model".to_string(), label.clone()),
            ("seed".to_string(), seed.to_string()),
            ("split".to_string(), "test".to_string()),
        ]);
        let log = prediction_log(&model, test, meta)?;
        Ok((model, log))
    })?;
    let (models, logs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let alpha = (kind == ModelKind::Ds).then_some(plan.alpha);
    let group = RunGroup::from_logs(kind, temperature, alpha, plan.seeds.clone(), &logs)?;
    Ok(GroupOutcome { group, logs, models })
}

/// Maps `f` over `items` on up to `jobs` threads, preserving order. The first
/// failing item (in input order) determines the returned error.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = jobs.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}
