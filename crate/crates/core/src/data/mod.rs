//! Attribute-labelled image datasets: generation, label balancing, stratified
//! splits, on-disk export, and prediction logs.

mod export;
mod generate;
mod log;

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use export::{read_dataset, write_dataset, DatasetMeta};
pub use generate::{generate_trifeature, BaseAttribute, GenerationConfig, LabelCorrelation, HUES, SHAPES, TEXTURES};
pub use log::{load_prediction_log, parse_prediction_log, PredictionLog, PredictionRecord};

use crate::error::{Error, Result};
use crate::nn::InputShape;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    /// Height × width × channels, values in [0, 1].
    pub pixels: Vec<f64>,
    pub label: usize,
    /// Group index per attribute, aligned with [`Dataset::attributes`].
    pub attributes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    pub attributes: Vec<AttributeSpec>,
    pub image: InputShape,
    pub generation_seed: u64,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        let mut ids = HashSet::with_capacity(self.examples.len());
        for e in &self.examples {
            if !ids.insert(e.id) {
                return Err(Error::InvalidInput(format!("duplicate example id {}", e.id)));
            }
            if e.label >= self.num_classes {
                return Err(Error::InvalidInput(format!("example {} has label {} >= {}", e.id, e.label, self.num_classes)));
            }
            if e.attributes.len() != self.attributes.len() {
                return Err(Error::InvalidInput(format!("example {} does not match the attribute schema", e.id)));
            }
            if let Some((spec, g)) = self.attributes.iter().zip(&e.attributes).find(|(s, &g)| g >= s.groups) {
                return Err(Error::InvalidInput(format!("example {}: {} group {g} out of range", e.id, spec.name)));
            }
            if e.pixels.len() != self.image.len() {
                return Err(Error::InvalidInput(format!("example {} has {} pixel values", e.id, e.pixels.len())));
            }
            if e.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidInput(format!("example {} has pixel values outside [0, 1]", e.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    fn with_examples(&self, examples: Vec<Example>) -> Self {
        Self {
            examples,
            num_classes: self.num_classes,
            attributes: self.attributes.clone(),
            image: self.image,
            generation_seed: self.generation_seed,
        }
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, e) in self.examples.iter().enumerate() {
            by_class[e.label].push(i);
        }
        by_class
    }
}

/// Randomly undersamples every class down to the size of the smallest one.
/// Survivors keep their original order and contents.
pub fn balance_by_label(d: &Dataset, seed: u64) -> Result<Dataset> {
    let by_class = d.indices_by_class();
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("class {empty} has no examples")));
    }
    let target = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; d.examples.len()];
    for members in &by_class {
        for j in sample(&mut rng, members.len(), target) {
            keep[members[j]] = true;
        }
    }
    let examples = d.examples.iter().zip(&keep).filter(|(_, &k)| k).map(|(e, _)| e.clone()).collect();
    Ok(d.with_examples(examples))
}

/// Stratified split: each class contributes `round(train_fraction * n_c)`
/// examples to the training side. Both sides keep the original order.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    split_stratified(d, train_fraction, seed, &[])
}

/// Like [`split`], but strata are the combinations of the class label and
/// the named attributes, so each side also keeps the label mix per group.
pub fn split_stratified(d: &Dataset, train_fraction: f64, seed: u64, attributes: &[String]) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    let attr_idx = attributes
        .iter()
        .map(|a| d.attribute_index(a).ok_or_else(|| Error::InvalidInput(format!("unknown attribute `{a}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut strata: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, e) in d.examples.iter().enumerate() {
        let mut key = vec![e.label];
        key.extend(attr_idx.iter().map(|&a| e.attributes[a]));
        strata.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; d.examples.len()];
    for (key, mut members) in strata {
        let n_train = (train_fraction * members.len() as f64).round() as usize;
        if n_train == 0 || n_train == members.len() {
            let what = if attr_idx.is_empty() {
                format!("class {}", key[0])
            } else {
                let groups: Vec<String> = attributes.iter().zip(&key[1..]).map(|(a, g)| format!("{a}={g}")).collect();
                format!("stratum (class {}, {})", key[0], groups.join(", "))
            };
            return Err(Error::InvalidInput(format!(
                "{what} has {} examples, too few to appear in both splits",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = d.examples.iter().cloned().zip(&in_train).partition(|(_, &t)| t);
    Ok((
        d.with_examples(train.into_iter().map(|(e, _)| e).collect()),
        d.with_examples(test.into_iter().map(|(e, _)| e).collect()),
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A tiny dataset with the given class counts and 1×1 grey images.
    pub(crate) fn toy(counts: &[usize]) -> Dataset {
        let mut examples = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let id = examples.len() as u64;
                examples.push(Example { id, pixels: vec![0.5; 3], label, attributes: vec![(id % 2) as usize] });
            }
        }
        Dataset {
            examples,
            num_classes: counts.len(),
            attributes: vec![AttributeSpec { name: "group".into(), groups: 2 }],
            image: InputShape { height: 1, width: 1, channels: 3 },
            generation_seed: 0,
        }
    }

    #[test]
    fn balance_keeps_balanced_data() {
        let d = toy(&[100, 100]);
        assert_eq!(balance_by_label(&d, 1).unwrap(), d);
    }

    #[test]
    fn balance_applies_min_rule() {
        let d = toy(&[100, 60]);
        assert_eq!(balance_by_label(&d, 1).unwrap().class_counts(), vec![60, 60]);
    }

    #[test]
    fn balance_is_seeded_and_preserves_examples() {
        let d = toy(&[50, 30, 20]);
        let a = balance_by_label(&d, 42).unwrap();
        let b = balance_by_label(&d, 42).unwrap();
        assert_eq!(a.class_counts(), vec![20, 20, 20]);
        let ids_a: Vec<u64> = a.examples.iter().map(|e| e.id).collect();
        let ids_b: Vec<u64> = b.examples.iter().map(|e| e.id).collect();
        assert_eq!(ids_a, ids_b);
        for e in &a.examples {
            assert_eq!(e, &d.examples[e.id as usize]);
        }
        let c = balance_by_label(&d, 43).unwrap();
        assert_ne!(ids_a, c.examples.iter().map(|e| e.id).collect::<Vec<_>>());
    }

    #[test]
    fn balance_rejects_empty_class() {
        let mut d = toy(&[3, 3]);
        d.num_classes = 3;
        assert!(balance_by_label(&d, 0).is_err());
    }

    #[test]
    fn split_stratifies() {
        let d = toy(&[160, 160, 160, 160]);
        let (train, test) = split(&d, 0.75, 7).unwrap();
        assert_eq!(train.len(), 480);
        assert_eq!(test.len(), 160);
        assert_eq!(train.class_counts(), vec![120; 4]);
        assert_eq!(test.class_counts(), vec![40; 4]);

        let (train, test) = split(&toy(&[2, 2]), 0.5, 1).unwrap();
        assert_eq!(train.class_counts(), vec![1, 1]);
        assert_eq!(test.class_counts(), vec![1, 1]);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = toy(&[30, 17, 25]);
        let (a1, b1) = split(&d, 0.6, 9).unwrap();
        let (a2, b2) = split(&d, 0.6, 9).unwrap();
        assert_eq!((a1.clone(), b1.clone()), (a2, b2));
        let mut ids: Vec<u64> = a1.examples.iter().chain(&b1.examples).map(|e| e.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..72).collect::<Vec<_>>());
    }

    #[test]
    fn split_by_attribute_keeps_label_mix_per_group() {
        let d = toy(&[40, 40]);
        let (train, test) = split_stratified(&d, 0.75, 3, &["group".to_string()]).unwrap();
        for side in [&train, &test] {
            let mut cells = [[0usize; 2]; 2];
            for e in &side.examples {
                cells[e.label][e.attributes[0]] += 1;
            }
            assert_eq!(cells[0], cells[1]);
            assert_eq!(cells[0][0], cells[0][1]);
        }
        assert_eq!(test.len(), 20);
        assert!(split_stratified(&d, 0.75, 3, &["nope".to_string()]).is_err());
    }

    #[test]
    fn split_rejects_tiny_class_and_bad_fraction() {
        assert!(split(&toy(&[1, 5]), 0.5, 0).is_err());
        assert!(split(&toy(&[5, 5]), 1.0, 0).is_err());
        assert!(split(&toy(&[5, 5]), 0.0, 0).is_err());
    }
}
