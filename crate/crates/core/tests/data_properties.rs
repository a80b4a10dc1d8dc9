use std::collections::{BTreeMap, HashSet};

use kdfair::data::{
    balance_by_label, generate_trifeature, parse_prediction_log, read_dataset, split, split_stratified, write_dataset,
    GenerationConfig,
};
use kdfair::distill::prediction_log;
use kdfair::nn::{Architecture, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> impl Strategy<Value = GenerationConfig> {
    (2usize..5, 2usize..4, 2usize..4, 4usize..12).prop_map(|(s, t, c, n)| GenerationConfig {
        image_size: 8,
        num_shapes: s,
        num_textures: t,
        num_colors: c,
        samples_per_cell: n,
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_seeded_and_complete(cfg in config(), seed in 0u64..1000) {
        let a = generate_trifeature(&cfg, seed).unwrap();
        prop_assert_eq!(a.len(), cfg.num_examples());
        prop_assert_eq!(&a, &generate_trifeature(&cfg, seed).unwrap());
        let ids: HashSet<u64> = a.examples.iter().map(|e| e.id).collect();
        prop_assert_eq!(ids.len(), a.len());
        prop_assert!(a.examples.iter().all(|e| e.pixels.iter().all(|p| (0.0..=1.0).contains(p))));
        prop_assert!(a.class_counts().iter().all(|&n| n == a.len() / cfg.num_shapes));
    }

    #[test]
    fn split_partitions_and_stratifies(cfg in config(), seed in 0u64..1000, frac in 0.3f64..0.8) {
        let d = generate_trifeature(&cfg, 1).unwrap();
        let Ok((train, test)) = split(&d, frac, seed) else { return Ok(()) };
        prop_assert_eq!(train.len() + test.len(), d.len());
        let train_ids: HashSet<u64> = train.examples.iter().map(|e| e.id).collect();
        prop_assert!(test.examples.iter().all(|e| !train_ids.contains(&e.id)));
        for (c, &n) in d.class_counts().iter().enumerate() {
            prop_assert_eq!(train.class_counts()[c], (frac * n as f64).round() as usize);
        }
        prop_assert!(train.examples.windows(2).all(|w| w[0].id < w[1].id));
    }

    #[test]
    fn attribute_strata_keep_the_mix(cfg in config(), seed in 0u64..1000) {
        let d = generate_trifeature(&cfg, 2).unwrap();
        let Ok((train, _)) = split_stratified(&d, 0.5, seed, &["color".to_string()]) else { return Ok(()) };
        let color = d.attribute_index("color").unwrap();
        let count = |ds: &kdfair::data::Dataset| {
            let mut m: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for e in &ds.examples {
                *m.entry((e.label, e.attributes[color])).or_default() += 1;
            }
            m
        };
        let (all, tr) = (count(&d), count(&train));
        for (k, &n) in &all {
            prop_assert_eq!(tr[k], (0.5 * n as f64).round() as usize);
        }
    }

    #[test]
    fn balancing_equalizes_without_inventing(counts in prop::collection::vec(1usize..6, 2..5), seed in 0u64..100) {
        // Unbalance a generated set by dropping a prefix of each class.
        let cfg = GenerationConfig { image_size: 8, num_shapes: counts.len(), num_textures: 2, num_colors: 2, samples_per_cell: 6, ..Default::default() };
        let mut d = generate_trifeature(&cfg, 3).unwrap();
        let mut seen = vec![0usize; counts.len()];
        d.examples.retain(|e| {
            seen[e.label] += 1;
            seen[e.label] <= counts[e.label] * 4
        });
        let b = balance_by_label(&d, seed).unwrap();
        let min = *d.class_counts().iter().min().unwrap();
        prop_assert!(b.class_counts().iter().all(|&n| n == min));
        let original: HashSet<u64> = d.examples.iter().map(|e| e.id).collect();
        prop_assert!(b.examples.iter().all(|e| original.contains(&e.id)));
    }
}

#[test]
fn dataset_export_round_trips() {
    let cfg = GenerationConfig {
        image_size: 9,
        num_shapes: 3,
        num_textures: 2,
        num_colors: 3,
        samples_per_cell: 3,
        extra_attributes: [("age_proxy".to_string(), 2)].into(),
        imbalance: [("age_proxy".to_string(), vec![0.75, 0.25])].into(),
        ..Default::default()
    };
    let d = generate_trifeature(&cfg, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &d, "abc").unwrap();
    let (back, meta) = read_dataset(dir.path()).unwrap();
    assert_eq!(meta.manifest_hash, "abc");
    assert_eq!(back, d);
}

#[test]
fn prediction_logs_round_trip_through_csv() {
    let cfg = GenerationConfig { image_size: 8, num_shapes: 3, num_textures: 2, num_colors: 2, samples_per_cell: 2, ..Default::default() };
    let d = generate_trifeature(&cfg, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = ModelParams::init(&Architecture::student_default(), d.image, d.num_classes, &mut rng).unwrap();
    let meta: BTreeMap<String, String> = [("model".to_string(), "nds".to_string())].into();
    let log = prediction_log(&model, &d, meta).unwrap();
    let back = parse_prediction_log(&log.to_csv(), d.num_classes, "memory").unwrap();
    assert_eq!(back, log);
    assert!(parse_prediction_log("example_id,true_label\n1,0\n", 3, "bad").is_err());
}
