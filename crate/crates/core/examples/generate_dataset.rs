//! Generate a small trifeature dataset with an imbalanced extra attribute and
//! write it to disk.
//!
//! ```text
//! cargo run --example generate_dataset -- /tmp/trifeature
//! ```

use std::path::PathBuf;

use kdfair::data::{generate_trifeature, read_dataset, write_dataset, GenerationConfig};

fn main() -> kdfair::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("kdfair-dataset"));
    let config = GenerationConfig {
        samples_per_cell: 8,
        extra_attributes: [("age_proxy".to_string(), 2)].into(),
        imbalance: [("age_proxy".to_string(), vec![0.7785, 0.2215])].into(),
        ..Default::default()
    };
    let data = generate_trifeature(&config, 7)?;
    println!("{} examples, {} classes, image {:?}", data.len(), data.num_classes, data.image);
    println!("class counts: {:?}", data.class_counts());

    let age = data.attribute_index("age_proxy").expect("age_proxy attribute");
    let minority = data.examples.iter().filter(|e| e.attributes[age] == 1).count();
    println!("age_proxy minority share: {:.4}", minority as f64 / data.len() as f64);

    write_dataset(&dir, &data, "example")?;
    let (back, _) = read_dataset(&dir)?;
    assert_eq!(back, data);
    println!("wrote and re-read {}", dir.display());
    Ok(())
}
