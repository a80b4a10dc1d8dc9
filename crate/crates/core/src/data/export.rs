//! On-disk dataset layout.
//!
//! A dataset directory holds three files:
//!
//! * `dataset.json`: [`DatasetMeta`], including the manifest hash.
//! * `examples.csv`: `example_id,label,attr_<name>...`, one row per example,
//!   preceded by a `# manifest_sha256=<hex>` comment line.
//! * `pixels.bin`: magic `KDPX`, u32 LE version (1), u64 LE example count,
//!   u32 LE height, width, channels, then `count * h * w * c` f64 LE values,
//!   examples in `examples.csv` row order, each image height × width × channels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributeSpec, Dataset, Example};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::nn::InputShape;

const PIXEL_MAGIC: &[u8; 4] = b"KDPX";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub manifest_hash: String,
    pub num_examples: usize,
    pub num_classes: usize,
    pub image: InputShape,
    pub attributes: Vec<AttributeSpec>,
    pub generation_seed: u64,
}

pub fn write_dataset(dir: &Path, d: &Dataset, manifest_hash: &str) -> Result<DatasetMeta> {
    fs::create_dir_all(dir)?;
    let mut csv = format!("# manifest_sha256={manifest_hash}\nexample_id,label");
    for a in &d.attributes {
        let _ = write!(csv, ",attr_{}", a.name);
    }
    csv.push('\n');
    let mut pixels = Vec::with_capacity(24 + 8 * d.len() * d.image.len());
    pixels.extend_from_slice(PIXEL_MAGIC);
    pixels.extend_from_slice(&1u32.to_le_bytes());
    pixels.extend_from_slice(&(d.len() as u64).to_le_bytes());
    for v in [d.image.height, d.image.width, d.image.channels] {
        pixels.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for e in &d.examples {
        let _ = write!(csv, "{},{}", e.id, e.label);
        for g in &e.attributes {
            let _ = write!(csv, ",{g}");
        }
        csv.push('\n');
        for p in &e.pixels {
            pixels.extend_from_slice(&p.to_le_bytes());
        }
    }
    let meta = DatasetMeta {
        format_version: 1,
        manifest_hash: manifest_hash.to_string(),
        num_examples: d.len(),
        num_classes: d.num_classes,
        image: d.image,
        attributes: d.attributes.clone(),
        generation_seed: d.generation_seed,
    };
    write_atomic(&dir.join("pixels.bin"), &pixels)?;
    write_atomic(&dir.join("examples.csv"), csv.as_bytes())?;
    write_json(&dir.join("dataset.json"), &meta)?;
    Ok(meta)
}

pub fn read_dataset(dir: &Path) -> Result<(Dataset, DatasetMeta)> {
    let missing: Vec<String> = ["dataset.json", "examples.csv", "pixels.bin"]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(dir.join("dataset.json"))?)?;
    let bad = |reason: &str| Error::Schema { path: dir.display().to_string(), reason: reason.to_string() };

    let bytes = fs::read(dir.join("pixels.bin"))?;
    if bytes.len() < 28 || &bytes[..4] != PIXEL_MAGIC {
        return Err(bad("pixels.bin has a bad header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let image = InputShape { height: u32_at(16), width: u32_at(20), channels: u32_at(24) };
    if image != meta.image || count != meta.num_examples {
        return Err(bad("pixels.bin disagrees with dataset.json"));
    }
    if bytes.len() != 28 + 8 * count * image.len() {
        return Err(bad("pixels.bin has the wrong length"));
    }

    let text = fs::read_to_string(dir.join("examples.csv"))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("examples.csv is empty"))?.split(',').collect();
    let mut expected = vec!["example_id".to_string(), "label".to_string()];
    expected.extend(meta.attributes.iter().map(|a| format!("attr_{}", a.name)));
    if header != expected {
        return Err(bad("examples.csv header disagrees with dataset.json"));
    }
    let mut examples = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let fields = line
            .split(',')
            .map(|f| f.parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(&format!("examples.csv row {} is malformed", i + 1)))?;
        if fields.len() != expected.len() || i >= count {
            return Err(bad(&format!("examples.csv row {} is malformed", i + 1)));
        }
        let start = 28 + 8 * i * image.len();
        let pixels = bytes[start..start + 8 * image.len()]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        examples.push(Example {
            id: fields[0],
            label: fields[1] as usize,
            attributes: fields[2..].iter().map(|&g| g as usize).collect(),
            pixels,
        });
    }
    if examples.len() != count {
        return Err(bad("examples.csv row count disagrees with dataset.json"));
    }
    let d = Dataset {
        examples,
        num_classes: meta.num_classes,
        attributes: meta.attributes.clone(),
        image,
        generation_seed: meta.generation_seed,
    };
    d.validate()?;
    Ok((d, meta))
}
