//! Procedural shape/texture/hue images in the style of the Trifeature family.
//!
//! Every example renders one glyph, filled with one texture, tinted with one
//! hue, on a dark background. Glyph position and size are jittered per
//! example. Optional extra attributes are rendered as global cues: the first
//! extra attribute sets the background level, the second draws a one-pixel
//! frame whose brightness encodes the group.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributeSpec, Dataset, Example};
use crate::error::{Error, Result};
use crate::nn::InputShape;

pub const SHAPES: [&str; 10] = ["disk", "square", "triangle", "cross", "ring", "bar", "diamond", "L", "T", "plus"];
pub const TEXTURES: [&str; 10] =
    ["solid", "stripes", "checker", "dots", "gradient", "noise", "rings", "grid", "waves", "speckle"];
/// Hue angles in degrees, ordered so that any prefix is well separated.
pub const HUES: [f64; 10] = [0.0, 180.0, 60.0, 240.0, 120.0, 300.0, 30.0, 210.0, 90.0, 270.0];
/// Number of extra attributes that have a visual cue.
pub const MAX_EXTRA_ATTRIBUTES: usize = 2;

const PROPORTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseAttribute {
    Shape,
    Texture,
    Color,
}

impl BaseAttribute {
    pub fn name(self) -> &'static str {
        match self {
            BaseAttribute::Shape => "shape",
            BaseAttribute::Texture => "texture",
            BaseAttribute::Color => "color",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelCorrelation {
    pub attribute: String,
    /// Probability that the attribute is overwritten with `label % groups`.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub image_size: usize,
    pub num_shapes: usize,
    pub num_textures: usize,
    pub num_colors: usize,
    pub samples_per_cell: usize,
    pub label_attribute: BaseAttribute,
    /// Additional demographic-style attributes: name → group count.
    #[serde(default)]
    pub extra_attributes: BTreeMap<String, usize>,
    /// Target group proportions per attribute name.
    #[serde(default)]
    pub imbalance: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub label_group_correlation: Option<LabelCorrelation>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            image_size: 12,
            num_shapes: 4,
            num_textures: 4,
            num_colors: 4,
            samples_per_cell: 10,
            label_attribute: BaseAttribute::Shape,
            extra_attributes: BTreeMap::new(),
            imbalance: BTreeMap::new(),
            label_group_correlation: None,
        }
    }
}

impl GenerationConfig {
    /// Attribute schema in dataset order: shape, texture, color, then extras by name.
    pub fn schema(&self) -> Vec<AttributeSpec> {
        let mut schema = vec![
            AttributeSpec { name: "shape".into(), groups: self.num_shapes },
            AttributeSpec { name: "texture".into(), groups: self.num_textures },
            AttributeSpec { name: "color".into(), groups: self.num_colors },
        ];
        schema.extend(self.extra_attributes.iter().map(|(n, &g)| AttributeSpec { name: n.clone(), groups: g }));
        schema
    }

    pub fn num_examples(&self) -> usize {
        self.num_shapes * self.num_textures * self.num_colors * self.samples_per_cell
    }

    /// Validates the configuration; `prefix` is prepended to field names in errors.
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}{name}");
        if self.image_size < 8 {
            return Err(Error::config(field("image_size"), "must be at least 8 pixels"));
        }
        for (name, count, palette) in [
            ("num_shapes", self.num_shapes, SHAPES.len()),
            ("num_textures", self.num_textures, TEXTURES.len()),
            ("num_colors", self.num_colors, HUES.len()),
        ] {
            if count < 2 {
                return Err(Error::config(field(name), "must be at least 2"));
            }
            if count > palette {
                return Err(Error::config(field(name), format!("requested {count} but the palette has {palette}")));
            }
        }
        if self.samples_per_cell < 1 {
            return Err(Error::config(field("samples_per_cell"), "must be at least 1"));
        }
        if self.extra_attributes.len() > MAX_EXTRA_ATTRIBUTES {
            return Err(Error::config(
                field("extra_attributes"),
                format!("at most {MAX_EXTRA_ATTRIBUTES} extra attributes can be rendered"),
            ));
        }
        for (name, &groups) in &self.extra_attributes {
            if ["shape", "texture", "color"].contains(&name.as_str()) || name.is_empty() {
                return Err(Error::config(field(&format!("extra_attributes.{name}")), "reserved or empty name"));
            }
            if groups < 2 {
                return Err(Error::config(field(&format!("extra_attributes.{name}")), "must have at least 2 groups"));
            }
        }
        let schema = self.schema();
        for (name, props) in &self.imbalance {
            let f = field(&format!("imbalance.{name}"));
            let spec = schema
                .iter()
                .find(|a| &a.name == name)
                .ok_or_else(|| Error::config(&f, "unknown attribute"))?;
            if props.len() != spec.groups {
                return Err(Error::config(&f, format!("expected {} proportions, got {}", spec.groups, props.len())));
            }
            if props.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::config(&f, "proportions must be non-negative"));
            }
            let sum: f64 = props.iter().sum();
            if (sum - 1.0).abs() > PROPORTION_TOLERANCE {
                return Err(Error::config(&f, format!("proportions sum to {sum}, expected 1")));
            }
        }
        if let Some(corr) = &self.label_group_correlation {
            let f = field("label_group_correlation");
            if !(0.0..=1.0).contains(&corr.strength) {
                return Err(Error::config(format!("{f}.strength"), "must lie in [0, 1]"));
            }
            if !schema.iter().any(|a| a.name == corr.attribute) {
                return Err(Error::config(format!("{f}.attribute"), format!("unknown attribute `{}`", corr.attribute)));
            }
            if corr.attribute == self.label_attribute.name() {
                return Err(Error::config(format!("{f}.attribute"), "cannot correlate the label with itself"));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("")
    }
}

/// Splits `total` into integer counts matching `proportions` (largest remainder,
/// ties to the lower index).
fn quotas(proportions: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut remaining = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

/// Rejection sampler over the remaining quota: a uniform proposal `g` is
/// accepted with probability `quota[g] / max(quota)`, so groups are drawn in
/// proportion to what is left and every quota is met exactly.
fn draw_with_quota(rng: &mut ChaCha8Rng, quota: &mut [usize]) -> usize {
    let max = *quota.iter().max().expect("non-empty quota") as f64;
    loop {
        let g = rng.gen_range(0..quota.len());
        if rng.gen::<f64>() * max < quota[g] as f64 {
            quota[g] -= 1;
            return g;
        }
    }
}

/// Generates a dataset; a pure function of `(config, seed)`.
pub fn generate_trifeature(config: &GenerationConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let schema = config.schema();
    let n = config.num_examples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |groups: usize| vec![1.0 / groups as f64; groups];
    let proportions_for = |spec: &AttributeSpec| config.imbalance.get(&spec.name).cloned().unwrap_or_else(|| uniform(spec.groups));

    let base_imbalanced = schema[..3].iter().any(|a| config.imbalance.contains_key(&a.name));
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n);
    if base_imbalanced {
        let mut q: Vec<Vec<usize>> = schema[..3].iter().map(|a| quotas(&proportions_for(a), n)).collect();
        for _ in 0..n {
            let max: Vec<f64> = q.iter().map(|g| *g.iter().max().expect("non-empty") as f64).collect();
            loop {
                let s = rng.gen_range(0..config.num_shapes);
                let t = rng.gen_range(0..config.num_textures);
                let c = rng.gen_range(0..config.num_colors);
                let accept = (q[0][s] as f64 / max[0]) * (q[1][t] as f64 / max[1]) * (q[2][c] as f64 / max[2]);
                if rng.gen::<f64>() < accept {
                    q[0][s] -= 1;
                    q[1][t] -= 1;
                    q[2][c] -= 1;
                    rows.push(vec![s, t, c]);
                    break;
                }
            }
        }
    } else {
        for s in 0..config.num_shapes {
            for t in 0..config.num_textures {
                for c in 0..config.num_colors {
                    for _ in 0..config.samples_per_cell {
                        rows.push(vec![s, t, c]);
                    }
                }
            }
        }
    }
    // Extra attributes get separate quotas within each label class, so their
    // group mix is the same for every class.
    let label_idx = config.label_attribute.index();
    let num_labels = schema[label_idx].groups;
    let mut per_label = vec![0usize; num_labels];
    for row in &rows {
        per_label[row[label_idx]] += 1;
    }
    for spec in &schema[3..] {
        let props = proportions_for(spec);
        let mut q: Vec<Vec<usize>> = per_label.iter().map(|&n_l| quotas(&props, n_l)).collect();
        for row in rows.iter_mut() {
            let g = draw_with_quota(&mut rng, &mut q[row[label_idx]]);
            row.push(g);
        }
    }

    if let Some(corr) = &config.label_group_correlation {
        let a = schema.iter().position(|s| s.name == corr.attribute).expect("validated");
        let groups = schema[a].groups;
        for row in rows.iter_mut() {
            if rng.gen::<f64>() < corr.strength {
                row[a] = row[label_idx] % groups;
            }
        }
    }

    let image = InputShape { height: config.image_size, width: config.image_size, channels: 3 };
    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(id, attributes)| {
            let mut render_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e55_d15c_0de5);
            render_rng.set_stream(id as u64 + 1);
            let pixels = render(config, &schema, &attributes, &mut render_rng);
            Example { id: id as u64, pixels, label: attributes[label_idx], attributes }
        })
        .collect();

    let dataset = Dataset {
        examples,
        num_classes: schema[label_idx].groups,
        attributes: schema,
        image,
        generation_seed: seed,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn hue_rgb(hue_deg: f64) -> [f64; 3] {
    // HSV with s = 0.9, v = 1.
    let (s, v) = (0.9, 1.0);
    let h = hue_deg / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Membership test in glyph coordinates (u, v) ∈ [-1, 1]², v pointing down.
fn inside_glyph(shape: usize, u: f64, v: f64) -> bool {
    let (au, av) = (u.abs(), v.abs());
    match shape {
        0 => u * u + v * v <= 0.85 * 0.85,
        1 => au.max(av) <= 0.72,
        2 => (-0.75..=0.8).contains(&v) && au <= 0.5 * (v + 0.75) + 0.02,
        3 => au.max(av) <= 0.85 && ((u - v).abs() <= 0.32 || (u + v).abs() <= 0.32),
        4 => {
            let r = (u * u + v * v).sqrt();
            (0.45..=0.88).contains(&r)
        }
        5 => au <= 0.9 && av <= 0.3,
        6 => au + av <= 0.9,
        7 => ((-0.75..=-0.2).contains(&u) && av <= 0.85) || ((0.3..=0.85).contains(&v) && au <= 0.75),
        8 => ((-0.85..=-0.35).contains(&v) && au <= 0.85) || (au <= 0.27 && av <= 0.85),
        _ => (au <= 0.27 && av <= 0.85) || (av <= 0.27 && au <= 0.85),
    }
}

fn hash01(x: usize, y: usize, salt: u64) -> f64 {
    let mut h = salt ^ ((x as u64) << 32) ^ (y as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Texture intensity in [0, 1] at pixel (x, y).
fn texture(tex: usize, x: f64, y: f64, size: f64, phase: f64, cx: f64, cy: f64, salt: u64) -> f64 {
    let (xi, yi) = (x.floor() as usize, y.floor() as usize);
    match tex {
        0 => 1.0,
        1 => 0.5 + 0.5 * (2.0 * PI * (y + phase) / 3.0).sin().signum(),
        2 => (((x / 2.0).floor() + (y / 2.0).floor()) as i64 % 2) as f64,
        3 => {
            let dx = (x + phase).rem_euclid(3.0) - 1.5;
            let dy = (y + phase).rem_euclid(3.0) - 1.5;
            if dx * dx + dy * dy <= 0.8 {
                1.0
            } else {
                0.15
            }
        }
        4 => (x / size).clamp(0.0, 1.0),
        5 => hash01(xi, yi, salt),
        6 => {
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            0.5 + 0.5 * (2.0 * PI * r / 3.0).cos()
        }
        7 => {
            if (x + phase).rem_euclid(3.0) < 1.0 || (y + phase).rem_euclid(3.0) < 1.0 {
                1.0
            } else {
                0.2
            }
        }
        8 => 0.5 + 0.5 * (2.0 * PI * (x + 1.5 * (2.0 * PI * y / 6.0).sin() + phase) / 4.0).sin(),
        _ => {
            if hash01(xi, yi, salt) < 0.25 {
                1.0
            } else {
                0.3
            }
        }
    }
}

fn render(config: &GenerationConfig, schema: &[AttributeSpec], attrs: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let size = config.image_size;
    let sf = size as f64;
    let (shape, tex, color) = (attrs[0], attrs[1], attrs[2]);
    let cx = sf / 2.0 + rng.gen_range(-0.12..0.12) * sf;
    let cy = sf / 2.0 + rng.gen_range(-0.12..0.12) * sf;
    let radius = rng.gen_range(0.30..0.40) * sf;
    let phase = rng.gen_range(0.0..3.0);
    let salt: u64 = rng.gen();
    let rgb = hue_rgb(HUES[color]);

    let level = |i: usize| -> Option<f64> {
        schema.get(3 + i).map(|spec| attrs[3 + i] as f64 / (spec.groups - 1) as f64)
    };
    let background = 0.05 + 0.35 * level(0).unwrap_or(0.0);
    let frame = level(1);

    const SUB: usize = 3;
    let mut pixels = vec![0.0; size * size * 3];
    for py in 0..size {
        for px in 0..size {
            let mut covered = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let x = px as f64 + (sx as f64 + 0.5) / SUB as f64;
                    let y = py as f64 + (sy as f64 + 0.5) / SUB as f64;
                    if inside_glyph(shape, (x - cx) / radius, (y - cy) / radius) {
                        covered += 1;
                    }
                }
            }
            let coverage = covered as f64 / (SUB * SUB) as f64;
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let shade = 0.25 + 0.75 * texture(tex, x, y, sf, phase, cx, cy, salt);
            let mut bg = background;
            if let Some(f) = frame {
                if px == 0 || py == 0 || px == size - 1 || py == size - 1 {
                    bg = 0.1 + 0.8 * f;
                }
            }
            let base = (py * size + px) * 3;
            for ch in 0..3 {
                let fg = rgb[ch] * shade;
                pixels[base + ch] = (bg * (1.0 - coverage) + fg * coverage).clamp(0.0, 1.0);
            }
        }
    }
    pixels
}
