//! Reference implementations used as test oracles. Nothing here calls into the
//! library's numerics; only data types are shared.
#![allow(dead_code)]

use std::collections::BTreeMap;

use kdfair::data::{PredictionLog, PredictionRecord};
use kdfair::nn::{LayerKind, ModelParams};
use rand::Rng;

// ---------------------------------------------------------------------------
// Networks

/// Logits plus the pre-activation of every hidden unit.
pub fn ref_forward(p: &ModelParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pre_all = Vec::new();
    let last = p.layers.len() - 1;
    for (i, layer) in p.layers.iter().enumerate() {
        let mut z = match layer.kind {
            LayerKind::Dense { inputs, outputs } => (0..outputs)
                .map(|o| layer.bias[o] + (0..inputs).map(|j| layer.weights[o * inputs + j] * a[j]).sum::<f64>())
                .collect::<Vec<_>>(),
            LayerKind::Conv { in_height, in_width, in_channels, filters, kernel, stride } => {
                let oh = (in_height - kernel) / stride + 1;
                let ow = (in_width - kernel) / stride + 1;
                let mut z = vec![0.0; oh * ow * filters];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for f in 0..filters {
                            let mut s = layer.bias[f];
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    for c in 0..in_channels {
                                        let w = layer.weights[((f * kernel + ky) * kernel + kx) * in_channels + c];
                                        let (y, xx) = (oy * stride + ky, ox * stride + kx);
                                        s += w * a[(y * in_width + xx) * in_channels + c];
                                    }
                                }
                            }
                            z[(oy * ow + ox) * filters + f] = s;
                        }
                    }
                }
                z
            }
        };
        if i != last {
            pre_all.extend_from_slice(&z);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    (a, pre_all)
}

pub fn ref_log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let s: Vec<f64> = z.iter().map(|v| v / t).collect();
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    s.iter().map(|v| v - lse).collect()
}

#[derive(Debug, Clone)]
pub enum RefLoss {
    Hard,
    Distill { teacher: Vec<Vec<f64>>, temperature: f64, alpha: f64, t_squared: bool },
}

/// Mean objective over the batch.
pub fn ref_loss(p: &ModelParams, xs: &[Vec<f64>], ys: &[usize], loss: &RefLoss) -> f64 {
    let mut total = 0.0;
    for (n, (x, &y)) in xs.iter().zip(ys).enumerate() {
        let (z, _) = ref_forward(p, x);
        let hard = -ref_log_softmax(&z, 1.0)[y];
        total += match loss {
            RefLoss::Hard => hard,
            RefLoss::Distill { teacher, temperature, alpha, t_squared } => {
                let lp = ref_log_softmax(&z, *temperature);
                let soft = -teacher[n].iter().zip(&lp).map(|(q, l)| q * l).sum::<f64>();
                let s = if *t_squared { temperature * temperature } else { 1.0 };
                alpha * s * soft + (1.0 - alpha) * hard
            }
        };
    }
    total / xs.len() as f64
}

fn set_flat(p: &mut ModelParams, idx: usize, v: f64) {
    *p.flat_mut().nth(idx).unwrap() = v;
}

fn masks(p: &ModelParams, xs: &[Vec<f64>]) -> Vec<bool> {
    xs.iter().flat_map(|x| ref_forward(p, x).1.into_iter().map(|v| v > 0.0)).collect()
}

/// Central difference for flat coordinate `idx`. `None` when the step moves a
/// hidden unit across the ReLU kink, where the derivative is one-sided.
pub fn central_difference(
    p: &ModelParams,
    xs: &[Vec<f64>],
    ys: &[usize],
    loss: &RefLoss,
    idx: usize,
    h: f64,
) -> Option<f64> {
    let v0 = *p.flat().nth(idx).unwrap();
    let mut q = p.clone();
    set_flat(&mut q, idx, v0 + h);
    let (fp, mp) = (ref_loss(&q, xs, ys, loss), masks(&q, xs));
    set_flat(&mut q, idx, v0 - h);
    let (fm, mm) = (ref_loss(&q, xs, ys, loss), masks(&q, xs));
    (mp == mm).then(|| (fp - fm) / (2.0 * h))
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

// ---------------------------------------------------------------------------
// Student t distribution by quadrature

/// Stirling series with upward shift; independent of the library's Lanczos form.
pub fn ln_gamma_stirling(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 20.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2);
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series + shift
}

pub fn t_density(x: f64, df: f64) -> f64 {
    let ln_c = ln_gamma_stirling((df + 1.0) / 2.0)
        - ln_gamma_stirling(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp()
}

/// Tanh-sinh quadrature on `[a, b]`; endpoint singularities are tolerated.
pub fn tanh_sinh(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 1.0 / 128.0;
    let half = (b - a) / 2.0;
    let hp = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let kmax = (4.5 / h) as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let u = hp * t.sinh();
        let w = hp * t.cosh() / u.cosh().powi(2);
        // distance from the nearer endpoint, computed without cancellation
        let gap = 2.0 / (1.0 + (2.0 * u.abs()).exp());
        let x = if u >= 0.0 { b - half * gap } else { a + half * gap };
        if x <= a || x >= b {
            continue;
        }
        let v = g(x);
        if v.is_finite() {
            sum += w * v;
        }
    }
    half * h * sum
}

/// Two-tailed p-value `P(|T| >= |t|)`.
pub fn t_two_tailed_quadrature(t: f64, df: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        return 1.0;
    }
    if t <= 1.0 {
        1.0 - 2.0 * tanh_sinh(|x| t_density(x, df), 0.0, t)
    } else {
        // x = t / s maps [t, inf) onto (0, 1]
        2.0 * tanh_sinh(|s| t_density(t / s, df) * t / (s * s), 0.0, 1.0)
    }
}

pub fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
    let tail = t_two_tailed_quadrature(t, df) / 2.0;
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Welch t and Welch–Satterthwaite df from two-pass moments, p by quadrature.
pub fn ref_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v / n, n)
    };
    let (ma, sa, na) = moments(a);
    let (mb, sb, nb) = moments(b);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df, t_two_tailed_quadrature(t, df))
}

// ---------------------------------------------------------------------------
// Prediction logs and brute-force fairness

pub fn make_log(rows: &[(usize, usize, usize)], k: usize) -> PredictionLog {
    PredictionLog {
        num_classes: k,
        attribute_names: vec!["g".into()],
        records: rows
            .iter()
            .enumerate()
            .map(|(i, &(y, p, g))| PredictionRecord {
                example_id: i as u64,
                true_label: y,
                predicted_label: p,
                attributes: vec![g],
            })
            .collect(),
        meta: BTreeMap::new(),
    }
}

/// Random log with one attribute `g`; rows of (true, predicted, group).
pub fn random_log<R: Rng>(rng: &mut R, rows: usize, k: usize, groups: usize, accuracy: f64) -> PredictionLog {
    let data: Vec<_> = (0..rows)
        .map(|_| {
            let y = rng.gen_range(0..k);
            let p = if rng.gen_bool(accuracy) { y } else { rng.gen_range(0..k) };
            (y, p, rng.gen_range(0..groups))
        })
        .collect();
    make_log(&data, k)
}

/// Exact fraction, reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frac(pub u64, pub u64);

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    fn new(n: u64, d: u64) -> Self {
        let g = gcd(n, d).max(1);
        Frac(n / g, d / g)
    }
    fn less(self, o: Frac) -> bool {
        (self.0 as u128) * (o.1 as u128) < (o.0 as u128) * (self.1 as u128)
    }
    fn sub(self, o: Frac) -> Frac {
        let n = self.0 as u128 * o.1 as u128 - o.0 as u128 * self.1 as u128;
        let d = self.1 as u128 * o.1 as u128;
        let g = {
            let (mut a, mut b) = (n, d);
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a.max(1)
        };
        Frac((n / g) as u64, (d / g) as u64)
    }
    pub fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// For each group value present: filter the rows of that group and count
/// `[predicate on (y, p)]` over `[condition on y]`.
fn rates_by_group(
    log: &PredictionLog,
    cond: impl Fn(usize) -> bool,
    pred: impl Fn(usize) -> bool,
) -> Vec<Frac> {
    let mut groups: Vec<usize> = log.records.iter().map(|r| r.attributes[0]).collect();
    groups.sort();
    groups.dedup();
    groups
        .into_iter()
        .filter_map(|g| {
            let rows: Vec<_> = log.records.iter().filter(|r| r.attributes[0] == g && cond(r.true_label)).collect();
            let hits = rows.iter().filter(|r| pred(r.predicted_label)).count() as u64;
            (!rows.is_empty()).then(|| Frac::new(hits, rows.len() as u64))
        })
        .collect()
}

fn max_minus_min(fs: &[Frac]) -> Option<f64> {
    if fs.len() < 2 {
        return None;
    }
    let mut hi = fs[0];
    let mut lo = fs[0];
    for &f in &fs[1..] {
        if hi.less(f) {
            hi = f;
        }
        if f.less(lo) {
            lo = f;
        }
    }
    Some(hi.sub(lo).value())
}

pub fn bf_dpd(log: &PredictionLog, c: usize) -> Option<f64> {
    max_minus_min(&rates_by_group(log, |_| true, |p| p == c))
}

pub fn bf_eod(log: &PredictionLog, c: usize) -> Option<f64> {
    let tpr = max_minus_min(&rates_by_group(log, |y| y == c, |p| p == c))?;
    let fpr = max_minus_min(&rates_by_group(log, |y| y != c, |p| p == c))?;
    Some(if tpr >= fpr { tpr } else { fpr })
}

/// Unweighted mean over classes; `None` if any class is undefined.
pub fn bf_multiclass(log: &PredictionLog, metric: impl Fn(&PredictionLog, usize) -> Option<f64>) -> Option<f64> {
    let mut sum = 0.0;
    for c in 0..log.num_classes {
        sum += metric(log, c)?;
    }
    Some(sum / log.num_classes as f64)
}

/// Number of examples (matched by id) the two logs predict differently.
pub fn hamming(a: &PredictionLog, b: &PredictionLog) -> usize {
    let by_id: BTreeMap<u64, usize> = b.records.iter().map(|r| (r.example_id, r.predicted_label)).collect();
    a.records.iter().filter(|r| by_id[&r.example_id] != r.predicted_label).count()
}
