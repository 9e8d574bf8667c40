//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use oe_lab::losses::{Center, Method, RadialKind};
use oe_lab::nn::{grad_check, Network, OutputGrad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// O(n^2) Mann-Whitney statistic with label 0 as the positive class.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 0 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 1 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Direct-summation unitary 2-D DFT, returned as (re, im) per coefficient.
pub fn naive_dft(x: &Tensor) -> Vec<(f64, f64)> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let mut out = Vec::with_capacity(h * w);
    for k in 0..h {
        for l in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((k * m) as f64 / h as f64 + (l * n) as f64 / w as f64);
                    let v = x.data()[m * w + n];
                    re += v * phase.cos();
                    im += v * phase.sin();
                }
            }
            let s = 1.0 / ((h * w) as f64).sqrt();
            out.push((re * s, im * s));
        }
    }
    out
}

/// Loop evaluation of the HSC objective with the naive `ln(1 - e^-h)`.
pub fn hsc_oracle(z: &Tensor, y: &[u8], kind: RadialKind) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = z.row(i);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let h = match kind {
            RadialKind::L1 => row.iter().map(|v| v.abs()).sum(),
            RadialKind::L2 => sq.sqrt(),
            RadialKind::L2Squared => sq,
            RadialKind::PseudoHuber => (sq + 1.0).sqrt() - 1.0,
        };
        total += if yi == 1 { h } else { -(1.0 - (-h).exp()).ln() };
    }
    total / y.len() as f64
}

pub fn dsad_oracle(z: &Tensor, y: &[u8], c: &[f64], eta: f64, eps: f64) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let mut d2 = 0.0;
        for (a, b) in z.row(i).iter().zip(c) {
            d2 += (a - b) * (a - b);
        }
        total += if yi == 1 { d2 } else { eta / (d2 + eps) };
    }
    total / y.len() as f64
}

/// Methods covered by the gradient suite.
pub fn gradient_methods() -> Vec<Method> {
    let mut m: Vec<Method> = RadialKind::ALL.iter().map(|&radial| Method::Hsc { radial }).collect();
    m.push(Method::Bce);
    m.push(Method::Focal { gamma: 0.0, alpha: 0.5 });
    m.push(Method::Focal { gamma: 2.0, alpha: 0.5 });
    m.push(Method::Dsvdd);
    m.push(Method::dsad());
    m
}

/// A random small MLP, batch, mixed labels and center for `method`.
pub struct GradInstance {
    pub net: Network,
    pub batch: Tensor,
    pub y: Vec<u8>,
    pub center: Center,
}

pub fn grad_instance(method: &Method, seed: u64) -> GradInstance {
    let mut r = rng(seed);
    let net = Network::mlp(5, &[7, 6], 3, 0.01, method.head(), &mut r).unwrap();
    let batch = random_tensor(6, 5, 1.0, &mut r);
    let mut y: Vec<u8> = (0..6).map(|_| r.random_range(0..2)).collect();
    y[0] = 1;
    y[1] = 0;
    let center = Center::new((0..3).map(|_| r.random_range(-0.5..0.5)).collect()).unwrap();
    GradInstance { net, batch, y, center }
}

pub fn grad_error(method: &Method, seed: u64) -> f64 {
    let inst = grad_instance(method, seed);
    let loss = |reps: &Tensor, logits: Option<&Tensor>| -> (f64, OutputGrad) {
        let (out, g) = method.loss(reps, logits, &inst.y, Some(&inst.center)).unwrap();
        (out.loss, g)
    };
    grad_check(&inst.net, loss, &inst.batch).unwrap()
}

/// Minimal well-formedness check: balanced, properly nested tags.
pub fn xml_balanced(doc: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = doc;
    while let Some(start) = rest.find('<') {
        let end = rest[start..].find('>').ok_or("unterminated tag")? + start;
        let tag = &rest[start + 1..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name.trim() => {}
                other => return Err(format!("closing </{name}> does not match {other:?}")),
            }
        } else if !tag.ends_with('/') {
            let name = tag.split_whitespace().next().ok_or("empty tag")?;
            stack.push(name.to_string());
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed tags {stack:?}"))
    }
}

/// `[N x side x side]` images in `[0, 1]`: uniform noise plus one bright row
/// whose position encodes the class.
pub fn class_images(classes: usize, per_class: usize, side: usize, seed: u64) -> (Tensor, Vec<u8>) {
    let mut r = rng(seed);
    let n = classes * per_class;
    let labels: Vec<u8> = (0..n).map(|i| (i % classes) as u8).collect();
    let mut data = Vec::with_capacity(n * side * side);
    for &c in &labels {
        let stripe = (c as usize * side) / classes;
        for row in 0..side {
            for _ in 0..side {
                let noise: f64 = r.random_range(0.0..0.4);
                data.push(if row == stripe { 0.6 + noise } else { noise });
            }
        }
    }
    (Tensor::new(vec![n, side, side], data).unwrap(), labels)
}

/// Writes train/test IDX files for a synthetic dataset under `root/name/`.
pub fn write_dataset(root: &std::path::Path, name: &str, classes: usize, per_class: usize, side: usize, seed: u64) {
    use oe_lab::data::{write_idx_images, write_idx_labels};
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for (split, s) in [("train", seed), ("t10k", seed + 1)] {
        let (x, y) = class_images(classes, per_class, side, s);
        std::fs::write(dir.join(format!("{split}-images-idx3-ubyte")), write_idx_images(&x).unwrap()).unwrap();
        std::fs::write(dir.join(format!("{split}-labels-idx1-ubyte")), write_idx_labels(&y)).unwrap();
    }
}
