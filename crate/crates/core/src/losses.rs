//! Training objectives and anomaly scores.
//!
//! Labels follow the convention `y = 1` normal, `y = 0` anomalous (OE).
//! Every loss is a batch mean and returns its gradient with respect to the
//! network output it consumes.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::nn::{Head, OutputGrad, Tensor};

/// Below this radial value the anomalous HSC term is clamped.
pub const HSC_H_FLOOR: f64 = 1e-12;

/// Radial function `h` inside `l(z) = exp(-h(z))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    L1,
    L2,
    L2Squared,
    PseudoHuber,
}

impl RadialKind {
    pub fn h(&self, z: &[f64]) -> f64 {
        match self {
            RadialKind::L1 => z.iter().map(|v| v.abs()).sum(),
            RadialKind::L2 => sq_norm(z).sqrt(),
            RadialKind::L2Squared => sq_norm(z),
            // sqrt(s + 1) - 1 without cancellation for small s
            RadialKind::PseudoHuber => {
                let s = sq_norm(z);
                s / ((s + 1.0).sqrt() + 1.0)
            }
        }
    }

    /// Writes `scale * dh/dz` into `out`.
    fn grad_into(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            RadialKind::L1 => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = if *v > 0.0 {
                        scale
                    } else if *v < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                }
            }
            RadialKind::L2 => {
                let n = sq_norm(z).sqrt();
                let f = if n > 0.0 { scale / n } else { 0.0 };
                out.iter_mut().zip(z).for_each(|(o, v)| *o = f * v);
            }
            RadialKind::L2Squared => out.iter_mut().zip(z).for_each(|(o, v)| *o = 2.0 * scale * v),
            RadialKind::PseudoHuber => {
                let f = scale / (sq_norm(z) + 1.0).sqrt();
                out.iter_mut().zip(z).for_each(|(o, v)| *o = f * v);
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RadialKind::L1 => "l1",
            RadialKind::L2 => "l2",
            RadialKind::L2Squared => "l2_squared",
            RadialKind::PseudoHuber => "pseudo_huber",
        }
    }

    pub const ALL: [RadialKind; 4] =
        [RadialKind::L1, RadialKind::L2, RadialKind::L2Squared, RadialKind::PseudoHuber];
}

impl std::str::FromStr for RadialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l1" => RadialKind::L1,
            "l2" => RadialKind::L2,
            "l2_squared" | "l2sq" => RadialKind::L2Squared,
            "pseudo_huber" => RadialKind::PseudoHuber,
            other => return Err(Error::Config(format!("unknown radial kind {other:?}"))),
        })
    }
}

fn sq_norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

fn sq_dist(z: &[f64], c: &[f64]) -> f64 {
    z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `log(1 - exp(-h))` for `h > 0` without cancellation.
pub fn log1mexp(h: f64) -> f64 {
    if h < std::f64::consts::LN_2 {
        (-(-h).exp_m1()).ln()
    } else {
        (-(-h).exp()).ln_1p()
    }
}

/// `log(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fixed (non-trainable) center for Deep SVDD / Deep SAD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center(Vec<f64>);

impl Center {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("center must be non-empty and finite".into()));
        }
        Ok(Self(c))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Mean representation; nudged by 0.1 on the first axis when the mean is
    /// within 1e-3 of the origin.
    pub fn from_reps(reps: &Tensor) -> Result<Self> {
        let (n, r) = (reps.rows(), reps.row_len());
        let mut c = vec![0.0; r];
        for i in 0..n {
            for (acc, v) in c.iter_mut().zip(reps.row(i)) {
                *acc += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= n as f64);
        if sq_norm(&c).sqrt() < 1e-3 {
            c[0] += 0.1;
        }
        Self::new(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the consumed output (`[B x r]` or `[B]`).
    pub grad: Tensor,
    /// Rows whose radial value hit [`HSC_H_FLOOR`].
    pub saturated: usize,
}

fn check_labels(y: &[u8], rows: usize) -> Result<()> {
    if rows == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if y.len() != rows {
        return Err(usage(format!("{} labels for {rows} rows", y.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Input(format!("label {bad} is not binary")));
    }
    Ok(())
}

fn check_reps(z: &Tensor) -> Result<()> {
    if z.shape().len() != 2 {
        return Err(usage(format!("representations must be [B x r], got {:?}", z.shape())));
    }
    if !z.all_finite() {
        return Err(Error::Input("non-finite representation".into()));
    }
    Ok(())
}

fn check_logits(t: &Tensor) -> Result<()> {
    if !t.all_finite() {
        return Err(Error::Input("non-finite logit".into()));
    }
    Ok(())
}

/// Hypersphere classifier: mean of `y h(z) - (1 - y) log(1 - exp(-h(z)))`.
pub fn hsc_loss(z: &Tensor, y: &[u8], kind: RadialKind) -> Result<LossOutput> {
    check_reps(z)?;
    let (b, r) = (z.rows(), z.row_len());
    check_labels(y, b)?;
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b * r];
    let mut total = 0.0;
    let mut saturated = 0;
    for i in 0..b {
        let row = z.row(i);
        let h = kind.h(row);
        let g = &mut grad[i * r..(i + 1) * r];
        if y[i] == 1 {
            total += h;
            kind.grad_into(row, inv_b, g);
        } else if h < HSC_H_FLOOR {
            // d max(h, floor)/dz vanishes below the floor
            saturated += 1;
            total -= log1mexp(HSC_H_FLOOR);
        } else {
            total -= log1mexp(h);
            // d/dh [-log(1 - e^-h)] = -1 / (e^h - 1)
            kind.grad_into(row, -inv_b / h.exp_m1(), g);
        }
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad: Tensor::from_parts_unchecked(vec![b, r], grad),
        saturated,
    })
}

/// Binary cross-entropy on logits, with the normal class (`y = 1`) as target 1.
pub fn bce_loss(logits: &Tensor, y: &[u8]) -> Result<LossOutput> {
    check_logits(logits)?;
    let b = logits.len();
    check_labels(y, b)?;
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b];
    let mut total = 0.0;
    for (i, (&t, &yi)) in logits.data().iter().zip(y).enumerate() {
        let sign = if yi == 1 { 1.0 } else { -1.0 };
        let s = sign * t;
        total += softplus(-s);
        grad[i] = -sign * sigmoid(-s) * inv_b;
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad: Tensor::from_parts_unchecked(vec![b], grad),
        saturated: 0,
    })
}

/// Focal loss `-alpha_t (1 - p_t)^gamma log p_t`, `alpha_t = alpha` for normal rows.
pub fn focal_loss(logits: &Tensor, y: &[u8], gamma: f64, alpha: f64) -> Result<LossOutput> {
    check_logits(logits)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("focal gamma must be >= 0, got {gamma}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("focal alpha must be in (0,1), got {alpha}")));
    }
    let b = logits.len();
    check_labels(y, b)?;
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b];
    let mut total = 0.0;
    for (i, (&t, &yi)) in logits.data().iter().zip(y).enumerate() {
        let (sign, alpha_t) = if yi == 1 { (1.0, alpha) } else { (-1.0, 1.0 - alpha) };
        let s = sign * t;
        let p = sigmoid(s);
        let q = sigmoid(-s);
        let log_p = -softplus(-s);
        let q_gamma = q.powf(gamma);
        total += -alpha_t * q_gamma * log_p;
        // d/ds [-q^g log p] = g p q^g log p - q^(g+1)
        let ds = gamma * p * q_gamma * log_p - q_gamma * q;
        grad[i] = alpha_t * ds * sign * inv_b;
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad: Tensor::from_parts_unchecked(vec![b], grad),
        saturated: 0,
    })
}

/// Deep SVDD: mean squared distance to the center; labels are ignored.
pub fn dsvdd_loss(z: &Tensor, c: &Center) -> Result<LossOutput> {
    check_reps(z)?;
    let (b, r) = (z.rows(), z.row_len());
    if b == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if c.dim() != r {
        return Err(usage(format!("center has dim {}, representations {r}", c.dim())));
    }
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b * r];
    let mut total = 0.0;
    for i in 0..b {
        let row = z.row(i);
        total += sq_dist(row, c.as_slice());
        for ((g, v), cv) in grad[i * r..(i + 1) * r].iter_mut().zip(row).zip(c.as_slice()) {
            *g = 2.0 * (v - cv) * inv_b;
        }
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad: Tensor::from_parts_unchecked(vec![b, r], grad),
        saturated: 0,
    })
}

/// Deep SAD: mean of `y d^2 + (1 - y) eta / (d^2 + eps)` with `d = |z - c|`.
pub fn dsad_loss(z: &Tensor, y: &[u8], c: &Center, eta: f64, eps: f64) -> Result<LossOutput> {
    check_reps(z)?;
    if !(eta > 0.0 && eps > 0.0) {
        return Err(Error::Config(format!("Deep SAD needs eta > 0 and eps > 0, got {eta}, {eps}")));
    }
    let (b, r) = (z.rows(), z.row_len());
    check_labels(y, b)?;
    if c.dim() != r {
        return Err(usage(format!("center has dim {}, representations {r}", c.dim())));
    }
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b * r];
    let mut total = 0.0;
    for i in 0..b {
        let row = z.row(i);
        let d2 = sq_dist(row, c.as_slice());
        let scale = if y[i] == 1 {
            total += d2;
            2.0
        } else {
            let denom = d2 + eps;
            total += eta / denom;
            -2.0 * eta / (denom * denom)
        };
        for ((g, v), cv) in grad[i * r..(i + 1) * r].iter_mut().zip(row).zip(c.as_slice()) {
            *g = scale * (v - cv) * inv_b;
        }
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad: Tensor::from_parts_unchecked(vec![b, r], grad),
        saturated: 0,
    })
}

/// A training objective together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Hsc { radial: RadialKind },
    Bce,
    Focal { gamma: f64, alpha: f64 },
    Dsvdd,
    Dsad { eta: f64, eps: f64 },
}

impl Method {
    pub fn hsc() -> Self {
        Method::Hsc { radial: RadialKind::L2Squared }
    }

    pub fn focal() -> Self {
        Method::Focal { gamma: 2.0, alpha: 0.5 }
    }

    pub fn dsad() -> Self {
        Method::Dsad { eta: 1.0, eps: 1e-6 }
    }

    pub fn head(&self) -> Head {
        match self {
            Method::Bce | Method::Focal { .. } => Head::Linear,
            _ => Head::None,
        }
    }

    pub fn uses_oe(&self) -> bool {
        !matches!(self, Method::Dsvdd)
    }

    pub fn uses_center(&self) -> bool {
        matches!(self, Method::Dsvdd | Method::Dsad { .. })
    }

    /// Short stable label, e.g. `hsc`, `hsc-pseudo_huber`, `focal-g2`.
    pub fn label(&self) -> String {
        match self {
            Method::Hsc { radial: RadialKind::L2Squared } => "hsc".into(),
            Method::Hsc { radial } => format!("hsc-{}", radial.name()),
            Method::Bce => "bce".into(),
            Method::Focal { gamma, alpha } if *alpha == 0.5 => format!("focal-g{gamma}"),
            Method::Focal { gamma, alpha } => format!("focal-g{gamma}-a{alpha}"),
            Method::Dsvdd => "dsvdd".into(),
            Method::Dsad { .. } => "dsad".into(),
        }
    }

    /// Loss and output gradient for one forward pass.
    pub fn loss(
        &self,
        reps: &Tensor,
        logits: Option<&Tensor>,
        y: &[u8],
        center: Option<&Center>,
    ) -> Result<(LossOutput, OutputGrad)> {
        let need_logits = || logits.ok_or_else(|| usage(format!("{} needs logits", self.label())));
        let need_center = || center.ok_or_else(|| usage(format!("{} needs a center", self.label())));
        Ok(match *self {
            Method::Hsc { radial } => {
                let out = hsc_loss(reps, y, radial)?;
                let g = OutputGrad::Reps(out.grad.clone());
                (out, g)
            }
            Method::Bce => {
                let out = bce_loss(need_logits()?, y)?;
                let g = OutputGrad::Logits(out.grad.clone());
                (out, g)
            }
            Method::Focal { gamma, alpha } => {
                let out = focal_loss(need_logits()?, y, gamma, alpha)?;
                let g = OutputGrad::Logits(out.grad.clone());
                (out, g)
            }
            Method::Dsvdd => {
                let out = dsvdd_loss(reps, need_center()?)?;
                let g = OutputGrad::Reps(out.grad.clone());
                (out, g)
            }
            Method::Dsad { eta, eps } => {
                let out = dsad_loss(reps, y, need_center()?, eta, eps)?;
                let g = OutputGrad::Reps(out.grad.clone());
                (out, g)
            }
        })
    }
}

/// Model output fed to [`anomaly_score`].
#[derive(Debug, Clone, Copy)]
pub enum ScoreInput<'a> {
    Reps(&'a Tensor),
    Logits(&'a Tensor),
}

/// Per-row anomaly scores, higher meaning more anomalous.
///
/// HSC scores `|z|^2` regardless of the radial kind used for training,
/// Deep SVDD / SAD score `|z - c|^2`, and classifiers score `-logit`.
pub fn anomaly_score(method: &Method, center: Option<&Center>, input: ScoreInput<'_>) -> Result<Vec<f64>> {
    match (method, input) {
        (Method::Hsc { .. }, ScoreInput::Reps(z)) => Ok((0..z.rows()).map(|i| sq_norm(z.row(i))).collect()),
        (Method::Dsvdd | Method::Dsad { .. }, ScoreInput::Reps(z)) => {
            let c = center.ok_or_else(|| usage("center-based score needs a center"))?;
            if c.dim() != z.row_len() {
                return Err(usage("center dimension does not match representations"));
            }
            Ok((0..z.rows()).map(|i| sq_dist(z.row(i), c.as_slice())).collect())
        }
        (Method::Bce | Method::Focal { .. }, ScoreInput::Logits(t)) => Ok(t.data().iter().map(|v| -v).collect()),
        (m, _) => Err(usage(format!("{} cannot be scored from this output kind", m.label()))),
    }
}

/// Image embedding `u` and text candidate embeddings `v`, all unit-norm.
/// The last candidate is the catch-all ("something") prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    u: Vec<f64>,
    v: Vec<Vec<f64>>,
}

impl EmbeddingPair {
    pub fn new(u: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self> {
        if v.len() < 2 {
            return Err(usage(format!("need at least 2 text candidates, got {}", v.len())));
        }
        let unit = |x: &[f64]| (sq_norm(x).sqrt() - 1.0).abs() <= 1e-6;
        if !unit(&u) || v.iter().any(|x| !unit(x)) {
            return Err(Error::Input("embeddings must have unit L2 norm".into()));
        }
        if v.iter().any(|x| x.len() != u.len()) {
            return Err(Error::Input("embedding dimensions differ".into()));
        }
        Ok(Self { u, v })
    }

    pub fn candidates(&self) -> usize {
        self.v.len()
    }

    pub fn similarities(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.iter().zip(&self.u).map(|(a, b)| a * b).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipMode {
    /// `(normal class, something)`.
    OneVsRest,
    /// `(normal class 1..K, something)`.
    LeaveOneOut { normal_classes: usize },
}

/// Temperature applied to cosine similarities.
pub const CLIP_LOGIT_SCALE: f64 = 100.0;

/// Softmax over `100 * cos(u, v_k)` for every candidate.
pub fn clip_candidate_probabilities(pair: &EmbeddingPair) -> Vec<f64> {
    let logits: Vec<f64> = pair.similarities().iter().map(|s| s * CLIP_LOGIT_SCALE).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Probability mass of the catch-all candidate: the zero-shot anomaly score.
pub fn clip_anomaly_score(pair: &EmbeddingPair, mode: ClipMode) -> Result<f64> {
    let expected = match mode {
        ClipMode::OneVsRest => 2,
        ClipMode::LeaveOneOut { normal_classes } => normal_classes + 1,
    };
    if pair.candidates() != expected {
        return Err(usage(format!(
            "{mode:?} needs {expected} text candidates, got {}",
            pair.candidates()
        )));
    }
    Ok(*clip_candidate_probabilities(pair).last().expect("at least two candidates"))
}
