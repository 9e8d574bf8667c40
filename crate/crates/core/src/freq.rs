//! Low-pass and high-pass corruption of images in the centered 2-D spectrum.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledSet, ProtocolSplit};
use crate::error::{config, Error, Result};
use crate::nn::Tensor;

/// Dense `H x W` complex spectrum in natural (DC at `[0, 0]`) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    /// Number of coefficients with modulus above `tol`.
    pub fn support(&self, tol: f64) -> usize {
        self.data.iter().filter(|c| c.norm() > tol).count()
    }
}

fn transform(height: usize, width: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row_fft.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
    let scale = 1.0 / ((height * width) as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
}

fn image_dims(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        &[h, w] => Ok((h, w)),
        other => Err(config(format!("expected an H x W image, got shape {other:?}"))),
    }
}

/// Unitary forward 2-D DFT.
pub fn fft2(x: &Tensor) -> Result<Spectrum> {
    let (height, width) = image_dims(x)?;
    let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(height, width, &mut data, false);
    Ok(Spectrum { height, width, data })
}

/// Unitary inverse 2-D DFT; the imaginary residue is dropped.
pub fn ifft2(spectrum: &Spectrum) -> Tensor {
    let mut data = spectrum.data.clone();
    transform(spectrum.height, spectrum.width, &mut data, true);
    Tensor::from_parts_unchecked(vec![spectrum.height, spectrum.width], data.iter().map(|c| c.re).collect())
}

/// Maps a row/column index of the centered layout back to natural order.
fn unshift(index: usize, n: usize) -> usize {
    (index + n - n / 2) % n
}

/// Keeps only the centered rows `[r0, r1)` x columns `[c0, c1)` (`keep = true`)
/// or zeros exactly that block (`keep = false`).
fn mask_block(spec: &mut Spectrum, rows: (usize, usize), cols: (usize, usize), keep: bool) {
    let (h, w) = (spec.height, spec.width);
    for sr in 0..h {
        let in_rows = (rows.0..rows.1).contains(&sr);
        let r = unshift(sr, h);
        for sc in 0..w {
            let inside = in_rows && (cols.0..cols.1).contains(&sc);
            if inside != keep {
                spec.data[r * w + unshift(sc, w)] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Spectrum of `x` with the LPF mask applied, before the inverse transform.
///
/// [`lpf`] returns the real part of its inverse. On even sides the surviving
/// block is not conjugate-symmetric, so the spectrum of that real image also
/// holds the mirrored bins.
pub fn lpf_spectrum(x: &Tensor, m: usize) -> Result<Spectrum> {
    let (h, w) = image_dims(x)?;
    if 2 * m >= h.min(w) {
        return Err(config(format!("LPF magnitude {m} too large for {h}x{w}")));
    }
    let mut spec = fft2(x)?;
    mask_block(&mut spec, (m, h - m), (m, w - m), true);
    Ok(spec)
}

/// Spectrum of `x` with the HPF mask applied, before the inverse transform.
pub fn hpf_spectrum(x: &Tensor, m: usize) -> Result<Spectrum> {
    let (h, w) = image_dims(x)?;
    if m > h.min(w) {
        return Err(config(format!("HPF magnitude {m} too large for {h}x{w}")));
    }
    let mut spec = fft2(x)?;
    let r0 = (h - m) / 2;
    let c0 = (w - m) / 2;
    mask_block(&mut spec, (r0, r0 + m), (c0, c0 + m), false);
    Ok(spec)
}

/// Removes the outer `m` rows and columns of the centered spectrum.
pub fn lpf(x: &Tensor, m: usize) -> Result<Tensor> {
    if m == 0 {
        image_dims(x)?;
        return Ok(x.clone());
    }
    Ok(ifft2(&lpf_spectrum(x, m)?))
}

/// Removes the central `m x m` block of the centered spectrum, anchored at
/// `floor((H - m) / 2)`.
pub fn hpf(x: &Tensor, m: usize) -> Result<Tensor> {
    if m == 0 {
        image_dims(x)?;
        return Ok(x.clone());
    }
    Ok(ifft2(&hpf_spectrum(x, m)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lpf,
    Hpf,
    #[default]
    None,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lpf" => Ok(Self::Lpf),
            "hpf" => Ok(Self::Hpf),
            "none" => Ok(Self::None),
            other => Err(config(format!("unknown filter kind '{other}'"))),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lpf => "lpf",
            Self::Hpf => "hpf",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub magnitude: usize,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, magnitude: usize) -> Self {
        Self { kind, magnitude }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == FilterKind::None || self.magnitude == 0
    }

    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        let side = height.min(width);
        match self.kind {
            FilterKind::Lpf if 2 * self.magnitude >= side => {
                Err(config(format!("LPF magnitude {} needs 2m < {side}", self.magnitude)))
            }
            FilterKind::Hpf if self.magnitude > side => {
                Err(config(format!("HPF magnitude {} needs m <= {side}", self.magnitude)))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        match self.kind {
            FilterKind::Lpf => lpf(image, self.magnitude),
            FilterKind::Hpf => hpf(image, self.magnitude),
            FilterKind::None => Ok(image.clone()),
        }
    }
}

fn filter_set(set: &LabeledSet, spec: FilterSpec) -> Result<LabeledSet> {
    let (h, w) = set.image_shape.ok_or_else(|| config("filtering needs image-shaped samples"))?;
    spec.check(h, w)?;
    let mut out = set.clone();
    for i in 0..set.len() {
        let image = Tensor::from_parts_unchecked(vec![h, w], set.x.row(i).to_vec());
        let filtered = spec.apply(&image)?;
        if !filtered.all_finite() {
            return Err(Error::Input(format!("filter produced non-finite values in sample {i}")));
        }
        out.x.row_mut(i).copy_from_slice(filtered.data());
    }
    Ok(out)
}

/// Filters every image of all three subsets identically; labels are untouched.
pub fn filter_dataset(split: &ProtocolSplit, spec: FilterSpec) -> Result<ProtocolSplit> {
    if spec.is_identity() {
        return Ok(split.clone());
    }
    Ok(ProtocolSplit {
        train_normal: filter_set(&split.train_normal, spec)?,
        oe: if split.oe.is_empty() { split.oe.clone() } else { filter_set(&split.oe, spec)? },
        test: filter_set(&split.test, spec)?,
    })
}

/// Scalar mean and (population) standard deviation over the training inputs.
pub fn training_moments(split: &ProtocolSplit) -> (f64, f64) {
    let values = || split.train_normal.x.data().iter().chain(split.oe.x.data());
    let n = values().count() as f64;
    let mean = values().sum::<f64>() / n;
    let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shifts and scales every subset by the training moments.
pub fn standardize(split: &ProtocolSplit) -> ProtocolSplit {
    let (mean, std) = training_moments(split);
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    let apply = |set: &LabeledSet| {
        let mut out = set.clone();
        out.x.data_mut().iter_mut().for_each(|v| *v = (*v - mean) * scale);
        out
    };
    ProtocolSplit { train_normal: apply(&split.train_normal), oe: apply(&split.oe), test: apply(&split.test) }
}

/// Filter followed by standardization; the identity filter leaves pixels as they are.
pub fn prepare_split(split: &ProtocolSplit, spec: FilterSpec) -> Result<ProtocolSplit> {
    if spec.is_identity() {
        return Ok(split.clone());
    }
    Ok(standardize(&filter_dataset(split, spec)?))
}
