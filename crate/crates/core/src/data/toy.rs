//! Two-dimensional toy scenarios contrasting OE that surrounds the normal
//! data (ideal) with OE concentrated on one side (skewed).

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::protocol::{LabeledSet, ProtocolSplit};
use crate::error::{config, Result};
use crate::nn::Tensor;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Ideal,
    Skewed,
}

/// Distribution parameters shared by both scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyGeometry {
    pub normal_sigma: f64,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    pub skew_center: (f64, f64),
    pub skew_sigma: f64,
}

impl Default for ToyGeometry {
    fn default() -> Self {
        Self {
            normal_sigma: 1.0,
            annulus_inner: 3.0,
            annulus_outer: 6.0,
            skew_center: (4.0, 0.0),
            skew_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyScenario {
    pub kind: ToyKind,
    pub n_normal: usize,
    pub n_oe: usize,
    /// Test normals and test anomalies each.
    pub n_test: usize,
    pub seed: u64,
    pub geometry: ToyGeometry,
}

impl ToyScenario {
    pub fn new(kind: ToyKind, n_normal: usize, n_oe: usize, n_test: usize, seed: u64) -> Self {
        Self { kind, n_normal, n_oe, n_test, seed, geometry: ToyGeometry::default() }
    }
}

fn gaussian(rng: &mut Rng, center: (f64, f64), sigma: f64) -> [f64; 2] {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    [center.0 + n.sample(rng), center.1 + n.sample(rng)]
}

/// Area-uniform point on the annulus `inner <= r <= outer`.
fn annulus(rng: &mut Rng, inner: f64, outer: f64) -> [f64; 2] {
    let r = rng.random_range(inner * inner..=outer * outer).sqrt();
    let theta = rng.random_range(0.0..2.0 * PI);
    [r * theta.cos(), r * theta.sin()]
}

fn labeled(points: Vec<[f64; 2]>, y: Vec<u8>) -> LabeledSet {
    let n = points.len();
    LabeledSet {
        x: Tensor::from_parts_unchecked(vec![n, 2], points.concat()),
        y,
        class: None,
        source_index: (0..n).collect(),
        image_shape: None,
    }
}

pub fn gen_toy2d(sc: &ToyScenario) -> Result<ProtocolSplit> {
    if sc.n_normal == 0 || sc.n_oe == 0 || sc.n_test == 0 {
        return Err(config("toy scenario counts must be >= 1"));
    }
    let g = sc.geometry;
    if !(g.normal_sigma > 0.0 && g.skew_sigma > 0.0 && 0.0 <= g.annulus_inner && g.annulus_inner < g.annulus_outer)
    {
        return Err(config("invalid toy geometry"));
    }
    let mut rng = rng::substream(sc.seed, rng::Stream::Toy);
    let normal: Vec<[f64; 2]> = (0..sc.n_normal).map(|_| gaussian(&mut rng, (0.0, 0.0), g.normal_sigma)).collect();
    let oe: Vec<[f64; 2]> = (0..sc.n_oe)
        .map(|_| match sc.kind {
            ToyKind::Ideal => annulus(&mut rng, g.annulus_inner, g.annulus_outer),
            ToyKind::Skewed => gaussian(&mut rng, g.skew_center, g.skew_sigma),
        })
        .collect();
    let mut test: Vec<[f64; 2]> = (0..sc.n_test).map(|_| gaussian(&mut rng, (0.0, 0.0), g.normal_sigma)).collect();
    test.extend((0..sc.n_test).map(|_| annulus(&mut rng, g.annulus_inner, g.annulus_outer)));
    let mut test_y = vec![1u8; sc.n_test];
    test_y.resize(2 * sc.n_test, 0);
    Ok(ProtocolSplit {
        train_normal: labeled(normal, vec![1; sc.n_normal]),
        oe: labeled(oe, vec![0; sc.n_oe]),
        test: labeled(test, test_y),
    })
}
