//! OE subsampling, class-diversity control, balanced batching and noise augmentation.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::protocol::LabeledSet;
use crate::error::{config, Result};
use crate::nn::Tensor;
use crate::rng::{self, Rng};

/// Uniform draw of `count` OE rows without replacement, returned in source order.
pub fn subsample_oe(oe: &LabeledSet, count: usize, seed: u64) -> Result<LabeledSet> {
    if count == 0 || count > oe.len() {
        return Err(config(format!("OE subsample size {count} outside 1..={}", oe.len())));
    }
    let mut rng = rng::substream(seed, rng::Stream::OeSubsample);
    let mut picked = index::sample(&mut rng, oe.len(), count).into_vec();
    picked.sort_unstable();
    Ok(oe.select(&picked))
}

/// Union of all OE rows belonging to `k` uniformly chosen distinct classes.
pub fn subset_oe_classes(oe: &LabeledSet, k: usize, seed: u64) -> Result<LabeledSet> {
    let classes: Vec<usize> = oe.classes().into_iter().collect();
    if classes.is_empty() {
        return Err(config("OE set carries no class labels"));
    }
    if k == 0 || k > classes.len() {
        return Err(config(format!("OE class count {k} outside 1..={}", classes.len())));
    }
    let mut rng = rng::substream(seed, rng::Stream::OeClasses);
    let chosen: Vec<usize> = index::sample(&mut rng, classes.len(), k).into_iter().map(|i| classes[i]).collect();
    let labels = oe.class.as_ref().expect("checked above");
    let rows: Vec<usize> = (0..oe.len()).filter(|&i| chosen.contains(&labels[i])).collect();
    Ok(oe.select(&rows))
}

/// One training batch: normal rows first, then OE rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub y: Vec<u8>,
    pub normal_rows: Vec<usize>,
    pub oe_rows: Vec<usize>,
}

/// Stateful sampler producing class-balanced epochs.
///
/// An epoch walks a fresh permutation of the normal set in chunks of
/// `batch_normal`; a short final chunk is topped up with uniform draws. OE
/// rows come from a shuffled cycle that is reshuffled whenever exhausted, so
/// a small OE set is repeated as often as needed.
#[derive(Debug)]
pub struct BatchSampler<'a> {
    normal: &'a LabeledSet,
    oe: Option<&'a LabeledSet>,
    batch_normal: usize,
    batch_oe: usize,
    normal_rng: Rng,
    oe_rng: Rng,
    oe_cycle: Vec<usize>,
    oe_cursor: usize,
}

impl<'a> BatchSampler<'a> {
    /// `oe = None` (or `batch_oe = 0`) yields normal-only batches.
    pub fn new(
        normal: &'a LabeledSet,
        oe: Option<&'a LabeledSet>,
        batch_normal: usize,
        batch_oe: usize,
        seed: u64,
    ) -> Result<Self> {
        if normal.is_empty() || batch_normal == 0 {
            return Err(config("balanced batching needs normal samples and batch_normal > 0"));
        }
        let oe = oe.filter(|_| batch_oe > 0);
        if let Some(o) = oe {
            if o.is_empty() {
                return Err(config("balanced batching needs a non-empty OE set"));
            }
            if o.dim() != normal.dim() {
                return Err(config("normal and OE widths differ"));
            }
        }
        let mut batching = rng::substream(seed, rng::Stream::Batching);
        let normal_rng = rng::seeded(batching.random());
        let oe_rng = rng::seeded(batching.random());
        Ok(Self {
            normal,
            oe,
            batch_normal,
            batch_oe: if oe.is_some() { batch_oe } else { 0 },
            normal_rng,
            oe_rng,
            oe_cycle: Vec::new(),
            oe_cursor: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.normal.len().div_ceil(self.batch_normal)
    }

    fn next_oe(&mut self) -> usize {
        if self.oe_cursor == self.oe_cycle.len() {
            let n = self.oe.map_or(0, |o| o.len());
            self.oe_cycle = (0..n).collect();
            self.oe_cycle.shuffle(&mut self.oe_rng);
            self.oe_cursor = 0;
        }
        self.oe_cursor += 1;
        self.oe_cycle[self.oe_cursor - 1]
    }

    /// Materializes the batches of the next epoch.
    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let n = self.normal.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.normal_rng);
        let mut batches = Vec::with_capacity(self.batches_per_epoch());
        for chunk in order.chunks(self.batch_normal) {
            let mut normal_rows = chunk.to_vec();
            while normal_rows.len() < self.batch_normal {
                normal_rows.push(self.normal_rng.random_range(0..n));
            }
            let oe_rows: Vec<usize> = (0..self.batch_oe).map(|_| self.next_oe()).collect();
            batches.push(self.assemble(normal_rows, oe_rows));
        }
        batches
    }

    fn assemble(&self, normal_rows: Vec<usize>, oe_rows: Vec<usize>) -> Batch {
        let d = self.normal.dim();
        let mut data = Vec::with_capacity((normal_rows.len() + oe_rows.len()) * d);
        for &i in &normal_rows {
            data.extend_from_slice(self.normal.x.row(i));
        }
        if let Some(oe) = self.oe {
            for &i in &oe_rows {
                data.extend_from_slice(oe.x.row(i));
            }
        }
        let rows = normal_rows.len() + oe_rows.len();
        let mut y = vec![1u8; normal_rows.len()];
        y.resize(rows, 0);
        Batch { x: Tensor::from_parts_unchecked(vec![rows, d], data), y, normal_rows, oe_rows }
    }
}

/// First epoch of a [`BatchSampler`].
pub fn balanced_batches(
    train_normal: &LabeledSet,
    oe: &LabeledSet,
    batch_normal: usize,
    batch_oe: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    Ok(BatchSampler::new(train_normal, Some(oe), batch_normal, batch_oe, seed)?.next_epoch())
}

/// Adds `N(0, sigma^2)` pixel noise and clamps to `[0, 1]`; `sigma = 0` is the identity.
pub fn augment(batch: &Tensor, noise_sigma: f64, seed: u64) -> Result<Tensor> {
    let mut rng = rng::substream(seed, rng::Stream::Augment);
    augment_with(batch, noise_sigma, &mut rng)
}

pub(crate) fn augment_with(batch: &Tensor, noise_sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if noise_sigma == 0.0 {
        return Ok(batch.clone());
    }
    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let data = batch.data().iter().map(|v| (v + normal.sample(rng)).clamp(0.0, 1.0)).collect();
    Ok(Tensor::from_parts_unchecked(batch.shape().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, d: usize, y: u8, classes: usize) -> LabeledSet {
        let data = (0..n * d).map(|i| (i % 97) as f64 / 97.0).collect();
        LabeledSet {
            x: Tensor::new(vec![n, d], data).unwrap(),
            y: vec![y; n],
            class: Some((0..n).map(|i| i % classes).collect()),
            source_index: (0..n).collect(),
            image_shape: None,
        }
    }

    #[test]
    fn subsample_full_and_deterministic() {
        let oe = set(10, 3, 0, 5);
        assert_eq!(subsample_oe(&oe, 10, 4).unwrap(), oe);
        assert_eq!(subsample_oe(&oe, 3, 7).unwrap(), subsample_oe(&oe, 3, 7).unwrap());
        assert!(subsample_oe(&oe, 11, 0).is_err());
        assert!(subsample_oe(&oe, 0, 0).is_err());
    }

    #[test]
    fn subsample_single_is_uniform() {
        let oe = set(10, 1, 0, 10);
        let collisions = (0..1000u64)
            .filter(|&s| {
                let a = subsample_oe(&oe, 1, 2 * s).unwrap().source_index[0];
                let b = subsample_oe(&oe, 1, 2 * s + 1).unwrap().source_index[0];
                a == b
            })
            .count();
        let rate = collisions as f64 / 1000.0;
        assert!((rate - 0.1).abs() <= 0.03, "collision rate {rate}");
    }

    #[test]
    fn class_subsets() {
        let oe = set(30, 2, 0, 6);
        assert_eq!(subset_oe_classes(&oe, 6, 1).unwrap(), oe);
        let one = subset_oe_classes(&oe, 1, 3).unwrap();
        assert_eq!(one.classes().len(), 1);
        assert_eq!(one.len(), 5);
        assert_eq!(subset_oe_classes(&oe, 2, 9).unwrap(), subset_oe_classes(&oe, 2, 9).unwrap());
        assert!(subset_oe_classes(&oe, 7, 0).is_err());
        assert!(subset_oe_classes(&oe, 0, 0).is_err());
    }

    #[test]
    fn batches_are_balanced_and_cover_every_normal() {
        let normal = set(512, 4, 1, 1);
        let oe = set(300, 4, 0, 3);
        let batches = balanced_batches(&normal, &oe, 128, 128, 5).unwrap();
        assert_eq!(batches.len(), 4);
        let mut seen = vec![0usize; 512];
        for b in &batches {
            assert_eq!(b.y.iter().filter(|&&y| y == 1).count(), 128);
            assert_eq!(b.y.iter().filter(|&&y| y == 0).count(), 128);
            assert_eq!(b.x.shape(), &[256, 4]);
            b.normal_rows.iter().for_each(|&i| seen[i] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn partial_final_batch_is_topped_up() {
        let normal = set(300, 2, 1, 1);
        let oe = set(40, 2, 0, 2);
        let batches = balanced_batches(&normal, &oe, 128, 64, 1).unwrap();
        assert_eq!(batches.len(), 3);
        let mut seen = vec![0usize; 300];
        for b in &batches {
            assert_eq!(b.normal_rows.len(), 128);
            assert_eq!(b.oe_rows.len(), 64);
        }
        batches.iter().flat_map(|b| &b.normal_rows).for_each(|&i| seen[i] += 1);
        assert!(seen.iter().all(|&c| c >= 1));
        assert_eq!(seen.iter().sum::<usize>(), 3 * 128);
    }

    #[test]
    fn single_oe_sample_repeats() {
        let normal = set(200, 3, 1, 1);
        let oe = set(1, 3, 0, 1);
        for b in balanced_batches(&normal, &oe, 64, 64, 2).unwrap() {
            assert!(b.oe_rows.iter().all(|&i| i == 0));
            for r in 64..128 {
                assert_eq!(b.x.row(r), oe.x.row(0));
            }
        }
    }

    #[test]
    fn normal_only_sampler() {
        let normal = set(10, 2, 1, 1);
        let mut s = BatchSampler::new(&normal, None, 4, 4, 0).unwrap();
        let e = s.next_epoch();
        assert_eq!(e.len(), 3);
        assert!(e.iter().all(|b| b.y.iter().all(|&y| y == 1) && b.y.len() == 4));
    }

    #[test]
    fn augment_properties() {
        let x = Tensor::filled(vec![1000, 100], 0.5);
        assert_eq!(augment(&x, 0.0, 3).unwrap(), x);
        let noisy = augment(&x, 0.1, 3).unwrap();
        assert!(noisy.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let n = noisy.len() as f64;
        let mean = noisy.data().iter().sum::<f64>() / n;
        let std = (noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.1).abs() <= 0.005, "std {std}");
        let edge = augment(&Tensor::filled(vec![10, 10], 1.0), 0.5, 1).unwrap();
        assert!(edge.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(augment(&x, -1.0, 0).is_err());
    }
}
