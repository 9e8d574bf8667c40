use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::idx::{read_idx, IdxData};
use crate::error::{config, Error, Result};
use crate::nn::Tensor;

/// Images `[N x H x W]` in `[0, 1]` with one class label each.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.shape().len() != 3 {
            return Err(config(format!("images must be [N x H x W], got {:?}", images.shape())));
        }
        if images.rows() != labels.len() {
            return Err(config(format!("{} images but {} labels", images.rows(), labels.len())));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("pixel values must lie in [0,1]".into()));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.images.shape()[1], self.images.shape()[2])
    }
}

/// A classification dataset with its train and test splits.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub name: String,
    pub train: ImageSet,
    pub test: ImageSet,
    pub num_classes: usize,
}

impl RawDataset {
    pub fn new(name: impl Into<String>, train: ImageSet, test: ImageSet) -> Result<Self> {
        if train.image_shape() != test.image_shape() {
            return Err(config("train and test images differ in size"));
        }
        let num_classes = train.labels.iter().chain(&test.labels).max().map_or(0, |m| m + 1);
        Ok(Self { name: name.into(), train, test, num_classes })
    }

    /// Loads `<root>/<name>/` holding `*train-images*`, `*train-labels*` and
    /// `*t10k-*` / `*test-*` IDX files (gzip allowed). EMNIST images are stored
    /// transposed and are flipped back.
    pub fn load(root: &Path, name: &str) -> Result<Self> {
        let dir = root.join(name);
        let entries: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| config(format!("cannot read dataset directory {}: {e}", dir.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        let find = |split: &[&str], kind: &str| -> Result<std::path::PathBuf> {
            let mut matches: Vec<&String> = entries
                .iter()
                .filter(|f| split.iter().any(|s| f.contains(s)) && f.contains(kind))
                .collect();
            matches.sort();
            matches
                .first()
                .map(|f| dir.join(f))
                .ok_or_else(|| config(format!("no {split:?} {kind} file in {}", dir.display())))
        };
        let transpose = name.to_ascii_lowercase().starts_with("emnist");
        let load_split = |split: &[&str]| -> Result<ImageSet> {
            let images = match read_idx(&find(split, "images")?)? {
                IdxData::Images(t) => t,
                IdxData::Labels(_) => return Err(config("expected an image file")),
            };
            let labels = match read_idx(&find(split, "labels")?)? {
                IdxData::Labels(l) => l.into_iter().map(usize::from).collect(),
                IdxData::Images(_) => return Err(config("expected a label file")),
            };
            let images = if transpose { transpose_images(images) } else { images };
            ImageSet::new(images, labels)
        };
        Self::new(name, load_split(&["train"])?, load_split(&["t10k", "test"])?)
    }

    /// Keeps at most `cap` training images per class (first occurrences).
    pub fn cap_train_per_class(&self, cap: usize) -> Self {
        let mut seen = vec![0usize; self.num_classes];
        let keep: Vec<usize> = (0..self.train.len())
            .filter(|&i| {
                let c = self.train.labels[i];
                seen[c] += 1;
                seen[c] <= cap
            })
            .collect();
        Self {
            name: self.name.clone(),
            train: ImageSet {
                images: self.train.images.select_rows(&keep),
                labels: keep.iter().map(|&i| self.train.labels[i]).collect(),
            },
            test: self.test.clone(),
            num_classes: self.num_classes,
        }
    }
}

fn transpose_images(images: Tensor) -> Tensor {
    let (n, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2]);
    let src = images.data();
    let mut out = vec![0.0; src.len()];
    for k in 0..n {
        for i in 0..h {
            for j in 0..w {
                out[k * h * w + j * h + i] = src[k * h * w + i * w + j];
            }
        }
    }
    Tensor::from_parts_unchecked(vec![n, w, h], out)
}

/// Converts `[N x H x W x 3]` RGB in `[0, 1]` to luma `0.299 R + 0.587 G + 0.114 B`.
pub fn grayscale_from_rgb(rgb: &Tensor) -> Result<Tensor> {
    let s = rgb.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(config(format!("expected [N x H x W x 3], got {s:?}")));
    }
    let data = rgb
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Tensor::new(vec![s[0], s[1], s[2]], data)
}

/// Flattened samples with binary labels (`1` normal, `0` anomalous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    /// `[n x d]`.
    pub x: Tensor,
    pub y: Vec<u8>,
    /// Original multiclass label per row, when known.
    pub class: Option<Vec<usize>>,
    /// Row index in the source split.
    pub source_index: Vec<usize>,
    /// `(height, width)` when rows are flattened images.
    pub image_shape: Option<(usize, usize)>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.row_len()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            class: self.class.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            source_index: indices.iter().map(|&i| self.source_index[i]).collect(),
            image_shape: self.image_shape,
        }
    }

    fn from_images(set: &ImageSet, rows: &[usize], y: impl Fn(usize) -> u8) -> Self {
        let (h, w) = set.image_shape();
        let x = set
            .images
            .select_rows(rows)
            .reshape(vec![rows.len(), h * w])
            .expect("flattening preserves size");
        Self {
            x,
            y: rows.iter().map(|&i| y(set.labels[i])).collect(),
            class: Some(rows.iter().map(|&i| set.labels[i]).collect()),
            source_index: rows.to_vec(),
            image_shape: Some((h, w)),
        }
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.class.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSplit {
    /// Normal training data, `y = 1`.
    pub train_normal: LabeledSet,
    /// Outlier Exposure samples, `y = 0`.
    pub oe: LabeledSet,
    /// Mixed test set.
    pub test: LabeledSet,
}

impl ProtocolSplit {
    /// Checks label conventions: train all normal, OE all anomalous, test mixed.
    pub fn validate(&self) -> Result<()> {
        if self.train_normal.is_empty() {
            return Err(config("empty normal training set"));
        }
        if self.train_normal.y.iter().any(|&y| y != 1) {
            return Err(config("training set contains non-normal labels"));
        }
        if self.oe.y.iter().any(|&y| y != 0) {
            return Err(config("OE set contains normal labels"));
        }
        let dims = [self.train_normal.dim(), self.oe.dim(), self.test.dim()];
        if (!self.oe.is_empty() && dims[0] != dims[1]) || dims[0] != dims[2] {
            return Err(config(format!("subset widths differ: {dims:?}")));
        }
        Ok(())
    }

    pub fn with_oe(&self, oe: LabeledSet) -> Self {
        Self { train_normal: self.train_normal.clone(), oe, test: self.test.clone() }
    }
}

fn oe_from(ds: &RawDataset, oe_source: &RawDataset) -> Result<LabeledSet> {
    if oe_source.name == ds.name {
        return Err(config(format!("OE source must differ from the benchmark dataset ({})", ds.name)));
    }
    if oe_source.train.image_shape() != ds.train.image_shape() {
        return Err(config("OE images differ in size from the benchmark images"));
    }
    let rows: Vec<usize> = (0..oe_source.train.len()).collect();
    Ok(LabeledSet::from_images(&oe_source.train, &rows, |_| 0))
}

/// One class normal, all other classes anomalous at test time.
pub fn make_one_vs_rest(ds: &RawDataset, normal_class: usize, oe_source: &RawDataset) -> Result<ProtocolSplit> {
    if normal_class >= ds.num_classes {
        return Err(config(format!("class {normal_class} out of range for {}", ds.name)));
    }
    let train_rows: Vec<usize> = (0..ds.train.len()).filter(|&i| ds.train.labels[i] == normal_class).collect();
    if train_rows.is_empty() {
        return Err(config(format!("class {normal_class} has no training images")));
    }
    let oe = oe_from(ds, oe_source)?;
    let test_rows: Vec<usize> = (0..ds.test.len()).collect();
    Ok(ProtocolSplit {
        train_normal: LabeledSet::from_images(&ds.train, &train_rows, |_| 1),
        oe,
        test: LabeledSet::from_images(&ds.test, &test_rows, |c| u8::from(c == normal_class)),
    })
}

/// All classes but one normal; the held-out class is the test anomaly.
pub fn make_leave_one_out(ds: &RawDataset, anomaly_class: usize, oe_source: &RawDataset) -> Result<ProtocolSplit> {
    if anomaly_class >= ds.num_classes {
        return Err(config(format!("class {anomaly_class} out of range for {}", ds.name)));
    }
    let train_rows: Vec<usize> = (0..ds.train.len()).filter(|&i| ds.train.labels[i] != anomaly_class).collect();
    if train_rows.is_empty() {
        return Err(config("no normal training images remain"));
    }
    let oe = oe_from(ds, oe_source)?;
    let test_rows: Vec<usize> = (0..ds.test.len()).collect();
    Ok(ProtocolSplit {
        train_normal: LabeledSet::from_images(&ds.train, &train_rows, |_| 1),
        oe,
        test: LabeledSet::from_images(&ds.test, &test_rows, |c| u8::from(c != anomaly_class)),
    })
}
