//! Data loading and benchmark protocol assembly.

mod idx;
mod protocol;
mod sampling;
mod toy;

pub use idx::{parse_idx, read_idx, write_idx_images, write_idx_labels, IdxData, IMAGES_MAGIC, LABELS_MAGIC};
pub use protocol::{
    grayscale_from_rgb, make_leave_one_out, make_one_vs_rest, ImageSet, LabeledSet, ProtocolSplit, RawDataset,
};
pub use sampling::{augment, balanced_batches, subsample_oe, subset_oe_classes, Batch, BatchSampler};
pub(crate) use sampling::augment_with;
pub use toy::{gen_toy2d, ToyGeometry, ToyKind, ToyScenario};

#[cfg(test)]
pub(crate) use protocol::fixtures;
