#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use oe_lab::data::{write_idx_images, write_idx_labels};
use oe_lab::nn::Tensor;
use oe_lab_cli::{run, Cli};

/// Images whose class is a bright row; the noise is a fixed hash of the
/// pixel position so no RNG is needed.
fn class_images(classes: usize, per_class: usize, side: usize, seed: u64) -> (Tensor, Vec<u8>) {
    let n = classes * per_class;
    let labels: Vec<u8> = (0..n).map(|i| (i % classes) as u8).collect();
    let mut data = Vec::with_capacity(n * side * side);
    for (k, &c) in labels.iter().enumerate() {
        let stripe = (c as usize * side) / classes;
        for p in 0..side * side {
            let h = (k as u64 * 7919 + p as u64 * 104_729 + seed * 1_299_709) % 97;
            let noise = 0.4 * h as f64 / 97.0;
            data.push(if p / side == stripe { 0.6 + noise } else { noise });
        }
    }
    (Tensor::new(vec![n, side, side], data).unwrap(), labels)
}

fn write_dataset(root: &Path, name: &str, classes: usize, per_class: usize, seed: u64) {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for (split, s) in [("train", seed), ("t10k", seed + 1)] {
        let (x, y) = class_images(classes, per_class, 8, s);
        std::fs::write(dir.join(format!("{split}-images-idx3-ubyte")), write_idx_images(&x).unwrap()).unwrap();
        std::fs::write(dir.join(format!("{split}-labels-idx1-ubyte")), write_idx_labels(&y)).unwrap();
    }
}

/// Temp directory holding small 8x8 stand-ins for the default datasets.
pub struct Fixture {
    pub tmp: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&tmp.path().join("data"), "mnist", 3, 16, 1);
        write_dataset(&tmp.path().join("data"), "emnist_letters", 4, 12, 7);
        Self { tmp }
    }

    pub fn data(&self) -> PathBuf {
        self.tmp.path().join("data")
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    /// Small training settings shared by the image commands.
    pub fn base_sets(&self) -> Vec<String> {
        [
            format!("dataset.root={}", self.data().display()),
            "classes=0,1".into(),
            "seeds=0,1".into(),
            "threads=2".into(),
            "train.epochs=2".into(),
            "train.milestones=1".into(),
            "train.hidden=16".into(),
            "train.rep_dim=4".into(),
            "train.batch_normal=8".into(),
            "train.batch_oe=8".into(),
        ]
        .into()
    }

    /// Runs `oe-lab <command> --out <out> --set ...` and returns the output directory.
    pub fn run(&self, command: &str, out: &str, sets: &[&str]) -> anyhow::Result<PathBuf> {
        let mut args: Vec<String> = vec!["oe-lab".into(), command.into(), "--out".into()];
        args.push(self.out(out).display().to_string());
        for s in self.base_sets().iter().map(String::as_str).chain(sets.iter().copied()) {
            args.push("--set".into());
            args.push(s.to_string());
        }
        run(&Cli::try_parse_from(args)?).map(PathBuf::from)
    }
}

/// Checks that every opened tag is closed in order.
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

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Parsed run records of a `records.jsonl`, header line dropped.
pub fn records(dir: &Path) -> Vec<oe_lab::bench::RunRecord> {
    oe_lab_cli::report::read_records(&dir.join("records.jsonl")).unwrap()
}
