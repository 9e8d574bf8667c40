//! Output directory layout and record/summary writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use oe_lab::bench::{RunRecord, Summary};

use crate::config::CliConfig;

pub const HASH_PREFIX: usize = 12;
pub const SUMMARY_COLUMNS: [&str; 5] = ["group", "mean_auc", "std", "n", "per_class"];

/// Per-experiment directory `<out>/<config hash prefix>`.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub path: PathBuf,
    pub command: String,
    pub hash: String,
    config_dump: String,
    config_json: serde_json::Value,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, cfg: &CliConfig) -> Result<Self> {
        let hash = cfg.hash(command);
        let path = root.join(&hash[..HASH_PREFIX]);
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let dir = Self {
            path,
            command: command.to_string(),
            hash,
            config_dump: cfg.dump(),
            config_json: json!(cfg.entries()),
        };
        let mut text = format!("# command = {command}\n# config_hash = {}\n", dir.hash);
        text.push_str(&dir.config_dump);
        fs::write(dir.file("config.txt"), text)?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// `# `-prefixed header block for text outputs.
    pub fn comment_block(&self) -> String {
        let mut s = format!("# command = {}\n# config_hash = {}\n", self.command, self.hash);
        for line in self.config_dump.lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    pub fn header_json(&self) -> serde_json::Value {
        json!({ "command": self.command, "config_hash": self.hash, "config": self.config_json })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.file(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// JSON-lines file whose first line is `{"header": ...}`; records are
/// flushed as they arrive.
pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(dir: &OutputDir, name: &str) -> Result<Self> {
        let path = dir.file(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = Self { out: BufWriter::new(file) };
        w.line(&json!({ "header": dir.header_json() }))?;
        Ok(w)
    }

    pub fn line<T: serde::Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Wall-clock seconds per run, kept apart from the reproducible outputs.
pub struct TimingsWriter {
    out: csv::Writer<File>,
}

impl TimingsWriter {
    pub fn create(dir: &OutputDir) -> Result<Self> {
        let mut out = csv::Writer::from_path(dir.file("timings.csv"))?;
        out.write_record(["config_hash", "method", "class", "seed", "seconds"])?;
        Ok(Self { out })
    }

    pub fn record(&mut self, r: &RunRecord) -> Result<()> {
        self.out.write_record([
            r.config_hash.clone(),
            r.method.clone(),
            r.class.to_string(),
            r.seed.to_string(),
            format!("{:.3}", r.wall_clock_seconds),
        ])?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a CSV preceded by the config comment block.
pub fn write_csv(dir: &OutputDir, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.file(name);
    let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(dir.comment_block().as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn summary_rows(summaries: &[Summary]) -> Vec<Vec<String>> {
    summaries
        .iter()
        .map(|s| {
            vec![
                s.group.clone(),
                s.mean_auc.to_string(),
                s.std.to_string(),
                s.n.to_string(),
                serde_json::to_string(&s.per_class).expect("map serializes"),
            ]
        })
        .collect()
}

pub fn write_summary(dir: &OutputDir, name: &str, summaries: &[Summary]) -> Result<PathBuf> {
    write_csv(dir, name, &SUMMARY_COLUMNS, &summary_rows(summaries))
}

/// Reads a CSV written by [`write_csv`], skipping the comment block.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}
