//! Artifact writing. Every CSV starts with `#` comment lines carrying the
//! tool version, experiment, config hash and seed; JSON files carry the
//! hash as a key.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub name: String,
    /// SHA-256 of the non-comment lines.
    pub body_sha256: String,
}

pub struct ArtifactWriter {
    dir: PathBuf,
    header: Vec<String>,
    config_hash: String,
    outputs: Vec<OutputFile>,
}

impl ArtifactWriter {
    pub fn new(cfg: &ExperimentConfig) -> Result<ArtifactWriter> {
        fs::create_dir_all(&cfg.output_dir)?;
        let config_hash = cfg.hash();
        Ok(ArtifactWriter {
            dir: cfg.output_dir.clone(),
            header: header_lines(cfg.experiment(), &config_hash, cfg.master_seed),
            config_hash,
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn into_outputs(self) -> Vec<OutputFile> {
        self.outputs
    }

    /// Write rows under the standard header plus `extra` comment lines.
    pub fn csv<T, I>(&mut self, name: &str, extra: &[String], rows: I) -> Result<()>
    where
        T: Serialize,
        I: IntoIterator<Item = T>,
    {
        let mut buf = Vec::new();
        erwlab_core::io::write_comments(&mut buf, &self.header)?;
        erwlab_core::io::write_comments(&mut buf, extra)?;
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        self.finish(name, buf)
    }

    /// Write a file whose body comes from `body`; the standard header is
    /// passed to it as comment lines.
    pub fn csv_with<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>, &[String]) -> Result<()>,
    {
        let mut buf = Vec::new();
        body(&mut buf, &self.header)?;
        self.finish(name, buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            tool_version: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let mut buf = serde_json::to_vec_pretty(&Wrapped {
            config_hash: &self.config_hash,
            tool_version: VERSION,
            value,
        })?;
        buf.push(b'\n');
        self.finish(name, buf)
    }

    fn finish(&mut self, name: &str, buf: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = BufWriter::new(fs::File::create(&path)?);
        f.write_all(&buf)?;
        f.flush()?;
        self.outputs.push(OutputFile {
            name: name.to_string(),
            body_sha256: body_hash(&buf),
        });
        Ok(())
    }
}

pub fn header_lines(experiment: Experiment, config_hash: &str, seed: u64) -> Vec<String> {
    vec![
        format!("erwlab {VERSION}"),
        format!("experiment: {experiment}"),
        format!("config_hash: {config_hash}"),
        format!("seed: {seed}"),
    ]
}

/// Hash of the lines not starting with `#`.
pub fn body_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        if !line.starts_with(b"#") {
            h.update(line);
        }
    }
    hex::encode(h.finalize())
}

/// Non-comment lines of a CSV file.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
