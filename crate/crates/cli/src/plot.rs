//! Tidy long-format plot data derived from a finished run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::output::header_lines;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Mean-square displacement against `n`.
    Msd,
    /// `(log n)·p̂` of the window return against `n`.
    ReturnScaling,
    /// `j·P̂_{3^j}` per prefix against `j`.
    Triadic,
    /// KS distance against `n`.
    Ks,
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<PlotKind> {
        match s {
            "msd" => Ok(PlotKind::Msd),
            "return-scaling" => Ok(PlotKind::ReturnScaling),
            "triadic" => Ok(PlotKind::Triadic),
            "ks" => Ok(PlotKind::Ks),
            other => Err(CliError::UnknownPlot(other.to_string())),
        }
    }
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Msd => "msd",
            PlotKind::ReturnScaling => "return-scaling",
            PlotKind::Triadic => "triadic",
            PlotKind::Ks => "ks",
        }
    }

    /// Source file and its `(series, x, y, stderr)` columns.
    fn source(self) -> (&'static str, [&'static str; 3], Option<&'static str>) {
        match self {
            PlotKind::Msd => ("msd.csv", ["alpha", "n", "mean_msd"], Some("msd_stderr")),
            PlotKind::ReturnScaling => (
                "window_return.csv",
                ["alpha", "n", "scaled"],
                Some("scaled_stderr"),
            ),
            PlotKind::Triadic => ("triadic.csv", ["alpha", "j", "j_p_hat"], None),
            PlotKind::Ks => ("ks.csv", ["alpha", "n", "ks_distance"], None),
        }
    }
}

#[derive(Debug, Serialize)]
struct PlotRow<'a> {
    plot: &'a str,
    series: String,
    x: String,
    y: String,
    stderr: String,
}

/// Write `plot_<kind>.csv` next to the manifest and return its path.
pub fn emit_plot_data(manifest_path: &Path, kind: PlotKind) -> Result<PathBuf> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (file, [series, x, y], stderr) = kind.source();
    if !manifest.outputs.iter().any(|o| o.name == file) {
        return Err(CliError::MissingOutput(file.to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.join(file))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingOutput(format!("{file}:{name}")))
    };
    let (si, xi, yi) = (col(series)?, col(x)?, col(y)?);
    let ei = stderr.map(col).transpose()?;

    let mut buf = Vec::new();
    let mut header = header_lines(
        manifest.experiment,
        &manifest.config_hash,
        manifest.master_seed,
    );
    header.push(format!("plot: {}", kind.name()));
    header.push(format!("x: {x}, y: {y}, series: {series}"));
    erwlab_core::io::write_comments(&mut buf, &header)?;
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        for record in reader.records() {
            let r = record?;
            w.serialize(PlotRow {
                plot: kind.name(),
                series: format!("{series}={}", &r[si]),
                x: r[xi].to_string(),
                y: r[yi].to_string(),
                stderr: ei.map(|i| r[i].to_string()).unwrap_or_default(),
            })?;
        }
        w.flush()?;
    }
    let out = dir.join(format!("plot_{}.csv", kind.name().replace('-', "_")));
    std::fs::write(&out, buf)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        for k in [
            PlotKind::Msd,
            PlotKind::ReturnScaling,
            PlotKind::Triadic,
            PlotKind::Ks,
        ] {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        let err = "histogram".parse::<PlotKind>().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
