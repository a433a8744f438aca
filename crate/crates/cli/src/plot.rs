//! Tidy CSVs for external plotting, derived from a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use affine_levy::simulate::ShortRatePaths;
use clap::ValueEnum;
use thiserror::Error;

use crate::runner::PATHS_FILE;

pub const FAN_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Laplace,
    Term,
    Fan,
    Canonical,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Laplace => "laplace",
            PlotKind::Term => "term",
            PlotKind::Fan => "fan",
            PlotKind::Canonical => "canonical",
        }
    }

    /// Run artifact the plot is derived from, and the analysis producing it.
    fn source(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Laplace => ("laplace.csv", "validate"),
            PlotKind::Term => ("term_structure.csv", "price"),
            PlotKind::Fan => (PATHS_FILE, "simulate"),
            PlotKind::Canonical => ("canonical_fit.csv", "canonicalize"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("missing result {file} in {dir}; run the `{analysis}` analysis first")]
    Missing {
        dir: String,
        file: String,
        analysis: String,
    },
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("corrupt paths file: {0}")]
    Decode(String),
}

/// Writes `plot_<which>.csv` into `dir` and returns its path.
pub fn emit_plot_data(dir: &Path, which: PlotKind) -> Result<PathBuf, PlotError> {
    let (file, analysis) = which.source();
    let src = dir.join(file);
    if !src.is_file() {
        return Err(PlotError::Missing {
            dir: dir.display().to_string(),
            file: file.into(),
            analysis: analysis.into(),
        });
    }
    let io = |e| PlotError::Io(src.display().to_string(), e);
    let body = match which {
        PlotKind::Fan => {
            let bytes = fs::read(&src).map_err(io)?;
            let paths = ShortRatePaths::from_binary(&bytes).map_err(|e| PlotError::Decode(e.to_string()))?;
            fan_csv(&paths)
        }
        _ => fs::read_to_string(&src).map_err(io)?,
    };
    let out = dir.join(format!("plot_{}.csv", which.name()));
    fs::write(&out, body).map_err(|e| PlotError::Io(out.display().to_string(), e))?;
    Ok(out)
}

pub fn fan_csv(paths: &ShortRatePaths) -> String {
    let mut out = String::from("t,q05,q25,q50,q75,q95\n");
    for (t, q) in paths.times.iter().zip(paths.fan(&FAN_PROBS)) {
        let _ = write!(out, "{t}");
        for v in q {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
