use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every output file is stamped with.
#[derive(Debug, Clone)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    /// Hash of the effective configuration, output location excluded.
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let mut canonical = cfg.clone();
        canonical.out_dir = Default::default();
        let digest = Sha256::digest(format!("{canonical:?}").as_bytes());
        Self { config_hash: hex::encode(&digest[..8]), seed: cfg.seed }
    }

    pub fn line(&self) -> String {
        format!("# version={VERSION}, config_hash={}, seed={}", self.config_hash, self.seed)
    }
}

/// Header, rows, optional comment lines, and the metadata line last.
pub fn csv(header: &[String], rows: &[Vec<String>], comments: &[String], meta: &Meta) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(&meta.line());
    out.push('\n');
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn fmt_all(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Least-squares slope of `ln y` against `ln x` over positive finite pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}
