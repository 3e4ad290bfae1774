//! Expert prediction tables and the structural constants derived from them.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::debruijn::{enumerate_states, HistoryState};
use crate::error::{Error, Result};
use crate::linalg::sym_min_eigenvalue;

/// Largest denominator tried when detecting a common rational grid.
const MAX_GRID: u32 = 64;
const GRID_TOL: f64 = 1e-9;

/// The table `q: B^d -> [-1,1]^n`, one row per history window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPanel {
    n: usize,
    d: usize,
    rows: Vec<Vec<f64>>,
    /// Common denominator `D` when every entry is `k/D`.
    grid: Option<u32>,
}

impl ExpertPanel {
    /// Rows are indexed by state code. A common grid `k/D` with `D <= 64`
    /// is detected automatically.
    pub fn new(n: usize, d: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidPanel(format!("need at least two experts, got {n}")));
        }
        let states = enumerate_states(d)?;
        if rows.len() != states.len() {
            return Err(Error::InvalidPanel(format!(
                "expected {} rows for d = {d}, got {}",
                states.len(),
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidPanel(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
                return Err(Error::InvalidPanel(format!("row {i}: prediction {v} outside [-1, 1]")));
            }
        }
        let grid = detect_grid(&rows);
        Ok(Self { n, d, rows, grid })
    }

    /// Entries given as integer numerators over `denominator`.
    pub fn on_grid(n: usize, d: usize, denominator: u32, numerators: &[Vec<i64>]) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidPanel("grid denominator must be positive".into()));
        }
        let rows = numerators
            .iter()
            .map(|r| r.iter().map(|&k| k as f64 / denominator as f64).collect())
            .collect();
        let mut panel = Self::new(n, d, rows)?;
        panel.grid = Some(denominator);
        Ok(panel)
    }

    /// Each expert predicts a constant, whatever the history.
    pub fn constant(d: usize, values: &[f64]) -> Result<Self> {
        let rows = vec![values.to_vec(); 1 << d.min(31)];
        Self::new(values.len(), d, rows)
    }

    /// Expert `j` predicts `amplitude_j` times the product of the history
    /// moves selected by `mask_j` (bit 0 = newest move). An empty mask gives
    /// a constant expert.
    pub fn parity(d: usize, masks: &[u32], amplitudes: &[f64]) -> Result<Self> {
        if masks.len() != amplitudes.len() {
            return Err(Error::InvalidPanel("one amplitude per parity mask".into()));
        }
        let states = enumerate_states(d)?;
        let rows = states
            .iter()
            .map(|m| {
                masks
                    .iter()
                    .zip(amplitudes)
                    .map(|(&mask, &a)| {
                        let odd_minus = (!m.code() & mask & ((1u32 << d) - 1)).count_ones() % 2 == 1;
                        if odd_minus {
                            -a
                        } else {
                            a
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(masks.len(), d, rows)
    }

    /// Reproducible random panel with entries `k/D`, `k` uniform in `[-D, D]`.
    pub fn random_grid(n: usize, d: usize, denominator: u32, seed: u64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidPanel("grid denominator must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dd = i64::from(denominator);
        let numerators: Vec<Vec<i64>> = (0..1usize << d)
            .map(|_| (0..n).map(|_| rng.random_range(-dd..=dd)).collect())
            .collect();
        Self::on_grid(n, d, denominator, &numerators)
    }

    pub fn experts(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> Option<u32> {
        self.grid
    }

    pub fn states(&self) -> Vec<HistoryState> {
        enumerate_states(self.d).expect("window validated at construction")
    }

    #[inline]
    pub fn q(&self, m: HistoryState) -> &[f64] {
        &self.rows[m.index()]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `r(m) = (q_1 - q_n, ..., q_{n-1} - q_n)`.
    pub fn r(&self, m: HistoryState) -> Vec<f64> {
        let q = self.q(m);
        let last = q[self.n - 1];
        q[..self.n - 1].iter().map(|v| v - last).collect()
    }

    /// Integer numerators of `q(m)` on the panel grid.
    pub fn numerators(&self, m: HistoryState) -> Option<Vec<i64>> {
        let d = f64::from(self.grid?);
        Some(self.q(m).iter().map(|v| (v * d).round() as i64).collect())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::PanelParse {
            line: 1,
            msg: "missing header \"n d D\"".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::PanelParse { line: hline, msg: "header must be \"n d D\"".into() });
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| Error::PanelParse {
                line: hline,
                msg: format!("bad {what}: {s:?}"),
            })
        };
        let n = num(fields[0], "expert count")? as usize;
        let d = num(fields[1], "window length")? as usize;
        let denom = num(fields[2], "denominator")? as u32;
        let states = enumerate_states(d).map_err(|e| Error::PanelParse { line: hline, msg: e.to_string() })?;

        let mut rows = Vec::with_capacity(states.len());
        for expected in &states {
            let (ln, line) = lines.next().ok_or(Error::PanelParse {
                line: hline,
                msg: format!("missing row for state {expected}"),
            })?;
            let mut parts = line.split_whitespace();
            let state: HistoryState = parts
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|e: Error| Error::PanelParse { line: ln, msg: e.to_string() })?;
            if state != *expected {
                return Err(Error::PanelParse {
                    line: ln,
                    msg: format!("expected state {expected}, found {state} (rows must be in canonical order)"),
                });
            }
            let mut row = Vec::with_capacity(n);
            for tok in parts {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::PanelParse { line: ln, msg: format!("bad prediction {tok:?}") })?;
                let v = if denom > 0 {
                    let k = (v * f64::from(denom)).round();
                    if (v * f64::from(denom) - k).abs() > GRID_TOL {
                        return Err(Error::PanelParse {
                            line: ln,
                            msg: format!("{tok} is not on the grid 1/{denom}"),
                        });
                    }
                    k / f64::from(denom)
                } else {
                    v
                };
                row.push(v);
            }
            if row.len() != n {
                return Err(Error::PanelParse {
                    line: ln,
                    msg: format!("expected {n} predictions, found {}", row.len()),
                });
            }
            rows.push(row);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::PanelParse { line: ln, msg: "unexpected trailing row".into() });
        }
        let mut panel = Self::new(n, d, rows).map_err(|e| Error::PanelParse { line: hline, msg: e.to_string() })?;
        if denom > 0 {
            panel.grid = Some(denom);
        }
        Ok(panel)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n, self.d, self.grid.unwrap_or(0));
        for m in self.states() {
            let _ = write!(out, "{m}");
            for v in self.q(m) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn vartheta(&self) -> f64 {
        self.rows
            .iter()
            .map(|q| {
                let plus: f64 = q.iter().map(|v| 1.0 - v.max(0.0)).sum();
                let minus: f64 = q.iter().map(|v| 1.0 + v.min(0.0)).sum();
                plus.min(minus)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn r_table(&self) -> Vec<Vec<f64>> {
        self.states().into_iter().map(|m| self.r(m)).collect()
    }

    /// `A = 2^{-(d+1)} Σ_m r(m) ⊗ r(m)`.
    pub fn diffusion_matrix(&self) -> DMatrix<f64> {
        outer_average(self.r_table().iter().map(Vec::as_slice), self.n - 1, self.d)
    }

    /// `B = 2^{-(d+1)} Σ_m q(m) ⊗ q(m)`.
    pub fn prediction_matrix(&self) -> DMatrix<f64> {
        outer_average(self.rows.iter().map(Vec::as_slice), self.n, self.d)
    }

    pub fn diagnostics(&self) -> PanelDiagnostics {
        let a = self.diffusion_matrix();
        let b = self.prediction_matrix();
        let vartheta = self.vartheta();
        let lambda_min = sym_min_eigenvalue(&a);
        let lambda_min_b = sym_min_eigenvalue(&b);
        PanelDiagnostics {
            vartheta,
            r_table: self.r_table(),
            lambda_min,
            lambda_min_b,
            e1_holds: vartheta > 0.0,
            e2_holds: lambda_min > ELLIPTIC_FLOOR,
            a,
            b,
        }
    }
}

/// Smallest eigenvalue treated as strictly positive.
pub const ELLIPTIC_FLOOR: f64 = 1e-12;

fn outer_average<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize, d: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(dim, dim);
    for v in vectors {
        for i in 0..dim {
            for j in 0..dim {
                acc[(i, j)] += v[i] * v[j];
            }
        }
    }
    acc / (2f64).powi(d as i32 + 1)
}

fn detect_grid(rows: &[Vec<f64>]) -> Option<u32> {
    (1..=MAX_GRID).find(|&den| {
        rows.iter().flatten().all(|v| {
            let s = v * f64::from(den);
            (s - s.round()).abs() <= 1e-12
        })
    })
}

#[derive(Debug, Clone)]
pub struct PanelDiagnostics {
    pub vartheta: f64,
    pub r_table: Vec<Vec<f64>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_min_b: f64,
    pub e1_holds: bool,
    pub e2_holds: bool,
}

impl PanelDiagnostics {
    /// The ellipticity constant as it enters rate formulas, capped at one.
    pub fn lambda_r(&self) -> f64 {
        self.lambda_min.min(1.0)
    }
}
