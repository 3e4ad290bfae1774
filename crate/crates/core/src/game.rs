//! The discrete game value `V_N(x, ℓ; m)` and its parabolic rescaling.
//!
//! Three engines compute the value:
//!
//! * [`Engine::Brute`] searches the investor move numerically and works for
//!   any payoff that is nondecreasing along the diagonal.
//! * [`Engine::Path`] uses the closed-form step [`g3_step`], which is exact
//!   for translation-invariant payoffs, and walks all `2^(N-ℓ)` paths.
//! * [`Engine::Lattice`] runs the same step as a backward sweep over a dense
//!   integer lattice, which needs predictions on a common grid `k/D`.
//!
//! The exact engines work in reduced coordinates `y_i = x_i - x_n`. With a
//! translation-invariant payoff `V(x) = W(y) + x_n`, and
//! `W(y, m) = step(W(y + r(m), m+) + q_n(m), W(y - r(m), m-) - q_n(m))`
//! with leaf `g(y_1, ..., y_{n-1}, 0)`. The update of `y` does not involve
//! the investor move, so `y` always stays on the lattice.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::debruijn::{Bit, HistoryState};
use crate::error::{Error, Result};
use crate::experts::ExpertPanel;
use crate::payoff::Payoff;

/// Deepest horizon the path engine enumerates.
pub const PATH_MAX_STEPS: usize = 26;
/// Deepest horizon the brute-force engine accepts.
pub const BRUTE_MAX_STEPS: usize = 6;
/// Largest number of lattice cells held at once.
pub const LATTICE_CELL_BUDGET: usize = 1 << 25;
/// Largest brute-force search tree (children visited) for a non-monotone payoff.
const SCAN_BUDGET: f64 = 1e9;
/// Values of `Nt` this close to an integer are snapped before the ceiling.
pub const DAY_SNAP: f64 = 1e-12;
/// Below this many remaining steps the path engine stops forking.
const PAR_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Brute,
    Path,
    Lattice,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Brute => "brute",
            Engine::Path => "path",
            Engine::Lattice => "lattice",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "brute" => Ok(Engine::Brute),
            "path" => Ok(Engine::Path),
            "lattice" => Ok(Engine::Lattice),
            other => Err(Error::InvalidArgument(format!("unknown engine {other:?}"))),
        }
    }
}

/// Settings for the numerical search over the investor move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteOptions {
    /// Spacing of the grid on `[-1, 1]`.
    pub f_grid: f64,
    /// Locate the crossing of the two branch values by root finding instead
    /// of stopping at the grid resolution. The grid then only matters for
    /// payoffs that are not monotone, where every grid move is scanned.
    pub refine: bool,
}

impl Default for BruteOptions {
    fn default() -> Self {
        Self { f_grid: 1e-3, refine: true }
    }
}

impl BruteOptions {
    pub fn grid_only(f_grid: f64) -> Self {
        Self { f_grid, refine: false }
    }

    fn cells(&self) -> Result<usize> {
        if !(self.f_grid > 0.0 && self.f_grid <= 2.0) {
            return Err(Error::InvalidArgument(format!("f grid {} outside (0, 2]", self.f_grid)));
        }
        Ok((2.0 / self.f_grid - 1e-9).ceil() as usize)
    }
}

/// A position of the game: regret `x` and history `m` at day `ell`.
#[derive(Debug, Clone)]
pub struct GameSpec<'a> {
    pub panel: &'a ExpertPanel,
    pub payoff: &'a Payoff,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub m0: HistoryState,
    pub ell: usize,
}

impl<'a> GameSpec<'a> {
    pub fn new(
        panel: &'a ExpertPanel,
        payoff: &'a Payoff,
        horizon: usize,
        x0: Vec<f64>,
        m0: HistoryState,
        ell: usize,
    ) -> Result<Self> {
        if ell < 1 || ell > horizon {
            return Err(Error::InvalidArgument(format!("start day {ell} outside 1..={horizon}")));
        }
        if x0.len() != panel.experts() {
            return Err(Error::InvalidArgument(format!(
                "regret vector has {} entries for {} experts",
                x0.len(),
                panel.experts()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("regret vector must be finite".into()));
        }
        if m0.window() != panel.window() {
            return Err(Error::InvalidState(format!(
                "state {m0} has window {} but the panel uses {}",
                m0.window(),
                panel.window()
            )));
        }
        payoff.check_dimension(panel.experts())?;
        Ok(Self { panel, payoff, horizon, x0, m0, ell })
    }

    /// Moves left to play, `N - ℓ`.
    pub fn steps(&self) -> usize {
        self.horizon - self.ell
    }

    pub fn at(&self, x: Vec<f64>, m: HistoryState, ell: usize) -> Result<Self> {
        Self::new(self.panel, self.payoff, self.horizon, x, m, ell)
    }
}

/// Exact one-step min-max `min_{|f|<=1} max(a - f, b + f)`.
///
/// Returns `(value, f*)` with `f* = clamp((a - b)/2, -1, 1)`.
#[inline]
pub fn g3_step(a: f64, b: f64) -> (f64, f64) {
    let f = ((a - b) * 0.5).clamp(-1.0, 1.0);
    ((a - f).max(b + f), f)
}

/// `V_N(x, ℓ; m)` with the given engine.
pub fn value(spec: &GameSpec, engine: Engine) -> Result<f64> {
    match engine {
        Engine::Brute => value_bruteforce(spec, BruteOptions::default()),
        Engine::Path | Engine::Lattice => value_exact(spec, engine),
    }
}

/// `V_N(x, ℓ; m)` with an exact engine.
pub fn value_exact(spec: &GameSpec, engine: Engine) -> Result<f64> {
    if spec.steps() == 0 {
        return Ok(spec.payoff.eval(&spec.x0));
    }
    match engine {
        Engine::Path => {
            require_g3(spec.payoff, engine)?;
            if spec.steps() > PATH_MAX_STEPS {
                return Err(Error::HorizonTooLarge { engine: "path", steps: spec.steps(), budget: PATH_MAX_STEPS });
            }
            let n = spec.panel.experts();
            let y = reduce(&spec.x0);
            Ok(path_w(spec.panel, spec.payoff, &y, spec.m0, spec.steps()) + spec.x0[n - 1])
        }
        Engine::Lattice => {
            let table = LatticeTable::build(spec.panel, spec.payoff, &spec.x0, spec.steps(), false)?;
            Ok(table.root_value(spec.m0, spec.x0[spec.panel.experts() - 1]))
        }
        Engine::Brute => Err(Error::InvalidArgument("brute force is not an exact engine".into())),
    }
}

/// The exact value together with the optimal first move.
pub fn value_and_move(spec: &GameSpec, engine: Engine, brute: BruteOptions) -> Result<(f64, f64)> {
    if spec.steps() == 0 {
        return Err(Error::GameOver { day: spec.ell, horizon: spec.horizon });
    }
    match engine {
        Engine::Brute => {
            let q_leaf = |x: &[f64], _m: HistoryState| spec.payoff.eval(x);
            check_brute_steps(spec.steps())?;
            minmax_brute(spec.panel, &q_leaf, &spec.x0, spec.m0, spec.steps(), spec.payoff.monotone(), brute)
        }
        _ => {
            let (a, b) = continuation_values(spec, engine, None)?;
            let (v, f) = g3_step(a, b);
            Ok((v, f))
        }
    }
}

/// `V(x + q(m), ℓ+1; m+)` and `V(x - q(m), ℓ+1; m-)`, shifted by the move `f`
/// when given: the payoff the market collects from each choice of `b`.
pub fn continuation_values(spec: &GameSpec, engine: Engine, f: Option<f64>) -> Result<(f64, f64)> {
    if spec.steps() == 0 {
        return Err(Error::GameOver { day: spec.ell, horizon: spec.horizon });
    }
    let q = spec.panel.q(spec.m0);
    let f0 = f.unwrap_or(0.0);
    let mut out = [0.0; 2];
    for (slot, b) in out.iter_mut().zip([Bit::Plus, Bit::Minus]) {
        let s = b.sign();
        let x: Vec<f64> = spec.x0.iter().zip(q).map(|(xi, qi)| xi + s * (qi - f0)).collect();
        let child = spec.at(x, spec.m0.shift(b), spec.ell + 1)?;
        *slot = value(&child, engine)?;
    }
    Ok((out[0], out[1]))
}

/// `V_N` by numerical search over the investor move at every node.
pub fn value_bruteforce(spec: &GameSpec, opts: BruteOptions) -> Result<f64> {
    if spec.steps() == 0 {
        return Ok(spec.payoff.eval(&spec.x0));
    }
    check_brute_steps(spec.steps())?;
    let leaf = |x: &[f64], _m: HistoryState| spec.payoff.eval(x);
    Ok(minmax_brute(spec.panel, &leaf, &spec.x0, spec.m0, spec.steps(), spec.payoff.monotone(), opts)?.0)
}

fn check_brute_steps(steps: usize) -> Result<()> {
    if steps > BRUTE_MAX_STEPS {
        return Err(Error::HorizonTooLarge { engine: "brute", steps, budget: BRUTE_MAX_STEPS });
    }
    Ok(())
}

fn require_g3(payoff: &Payoff, engine: Engine) -> Result<()> {
    if payoff.g3() {
        Ok(())
    } else {
        Err(Error::EngineUnavailable {
            engine: engine.name(),
            reason: format!("payoff {payoff} is not translation invariant"),
        })
    }
}

/// `y_i = x_i - x_n`.
pub fn reduce(x: &[f64]) -> Vec<f64> {
    let last = x[x.len() - 1];
    x[..x.len() - 1].iter().map(|v| v - last).collect()
}

fn reduced_leaf(payoff: &Payoff, y: &[f64]) -> f64 {
    let mut x = Vec::with_capacity(y.len() + 1);
    x.extend_from_slice(y);
    x.push(0.0);
    payoff.eval(&x)
}

fn path_w(panel: &ExpertPanel, payoff: &Payoff, y: &[f64], m: HistoryState, steps: usize) -> f64 {
    if steps == 0 {
        return reduced_leaf(payoff, y);
    }
    let q = panel.q(m);
    let qn = q[q.len() - 1];
    let up: Vec<f64> = y.iter().zip(q).map(|(yi, qi)| yi + (qi - qn)).collect();
    let down: Vec<f64> = y.iter().zip(q).map(|(yi, qi)| yi - (qi - qn)).collect();
    let (a, b) = if steps > PAR_CUTOFF {
        rayon::join(
            || path_w(panel, payoff, &up, m.plus(), steps - 1),
            || path_w(panel, payoff, &down, m.minus(), steps - 1),
        )
    } else {
        (
            path_w(panel, payoff, &up, m.plus(), steps - 1),
            path_w(panel, payoff, &down, m.minus(), steps - 1),
        )
    };
    g3_step(a + qn, b - qn).0
}

/// `k`-step min-max with the closed-form step and an arbitrary
/// translation-invariant continuation `leaf(x, m)`. The recursion runs in
/// reduced coordinates, exactly as the path engine does, and the leaf is
/// called at points with `x_n = 0`.
pub fn minmax_g3(
    panel: &ExpertPanel,
    leaf: &(dyn Fn(&[f64], HistoryState) -> Result<f64> + Sync),
    x: &[f64],
    m: HistoryState,
    k: usize,
) -> Result<(f64, f64)> {
    fn rec(
        panel: &ExpertPanel,
        leaf: &(dyn Fn(&[f64], HistoryState) -> Result<f64> + Sync),
        y: &[f64],
        m: HistoryState,
        k: usize,
    ) -> Result<(f64, f64)> {
        if k == 0 {
            let mut x = y.to_vec();
            x.push(0.0);
            return Ok((leaf(&x, m)?, 0.0));
        }
        let q = panel.q(m);
        let qn = q[q.len() - 1];
        let up: Vec<f64> = y.iter().zip(q).map(|(yi, qi)| yi + (qi - qn)).collect();
        let down: Vec<f64> = y.iter().zip(q).map(|(yi, qi)| yi - (qi - qn)).collect();
        let a = rec(panel, leaf, &up, m.plus(), k - 1)?.0;
        let b = rec(panel, leaf, &down, m.minus(), k - 1)?.0;
        Ok(g3_step(a + qn, b - qn))
    }
    let (v, f) = rec(panel, leaf, &reduce(x), m, k)?;
    Ok((v + x[x.len() - 1], f))
}

/// `k`-step min-max by numerical search over each investor move, with an
/// arbitrary continuation `leaf(x, m)`. Returns the value and the root move.
///
/// With `monotone` set, `leaf` must be nondecreasing along the diagonal on
/// the reachable region. Then the `b = +1` branch value is nonincreasing in
/// `f` and the `b = -1` branch nondecreasing, so the best grid move sits
/// where they cross and bisection finds it. Otherwise every grid move is
/// tried.
pub fn minmax_brute(
    panel: &ExpertPanel,
    leaf: &(dyn Fn(&[f64], HistoryState) -> f64 + Sync),
    x: &[f64],
    m: HistoryState,
    k: usize,
    monotone: bool,
    opts: BruteOptions,
) -> Result<(f64, f64)> {
    let cells = opts.cells()?;
    if !monotone && (2.0 * (cells as f64 + 1.0)).powi(k as i32) > SCAN_BUDGET {
        return Err(Error::HorizonTooLarge { engine: "brute", steps: k, budget: 0 });
    }
    let search = Search { panel, leaf, cells, monotone, refine: opts.refine };
    Ok(search.node(x, m, k))
}

struct Search<'a> {
    panel: &'a ExpertPanel,
    leaf: &'a (dyn Fn(&[f64], HistoryState) -> f64 + Sync),
    cells: usize,
    monotone: bool,
    refine: bool,
}

impl Search<'_> {
    fn f_at(&self, i: usize) -> f64 {
        if i == self.cells {
            1.0
        } else {
            -1.0 + 2.0 * i as f64 / self.cells as f64
        }
    }

    /// Branch values `(C+(f), C-(f))`.
    fn branches(&self, x: &[f64], m: HistoryState, k: usize, f: f64) -> (f64, f64) {
        let q = self.panel.q(m);
        let up: Vec<f64> = x.iter().zip(q).map(|(a, b)| a + b - f).collect();
        let down: Vec<f64> = x.iter().zip(q).map(|(a, b)| a - b + f).collect();
        if k >= 3 {
            rayon::join(|| self.node(&up, m.plus(), k - 1).0, || self.node(&down, m.minus(), k - 1).0)
        } else {
            (self.node(&up, m.plus(), k - 1).0, self.node(&down, m.minus(), k - 1).0)
        }
    }

    fn node(&self, x: &[f64], m: HistoryState, k: usize) -> (f64, f64) {
        if k == 0 {
            return ((self.leaf)(x, m), 0.0);
        }
        if !self.monotone {
            return self.scan(x, m, k);
        }
        let (p0, m0) = self.branches(x, m, k, -1.0);
        if p0 <= m0 {
            return (m0, -1.0);
        }
        let (p1, m1) = self.branches(x, m, k, 1.0);
        if p1 > m1 {
            return (p1, 1.0);
        }
        if self.refine {
            // the crossing is the exact minimizer, so the grid is not needed
            let lo = (p0, m0);
            let hi = (p1, m1);
            let fallback = if hi.1 <= lo.0 { (hi.1, 1.0) } else { (lo.0, -1.0) };
            let found = self.crossing(x, m, k, (-1.0, lo), (1.0, hi));
            return if found.0 < fallback.0 { found } else { fallback };
        }
        // invariant: C+ > C- at lo, C+ <= C- at hi
        let (mut lo, mut hi) = (0usize, self.cells);
        let (mut lo_v, mut hi_v) = ((p0, m0), (p1, m1));
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let v = self.branches(x, m, k, self.f_at(mid));
            if v.0 > v.1 {
                lo = mid;
                lo_v = v;
            } else {
                hi = mid;
                hi_v = v;
            }
        }
        if hi_v.1 <= lo_v.0 {
            (hi_v.1, self.f_at(hi))
        } else {
            (lo_v.0, self.f_at(lo))
        }
    }

    /// Illinois iteration on `C+(f) - C-(f)` inside a bracketing cell.
    fn crossing(
        &self,
        x: &[f64],
        m: HistoryState,
        k: usize,
        (mut a, va): (f64, (f64, f64)),
        (mut b, vb): (f64, (f64, f64)),
    ) -> (f64, f64) {
        let mut da = va.0 - va.1;
        let mut db = vb.0 - vb.1;
        let mut best = (f64::INFINITY, a);
        let mut side = 0i8;
        for _ in 0..60 {
            if b - a <= 1e-14 {
                break;
            }
            let mut c = b - db * (b - a) / (db - da);
            if !(c > a && c < b) {
                c = 0.5 * (a + b);
            }
            let (cp, cm) = self.branches(x, m, k, c);
            let obj = cp.max(cm);
            if obj < best.0 {
                best = (obj, c);
            }
            let dc = cp - cm;
            if dc.abs() <= 4.0 * f64::EPSILON * cp.abs().max(cm.abs()).max(1.0) {
                break;
            }
            if dc > 0.0 {
                a = c;
                da = dc;
                if side == 1 {
                    db *= 0.5;
                }
                side = 1;
            } else {
                b = c;
                db = dc;
                if side == -1 {
                    da *= 0.5;
                }
                side = -1;
            }
        }
        best
    }

    fn scan(&self, x: &[f64], m: HistoryState, k: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, -1.0);
        for i in 0..=self.cells {
            let f = self.f_at(i);
            let (p, q) = self.branches(x, m, k, f);
            let v = p.max(q);
            if v < best.0 {
                best = (v, f);
            }
        }
        best
    }
}

/// Memoization key of the lattice engine.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeKey {
    /// Day of the game.
    pub ell: usize,
    pub m: HistoryState,
    /// Accumulated `Σ b_i r(m^i)` in units of `1/D`.
    pub offset: Vec<i64>,
}

/// Backward sweep of the closed-form step over all reachable reduced
/// coordinates `y0 + offset / D`.
#[derive(Debug, Clone)]
pub struct LatticeTable {
    y0: Vec<f64>,
    denominator: i64,
    /// Per-dimension gcd of the numerators of `r`.
    step: Vec<i64>,
    /// Largest `|r_i(m)|` in units of `step_i / D`.
    reach: Vec<i64>,
    steps: usize,
    states: usize,
    /// `levels[t]` after `t` moves; only `t = 0` unless all levels are kept.
    levels: Vec<Option<Vec<f64>>>,
    qn: Vec<f64>,
    units: Vec<Vec<i64>>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl LatticeTable {
    /// Solves from position `x0` with `steps` moves to go. With
    /// `keep_levels`, values after every number of moves stay available.
    pub fn build(panel: &ExpertPanel, payoff: &Payoff, x0: &[f64], steps: usize, keep_levels: bool) -> Result<Self> {
        require_g3(payoff, Engine::Lattice)?;
        payoff.check_dimension(panel.experts())?;
        let denominator = i64::from(panel.grid().ok_or_else(|| Error::EngineUnavailable {
            engine: "lattice",
            reason: "predictions are not on a common grid k/D".into(),
        })?);
        let n = panel.experts();
        let dims = n - 1;
        let states = panel.states();
        let numer: Vec<Vec<i64>> = states
            .iter()
            .map(|&m| {
                let q = panel.numerators(m).expect("grid present");
                q[..dims].iter().map(|v| v - q[dims]).collect()
            })
            .collect();
        let step: Vec<i64> = (0..dims)
            .map(|i| numer.iter().fold(0, |g, r| gcd(g, r[i])).max(1))
            .collect();
        let units: Vec<Vec<i64>> = numer.iter().map(|r| r.iter().zip(&step).map(|(v, s)| v / s).collect()).collect();
        let reach: Vec<i64> = (0..dims).map(|i| units.iter().map(|u| u[i].abs()).max().unwrap_or(0)).collect();

        let mut table = Self {
            y0: reduce(x0),
            denominator,
            step,
            reach,
            steps,
            states: states.len(),
            levels: vec![None; steps + 1],
            qn: states.iter().map(|&m| panel.q(m)[dims]).collect(),
            units,
        };
        let biggest = table.level_cells(steps);
        let total: usize = if keep_levels { (0..=steps).map(|t| table.level_cells(t)).sum() } else { 2 * biggest };
        if biggest == usize::MAX || total > LATTICE_CELL_BUDGET {
            return Err(Error::HorizonTooLarge { engine: "lattice", steps, budget: LATTICE_CELL_BUDGET });
        }

        let mut next = table.leaves(payoff, steps);
        for t in (0..steps).rev() {
            let cur = table.sweep(t, &next);
            if keep_levels {
                table.levels[t + 1] = Some(next);
            }
            next = cur;
        }
        table.levels[0] = Some(next);
        Ok(table)
    }

    fn extents(&self, t: usize) -> Vec<usize> {
        self.reach.iter().map(|&r| 2 * r as usize * t + 1).collect()
    }

    fn level_cells(&self, t: usize) -> usize {
        self.extents(t)
            .iter()
            .try_fold(self.states, |acc: usize, &e| acc.checked_mul(e))
            .unwrap_or(usize::MAX)
    }

    fn decode(&self, t: usize, mut flat: usize, out: &mut [i64]) {
        let ext = self.extents(t);
        for i in (0..ext.len()).rev() {
            out[i] = (flat % ext[i]) as i64 - self.reach[i] * t as i64;
            flat /= ext[i];
        }
    }

    fn encode(&self, t: usize, off: &[i64]) -> Option<usize> {
        let ext = self.extents(t);
        let mut flat = 0usize;
        for i in 0..ext.len() {
            let shifted = off[i] + self.reach[i] * t as i64;
            if shifted < 0 || shifted as usize >= ext[i] {
                return None;
            }
            flat = flat * ext[i] + shifted as usize;
        }
        Some(flat)
    }

    fn y_at(&self, off: &[i64]) -> Vec<f64> {
        let d = self.denominator as f64;
        self.y0
            .iter()
            .zip(off)
            .zip(&self.step)
            .map(|((y, o), s)| y + (o * s) as f64 / d)
            .collect()
    }

    fn leaves(&self, payoff: &Payoff, t: usize) -> Vec<f64> {
        let per = self.level_cells(t) / self.states;
        let mut out = vec![0.0; per * self.states];
        out[..per].par_iter_mut().enumerate().for_each(|(flat, v)| {
            let mut off = vec![0i64; self.y0.len()];
            self.decode(t, flat, &mut off);
            *v = reduced_leaf(payoff, &self.y_at(&off));
        });
        // the leaf does not depend on the history
        let (first, rest) = out.split_at_mut(per);
        rest.par_chunks_mut(per).for_each(|chunk| chunk.copy_from_slice(first));
        out
    }

    fn sweep(&self, t: usize, next: &[f64]) -> Vec<f64> {
        let per = self.level_cells(t) / self.states;
        let per_next = self.level_cells(t + 1) / self.states;
        let d = self.reach.len();
        let mut out = vec![0.0; per * self.states];
        out.par_chunks_mut(per).enumerate().for_each(|(code, chunk)| {
            let plus = ((code << 1) | 1) & (self.states - 1);
            let minus = (code << 1) & (self.states - 1);
            let u = &self.units[code];
            let qn = self.qn[code];
            let mut off = vec![0i64; d];
            let mut up = vec![0i64; d];
            let mut down = vec![0i64; d];
            for (flat, v) in chunk.iter_mut().enumerate() {
                self.decode(t, flat, &mut off);
                for i in 0..d {
                    up[i] = off[i] + u[i];
                    down[i] = off[i] - u[i];
                }
                let a = next[plus * per_next + self.encode(t + 1, &up).expect("inside box")];
                let b = next[minus * per_next + self.encode(t + 1, &down).expect("inside box")];
                *v = g3_step(a + qn, b - qn).0;
            }
        });
        out
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `V(x0, ℓ; m)` where `x_n` is the last regret coordinate at the start.
    pub fn root_value(&self, m: HistoryState, xn: f64) -> f64 {
        self.levels[0].as_ref().expect("root level")[m.index()] + xn
    }

    /// Root values for every history state, in code order.
    pub fn root_values(&self, xn: f64) -> Vec<f64> {
        let root = self.levels[0].as_ref().expect("root level");
        root.iter().map(|w| w + xn).collect()
    }

    /// `V(x, ℓ0 + t; m)` for a position reached after `t` moves, if kept.
    pub fn value_at(&self, t: usize, m: HistoryState, x: &[f64]) -> Result<f64> {
        let level = self
            .levels
            .get(t)
            .and_then(|l| l.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("lattice level {t} was not kept")))?;
        let y = reduce(x);
        let d = self.denominator as f64;
        let mut off = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            let raw = (y[i] - self.y0[i]) * d / self.step[i] as f64;
            let k = raw.round();
            if (raw - k).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!("regret {x:?} is not on the lattice")));
            }
            off.push(k as i64);
        }
        let per = self.level_cells(t) / self.states;
        let flat = self
            .encode(t, &off)
            .ok_or_else(|| Error::InvalidArgument(format!("regret {x:?} is outside the reachable box")))?;
        Ok(level[m.index() * per + flat] + x[x.len() - 1])
    }

    /// Looks up a memoized value by key, relative to a start day `ell0`.
    pub fn get(&self, ell0: usize, key: &LatticeKey) -> Option<f64> {
        let t = key.ell.checked_sub(ell0)?;
        let level = self.levels.get(t)?.as_ref()?;
        let mut off = Vec::with_capacity(key.offset.len());
        for (o, s) in key.offset.iter().zip(&self.step) {
            if o % s != 0 {
                return None;
            }
            off.push(o / s);
        }
        let per = self.level_cells(t) / self.states;
        Some(level[key.m.index() * per + self.encode(t, &off)?])
    }
}

/// Which rescaled value to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    State(HistoryState),
    /// Maximum over all history states.
    Plus,
    /// Minimum over all history states.
    Minus,
}

/// `ℓ = max(1, ⌈N t⌉)` with `N t` snapped to a nearby integer first.
pub fn start_day(horizon: usize, t: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
    }
    let nt = horizon as f64 * t;
    let snapped = if (nt - nt.round()).abs() <= DAY_SNAP { nt.round() } else { nt.ceil() };
    Ok((snapped as usize).max(1))
}

/// `u_N(x, t; m) = N^{-1/2} V_N(N^{1/2} x, ⌈Nt⌉; m)` and its envelopes.
#[allow(clippy::too_many_arguments)]
pub fn rescaled_value(
    panel: &ExpertPanel,
    payoff: &Payoff,
    horizon: usize,
    x: &[f64],
    t: f64,
    which: Which,
    engine: Engine,
) -> Result<f64> {
    let all = rescaled_values(panel, payoff, horizon, x, t, engine, matches!(which, Which::State(_)).then_some(which))?;
    Ok(match which {
        Which::State(m) => all[m.index()],
        Which::Plus => all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Which::Minus => all.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// `u_N(x, t; m)` for every `m`, in code order. Entries other than the
/// requested state are NaN when `only` names a single state.
pub fn rescaled_values(
    panel: &ExpertPanel,
    payoff: &Payoff,
    horizon: usize,
    x: &[f64],
    t: f64,
    engine: Engine,
    only: Option<Which>,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let ell = start_day(horizon, t)?;
    let states = panel.states();
    if ell == horizon && payoff.g2() {
        payoff.check_dimension(x.len())?;
        return Ok(vec![payoff.eval(x); states.len()]);
    }
    let root = (horizon as f64).sqrt();
    let big: Vec<f64> = x.iter().map(|v| v * root).collect();
    if engine == Engine::Lattice {
        let spec = GameSpec::new(panel, payoff, horizon, big.clone(), states[0], ell)?;
        if spec.steps() == 0 {
            return Ok(vec![payoff.eval(&big) / root; states.len()]);
        }
        let table = LatticeTable::build(panel, payoff, &big, spec.steps(), false)?;
        return Ok(table.root_values(big[big.len() - 1]).into_iter().map(|v| v / root).collect());
    }
    states
        .iter()
        .map(|&m| match only {
            Some(Which::State(s)) if s != m => Ok(f64::NAN),
            _ => {
                let spec = GameSpec::new(panel, payoff, horizon, big.clone(), m, ell)?;
                Ok(value(&spec, engine)? / root)
            }
        })
        .collect()
}

/// Largest gap between `V_N` and its `k`-step dynamic programming expansion
/// over seeded probe positions around `spec`.
pub fn dpp_check(spec: &GameSpec, k: usize, probes: usize, seed: u64, engine: Engine) -> Result<f64> {
    if spec.ell + k > spec.horizon {
        return Err(Error::InvalidArgument(format!(
            "{k} steps from day {} overrun horizon {}",
            spec.ell, spec.horizon
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = spec.panel.states();
    let opts = BruteOptions::default();
    let mut worst = 0.0f64;
    for probe in 0..probes.max(1) {
        let (x, m) = if probe == 0 {
            (spec.x0.clone(), spec.m0)
        } else {
            let x: Vec<f64> = spec.x0.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
            (x, states[rng.random_range(0..states.len())])
        };
        let here = spec.at(x.clone(), m, spec.ell)?;
        let lhs = match engine {
            Engine::Brute => value_bruteforce(&here, opts)?,
            _ => value_exact(&here, engine)?,
        };
        let later = spec.ell + k;
        let rhs = match engine {
            Engine::Brute => {
                let failure = std::sync::Mutex::new(None);
                let leaf = |x: &[f64], m: HistoryState| {
                    let s = GameSpec { x0: x.to_vec(), m0: m, ell: later, ..spec.clone() };
                    value_bruteforce(&s, opts).unwrap_or_else(|e| {
                        *failure.lock().unwrap() = Some(e);
                        f64::NAN
                    })
                };
                let v = minmax_brute(spec.panel, &leaf, &x, m, k, spec.payoff.monotone(), opts)?.0;
                if let Some(e) = failure.into_inner().unwrap() {
                    return Err(e);
                }
                v
            }
            _ => {
                require_g3(spec.payoff, engine)?;
                let leaf = |x: &[f64], m: HistoryState| {
                    let s = GameSpec { x0: x.to_vec(), m0: m, ell: later, ..spec.clone() };
                    value_exact(&s, engine)
                };
                minmax_g3(spec.panel, &leaf, &x, m, k)?.0
            }
        };
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}
