//! The local cell problem
//!
//! ```text
//! L_{k,ε}(X, p, m) = min_{f_1} max_{b_1} ... min_{f_k} max_{b_k}
//!     ε⁻¹ Σ b_i <p, δ_i> + ½ Σ b_i b_j <X δ_i, δ_j>,   δ_i = q(m^i) - f_i 1,
//! ```
//!
//! the tree sums `H_k` that approximate it, and the averaged limit
//! `2^{-(d+1)} Σ_m <X ξ(p,m), ξ(p,m)>`.
//!
//! With `S = Σ b_i δ_i` the objective is `ε⁻¹<p,S> + ½<XS,S>`, so the local
//! problem is a game of the same shape as the regret game, started at the
//! origin, with that quadratic as the terminal payoff.

use nalgebra::DMatrix;

use crate::debruijn::{words, Bit, HistoryState};
use crate::error::{Error, Result};
use crate::experts::ExpertPanel;
use crate::game::{minmax_brute, BruteOptions};
use crate::linalg::{asymmetry, dot, mat_vec, quad_form, sym_op_norm};

/// `<p, 1>` at or below this is treated as zero.
pub const GRADIENT_FLOOR: f64 = 1e-12;
/// Deepest tree enumerated by [`h_treesum`].
pub const TREESUM_MAX_DEPTH: usize = 20;
/// Deepest local problem solved by search.
pub const BRUTE_MAX_DEPTH: usize = 5;
/// Deepest local problem evaluated path by path.
pub const INDIFFERENCE_MAX_DEPTH: usize = 20;
/// Smallest admissible denominator of the indifference move.
pub const DENOMINATOR_FLOOR: f64 = 1e-9;

/// A Hessian `X` and a positive gradient `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianContext {
    x: DMatrix<f64>,
    p: Vec<f64>,
    gamma_p: f64,
    opnorm: f64,
}

impl HessianContext {
    pub fn new(x: DMatrix<f64>, p: Vec<f64>) -> Result<Self> {
        let n = p.len();
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "Hessian is {}x{} but the gradient has {n} entries",
                x.nrows(),
                x.ncols()
            )));
        }
        if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("gradient entries must be positive".into()));
        }
        let skew = asymmetry(&x);
        if skew > 1e-12 {
            return Err(Error::InvalidArgument(format!("Hessian is not symmetric (gap {skew:e})")));
        }
        let gamma_p = p.iter().copied().fold(f64::INFINITY, f64::min);
        let opnorm = sym_op_norm(&x);
        Ok(Self { x, p, gamma_p, opnorm })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gradient(&self) -> &[f64] {
        &self.p
    }

    pub fn gamma_p(&self) -> f64 {
        self.gamma_p
    }

    pub fn opnorm(&self) -> f64 {
        self.opnorm
    }

    fn check(&self, panel: &ExpertPanel) -> Result<()> {
        if self.p.len() != panel.experts() {
            return Err(Error::InvalidArgument(format!(
                "context has {} experts, panel has {}",
                self.p.len(),
                panel.experts()
            )));
        }
        Ok(())
    }
}

/// `ξ(p, m) = q(m) - <p,q(m)>/<p,1> 1`.
pub fn xi(p: &[f64], panel: &ExpertPanel, m: HistoryState) -> Result<Vec<f64>> {
    let total: f64 = p.iter().sum();
    if total <= GRADIENT_FLOOR {
        return Err(Error::DegenerateGradient(total));
    }
    let q = panel.q(m);
    let c = dot(p, q) / total;
    Ok(q.iter().map(|v| v - c).collect())
}

/// `½<X ξ(m), ξ(m)>` for every state, in code order.
fn half_energies(x: &DMatrix<f64>, p: &[f64], panel: &ExpertPanel) -> Result<Vec<f64>> {
    if p.len() != panel.experts() || x.nrows() != p.len() || x.ncols() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "context of dimension {} does not match {} experts",
            p.len(),
            panel.experts()
        )));
    }
    panel
        .states()
        .into_iter()
        .map(|m| {
            let e = xi(p, panel, m)?;
            Ok(0.5 * quad_form(x, &e, &e))
        })
        .collect()
}

/// `H_k` on every state together with `H_k(m+) - H_k(m-)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTable {
    pub k: usize,
    pub values: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl HTable {
    pub fn value(&self, m: HistoryState) -> f64 {
        self.values[m.index()]
    }

    pub fn delta(&self, m: HistoryState) -> f64 {
        self.deltas[m.index()]
    }

    fn from_values(k: usize, values: Vec<f64>, states: &[HistoryState]) -> Self {
        let deltas = states.iter().map(|m| values[m.plus().index()] - values[m.minus().index()]).collect();
        Self { k, values, deltas }
    }
}

/// `H_0 = 0`, `H_k(m) = ½<Xξ(m),ξ(m)> + ½(H_{k-1}(m+) + H_{k-1}(m-))`.
pub fn h_recursive(ctx: &HessianContext, panel: &ExpertPanel, k: usize) -> Result<HTable> {
    Ok(h_tables(ctx, panel, k)?.pop().expect("at least depth zero"))
}

/// The tables for every depth `0..=k`.
pub fn h_tables(ctx: &HessianContext, panel: &ExpertPanel, k: usize) -> Result<Vec<HTable>> {
    h_tables_general(&ctx.x, &ctx.p, panel, k)
}

/// [`h_tables`] for any gradient with `<p, 1>` positive, entries of either
/// sign allowed.
pub fn h_tables_general(x: &DMatrix<f64>, p: &[f64], panel: &ExpertPanel, k: usize) -> Result<Vec<HTable>> {
    let phi = half_energies(x, p, panel)?;
    let states = panel.states();
    let mut out = Vec::with_capacity(k + 1);
    let mut cur = vec![0.0; states.len()];
    out.push(HTable::from_values(0, cur.clone(), &states));
    for depth in 1..=k {
        cur = states
            .iter()
            .map(|m| phi[m.index()] + 0.5 * (cur[m.plus().index()] + cur[m.minus().index()]))
            .collect();
        out.push(HTable::from_values(depth, cur.clone(), &states));
    }
    Ok(out)
}

/// `H_k(m)` as a weighted sum over the depth-`k` tree rooted at `m`:
/// `Σ_{l<k} 2^{-l} Σ_{|s|=l} ½<Xξ(m|s), ξ(m|s)>`.
pub fn h_treesum(ctx: &HessianContext, panel: &ExpertPanel, m: HistoryState, k: usize) -> Result<f64> {
    if k > TREESUM_MAX_DEPTH {
        return Err(Error::DepthTooLarge { k, max: TREESUM_MAX_DEPTH });
    }
    ctx.check(panel)?;
    let mut total = 0.0;
    for level in 0..k {
        let mut layer = 0.0;
        for s in words(level) {
            let e = xi(&ctx.p, panel, m.shift_word(&s))?;
            layer += 0.5 * quad_form(&ctx.x, &e, &e);
        }
        total += layer / (1u64 << level) as f64;
    }
    Ok(total)
}

/// `2^{-(d+1)} Σ_m <X ξ(p,m), ξ(p,m)>`, summing over states with
/// multiplicity (coincident `ξ` values count once per state).
pub fn h_limit(ctx: &HessianContext, panel: &ExpertPanel) -> Result<f64> {
    let phi = half_energies(&ctx.x, &ctx.p, panel)?;
    Ok(2.0 * phi.iter().sum::<f64>() / (1u64 << (panel.window() + 1)) as f64)
}

/// Exact solution of `min_{|f|<=1} max_b { b h1(f) + ε (S(b) + h2(f)) }`
/// when `h1` is decreasing strongly enough to dominate `ε|h2'|` and the
/// indifference level is bracketed by `h1(-1)` and `h1(1)`.
///
/// Returns `(f*, M)`. The move solves `h1(f*) = ε/2 (S(-1) - S(1))` and the
/// value is `M = ε h2(f*) + ε/2 (S(1) + S(-1))`.
pub fn one_step_minmax(
    h1: &dyn Fn(f64) -> f64,
    h2: &dyn Fn(f64) -> f64,
    s: &dyn Fn(Bit) -> f64,
    eps: f64,
) -> Result<(f64, f64)> {
    let (sp, sm) = (s(Bit::Plus), s(Bit::Minus));
    let target = 0.5 * eps * (sm - sp);
    let (left, right) = (h1(-1.0), h1(1.0));
    if !(left > target && target > right) {
        return Err(Error::PreconditionViolated {
            which: "bracket",
            detail: format!("need h1(-1) = {left} > {target} > h1(1) = {right}"),
        });
    }
    const GRID: usize = 2000;
    const STEP: f64 = 1e-6;
    for i in 0..=GRID {
        let f = -1.0 + 2.0 * i as f64 / GRID as f64;
        let (a, b) = ((f - STEP).max(-1.0), (f + STEP).min(1.0));
        let d1 = (h1(b) - h1(a)) / (b - a);
        let d2 = (h2(b) - h2(a)) / (b - a);
        if d1 + eps * d2.abs() >= 0.0 {
            return Err(Error::PreconditionViolated {
                which: "monotonicity",
                detail: format!("h1' + ε|h2'| = {} at f = {f}", d1 + eps * d2.abs()),
            });
        }
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h1(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f = 0.5 * (lo + hi);
    Ok((f, eps * h2(f) + 0.5 * eps * (sp + sm)))
}

/// The local objective `ε⁻¹<p,S> + ½<XS,S>`.
fn local_payoff(ctx: &HessianContext, eps: f64, s: &[f64]) -> f64 {
    dot(&ctx.p, s) / eps + 0.5 * quad_form(&ctx.x, s, s)
}

/// Whether the local objective is nondecreasing along the diagonal on every
/// reachable `S` (each `|S_i| <= 2k`): `ε⁻¹<p,1> >= 2nk‖X‖`.
pub fn search_is_monotone(ctx: &HessianContext, k: usize, eps: f64) -> bool {
    let n = ctx.p.len() as f64;
    ctx.p.iter().sum::<f64>() / eps >= 2.0 * n * k as f64 * ctx.opnorm
}

/// `L_{k,ε}(X, p, m)` by search over every move.
///
/// When [`search_is_monotone`] holds the optimal move at each node is the
/// crossing of the two branch values and is located by root finding. Otherwise
/// every move on the `f_grid` grid is scanned, which is only affordable for
/// very shallow problems.
pub fn local_bruteforce(
    ctx: &HessianContext,
    panel: &ExpertPanel,
    m: HistoryState,
    k: usize,
    eps: f64,
    f_grid: f64,
) -> Result<f64> {
    ctx.check(panel)?;
    if k > BRUTE_MAX_DEPTH {
        return Err(Error::DepthTooLarge { k, max: BRUTE_MAX_DEPTH });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    let leaf = |s: &[f64], _m: HistoryState| local_payoff(ctx, eps, s);
    let origin = vec![0.0; panel.experts()];
    let monotone = search_is_monotone(ctx, k, eps);
    let opts = BruteOptions { f_grid, refine: monotone };
    match minmax_brute(panel, &leaf, &origin, m, k, monotone, opts) {
        Ok((v, _)) => Ok(v),
        Err(Error::HorizonTooLarge { .. }) => Err(Error::DepthTooLarge { k, max: 0 }),
        Err(e) => Err(e),
    }
}

/// Value reached when the investor plays the indifference move at every
/// node and the market answers with the better of its two replies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndifferenceValue {
    pub value: f64,
    /// Nodes where the move had to be clamped to `[-1, 1]`.
    pub clamps: usize,
}

/// The investor move that makes the market indifferent, given the running
/// sum `S` of the block so far and `ΔH = H_j(m+) - H_j(m-)` for the
/// remaining depth `j`:
///
/// `f = (<p,q> + ε<Xq,S> + ε/2 ΔH) / (<p,1> + ε<X1,S>)`.
///
/// Returns the unclamped move.
pub fn indifference_move(ctx: &HessianContext, q: &[f64], s: &[f64], delta_h: f64, eps: f64) -> Result<f64> {
    indifference_move_general(&ctx.x, &ctx.p, q, s, delta_h, eps)
}

/// [`indifference_move`] without the positivity requirement on `p`.
pub fn indifference_move_general(
    x: &DMatrix<f64>,
    p: &[f64],
    q: &[f64],
    s: &[f64],
    delta_h: f64,
    eps: f64,
) -> Result<f64> {
    let xs = mat_vec(x, s);
    let num = dot(p, q) + eps * dot(q, &xs) + 0.5 * eps * delta_h;
    let den = p.iter().sum::<f64>() + eps * xs.iter().sum::<f64>();
    if den.abs() <= DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator(den));
    }
    Ok(num / den)
}

/// Approximate `L_{k,ε}` from the indifference strategy. This is an upper
/// estimate in general (the investor may be suboptimal) and is exact only
/// to first order in `ε`.
pub fn local_indifference(
    ctx: &HessianContext,
    panel: &ExpertPanel,
    m: HistoryState,
    k: usize,
    eps: f64,
) -> Result<IndifferenceValue> {
    ctx.check(panel)?;
    if k > INDIFFERENCE_MAX_DEPTH {
        return Err(Error::DepthTooLarge { k, max: INDIFFERENCE_MAX_DEPTH });
    }
    let tables = h_tables(ctx, panel, k)?;
    fn walk(
        ctx: &HessianContext,
        panel: &ExpertPanel,
        tables: &[HTable],
        s: &mut Vec<f64>,
        m: HistoryState,
        left: usize,
        eps: f64,
        clamps: &mut usize,
    ) -> Result<f64> {
        if left == 0 {
            return Ok(local_payoff(ctx, eps, s));
        }
        let q = panel.q(m);
        let raw = indifference_move(ctx, q, s, tables[left - 1].delta(m), eps)?;
        let f = raw.clamp(-1.0, 1.0);
        if f != raw {
            *clamps += 1;
        }
        let mut best = f64::NEG_INFINITY;
        for b in [Bit::Plus, Bit::Minus] {
            let sign = b.sign();
            for (si, qi) in s.iter_mut().zip(q) {
                *si += sign * (qi - f);
            }
            let v = walk(ctx, panel, tables, s, m.shift(b), left - 1, eps, clamps)?;
            for (si, qi) in s.iter_mut().zip(q) {
                *si -= sign * (qi - f);
            }
            best = best.max(v);
        }
        Ok(best)
    }
    let mut clamps = 0;
    let mut s = vec![0.0; panel.experts()];
    let value = walk(ctx, panel, &tables, &mut s, m, k, eps, &mut clamps)?;
    Ok(IndifferenceValue { value, clamps })
}

/// How the local value in a [`CellGap`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMethod {
    Search,
    Indifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGap {
    pub local_value: f64,
    pub limit: f64,
    /// `|L_{k,ε}/k - limit|`.
    pub gap: f64,
    /// `d/k + ‖X‖ γ_p⁻¹ k ε`.
    pub bound_shape: f64,
    /// `‖X‖ k ε / (ϑ_q γ_p)`, which must be small for the rate to apply.
    pub regime: f64,
    pub method: CellMethod,
}

/// Gap between the per-step local value and its averaged limit. Search is
/// used up to [`BRUTE_MAX_DEPTH`], the indifference strategy beyond.
pub fn cell_gap(
    ctx: &HessianContext,
    panel: &ExpertPanel,
    m: HistoryState,
    k: usize,
    eps: f64,
    f_grid: f64,
) -> Result<CellGap> {
    if k == 0 {
        return Err(Error::InvalidArgument("cell gap needs k >= 1".into()));
    }
    let (local_value, method) = if k <= BRUTE_MAX_DEPTH {
        (local_bruteforce(ctx, panel, m, k, eps, f_grid)?, CellMethod::Search)
    } else {
        (local_indifference(ctx, panel, m, k, eps)?.value, CellMethod::Indifference)
    };
    let limit = h_limit(ctx, panel)?;
    let d = panel.window() as f64;
    let kf = k as f64;
    Ok(CellGap {
        local_value,
        limit,
        gap: (local_value / kf - limit).abs(),
        bound_shape: d / kf + ctx.opnorm * kf * eps / ctx.gamma_p,
        regime: ctx.opnorm * kf * eps / (panel.vartheta() * ctx.gamma_p),
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn st(s: &str) -> HistoryState {
        s.parse().unwrap()
    }

    fn random_ctx(n: usize, seed: u64) -> HessianContext {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        HessianContext::new((&a + a.transpose()) * 0.5, p).unwrap()
    }

    fn static_pm() -> ExpertPanel {
        ExpertPanel::constant(1, &[1.0, -1.0]).unwrap()
    }

    fn unit_ctx(n: usize) -> HessianContext {
        HessianContext::new(DMatrix::identity(n, n), vec![1.0; n]).unwrap()
    }

    /// Grid oracle for `min_f max_b { b h1 + ε (S(b) + h2) }`.
    fn grid_minmax(h1: impl Fn(f64) -> f64, h2: impl Fn(f64) -> f64, sp: f64, sm: f64, eps: f64) -> (f64, f64) {
        let n = 200_000;
        (0..=n)
            .map(|i| -1.0 + 2.0 * i as f64 / n as f64)
            .map(|f| {
                let plus = h1(f) + eps * (sp + h2(f));
                let minus = -h1(f) + eps * (sm + h2(f));
                (plus.max(minus), f)
            })
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
    }

    #[test]
    fn xi_examples() {
        let zero = ExpertPanel::constant(1, &[0.0, 0.0]).unwrap();
        assert_eq!(xi(&[1.0, 1.0], &zero, st("+")).unwrap(), vec![0.0, 0.0]);
        assert_eq!(xi(&[1.0, 1.0], &static_pm(), st("+")).unwrap(), vec![1.0, -1.0]);
        let e = xi(&[2.0, 1.0], &static_pm(), st("+")).unwrap();
        assert!((e[0] - 2.0 / 3.0).abs() < 1e-15 && (e[1] + 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(xi(&[0.0, 0.0], &static_pm(), st("+")), Err(Error::DegenerateGradient(_))));
    }

    #[test]
    fn h_examples() {
        let ctx = unit_ctx(2);
        let panel = static_pm();
        let t0 = h_recursive(&ctx, &panel, 0).unwrap();
        assert!(t0.values.iter().all(|&v| v == 0.0));
        for k in 0..8 {
            let t = h_recursive(&ctx, &panel, k).unwrap();
            assert!(t.values.iter().all(|&v| (v - k as f64).abs() < 1e-14));
        }
        let rnd = random_ctx(3, 4);
        let p3 = ExpertPanel::random_grid(3, 2, 8, 2).unwrap();
        let t1 = h_recursive(&rnd, &p3, 1).unwrap();
        for m in p3.states() {
            let e = xi(rnd.gradient(), &p3, m).unwrap();
            assert!((t1.value(m) - 0.5 * quad_form(rnd.hessian(), &e, &e)).abs() < 1e-15);
            assert!((h_treesum(&rnd, &p3, m, 1).unwrap() - t1.value(m)).abs() < 1e-15);
        }
        assert_eq!(h_limit(&ctx, &panel).unwrap(), 1.0);
        let zero = HessianContext::new(DMatrix::zeros(3, 3), vec![1.0; 3]).unwrap();
        assert_eq!(h_limit(&zero, &p3).unwrap(), 0.0);
        assert_eq!(h_treesum(&zero, &p3, st("++"), 6).unwrap(), 0.0);
        assert!(matches!(h_treesum(&zero, &p3, st("++"), 21), Err(Error::DepthTooLarge { .. })));
    }

    #[test]
    fn deltas_freeze_after_window() {
        for seed in 0..10 {
            let panel = ExpertPanel::random_grid(3, 3, 8, seed).unwrap();
            let ctx = random_ctx(3, 100 + seed);
            let tables = h_tables(&ctx, &panel, 20).unwrap();
            for k in 3..20 {
                for (a, b) in tables[k].deltas.iter().zip(&tables[k + 1].deltas) {
                    assert!((a - b).abs() < 1e-12, "seed {seed} k {k}");
                }
            }
        }
    }

    #[test]
    fn one_step_examples() {
        let zero = |_: f64| 0.0;
        let s0 = |_: Bit| 0.0;
        let (f, m) = one_step_minmax(&|f| -f, &zero, &s0, 0.3).unwrap();
        assert!(f.abs() < 1e-12 && m == 0.0);

        let s = |b: Bit| if b == Bit::Plus { 0.0 } else { 2.0 };
        let (f, m) = one_step_minmax(&|f| -f, &|f| f * f, &s, 0.1).unwrap();
        assert!((f + 0.1).abs() < 1e-11 && (m - 0.101).abs() < 1e-12);
        let (gv, gf) = grid_minmax(|f| -f, |f| f * f, 0.0, 2.0, 0.1);
        assert!((gv - m).abs() < 1e-5 && (gf - f).abs() < 1e-4);

        let (f, m) = one_step_minmax(&|f| -2.0 * f + 0.1, &zero, &s0, 0.5).unwrap();
        assert!((f - 0.05).abs() < 1e-11 && m == 0.0);
        let (gv, _) = grid_minmax(|f| -2.0 * f + 0.1, |_| 0.0, 0.0, 0.0, 0.5);
        assert!(gv.abs() < 1e-5);
    }

    #[test]
    fn one_step_rejects_bad_inputs() {
        let zero = |_: f64| 0.0;
        let s0 = |_: Bit| 0.0;
        match one_step_minmax(&|f| f, &zero, &s0, 0.1) {
            Err(Error::PreconditionViolated { which: "bracket", .. }) => {}
            other => panic!("{other:?}"),
        }
        // bracket holds but h1 turns upward near the right end
        match one_step_minmax(&|f| -f + 3.0 * (f - 0.5).max(0.0).powi(2), &zero, &s0, 0.1) {
            Err(Error::PreconditionViolated { which: "monotonicity", .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_local_problem_vanishes() {
        let panel = ExpertPanel::random_grid(3, 2, 8, 7).unwrap();
        let ctx = HessianContext::new(DMatrix::zeros(3, 3), vec![0.5, 1.0, 1.5]).unwrap();
        for k in 1..=3 {
            let v = local_bruteforce(&ctx, &panel, st("+-"), k, 0.1, 1e-3).unwrap();
            assert!(v.abs() < 1e-9, "k {k}: {v}");
        }
    }

    #[test]
    fn one_step_local_matches_closed_form() {
        let panel = ExpertPanel::random_grid(3, 2, 8, 3).unwrap();
        let ctx = random_ctx(3, 5);
        let eps = 0.05;
        for m in panel.states() {
            let q = panel.q(m).to_vec();
            let h1 = |f: f64| dot(ctx.gradient(), &q.iter().map(|v| v - f).collect::<Vec<_>>());
            let h2 = |f: f64| {
                let dl: Vec<f64> = q.iter().map(|v| v - f).collect();
                0.5 * quad_form(ctx.hessian(), &dl, &dl)
            };
            let (_, big_m) = one_step_minmax(&h1, &h2, &|_| 0.0, eps).unwrap();
            let brute = local_bruteforce(&ctx, &panel, m, 1, eps, 1e-3).unwrap();
            assert!((brute - big_m / eps).abs() < 1e-8, "{m}: {brute} vs {}", big_m / eps);
        }
    }

    #[test]
    fn indifference_tracks_search() {
        let panel = ExpertPanel::random_grid(2, 1, 4, 5).unwrap();
        let ctx = random_ctx(2, 9);
        for k in 1..=4 {
            let exact = local_bruteforce(&ctx, &panel, st("+"), k, 1e-3, 1e-3).unwrap();
            let approx = local_indifference(&ctx, &panel, st("+"), k, 1e-3).unwrap();
            assert_eq!(approx.clamps, 0);
            assert!(approx.value >= exact - 1e-9);
            assert!((approx.value - exact).abs() < 0.05, "k {k}: {} vs {exact}", approx.value);
        }
    }

    #[test]
    fn zero_hessian_gap_is_zero() {
        let panel = ExpertPanel::random_grid(2, 2, 4, 1).unwrap();
        let ctx = HessianContext::new(DMatrix::zeros(2, 2), vec![1.0, 2.0]).unwrap();
        let g = cell_gap(&ctx, &panel, st("-+"), 3, 1e-2, 1e-3).unwrap();
        assert!(g.gap < 1e-9);
        let g = cell_gap(&ctx, &panel, st("-+"), 8, 1e-2, 1e-3).unwrap();
        assert_eq!(g.method, CellMethod::Indifference);
        assert!(g.gap < 1e-9);
    }

    proptest! {
        #[test]
        fn xi_is_orthogonal_to_p(seed in 0u64..200, p in prop::collection::vec(0.01f64..5.0, 3)) {
            let panel = ExpertPanel::random_grid(3, 2, 8, seed).unwrap();
            for m in panel.states() {
                let e = xi(&p, &panel, m).unwrap();
                prop_assert!(dot(&p, &e).abs() < 1e-12);
                prop_assert!(e.iter().all(|v| v.abs() <= 2.0 + 1e-12));
            }
        }

        #[test]
        fn treesum_matches_recursion(seed in 0u64..50, d in 1usize..=3, k in 1usize..=10) {
            let panel = ExpertPanel::random_grid(3, d, 8, seed).unwrap();
            let ctx = random_ctx(3, seed + 1000);
            let t = h_recursive(&ctx, &panel, k).unwrap();
            for m in panel.states() {
                prop_assert!((h_treesum(&ctx, &panel, m, k).unwrap() - t.value(m)).abs() < 1e-12);
            }
        }

        #[test]
        fn h_is_linear_in_x(seed in 0u64..50, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let panel = ExpertPanel::random_grid(3, 2, 8, seed).unwrap();
            let a = random_ctx(3, seed);
            let b = HessianContext::new(random_ctx(3, seed + 7).hessian().clone(), a.gradient().to_vec()).unwrap();
            let mix = HessianContext::new(a.hessian() * alpha + b.hessian() * beta, a.gradient().to_vec()).unwrap();
            let (ta, tb, tm) = (
                h_recursive(&a, &panel, 6).unwrap(),
                h_recursive(&b, &panel, 6).unwrap(),
                h_recursive(&mix, &panel, 6).unwrap(),
            );
            for i in 0..ta.values.len() {
                prop_assert!((tm.values[i] - alpha * ta.values[i] - beta * tb.values[i]).abs() < 1e-12);
            }
        }
    }
}
