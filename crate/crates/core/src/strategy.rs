//! Playable strategies for both sides of the regret game and the round loop
//! that pits them against each other.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::debruijn::{Bit, HistoryState};
use crate::error::{Error, Result};
use crate::experts::ExpertPanel;
use crate::game::{continuation_values, value_and_move, BruteOptions, Engine, GameSpec, BRUTE_MAX_STEPS, PATH_MAX_STEPS};
use crate::linalg::dot;
use crate::local::{h_tables_general, indifference_move_general, HTable};
use crate::payoff::Payoff;
use crate::pde::{DerivativeMode, PdeSolution, OPERATOR_GRADIENT_FLOOR};

/// One played round: the move of each side on day `day` and the regret
/// vector after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub day: usize,
    pub state: HistoryState,
    pub f: f64,
    pub b: Bit,
    pub x: Vec<f64>,
    /// `g(x)` after the round.
    pub running_payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub start_day: usize,
    pub x0: Vec<f64>,
    pub m0: HistoryState,
    pub rounds: Vec<Round>,
    pub final_payoff: f64,
    /// Investor moves that had to be clamped into `[-1, 1]`.
    pub clamps: usize,
    /// Whether the block investor had to shorten its last block.
    pub ragged_block: bool,
}

impl Trajectory {
    pub fn final_regret(&self) -> &[f64] {
        self.rounds.last().map_or(&self.x0, |r| &r.x)
    }

    /// CSV with header `day,state,f,b,x_1..x_n,running_payoff`.
    pub fn to_csv(&self) -> String {
        let n = self.x0.len();
        let mut out = String::from("day,state,f,b");
        for i in 1..=n {
            let _ = write!(out, ",x_{i}");
        }
        out.push_str(",running_payoff\n");
        for r in &self.rounds {
            let _ = write!(out, "{},{},{},{}", r.day, r.state, r.f, r.b.as_i8());
            for v in &r.x {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", r.running_payoff);
        }
        out
    }
}

/// What a strategy sees before day `day` is played.
#[derive(Debug, Clone, Copy)]
pub struct Position<'a> {
    pub panel: &'a ExpertPanel,
    pub payoff: &'a Payoff,
    pub horizon: usize,
    pub day: usize,
    pub x: &'a [f64],
    pub m: HistoryState,
}

impl Position<'_> {
    pub fn spec(&self) -> Result<GameSpec<'_>> {
        GameSpec::new(self.panel, self.payoff, self.horizon, self.x.to_vec(), self.m, self.day)
    }

    /// `(x / √N, ℓ / N)`.
    pub fn rescaled(&self) -> (Vec<f64>, f64) {
        let root = (self.horizon as f64).sqrt();
        (self.x.iter().map(|v| v / root).collect(), self.day as f64 / self.horizon as f64)
    }
}

pub trait Investor {
    fn name(&self) -> &'static str;
    fn choose(&mut self, pos: &Position) -> Result<f64>;
    /// Called after the market answers.
    fn observe(&mut self, _pos: &Position, _f: f64, _b: Bit) {}
    fn clamps(&self) -> usize {
        0
    }
    fn ragged(&self) -> bool {
        false
    }
}

pub trait Market {
    fn name(&self) -> &'static str;
    fn choose(&mut self, pos: &Position, f: f64, rng: &mut ChaCha8Rng) -> Result<Bit>;
}

/// Overshoots of `[-1, 1]` up to this size are rounding and are clamped
/// without being counted.
pub const CLAMP_SLACK: f64 = 1e-9;

/// Derivatives used by the asymptotic strategies.
const STRATEGY_DERIVATIVES: DerivativeMode = DerivativeMode::Kernel;

/// Clamp into `[-1, 1]`, counting the event.
fn clamp_counted(f: f64, clamps: &mut usize) -> f64 {
    let c = f.clamp(-1.0, 1.0);
    if (c - f).abs() > CLAMP_SLACK {
        *clamps += 1;
    }
    c
}

/// The engine an exact strategy uses for this payoff and horizon.
pub fn exact_engine(payoff: &Payoff, steps: usize) -> Result<Engine> {
    if payoff.g3() {
        Ok(if steps <= PATH_MAX_STEPS.min(14) { Engine::Path } else { Engine::Lattice })
    } else if steps <= BRUTE_MAX_STEPS {
        Ok(Engine::Brute)
    } else {
        Err(Error::HorizonTooLarge { engine: "brute", steps, budget: BRUTE_MAX_STEPS })
    }
}

/// The optimal move from dynamic programming.
#[derive(Debug, Clone, Default)]
pub struct ExactInvestor {
    pub brute: BruteOptions,
}

impl Investor for ExactInvestor {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn choose(&mut self, pos: &Position) -> Result<f64> {
        let spec = pos.spec()?;
        let engine = exact_engine(pos.payoff, spec.steps())?;
        Ok(value_and_move(&spec, engine, self.brute)?.1)
    }
}

/// Always plays the same move.
#[derive(Debug, Clone, Copy)]
pub struct ConstantInvestor(pub f64);

impl Investor for ConstantInvestor {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn choose(&mut self, _pos: &Position) -> Result<f64> {
        if !(-1.0..=1.0).contains(&self.0) {
            return Err(Error::InvalidArgument(format!("constant move {} outside [-1, 1]", self.0)));
        }
        Ok(self.0)
    }
}

/// `<∇u, q(m)> / <∇u, 1>` before clamping.
pub fn gradient_weighted_move(grad: &[f64], q: &[f64]) -> Result<f64> {
    let total: f64 = grad.iter().sum();
    if total <= OPERATOR_GRADIENT_FLOOR {
        return Err(Error::DegenerateGradient(total));
    }
    Ok(dot(grad, q) / total)
}

/// The gradient-weighted average of the expert predictions at rescaled
/// `(x, t)`. Returns the clamped move and whether clamping happened.
pub fn investor_gradient_weighted(
    sol: &PdeSolution,
    panel: &ExpertPanel,
    x: &[f64],
    t: f64,
    m: HistoryState,
) -> Result<(f64, bool)> {
    let d = sol.derivatives(x, t, STRATEGY_DERIVATIVES)?;
    let raw = gradient_weighted_move(&d.grad, panel.q(m))?;
    let f = raw.clamp(-1.0, 1.0);
    Ok((f, (f - raw).abs() > CLAMP_SLACK))
}

pub struct GradientInvestor<'a> {
    pub sol: &'a PdeSolution,
    clamps: usize,
}

impl<'a> GradientInvestor<'a> {
    pub fn new(sol: &'a PdeSolution) -> Self {
        Self { sol, clamps: 0 }
    }
}

impl Investor for GradientInvestor<'_> {
    fn name(&self) -> &'static str {
        "gradient"
    }

    fn choose(&mut self, pos: &Position) -> Result<f64> {
        let (x, t) = pos.rescaled();
        let (f, clamped) = investor_gradient_weighted(self.sol, pos.panel, &x, t, pos.m)?;
        self.clamps += usize::from(clamped);
        Ok(f)
    }

    fn clamps(&self) -> usize {
        self.clamps
    }
}

/// `⌈d^{1/3} N^{1/6}⌉`, snapping values within `1e-9` of an integer.
pub fn block_length(horizon: usize, d: usize) -> usize {
    let k = (d.max(1) as f64).cbrt() * (horizon as f64).powf(1.0 / 6.0);
    let snapped = if (k - k.round()).abs() <= 1e-9 { k.round() } else { k.ceil() };
    (snapped as usize).max(1)
}

/// A block of the second-order strategy: gradient and Hessian frozen at the
/// block start, the running sum `S = Σ b_j δ_j` of the block so far, and the
/// tree-sum tables for every remaining depth.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub k: usize,
    pub start_day: usize,
    pub p: Vec<f64>,
    pub x: DMatrix<f64>,
    pub eps: f64,
    pub s: Vec<f64>,
    /// Moves already played in the block.
    pub played: usize,
    pub tables: Vec<HTable>,
}

impl BlockState {
    pub fn new(
        panel: &ExpertPanel,
        p: Vec<f64>,
        x: DMatrix<f64>,
        k: usize,
        eps: f64,
        start_day: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("block length must be positive".into()));
        }
        let sym = (&x + x.transpose()) * 0.5;
        let tables = h_tables_general(&sym, &p, panel, k)?;
        Ok(Self { k, start_day, s: vec![0.0; p.len()], p, x: sym, eps, played: 0, tables })
    }

    pub fn finished(&self) -> bool {
        self.played >= self.k
    }

    /// Record the round just played.
    pub fn advance(&mut self, q: &[f64], f: f64, b: Bit) {
        let sign = b.sign();
        for (si, qi) in self.s.iter_mut().zip(q) {
            *si += sign * (qi - f);
        }
        self.played += 1;
    }
}

/// The unclamped block move at position `i = played + 1` in state `m`:
///
/// `(<p,q> + ε<Xq,S> + ε/2 (H_{k-i}(m+) - H_{k-i}(m-))) / (<p,1> + ε<X1,S>)`.
pub fn investor_block(block: &BlockState, panel: &ExpertPanel, m: HistoryState) -> Result<f64> {
    if block.finished() {
        return Err(Error::InvalidArgument("block is already complete".into()));
    }
    let remaining = block.k - block.played - 1;
    let delta = block.tables[remaining].delta(m);
    indifference_move_general(&block.x, &block.p, panel.q(m), &block.s, delta, block.eps)
}

/// The block strategy with `ε = N^{-1/2}`.
pub struct BlockInvestor<'a> {
    pub sol: &'a PdeSolution,
    pub k: usize,
    pub block: Option<BlockState>,
    clamps: usize,
    ragged: bool,
}

impl<'a> BlockInvestor<'a> {
    pub fn new(sol: &'a PdeSolution, k: usize) -> Self {
        Self { sol, k, block: None, clamps: 0, ragged: false }
    }
}

impl Investor for BlockInvestor<'_> {
    fn name(&self) -> &'static str {
        "block"
    }

    fn choose(&mut self, pos: &Position) -> Result<f64> {
        if self.block.as_ref().is_none_or(BlockState::finished) {
            let len = self.k.min(pos.horizon - pos.day);
            self.ragged |= len < self.k;
            let (x, t) = pos.rescaled();
            let d = self.sol.derivatives(&x, t, STRATEGY_DERIVATIVES)?;
            let eps = 1.0 / (pos.horizon as f64).sqrt();
            self.block = Some(BlockState::new(pos.panel, d.grad, d.hess, len, eps, pos.day)?);
        }
        let block = self.block.as_ref().expect("block initialized");
        let raw = investor_block(block, pos.panel, pos.m)?;
        Ok(clamp_counted(raw, &mut self.clamps))
    }

    fn observe(&mut self, pos: &Position, f: f64, b: Bit) {
        if let Some(block) = self.block.as_mut() {
            block.advance(pos.panel.q(pos.m), f, b);
        }
    }

    fn clamps(&self) -> usize {
        self.clamps
    }

    fn ragged(&self) -> bool {
        self.ragged
    }
}

/// The market reply that maximizes the continuation value, `+1` on ties.
pub fn market_exhaustive(spec: &GameSpec, f: f64) -> Result<Bit> {
    let engine = exact_engine(spec.payoff, spec.steps().saturating_sub(1))?;
    let (plus, minus) = continuation_values(spec, engine, Some(f))?;
    Ok(if plus >= minus { Bit::Plus } else { Bit::Minus })
}

/// `sign <g, q - f1>` with zero mapped to `+1`.
pub fn greedy_sign(grad: &[f64], q: &[f64], f: f64) -> Bit {
    let v: f64 = grad.iter().zip(q).map(|(g, qi)| g * (qi - f)).sum();
    if v >= 0.0 {
        Bit::Plus
    } else {
        Bit::Minus
    }
}

/// The market reply `sign <∇u, q(m) - f1>` at rescaled `(x, t)`.
pub fn market_greedy_sign(
    sol: &PdeSolution,
    panel: &ExpertPanel,
    x: &[f64],
    t: f64,
    m: HistoryState,
    f: f64,
) -> Result<Bit> {
    let d = sol.derivatives(x, t, STRATEGY_DERIVATIVES)?;
    let total: f64 = d.grad.iter().sum();
    if total <= OPERATOR_GRADIENT_FLOOR {
        return Err(Error::DegenerateGradient(total));
    }
    Ok(greedy_sign(&d.grad, panel.q(m), f))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveMarket;

impl Market for ExhaustiveMarket {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn choose(&mut self, pos: &Position, f: f64, _rng: &mut ChaCha8Rng) -> Result<Bit> {
        market_exhaustive(&pos.spec()?, f)
    }
}

pub struct GreedyMarket<'a> {
    pub sol: &'a PdeSolution,
}

impl Market for GreedyMarket<'_> {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn choose(&mut self, pos: &Position, f: f64, _rng: &mut ChaCha8Rng) -> Result<Bit> {
        let (x, t) = pos.rescaled();
        market_greedy_sign(self.sol, pos.panel, &x, t, pos.m, f)
    }
}

/// Fair coin flips from the simulation generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomMarket;

impl Market for RandomMarket {
    fn name(&self) -> &'static str {
        "random"
    }

    fn choose(&mut self, _pos: &Position, _f: f64, rng: &mut ChaCha8Rng) -> Result<Bit> {
        Ok(if rng.random_bool(0.5) { Bit::Plus } else { Bit::Minus })
    }
}

/// Play days `ℓ, ..., N-1` from `spec`: `N - ℓ` rounds.
pub fn simulate(spec: &GameSpec, investor: &mut dyn Investor, market: &mut dyn Market, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = spec.x0.clone();
    let mut m = spec.m0;
    let mut rounds = Vec::with_capacity(spec.steps());
    let mut clamps = 0;
    for day in spec.ell..spec.horizon {
        let pos = Position { panel: spec.panel, payoff: spec.payoff, horizon: spec.horizon, day, x: &x, m };
        let chosen = investor.choose(&pos)?;
        let f = clamp_counted(chosen, &mut clamps);
        let b = market.choose(&pos, f, &mut rng)?;
        investor.observe(&pos, f, b);
        let q = spec.panel.q(m);
        let sign = b.sign();
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi += sign * (qi - f);
        }
        rounds.push(Round { day, state: m, f, b, x: x.clone(), running_payoff: spec.payoff.eval(&x) });
        m = m.shift(b);
    }
    Ok(Trajectory {
        horizon: spec.horizon,
        start_day: spec.ell,
        x0: spec.x0.clone(),
        m0: spec.m0,
        final_payoff: spec.payoff.eval(&x),
        rounds,
        clamps: clamps + investor.clamps(),
        ragged_block: investor.ragged(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::value_exact;
    use crate::pde::Quadrature;

    fn st(s: &str) -> HistoryState {
        s.parse().unwrap()
    }

    fn static_pm() -> ExpertPanel {
        ExpertPanel::constant(1, &[1.0, -1.0]).unwrap()
    }

    #[test]
    fn exhaustive_tie_goes_up() {
        let panel = static_pm();
        let spec = GameSpec::new(&panel, &Payoff::Max, 2, vec![0.0, 0.0], st("+"), 1).unwrap();
        let (p, mi) = continuation_values(&spec, Engine::Path, Some(0.0)).unwrap();
        assert_eq!((p, mi), (1.0, 1.0));
        assert_eq!(market_exhaustive(&spec, 0.0).unwrap(), Bit::Plus);
        let over = GameSpec::new(&panel, &Payoff::Max, 2, vec![0.0, 0.0], st("+"), 2).unwrap();
        assert!(matches!(market_exhaustive(&over, 0.0), Err(Error::GameOver { .. })));
    }

    #[test]
    fn exhaustive_follows_the_linear_term() {
        // with a far-off move the market collects the sign of <w, q - f1>
        let panel = ExpertPanel::new(2, 1, vec![vec![0.5, -0.5], vec![0.25, 0.75]]).unwrap();
        let g = Payoff::linear(vec![0.7, 0.3]).unwrap();
        for (m, f) in [(st("-"), 1.0), (st("-"), -1.0), (st("+"), 0.9), (st("+"), -0.9)] {
            let spec = GameSpec::new(&panel, &g, 3, vec![0.1, -0.2], m, 1).unwrap();
            let (p, mi) = continuation_values(&spec, Engine::Path, Some(f)).unwrap();
            let expect = if p >= mi { Bit::Plus } else { Bit::Minus };
            let lin = dot(&[0.7, 0.3], &panel.q(m).iter().map(|q| q - f).collect::<Vec<_>>());
            assert_eq!(market_exhaustive(&spec, f).unwrap(), expect);
            assert_eq!(expect, if lin >= 0.0 { Bit::Plus } else { Bit::Minus });
        }
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_sign(&[0.75, 0.25], &[1.0, -1.0], -1.0), Bit::Plus);
        assert_eq!(greedy_sign(&[-0.75, -0.25], &[1.0, -1.0], -1.0), Bit::Minus);
        let g = [0.6, 0.4];
        let f = gradient_weighted_move(&g, &[1.0, -1.0]).unwrap();
        assert_eq!(greedy_sign(&g, &[1.0, -1.0], f), Bit::Plus);
        assert!(matches!(gradient_weighted_move(&[0.5, -0.5], &[1.0, 0.0]), Err(Error::DegenerateGradient(_))));
    }

    #[test]
    fn gradient_weighted_examples() {
        let panel = ExpertPanel::random_grid(3, 1, 4, 3).unwrap();
        let w = vec![0.2, 0.5, 0.3];
        let sol = PdeSolution::with_defaults(&panel, &Payoff::linear(w.clone()).unwrap()).unwrap();
        for m in panel.states() {
            let (f, clamped) = investor_gradient_weighted(&sol, &panel, &[0.1, 0.4, -0.2], 0.3, m).unwrap();
            assert!((f - dot(&w, panel.q(m))).abs() < 1e-7 && !clamped);
        }
        let sym = PdeSolution::with_defaults(&static_pm(), &Payoff::Max).unwrap();
        let (f, _) = investor_gradient_weighted(&sym, &static_pm(), &[0.3, 0.3], 0.5, st("+")).unwrap();
        assert!(f.abs() < 1e-9);
    }

    #[test]
    fn block_move_reductions() {
        let panel = ExpertPanel::random_grid(3, 2, 4, 7).unwrap();
        let p = vec![0.5, 0.3, 0.2];
        let m = st("+-");
        let eps = 0.05;
        // X = 0: the plain gradient-weighted move
        let flat = BlockState::new(&panel, p.clone(), DMatrix::zeros(3, 3), 4, eps, 1).unwrap();
        let f = investor_block(&flat, &panel, m).unwrap();
        assert!((f - gradient_weighted_move(&p, panel.q(m)).unwrap()).abs() < 1e-15);
        // first move: the H correction alone
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.1, 0.2, 0.5, 0.0, -0.1, 0.0, 0.8]);
        let block = BlockState::new(&panel, p.clone(), x, 4, eps, 1).unwrap();
        let f = investor_block(&block, &panel, m).unwrap();
        let base = gradient_weighted_move(&p, panel.q(m)).unwrap();
        let corr = 0.5 * eps * block.tables[3].delta(m) / p.iter().sum::<f64>();
        assert!((f - base - corr).abs() < 1e-15);
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(block_length(64, 1), 2);
        assert_eq!(block_length(4096, 1), 4);
        assert_eq!(block_length(4097, 1), 5);
        assert_eq!(block_length(1, 1), 1);
    }

    #[test]
    fn exact_play_reproduces_the_value() {
        for seed in 0..6 {
            let panel = ExpertPanel::random_grid(2 + (seed as usize % 2), 1 + (seed as usize / 3), 4, seed).unwrap();
            let g = Payoff::Max;
            let m0 = panel.states()[seed as usize % panel.states().len()];
            let spec = GameSpec::new(&panel, &g, 9, vec![0.0; panel.experts()], m0, 1).unwrap();
            let v = value_exact(&spec, Engine::Path).unwrap();
            let t = simulate(&spec, &mut ExactInvestor::default(), &mut ExhaustiveMarket, seed).unwrap();
            assert_eq!(t.rounds.len(), 8);
            assert!((t.final_payoff - v).abs() < 1e-9, "{} vs {v}", t.final_payoff);
            for s in 0..10 {
                let r = simulate(&spec, &mut ExactInvestor::default(), &mut RandomMarket, s).unwrap();
                assert!(r.final_payoff <= v + 1e-9);
            }
            for f in [-1.0, -0.3, 0.0, 0.6] {
                let r = simulate(&spec, &mut ConstantInvestor(f), &mut ExhaustiveMarket, 0).unwrap();
                assert!(r.final_payoff >= v - 1e-9);
            }
        }
    }

    #[test]
    fn linear_payoff_is_hedged_exactly() {
        let panel = ExpertPanel::random_grid(3, 2, 8, 4).unwrap();
        let w = vec![0.25, 0.5, 0.25];
        let g = Payoff::linear(w.clone()).unwrap();
        struct Weighted(Vec<f64>);
        impl Investor for Weighted {
            fn name(&self) -> &'static str {
                "weighted"
            }
            fn choose(&mut self, pos: &Position) -> Result<f64> {
                Ok(dot(&self.0, pos.panel.q(pos.m)))
            }
        }
        let x0 = vec![0.5, -1.0, 0.25];
        let spec = GameSpec::new(&panel, &g, 40, x0.clone(), st("++"), 1).unwrap();
        let t = simulate(&spec, &mut Weighted(w.clone()), &mut RandomMarket, 11).unwrap();
        assert!((t.final_payoff - dot(&w, &x0)).abs() < 1e-12);
    }

    #[test]
    fn trajectory_bookkeeping() {
        let panel = static_pm();
        let spec = GameSpec::new(&panel, &Payoff::Max, 5, vec![0.0, 0.0], st("-"), 5).unwrap();
        let t = simulate(&spec, &mut ConstantInvestor(0.0), &mut RandomMarket, 1).unwrap();
        assert!(t.rounds.is_empty());
        assert_eq!(t.final_payoff, 0.0);
        let spec = GameSpec::new(&panel, &Payoff::Max, 6, vec![0.0, 0.0], st("-"), 1).unwrap();
        let t = simulate(&spec, &mut ConstantInvestor(0.25), &mut RandomMarket, 2).unwrap();
        let mut x = vec![0.0, 0.0];
        let mut m = st("-");
        for r in &t.rounds {
            assert_eq!(r.state, m);
            x[0] += r.b.sign() * (1.0 - 0.25);
            x[1] += r.b.sign() * (-1.0 - 0.25);
            assert_eq!(r.x, x);
            m = m.shift(r.b);
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("day,state,f,b,x_1,x_2,running_payoff\n"));
        assert_eq!(csv.lines().count(), 6);
        let again = simulate(&spec, &mut ConstantInvestor(0.25), &mut RandomMarket, 2).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn block_investor_runs_without_clamps() {
        let panel = static_pm();
        let sol = PdeSolution::new(&panel, &Payoff::Max, Quadrature::default_for(1)).unwrap();
        let n = 200;
        let spec = GameSpec::new(&panel, &Payoff::Max, n, vec![0.0, 0.0], st("+"), 1).unwrap();
        let k = block_length(n, 1);
        let t = simulate(&spec, &mut BlockInvestor::new(&sol, k), &mut GreedyMarket { sol: &sol }, 0).unwrap();
        assert_eq!(t.rounds.len(), n - 1);
        assert_eq!(t.clamps, 0);
        assert!(t.ragged_block);
        assert!(t.final_payoff.is_finite());
    }
}
