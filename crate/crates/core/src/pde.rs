//! The continuum limit. For payoffs with `g(x + s1) = g(x) + s` the value
//! solves a linear heat equation after the change of variables
//! `y_i = x_i - x_n` (`i < n`), `y_n = Σ x`:
//!
//! ```text
//! u(x, t) = h(x_1 - x_n, ..., x_{n-1} - x_n, t) + mean(x),
//! h(y, t) = E[ḡ(y + G)],   G ~ N(0, 2(1 - t) A),   ḡ(y) = g(R⁻¹(y, 0)).
//! ```
//!
//! Expectations are computed on a rule built once at a reference point and
//! reweighted by the Gaussian kernel elsewhere. The reweighted sum is itself
//! an exact solution of the heat equation, which keeps finite differences of
//! it clean.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experts::{ExpertPanel, ELLIPTIC_FLOOR};
use crate::linalg::{dot, mat_vec, quad_form, sym_min_eigenvalue, SpdFactor};
use crate::payoff::Payoff;
use crate::quadrature::{gauss_hermite_tensor, monte_carlo, monte_carlo_rule, nested_adaptive, AdaptiveOptions, Rule};

/// `<∇φ, 1>` at or below this leaves the operator undefined.
pub const OPERATOR_GRADIENT_FLOOR: f64 = 1e-9;
/// Whitened integration box half-width for adaptive quadrature.
pub const ADAPTIVE_RADIUS: f64 = 10.0;
/// Order doubling stops once successive Gauss-Hermite values agree this well.
pub const HERMITE_STABILITY: f64 = 1e-8;
/// Largest tensor Gauss-Hermite rule tried while doubling.
pub const HERMITE_MAX_NODES: usize = 1 << 22;
/// Largest one-dimensional Gauss-Hermite order tried while doubling.
pub const HERMITE_MAX_ORDER: usize = 1024;
/// Relative spatial step for finite-difference derivatives.
pub const FD_STEP: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The linear change of variables `y = R x`: rows `e_i - e_n` for `i < n`,
/// and a last row of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    n: usize,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl CoordinateMap {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least two experts, got {n}")));
        }
        let r = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == n || i == j {
                1.0
            } else if j + 1 == n {
                -1.0
            } else {
                0.0
            }
        });
        let nf = n as f64;
        let r_inv = DMatrix::from_fn(n, n, |i, j| {
            // x_n = (y_n - Σ_{i<n} y_i) / n,  x_i = y_i + x_n
            let last = if j + 1 == n { 1.0 / nf } else { -1.0 / nf };
            if i + 1 < n && i == j {
                1.0 + last
            } else {
                last
            }
        });
        Ok(Self { n, r, r_inv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let xn = x[self.n - 1];
        let mut y: Vec<f64> = x[..self.n - 1].iter().map(|v| v - xn).collect();
        y.push(x.iter().sum());
        y
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let k = self.n - 1;
        let xn = (y[k] - y[..k].iter().sum::<f64>()) / self.n as f64;
        let mut x: Vec<f64> = y[..k].iter().map(|v| v + xn).collect();
        x.push(xn);
        x
    }

    /// The first `n - 1` coordinates of `R x`.
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        let xn = x[self.n - 1];
        x[..self.n - 1].iter().map(|v| v - xn).collect()
    }

    /// `R⁻¹(y, 0)`: the point with reduced coordinates `y` and zero sum.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let xn = -y.iter().sum::<f64>() / self.n as f64;
        let mut x: Vec<f64> = y.iter().map(|v| v + xn).collect();
        x.push(xn);
        x
    }
}

/// Heat kernel `(4πt)^{-k/2} |A|^{-1/2} exp(-<A⁻¹y, y> / 4t)` in dimension
/// `k = dim A`: the density of a centered Gaussian with covariance `2tA`.
pub fn heat_kernel(a: &DMatrix<f64>, y: &[f64], t: f64) -> Result<f64> {
    let lambda = sym_min_eigenvalue(a);
    if !(lambda > ELLIPTIC_FLOOR) {
        return Err(Error::SingularDiffusion(lambda));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("heat kernel needs t > 0, got {t}")));
    }
    if y.len() != a.nrows() {
        return Err(Error::InvalidArgument("kernel argument has the wrong dimension".into()));
    }
    let f = SpdFactor::new(a).ok_or(Error::SingularDiffusion(lambda))?;
    let k = y.len() as f64;
    let q = quad_form(&f.inv, y, y);
    Ok((4.0 * std::f64::consts::PI * t).powf(-k / 2.0) / f.det.sqrt() * (-q / (4.0 * t)).exp())
}

/// How Gaussian expectations are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Nested adaptive Gauss-Kronrod in whitened coordinates.
    Adaptive { tol: f64 },
    /// Tensor Gauss-Hermite, doubling the order from this start until stable.
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Quadrature {
    /// Adaptive quadrature up to three dimensions, Monte Carlo beyond.
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => Quadrature::Adaptive { tol: 1e-13 },
            2 => Quadrature::Adaptive { tol: 1e-10 },
            3 => Quadrature::Adaptive { tol: 1e-9 },
            _ => Quadrature::MonteCarlo { samples: 1_000_000, seed: 0 },
        }
    }
}

/// How [`PdeSolution::derivatives`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Central differences of the reweighted rule.
    #[default]
    FiniteDifference,
    /// Differentiating the Gaussian kernel under the sum.
    Kernel,
}

/// `∇u`, `∇²u` and `u_t` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
    pub ut: f64,
}

/// A quadrature rule frozen at a reference point: `h(y, t)` is approximated by
/// `Σ_k c_k φ_{2(1-t)A}(w_k - y) / ρ_k` where `ρ_k` is the reference density
/// of node `k`.
#[derive(Debug, Clone)]
pub struct FrozenRule {
    dim: usize,
    nodes: Vec<f64>,
    coef: Vec<f64>,
    log_ref: Vec<f64>,
    a_inv: DMatrix<f64>,
    log_det_a: f64,
}

struct KernelTerms {
    value: f64,
    grad: Vec<f64>,
    hess: DMatrix<f64>,
    ht: f64,
}

impl FrozenRule {
    pub fn len(&self) -> usize {
        self.coef.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coef.is_empty()
    }

    fn log_density(&self, v: &[f64], tau: f64) -> f64 {
        let k = self.dim as f64;
        -0.5 * k * LN_2PI - 0.5 * (k * (2.0 * tau).ln() + self.log_det_a) - quad_form(&self.a_inv, v, v) / (4.0 * tau)
    }

    fn weight(&self, j: usize, y: &[f64], tau: f64) -> (f64, Vec<f64>) {
        let w = &self.nodes[j * self.dim..(j + 1) * self.dim];
        let v: Vec<f64> = w.iter().zip(y).map(|(a, b)| a - b).collect();
        let lw = self.log_density(&v, tau) - self.log_ref[j];
        (self.coef[j] * lw.exp(), v)
    }

    /// `h(y, t)` for `t < 1`.
    pub fn eval(&self, y: &[f64], t: f64) -> f64 {
        let tau = 1.0 - t;
        let partial = |c: usize| chunk(c, self.len()).map(|j| self.weight(j, y, tau).0).sum::<f64>();
        chunk_sums(self.len(), partial).into_iter().sum()
    }

    fn kernel_terms(&self, y: &[f64], t: f64) -> KernelTerms {
        let k = self.dim;
        let tau = 1.0 - t;
        // Σ⁻¹ = A⁻¹ / 2τ, Σ⁻¹AΣ⁻¹ = A⁻¹ / 4τ², tr(Σ⁻¹A) = k / 2τ
        let zero = || KernelTerms { value: 0.0, grad: vec![0.0; k], hess: DMatrix::zeros(k, k), ht: 0.0 };
        let add = |mut acc: KernelTerms, j: usize| {
            let (c, v) = self.weight(j, y, tau);
            let s: Vec<f64> = mat_vec(&self.a_inv, &v).into_iter().map(|u| u / (2.0 * tau)).collect();
            acc.value += c;
            for i in 0..k {
                acc.grad[i] += c * s[i];
                for l in 0..k {
                    acc.hess[(i, l)] += c * s[i] * s[l];
                }
            }
            acc.ht += c * (k as f64 / (2.0 * tau) - quad_form(&self.a_inv, &v, &v) / (4.0 * tau * tau));
            acc
        };
        let merge = |mut a: KernelTerms, b: KernelTerms| {
            a.value += b.value;
            a.ht += b.ht;
            for i in 0..k {
                a.grad[i] += b.grad[i];
            }
            a.hess += b.hess;
            a
        };
        let partial = |c: usize| chunk(c, self.len()).fold(zero(), add);
        let mut acc = chunk_sums(self.len(), partial).into_iter().fold(zero(), merge);
        // ∇²φ = φ(ss' - Σ⁻¹)
        acc.hess -= &self.a_inv * (acc.value / (2.0 * tau));
        acc
    }
}

const CHUNK: usize = 2048;

fn chunk(c: usize, len: usize) -> std::ops::Range<usize> {
    c * CHUNK..((c + 1) * CHUNK).min(len)
}

/// Per-chunk partial results in chunk order, so the final reduction does not
/// depend on thread scheduling.
fn chunk_sums<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let chunks = len.div_ceil(CHUNK);
    if chunks <= 1 {
        (0..chunks).map(f).collect()
    } else {
        (0..chunks).into_par_iter().map(f).collect()
    }
}

/// Closed-form solution of the limiting equation for a payoff with the
/// translation property.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    n: usize,
    d: usize,
    a: DMatrix<f64>,
    factor: SpdFactor,
    payoff: Payoff,
    quadrature: Quadrature,
    map: CoordinateMap,
}

impl PdeSolution {
    pub fn new(panel: &ExpertPanel, payoff: &Payoff, quadrature: Quadrature) -> Result<Self> {
        let n = panel.experts();
        payoff.check_dimension(n)?;
        if !payoff.g3() {
            return Err(Error::InvalidPayoff(format!(
                "{payoff} does not satisfy g(x + s1) = g(x) + s; no closed-form solution"
            )));
        }
        let a = panel.diffusion_matrix();
        let lambda = sym_min_eigenvalue(&a);
        if !(lambda > ELLIPTIC_FLOOR) {
            return Err(Error::SingularDiffusion(lambda));
        }
        let factor = SpdFactor::new(&a).ok_or(Error::SingularDiffusion(lambda))?;
        match quadrature {
            Quadrature::Adaptive { tol } if !(tol > 0.0) => {
                return Err(Error::InvalidArgument("quadrature tolerance must be positive".into()))
            }
            Quadrature::GaussHermite { order: 0 } | Quadrature::MonteCarlo { samples: 0, .. } => {
                return Err(Error::InvalidArgument("quadrature size must be positive".into()))
            }
            _ => {}
        }
        Ok(Self { n, d: panel.window(), a, factor, payoff: payoff.clone(), quadrature, map: CoordinateMap::new(n)? })
    }

    /// Solution with [`Quadrature::default_for`] the reduced dimension.
    pub fn with_defaults(panel: &ExpertPanel, payoff: &Payoff) -> Result<Self> {
        Self::new(panel, payoff, Quadrature::default_for(panel.experts() - 1))
    }

    pub fn experts(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.d
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lambda_min(&self) -> f64 {
        self.factor.min_eigenvalue
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn map(&self) -> &CoordinateMap {
        &self.map
    }

    /// `ḡ(y) = g(R⁻¹(y, 0))`.
    pub fn g_bar(&self, y: &[f64]) -> f64 {
        self.payoff.eval(&self.map.lift(y))
    }

    /// The sum coordinate `y_n` placing `R⁻¹(y, y_n)` on the level set
    /// `{g = s}`.
    pub fn level_set_sum(&self, y: &[f64], s: f64) -> f64 {
        self.n as f64 * (s - self.g_bar(y))
    }

    fn check_point(&self, y: &[f64], t: f64) -> Result<()> {
        if y.len() + 1 != self.n {
            return Err(Error::InvalidArgument(format!("expected {} reduced coordinates", self.n - 1)));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(())
    }

    fn freeze(&self, rule: &Rule, y: &[f64], tau: f64, whitened_density: bool) -> FrozenRule {
        let k = self.n - 1;
        let scale = (2.0 * tau).sqrt();
        let l = &self.factor.sqrt * scale;
        let log_det_l = 0.5 * (k as f64 * (2.0 * tau).ln() + self.factor.det.ln());
        let mut nodes = Vec::with_capacity(rule.len() * k);
        let mut coef = Vec::with_capacity(rule.len());
        let mut log_ref = Vec::with_capacity(rule.len());
        for j in 0..rule.len() {
            let z = rule.node(j);
            let w: Vec<f64> = mat_vec(&l, z).iter().zip(y).map(|(a, b)| a + b).collect();
            let log_n = -0.5 * k as f64 * LN_2PI - 0.5 * dot(z, z);
            // adaptive weights integrate g(w) N(z) dz; the others integrate
            // against N(z) already
            let wt = if whitened_density { rule.weights[j] * log_n.exp() } else { rule.weights[j] };
            coef.push(wt * self.g_bar(&w));
            log_ref.push(log_n - log_det_l);
            nodes.extend(w);
        }
        FrozenRule {
            dim: k,
            nodes,
            coef,
            log_ref,
            a_inv: self.factor.inv.clone(),
            log_det_a: self.factor.det.ln(),
        }
    }

    fn adaptive_rule(&self, y: &[f64], tau: f64, tol: f64) -> Result<Rule> {
        let k = self.n - 1;
        let l = &self.factor.sqrt * (2.0 * tau).sqrt();
        let f = |z: &[f64]| {
            let w: Vec<f64> = mat_vec(&l, z).iter().zip(y).map(|(a, b)| a + b).collect();
            let n = (-0.5 * k as f64 * LN_2PI - 0.5 * dot(z, z)).exp();
            self.g_bar(&w) * n
        };
        let opts = AdaptiveOptions { tol, ..AdaptiveOptions::default() };
        nested_adaptive(k, &f, -ADAPTIVE_RADIUS, ADAPTIVE_RADIUS, opts)
    }

    fn hermite_rule(&self, y: &[f64], tau: f64, start: usize) -> Result<Rule> {
        let k = self.n - 1;
        let l = &self.factor.sqrt * (2.0 * tau).sqrt();
        let value = |rule: &Rule| {
            rule.integrate(&mut |z: &[f64]| {
                let w: Vec<f64> = mat_vec(&l, z).iter().zip(y).map(|(a, b)| a + b).collect();
                self.g_bar(&w)
            })
        };
        let mut order = start;
        let mut rule = gauss_hermite_tensor(k, order)?;
        let mut prev = value(&rule);
        loop {
            let next_order = order * 2;
            if next_order > HERMITE_MAX_ORDER || next_order.checked_pow(k as u32).is_none_or(|c| c > HERMITE_MAX_NODES) {
                return Err(Error::QuadratureNotConverged(format!(
                    "Gauss-Hermite values still moving at order {order}"
                )));
            }
            let next = gauss_hermite_tensor(k, next_order)?;
            let v = value(&next);
            let stable = (v - prev).abs() <= HERMITE_STABILITY;
            order = next_order;
            rule = next;
            prev = v;
            if stable {
                return Ok(rule);
            }
        }
    }

    /// The rule used for expectations near `(y, t)`, `t < 1`.
    pub fn frozen_rule(&self, y: &[f64], t: f64) -> Result<FrozenRule> {
        self.check_point(y, t)?;
        if t >= 1.0 {
            return Err(Error::InvalidArgument("no Gaussian smoothing at t = 1".into()));
        }
        let tau = 1.0 - t;
        match self.quadrature {
            Quadrature::Adaptive { tol } => Ok(self.freeze(&self.adaptive_rule(y, tau, tol)?, y, tau, true)),
            Quadrature::GaussHermite { order } => Ok(self.freeze(&self.hermite_rule(y, tau, order)?, y, tau, false)),
            Quadrature::MonteCarlo { samples, seed } => {
                Ok(self.freeze(&monte_carlo_rule(self.n - 1, samples, seed), y, tau, false))
            }
        }
    }

    /// `h(y, t) = E[ḡ(y + G)]`, exactly `ḡ(y)` at `t = 1`.
    pub fn evaluate_h(&self, y: &[f64], t: f64) -> Result<f64> {
        self.check_point(y, t)?;
        if t == 1.0 {
            return Ok(self.g_bar(y));
        }
        Ok(self.frozen_rule(y, t)?.eval(y, t))
    }

    /// `u(x, t) = h(reduced x, t) + mean(x)`, exactly `g(x)` at `t = 1`.
    pub fn evaluate_u(&self, x: &[f64], t: f64) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::InvalidArgument(format!("expected {} coordinates", self.n)));
        }
        if t == 1.0 {
            self.check_point(&self.map.reduce(x), t)?;
            return Ok(self.payoff.eval(x));
        }
        let mean = x.iter().sum::<f64>() / self.n as f64;
        Ok(self.evaluate_h(&self.map.reduce(x), t)? + mean)
    }

    /// Seeded Monte-Carlo estimate of `h(y, t)` with its standard error.
    pub fn monte_carlo_h(&self, y: &[f64], t: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
        self.check_point(y, t)?;
        let l = &self.factor.sqrt * (2.0 * (1.0 - t)).sqrt();
        Ok(monte_carlo(
            self.n - 1,
            &mut |z: &[f64]| {
                let w: Vec<f64> = mat_vec(&l, z).iter().zip(y).map(|(a, b)| a + b).collect();
                self.g_bar(&w)
            },
            samples,
            seed,
        ))
    }

    /// `∇u`, `∇²u` and `u_t` at `(x, t)`, `t < 1`.
    pub fn derivatives(&self, x: &[f64], t: f64, mode: DerivativeMode) -> Result<Derivatives> {
        if x.len() != self.n {
            return Err(Error::InvalidArgument(format!("expected {} coordinates", self.n)));
        }
        if !(t < 1.0) {
            return Err(Error::InvalidArgument(format!("derivatives need t < 1, got {t}")));
        }
        let y = self.map.reduce(x);
        let rule = self.frozen_rule(&y, t)?;
        match mode {
            DerivativeMode::Kernel => Ok(self.kernel_derivatives(&rule, &y, t)),
            DerivativeMode::FiniteDifference => Ok(self.fd_derivatives(&rule, x, t)),
        }
    }

    fn kernel_derivatives(&self, rule: &FrozenRule, y: &[f64], t: f64) -> Derivatives {
        let n = self.n;
        let k = n - 1;
        let terms = rule.kernel_terms(y, t);
        // y = J x with J = [I, -1]
        let j = DMatrix::from_fn(k, n, |i, c| {
            if c == i {
                1.0
            } else if c + 1 == n {
                -1.0
            } else {
                0.0
            }
        });
        let gh = nalgebra::DVector::from_column_slice(&terms.grad);
        let grad: Vec<f64> = (j.transpose() * gh).iter().map(|v| v + 1.0 / n as f64).collect();
        let hess = j.transpose() * &terms.hess * &j;
        Derivatives { grad, hess, ut: terms.ht }
    }

    fn fd_derivatives(&self, rule: &FrozenRule, x: &[f64], t: f64) -> Derivatives {
        let n = self.n;
        let nf = n as f64;
        let u = |p: &[f64], s: f64| rule.eval(&self.map.reduce(p), s) + p.iter().sum::<f64>() / nf;
        let steps: Vec<f64> = x.iter().map(|v| FD_STEP * v.abs().max(1.0)).collect();
        let shifted = |moves: &[(usize, f64)]| {
            let mut p = x.to_vec();
            for &(i, s) in moves {
                p[i] += s;
            }
            u(&p, t)
        };
        let centre = u(x, t);
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = steps[i];
            let up = shifted(&[(i, h)]);
            let dn = shifted(&[(i, -h)]);
            grad[i] = (up - dn) / (2.0 * h);
            hess[(i, i)] = (up - 2.0 * centre + dn) / (h * h);
            for j in 0..i {
                let g = steps[j];
                let v = (shifted(&[(i, h), (j, g)]) - shifted(&[(i, h), (j, -g)]) - shifted(&[(i, -h), (j, g)])
                    + shifted(&[(i, -h), (j, -g)]))
                    / (4.0 * h * g);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let dt = FD_STEP * (1.0 - t).min(1.0);
        let ut = (u(x, t + dt) - u(x, t - dt)) / (2.0 * dt);
        Derivatives { grad, hess, ut }
    }
}

/// `φ_t + 2^{-(d+1)} Σ_m <∇²φ ξ(m), ξ(m)>` with `ξ(m) = q(m) - <p,q(m)>/<p,1> 1`
/// and `p = ∇φ`.
pub fn operator_residual(phi: &Derivatives, panel: &ExpertPanel) -> Result<f64> {
    let n = panel.experts();
    if phi.grad.len() != n || phi.hess.nrows() != n || phi.hess.ncols() != n {
        return Err(Error::InvalidArgument("derivative dimensions do not match the panel".into()));
    }
    let total: f64 = phi.grad.iter().sum();
    if total <= OPERATOR_GRADIENT_FLOOR {
        return Err(Error::DegenerateGradient(total));
    }
    let mut acc = 0.0;
    for m in panel.states() {
        let q = panel.q(m);
        let c = dot(&phi.grad, q) / total;
        let xi: Vec<f64> = q.iter().map(|v| v - c).collect();
        acc += quad_form(&phi.hess, &xi, &xi);
    }
    Ok(phi.ut + acc / 2f64.powi(panel.window() as i32 + 1))
}

/// The two-expert form `φ_t + C# <∇²φ p⊥, p⊥> / <p, 1>²` with
/// `p⊥ = (p_2, -p_1)` and `C# = 2^{-(d+1)} Σ_m (q_2 - q_1)²`.
pub fn two_expert_residual(phi: &Derivatives, panel: &ExpertPanel) -> Result<f64> {
    if panel.experts() != 2 {
        return Err(Error::InvalidArgument("two-expert form needs n = 2".into()));
    }
    let p = &phi.grad;
    let total = p[0] + p[1];
    if total <= OPERATOR_GRADIENT_FLOOR {
        return Err(Error::DegenerateGradient(total));
    }
    let c_sharp = panel.rows().iter().map(|q| (q[1] - q[0]).powi(2)).sum::<f64>() / 2f64.powi(panel.window() as i32 + 1);
    let perp = [p[1], -p[0]];
    Ok(phi.ut + c_sharp * quad_form(&phi.hess, &perp, &perp) / (total * total))
}

/// The linear form `φ_t + 2^{-(d+1)} Σ_m <∇²φ q(m), q(m)>`.
pub fn heat_residual(phi: &Derivatives, panel: &ExpertPanel) -> f64 {
    let acc: f64 = panel.rows().iter().map(|q| quad_form(&phi.hess, q, q)).sum();
    phi.ut + acc / 2f64.powi(panel.window() as i32 + 1)
}
