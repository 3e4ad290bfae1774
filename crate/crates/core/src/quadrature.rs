//! Integration rules for Gaussian expectations: nested adaptive
//! Gauss-Kronrod, tensor Gauss-Hermite, and seeded Monte Carlo.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights on the odd Kronrod nodes (indices 1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// A 15-point Kronrod panel on `[a, b]`: nodes, weights, and the embedded
/// 7-point Gauss weights (zero on the Kronrod-only nodes).
fn kronrod_panel(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..7 {
        let g = if i % 2 == 1 { GAUSS_WEIGHTS[i / 2] } else { 0.0 };
        out[2 * i] = (c - h * KRONROD_NODES[i], h * KRONROD_WEIGHTS[i], h * g);
        out[2 * i + 1] = (c + h * KRONROD_NODES[i], h * KRONROD_WEIGHTS[i], h * g);
    }
    out[14] = (c, h * KRONROD_WEIGHTS[7], h * GAUSS_WEIGHTS[3]);
    out
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    nodes: Vec<(f64, f64, T)>,
}

fn evaluate_panel<T>(f: &mut dyn FnMut(f64) -> Result<(f64, T)>, a: f64, b: f64) -> Result<Panel<T>> {
    let mut kron = 0.0;
    let mut gauss = 0.0;
    let mut values = [0.0; 15];
    let mut nodes = Vec::with_capacity(15);
    for (i, (x, wk, wg)) in kronrod_panel(a, b).into_iter().enumerate() {
        let (v, payload) = f(x)?;
        values[i] = v;
        kron += wk * v;
        gauss += wg * v;
        nodes.push((x, wk, payload));
    }
    // QUADPACK's scaled estimate: sharp on smooth panels, |K - G| otherwise
    let mean = kron / (b - a);
    let resasc: f64 = nodes.iter().zip(&values).map(|(n, v)| n.1 * (v - mean).abs()).sum();
    let raw = (kron - gauss).abs();
    let error = if resasc > 0.0 && raw > 0.0 { resasc * (200.0 * raw / resasc).powf(1.5).min(1.0) } else { raw };
    Ok(Panel { a, b, value: kron, error, nodes })
}

/// Result of a one-dimensional adaptive integration: the estimate, its
/// error bound, and the final nodes and weights with their payloads.
pub struct Adaptive<T> {
    pub value: f64,
    pub error: f64,
    pub nodes: Vec<(f64, f64, T)>,
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`, starting
/// from `initial` equal panels and bisecting the worst panel until the summed
/// error estimate is at most `tol`.
pub fn adaptive<T>(
    f: &mut dyn FnMut(f64) -> Result<(f64, T)>,
    a: f64,
    b: f64,
    initial: usize,
    tol: f64,
    max_panels: usize,
) -> Result<Adaptive<T>> {
    let initial = initial.max(1);
    let width = (b - a) / initial as f64;
    let mut panels = Vec::with_capacity(max_panels);
    for i in 0..initial {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == initial { b } else { lo + width };
        panels.push(evaluate_panel(f, lo, hi)?);
    }
    loop {
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        if total_err <= tol {
            break;
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureNotConverged(format!(
                "error estimate {total_err:e} above {tol:e} after {max_panels} panels"
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // cannot split further; keep the panel as is
            panels.push(Panel { error: 0.0, ..p });
            continue;
        }
        panels.push(evaluate_panel(f, p.a, mid)?);
        panels.push(evaluate_panel(f, mid, p.b)?);
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    let nodes = panels.into_iter().flat_map(|p| p.nodes).collect();
    Ok(Adaptive { value, error, nodes })
}

/// A cubature rule: `Σ_k weights[k] f(nodes[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub dim: usize,
    /// Flattened node coordinates, `dim` per node.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// The integral of the integrand the rule was adapted to.
    pub value: f64,
    pub error: f64,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn integrate(&self, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(self.node(k))).sum()
    }
}

/// Settings for [`nested_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Absolute error target for every one-dimensional integration.
    pub tol: f64,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { tol: 1e-12, initial_panels: 8, max_panels: 4000 }
    }
}

/// Iterated adaptive integration of `f` over the cube `[lo, hi]^dim`. Each
/// coordinate is integrated adaptively for every accepted node of the outer
/// coordinates, and the accepted nodes are returned as a reusable rule.
pub fn nested_adaptive(
    dim: usize,
    f: &dyn Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    opts: AdaptiveOptions,
) -> Result<Rule> {
    if dim == 0 {
        return Err(Error::InvalidArgument("integration dimension must be positive".into()));
    }
    fn level(
        dim: usize,
        prefix: &mut Vec<f64>,
        f: &dyn Fn(&[f64]) -> f64,
        lo: f64,
        hi: f64,
        opts: AdaptiveOptions,
    ) -> Result<(f64, f64, Vec<(Vec<f64>, f64)>)> {
        let last = prefix.len() + 1 == dim;
        let mut inner_err = 0.0f64;
        let mut g = |z: f64| -> Result<(f64, Vec<(Vec<f64>, f64)>)> {
            prefix.push(z);
            let out = if last {
                let v = f(prefix);
                Ok((v, Vec::new()))
            } else {
                level(dim, prefix, f, lo, hi, opts).map(|(v, e, nodes)| {
                    inner_err = inner_err.max(e);
                    (v, nodes)
                })
            };
            prefix.pop();
            out
        };
        let res = adaptive(&mut g, lo, hi, opts.initial_panels, opts.tol, opts.max_panels)?;
        let mut nodes = Vec::new();
        for (z, w, inner) in res.nodes {
            if last {
                nodes.push((vec![z], w));
            } else {
                for (mut tail, wi) in inner {
                    tail.insert(0, z);
                    nodes.push((tail, w * wi));
                }
            }
        }
        Ok((res.value, res.error + inner_err * (hi - lo), nodes))
    }
    let (value, error, nodes) = level(dim, &mut Vec::with_capacity(dim), f, lo, hi, opts)?;
    let mut flat = Vec::with_capacity(nodes.len() * dim);
    let mut weights = Vec::with_capacity(nodes.len());
    for (z, w) in nodes {
        flat.extend(z);
        weights.push(w);
    }
    Ok(Rule { dim, nodes: flat, weights, value, error })
}

/// Gauss-Hermite nodes and weights for the standard normal density, from the
/// eigen-decomposition of the Jacobi matrix. Weights sum to one.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidArgument("Gauss-Hermite order must be positive".into()));
    }
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect()))
}

/// Tensor Gauss-Hermite rule for `E[f(Z)]`, `Z` standard normal in `dim`
/// dimensions.
pub fn gauss_hermite_tensor(dim: usize, order: usize) -> Result<Rule> {
    let (x, w) = gauss_hermite(order)?;
    let count = order
        .checked_pow(dim as u32)
        .filter(|c| *c <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument(format!("{order}^{dim} Gauss-Hermite nodes is too many")))?;
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; dim];
    for _ in 0..count {
        let mut wt = 1.0;
        for &i in &idx {
            nodes.push(x[i]);
            wt *= w[i];
        }
        weights.push(wt);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < order {
                break;
            }
            *slot = 0;
        }
    }
    Ok(Rule { dim, nodes, weights, value: 1.0, error: 0.0 })
}

/// Seeded Monte-Carlo sample of `E[f(Z)]`: the equal-weight rule.
pub fn monte_carlo_rule(dim: usize, samples: usize, seed: u64) -> Rule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<f64> = (0..samples * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Rule { dim, nodes, weights: vec![1.0 / samples as f64; samples], value: 1.0, error: 0.0 }
}

/// Mean and standard error of `f(Z)` over a seeded standard normal sample.
pub fn monte_carlo(dim: usize, f: &mut dyn FnMut(&[f64]) -> f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; dim];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..samples {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let x = f(&z);
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
    (mean, (var / samples as f64).sqrt())
}

/// Standard normal density in `dim` dimensions.
pub fn std_normal_density(z: &[f64]) -> f64 {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    (-0.5 * r2).exp() / (2.0 * std::f64::consts::PI).powf(z.len() as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kronrod_integrates_polynomials() {
        let mut f = |x: f64| Ok((x.powi(6) - 2.0 * x.powi(3) + 1.0, ()));
        let r = adaptive(&mut f, -1.0, 2.0, 1, 1e-13, 10).unwrap();
        let exact = (2f64.powi(7) + 1.0) / 7.0 - (16.0 - 1.0) / 2.0 + 3.0;
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_a_kink() {
        let mut f = |x: f64| Ok(((x - 0.3).abs(), ()));
        let r = adaptive(&mut f, -1.0, 1.0, 1, 1e-12, 500).unwrap();
        let exact = (1.3f64.powi(2) + 0.7f64.powi(2)) / 2.0;
        assert!((r.value - exact).abs() < 1e-12);
        assert!(adaptive(&mut f, -1.0, 1.0, 1, 1e-30, 5).is_err());
    }

    #[test]
    fn nested_gaussian_moments() {
        let rule = nested_adaptive(2, &|z: &[f64]| std_normal_density(z), -10.0, 10.0, AdaptiveOptions::default())
            .unwrap();
        assert!((rule.value - 1.0).abs() < 1e-12);
        let second = rule.integrate(&mut |z: &[f64]| std_normal_density(z) * z[0] * z[0]);
        assert!((second - 1.0).abs() < 1e-10);
        let cross = rule.integrate(&mut |z: &[f64]| std_normal_density(z) * z[0] * z[1]);
        assert!(cross.abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20).unwrap();
        let m = |p: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-8);
        let t = gauss_hermite_tensor(2, 8).unwrap();
        assert_eq!(t.len(), 64);
        assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let (a, se) = monte_carlo(1, &mut |z: &[f64]| z[0].abs(), 200_000, 3);
        let (b, _) = monte_carlo(1, &mut |z: &[f64]| z[0].abs(), 200_000, 3);
        assert_eq!(a, b);
        assert!((a - (2.0 / PI).sqrt()).abs() < 4.0 * se);
    }
}
