//! Terminal payoffs `g: R^n -> R` and audits of their structural properties.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Violation below which a sampled property counts as confirmed.
pub const PROPERTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    /// `max_i x_i`.
    ///
    /// Note: this payoff is not strictly increasing in the sense
    /// `g(x+v) >= g(x) + θ<v,1>` for any `θ > 0` (raise a coordinate that is
    /// not the maximum and nothing changes). It only has `<∇g, 1> = 1`, which
    /// is enough for uniqueness of the limit equation but not for the strict
    /// property, so `g1_theta` is left unset.
    Max,
    /// `<w, x>`.
    Linear(Vec<f64>),
    /// `δ log Σ exp(x_i / δ)`.
    SoftMax(f64),
}

impl Payoff {
    pub fn linear(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayoff("linear weights must be finite and nonempty".into()));
        }
        Ok(Payoff::Linear(w))
    }

    pub fn softmax(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidPayoff(format!("softmax temperature must be positive, got {delta}")));
        }
        Ok(Payoff::SoftMax(delta))
    }

    /// Checks that the payoff can be applied to vectors of length `n`.
    pub fn check_dimension(&self, n: usize) -> Result<()> {
        match self {
            Payoff::Linear(w) if w.len() != n => Err(Error::InvalidPayoff(format!(
                "linear payoff has {} weights but the panel has {n} experts",
                w.len()
            ))),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::Max => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Payoff::Linear(w) => w.iter().zip(x).map(|(a, b)| a * b).sum(),
            Payoff::SoftMax(delta) => {
                let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = x.iter().map(|v| ((v - top) / delta).exp()).sum();
                top + delta * s.ln()
            }
        }
    }

    /// Gradient, or for `max` the indicator of the smallest-index maximizer.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Payoff::Max => {
                let mut best = 0;
                for (i, v) in x.iter().enumerate() {
                    if *v > x[best] {
                        best = i;
                    }
                }
                let mut g = vec![0.0; x.len()];
                g[best] = 1.0;
                g
            }
            Payoff::Linear(w) => w.clone(),
            Payoff::SoftMax(delta) => {
                let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| ((v - top) / delta).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            }
        }
    }

    pub fn g1_theta(&self) -> Option<f64> {
        match self {
            Payoff::Linear(w) => {
                let m = w.iter().copied().fold(f64::INFINITY, f64::min);
                (m > 0.0).then_some(m)
            }
            _ => None,
        }
    }

    pub fn g2(&self) -> bool {
        !matches!(self, Payoff::SoftMax(_))
    }

    pub fn g3(&self) -> bool {
        match self {
            Payoff::Max | Payoff::SoftMax(_) => true,
            Payoff::Linear(w) => (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
        }
    }

    /// Euclidean Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Payoff::Max | Payoff::SoftMax(_) => 1.0,
            Payoff::Linear(w) => norm(w),
        }
    }

    pub fn convex(&self) -> bool {
        true
    }

    /// Nondecreasing along the diagonal: `s -> g(x + s 1)` never decreases.
    /// The brute-force engines rely on this to bracket the optimal move.
    pub fn monotone(&self) -> bool {
        match self {
            Payoff::Max | Payoff::SoftMax(_) => true,
            Payoff::Linear(w) => w.iter().sum::<f64>() >= 0.0,
        }
    }

    /// Samples the structural properties at seeded random points.
    pub fn check_properties(&self, n: usize, samples: usize, seed: u64) -> Result<PropertyReport> {
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        self.check_dimension(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g1 = 0.0f64;
        let mut g1_ratio = f64::INFINITY;
        let mut g2 = 0.0f64;
        let mut g3 = 0.0f64;
        let theta = self.g1_theta().unwrap_or(0.0);
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let s: f64 = rng.random_range(-5.0..5.0);
            let scale: f64 = rng.random_range(0.1..5.0);
            let gx = self.eval(&x);

            let xv: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
            let lift = self.eval(&xv) - gx;
            let vsum: f64 = v.iter().sum();
            g1 = g1.max(theta * vsum - lift);
            if vsum > 0.0 {
                g1_ratio = g1_ratio.min(lift / vsum);
            }

            let sx: Vec<f64> = x.iter().map(|a| scale * a).collect();
            g2 = g2.max((self.eval(&sx) - scale * gx).abs());

            let tx: Vec<f64> = x.iter().map(|a| a + s).collect();
            g3 = g3.max((self.eval(&tx) - gx - s).abs());
        }
        Ok(PropertyReport {
            samples,
            g1: PropertyCheck::new(self.g1_theta().is_some(), g1),
            g1_empirical_theta: g1_ratio,
            g2: PropertyCheck::new(self.g2(), g2),
            g3: PropertyCheck::new(self.g3(), g3),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyCheck {
    pub declared: bool,
    pub max_violation: f64,
}

impl PropertyCheck {
    fn new(declared: bool, max_violation: f64) -> Self {
        Self { declared, max_violation: max_violation.max(0.0) }
    }

    pub fn holds(&self) -> bool {
        self.max_violation <= PROPERTY_TOL
    }

    /// A declared property whose samples agree.
    pub fn confirmed(&self) -> bool {
        self.declared && self.holds()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub samples: usize,
    /// Violation of `g(x+v) >= g(x) + θ<v,1>` at the declared θ (zero if unset).
    pub g1: PropertyCheck,
    /// Smallest observed `(g(x+v) - g(x)) / <v,1>`.
    pub g1_empirical_theta: f64,
    pub g2: PropertyCheck,
    pub g3: PropertyCheck,
}

impl PropertyReport {
    /// Every declared flag is confirmed by the samples.
    pub fn consistent(&self) -> bool {
        [self.g1, self.g2, self.g3].iter().all(|c| !c.declared || c.holds())
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Max => write!(f, "max"),
            Payoff::Linear(w) => {
                write!(f, "linear:")?;
                for (i, v) in w.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            Payoff::SoftMax(d) => write!(f, "softmax:{d}"),
        }
    }
}

impl FromStr for Payoff {
    type Err = Error;

    /// `max`, `linear:w1,...,wn` or `softmax:delta`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t.trim())),
            None => (s, None),
        };
        let bad = |what: &str| Error::InvalidPayoff(format!("{what} in {s:?}"));
        match (head, tail) {
            ("max", None) => Ok(Payoff::Max),
            ("linear", Some(t)) => {
                let w = t
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad weight")))
                    .collect::<Result<Vec<_>>>()?;
                Payoff::linear(w)
            }
            ("softmax", Some(t)) => Payoff::softmax(t.parse().map_err(|_| bad("bad temperature"))?),
            _ => Err(bad("unknown payoff")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(Payoff::Max.eval(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(Payoff::Max.eval(&[1.0, -1.0]), 1.0);
        assert_eq!(Payoff::linear(vec![0.5, 0.5]).unwrap().eval(&[3.0, 1.0]), 2.0);
        let sm = Payoff::softmax(0.5).unwrap();
        let direct = 0.5 * ((2.0f64).exp() + 1.0).ln();
        assert!((sm.eval(&[1.0, 0.0]) - direct).abs() < 1e-14);
    }

    #[test]
    fn max_gradient_breaks_ties_low() {
        assert_eq!(Payoff::Max.gradient(&[1.0, 1.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(Payoff::Max.gradient(&[0.0, 2.0, 2.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn max_report() {
        let r = Payoff::Max.check_properties(3, 500, 1).unwrap();
        assert!(r.g2.confirmed() && r.g3.confirmed());
        assert!(!r.g1.declared);
        assert!(r.consistent());
        assert!(r.g1_empirical_theta < 0.5);
    }

    #[test]
    fn linear_report() {
        let p = Payoff::linear(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(p.g1_theta(), Some(0.2));
        let r = p.check_properties(3, 500, 2).unwrap();
        assert!(r.g1.confirmed() && r.g2.confirmed() && r.g3.confirmed());
    }

    #[test]
    fn softmax_report() {
        let p = Payoff::softmax(0.5).unwrap();
        let r = p.check_properties(2, 200, 3).unwrap();
        assert!(r.g3.confirmed());
        assert!(!r.g2.declared);
        assert!(r.g2.max_violation > 1e-3);
        // hand check at x = (1, 0), s = 2
        let gap = p.eval(&[2.0, 0.0]) - 2.0 * p.eval(&[1.0, 0.0]);
        assert!(gap.abs() > 1e-3);
    }

    #[test]
    fn parse_and_print() {
        for s in ["max", "linear:0.25,0.75", "softmax:0.1"] {
            let p: Payoff = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("min".parse::<Payoff>().is_err());
        assert!("linear:".parse::<Payoff>().is_err());
        assert!("softmax:-1".parse::<Payoff>().is_err());
        assert!("linear:1,2".parse::<Payoff>().unwrap().check_dimension(3).is_err());
    }

    proptest! {
        #[test]
        fn lipschitz_holds(x in prop::collection::vec(-10.0f64..10.0, 3), y in prop::collection::vec(-10.0f64..10.0, 3)) {
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            for p in [Payoff::Max, Payoff::SoftMax(0.3), Payoff::Linear(vec![0.5, -0.25, 0.75])] {
                prop_assert!((p.eval(&x) - p.eval(&y)).abs() <= p.lipschitz() * dist + 1e-12);
            }
        }

        #[test]
        fn softmax_gradient_is_a_distribution(x in prop::collection::vec(-50.0f64..50.0, 4)) {
            let g = Payoff::SoftMax(0.2).gradient(&x);
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(g.iter().all(|&v| v >= 0.0));
        }
    }
}
