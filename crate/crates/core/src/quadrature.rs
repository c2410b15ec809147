//! Fixed-order Gauss–Legendre rules on the unit interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadrature family. Only Gauss–Legendre is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    GaussLegendre,
}

/// Node count and scheme for integrals over the on-fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub scheme: Scheme,
    /// Largest relative change tolerated when the node count is doubled.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 64,
            scheme: Scheme::GaussLegendre,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub const MIN_NODES: usize = 8;

    pub fn with_nodes(nodes: usize) -> Result<Self> {
        let spec = Self {
            nodes,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < Self::MIN_NODES {
            return Err(Error::InvalidParameter {
                name: "quadrature nodes",
                value: self.nodes as f64,
                reason: "at least 8 nodes required",
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "quadrature tolerance",
                value: self.tolerance,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn rule(&self) -> UnitRule {
        match self.scheme {
            Scheme::GaussLegendre => UnitRule::gauss_legendre(self.nodes),
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            nodes: self.nodes * 2,
            ..*self
        }
    }
}

/// Nodes and weights for integrating over `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    /// `n`-point Gauss–Legendre rule mapped from `[-1, 1]` to `[0, 1]`.
    ///
    /// Roots of `P_n` are found by Newton iteration from the usual cosine
    /// initial guesses.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // x is the i-th largest root; store ascending on (0, 1).
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            nodes[i] = 0.5 * (1.0 - x);
            weights[n - 1 - i] = 0.5 * w;
            weights[i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Integral over `[lo, hi]` by affine mapping.
    pub fn integrate_over(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let width = hi - lo;
        width * self.integrate(|x| f(lo + width * x))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
