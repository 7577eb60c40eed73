//! Smoothing kernels, Gaussian special functions and fixed-grid quadrature.
//!
//! Kernels live on `[-1, 1]`. The second-order kernel is the usual
//! Epanechnikov; the fourth-order one multiplies it by an even quadratic
//! whose coefficients are solved at construction so that the zeroth moment
//! is one and the second moment vanishes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Below this argument the inverse Mills ratio switches to a continued
/// fraction for the Gaussian tail.
const MILLS_TAIL_CUTOFF: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    Epanechnikov2,
    Epanechnikov4,
}

/// An even smoothing kernel supported on `[-1, 1]`.
///
/// The kernel is `(3/4)(1 - u^2)(a + b u^2)`; `(a, b) = (1, 0)` for the
/// second-order member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    a: f64,
    b: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        match family {
            KernelFamily::Epanechnikov2 => KernelSpec {
                family,
                a: 1.0,
                b: 0.0,
            },
            KernelFamily::Epanechnikov4 => {
                // Moments of the base kernel (3/4)(1 - u^2).
                let (m0, m2, m4) = (1.0, 1.0 / 5.0, 3.0 / 35.0);
                // a*m0 + b*m2 = 1 and a*m2 + b*m4 = 0.
                let det = m0 * m4 - m2 * m2;
                KernelSpec {
                    family,
                    a: m4 / det,
                    b: -m2 / det,
                }
            }
        }
    }

    pub fn epanechnikov2() -> Self {
        Self::new(KernelFamily::Epanechnikov2)
    }

    pub fn epanechnikov4() -> Self {
        Self::new(KernelFamily::Epanechnikov4)
    }

    /// Kernel of the given even order (2 or 4).
    pub fn of_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::epanechnikov2()),
            4 => Ok(Self::epanechnikov4()),
            _ => Err(Error::InvalidArgument(format!(
                "kernel order {order} unsupported; valid orders: 2, 4"
            ))),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn order(&self) -> usize {
        match self.family {
            KernelFamily::Epanechnikov2 => 2,
            KernelFamily::Epanechnikov4 => 4,
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        let u2 = u * u;
        0.75 * (1.0 - u2) * (self.a + self.b * u2)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::epanechnikov2()
    }
}

pub fn eval_kernel(spec: &KernelSpec, u: f64) -> f64 {
    spec.eval(u)
}

/// Composite Simpson rule on a uniform grid over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub const MIN_NODES: usize = 201;
    pub const DEFAULT_NODES: usize = 2001;

    /// `nodes` is rounded up to the next odd count and must be at least 201.
    pub fn simpson(nodes: usize) -> Result<Self> {
        if nodes < Self::MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least {} nodes, got {nodes}",
                Self::MIN_NODES
            )));
        }
        let count = if nodes % 2 == 0 { nodes + 1 } else { nodes };
        let panels = count - 1;
        let step = 2.0 / panels as f64;
        let nodes: Vec<f64> = (0..count).map(|i| -1.0 + step * i as f64).collect();
        let weights = (0..count)
            .map(|i| {
                let c = if i == 0 || i == panels {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * step / 3.0
            })
            .collect();
        Ok(QuadratureGrid { nodes, weights })
    }

    /// Same rule with the spacing halved.
    pub fn refined(&self) -> Self {
        Self::simpson(2 * self.nodes.len() - 1).expect("refinement only grows the grid")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self::simpson(Self::DEFAULT_NODES).expect("default grid is valid")
    }
}

/// `∫ u^j K(u) du` over the kernel support.
pub fn kernel_moment(spec: &KernelSpec, j: u32, grid: &QuadratureGrid) -> f64 {
    grid.integrate(|u| u.powi(j as i32) * spec.eval(u))
}

/// `∫ K(u)^2 du`.
pub fn kernel_l2(spec: &KernelSpec, grid: &QuadratureGrid) -> f64 {
    grid.integrate(|u| {
        let k = spec.eval(u);
        k * k
    })
}

/// The kernel constants the bandwidth and standard-error formulas need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub l2: f64,
    pub order_moment: f64,
}

impl KernelConstants {
    pub fn of(spec: &KernelSpec) -> Self {
        let grid = QuadratureGrid::default();
        KernelConstants {
            l2: kernel_l2(spec, &grid),
            order_moment: kernel_moment(spec, spec.order() as u32, &grid),
        }
    }
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `φ(t) / Φ(t)`.
pub fn inverse_mills(t: f64) -> f64 {
    if t < MILLS_TAIL_CUTOFF {
        1.0 / upper_mills_ratio(-t)
    } else {
        normal_pdf(t) / normal_cdf(t)
    }
}

/// `(1 - Φ(x)) / φ(x)` for large positive `x`, by backward evaluation of
/// `1 / (x + 1 / (x + 2 / (x + 3 / ...)))`.
fn upper_mills_ratio(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}
