//! Nonnegative potentials V on ℝ^d with a sup-over-ball oracle.

use serde::Serialize;

use crate::quad;
use crate::weights::Weight;

#[derive(Debug, Clone)]
pub enum Potential {
    Constant { value: f64, dim: usize },
    /// V = Δφ.
    Laplacian(Weight),
    Scaled { factor: f64, inner: Box<Potential> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum SupOracle {
    /// Constant, or radial with nondecreasing profile: sup at the far boundary point.
    Exact,
    /// Center plus a fixed low-discrepancy set of points in the ball.
    Sampled { points_per_ball: usize },
}

impl Potential {
    pub fn constant(value: f64, dim: usize) -> Potential {
        Potential::Constant { value, dim }
    }

    pub fn laplacian(w: &Weight) -> Potential {
        Potential::Laplacian(w.clone())
    }

    pub fn scaled(self, factor: f64) -> Potential {
        Potential::Scaled { factor, inner: Box::new(self) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Constant { dim, .. } => *dim,
            Potential::Laplacian(w) => w.dim(),
            Potential::Scaled { inner, .. } => inner.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Constant { value, .. } => *value,
            Potential::Laplacian(w) => w.laplacian(x),
            Potential::Scaled { factor, inner } => factor * inner.value(x),
        }
    }

    /// V depends on |x| only.
    pub fn is_radial(&self) -> bool {
        match self {
            Potential::Constant { .. } => true,
            Potential::Laplacian(w) => w.radial_profile().is_some(),
            Potential::Scaled { inner, .. } => inner.is_radial(),
        }
    }

    pub fn oracle(&self) -> SupOracle {
        match self {
            Potential::Constant { .. } => SupOracle::Exact,
            Potential::Laplacian(w) if w.laplacian_radial_monotone() => SupOracle::Exact,
            Potential::Laplacian(w) => SupOracle::Sampled { points_per_ball: quad::ball_sample_count(w.dim()) + 1 },
            Potential::Scaled { inner, .. } => inner.oracle(),
        }
    }

    /// ‖V‖_{L∞(B(x, r))}.
    pub fn sup_ball(&self, x: &[f64], r: f64) -> f64 {
        match self {
            Potential::Constant { value, .. } => *value,
            Potential::Scaled { factor, inner } => factor * inner.sup_ball(x, r),
            Potential::Laplacian(w) => {
                if w.laplacian_radial_monotone() {
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    w.laplacian_profile(norm + r)
                } else {
                    let mut best = w.laplacian(x);
                    let mut p = x.to_vec();
                    for s in quad::cached_ball_samples(x.len()) {
                        for k in 0..p.len() {
                            p[k] = x[k] + r * s[k];
                        }
                        best = best.max(w.laplacian(&p));
                    }
                    best
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_sup_is_far_point() {
        let v = Potential::laplacian(&Weight::radial_power(1, 2.0));
        assert_eq!(v.oracle(), SupOracle::Exact);
        assert!((v.sup_ball(&[1.0, 0.0], 0.5) - 16.0 * 2.25).abs() < 1e-12);
        assert!((v.sup_ball(&[0.0, -1.0], 0.5) - 16.0 * 2.25).abs() < 1e-12);
    }
}
