//! Radius functions: ρ_V from a potential, constants, rescalings, pointwise
//! maxima and nearest-neighbor tables, with the audits that go with them.

mod covering;

pub use covering::{build_covering, Covering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{Potential, SupOracle};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bisection {
    pub rmin: f64,
    pub rmax: f64,
    /// Relative bracket width at termination.
    pub tol: f64,
}

impl Default for Bisection {
    fn default() -> Self {
        Bisection { rmin: 1e-6, rmax: 1e3, tol: 1e-10 }
    }
}

/// ρ_V(x) = sup{r : r²·sup_{B(x,r)} V ≤ 1} by bisection on the monotone
/// map r ↦ r²·sup_{B(x,r)} V. The returned radius satisfies f ≤ 1.
pub fn rho_from_potential(v: &Potential, x: &[f64], b: Bisection) -> Result<f64> {
    let f = |r: f64| r * r * v.sup_ball(x, r);
    if f(b.rmin) >= 1.0 {
        return Err(Error::PotentialTooSingular(x.to_vec()));
    }
    if f(b.rmax) <= 1.0 {
        return Err(Error::PotentialTooSmall(x.to_vec()));
    }
    let (mut lo, mut hi) = (b.rmin, b.rmax);
    // Geometric steps first so that the bracket width is relative to lo.
    while hi > 4.0 * lo {
        let mid = (lo * hi).sqrt();
        if f(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    while hi - lo > b.tol * lo {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone)]
pub enum RadiusField {
    Constant { value: f64, dim: usize },
    FromPotential { potential: Potential, bisection: Bisection },
    Scaled { factor: f64, inner: Box<RadiusField> },
    Max(Box<RadiusField>, Box<RadiusField>),
    /// Nearest-neighbor lookup in a table of (point, radius) rows.
    Table { points: Vec<Vec<f64>>, values: Vec<f64> },
    /// The restriction to the z₁-plane of a field on C^n, evaluated as a field on R².
    Slice { inner: Box<RadiusField> },
}

impl RadiusField {
    pub fn constant(value: f64, dim: usize) -> RadiusField {
        RadiusField::Constant { value, dim }
    }

    pub fn from_potential(potential: Potential) -> RadiusField {
        RadiusField::FromPotential { potential, bisection: Bisection::default() }
    }

    pub fn scaled(self, factor: f64) -> RadiusField {
        RadiusField::Scaled { factor, inner: Box::new(self) }
    }

    pub fn dim(&self) -> usize {
        match self {
            RadiusField::Constant { dim, .. } => *dim,
            RadiusField::FromPotential { potential, .. } => potential.dim(),
            RadiusField::Scaled { inner, .. } => inner.dim(),
            RadiusField::Max(a, _) => a.dim(),
            RadiusField::Table { points, .. } => points.first().map_or(0, |p| p.len()),
            RadiusField::Slice { .. } => 2,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            RadiusField::Constant { value, .. } => Ok(*value),
            RadiusField::FromPotential { potential, bisection } => rho_from_potential(potential, x, *bisection),
            RadiusField::Scaled { factor, inner } => Ok(factor * inner.eval(x)?),
            RadiusField::Max(a, b) => Ok(a.eval(x)?.max(b.eval(x)?)),
            RadiusField::Table { points, values } => {
                let mut best = (f64::INFINITY, 0usize);
                for (i, p) in points.iter().enumerate() {
                    let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                values
                    .get(best.1)
                    .copied()
                    .ok_or_else(|| Error::InvalidParams("empty radius table".into()))
            }
            RadiusField::Slice { inner } => {
                let mut p = vec![0.0; inner.dim()];
                p[..2].copy_from_slice(&x[..2]);
                inner.eval(&p)
            }
        }
    }

    /// Declared radial symmetry about the origin (audited where it matters).
    pub fn is_radial(&self) -> bool {
        match self {
            RadiusField::Constant { .. } => true,
            RadiusField::FromPotential { potential, .. } => potential.is_radial(),
            RadiusField::Scaled { inner, .. } => inner.is_radial(),
            RadiusField::Max(a, b) => a.is_radial() && b.is_radial(),
            RadiusField::Table { .. } => false,
            RadiusField::Slice { inner } => inner.is_radial(),
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            RadiusField::Constant { value, .. } => Some(*value),
            RadiusField::Scaled { factor, inner } => inner.is_constant().map(|v| v * factor),
            RadiusField::Max(a, b) => Some(a.is_constant()?.max(b.is_constant()?)),
            RadiusField::Slice { inner } => inner.is_constant(),
            _ => None,
        }
    }

    pub fn provenance(&self) -> String {
        match self {
            RadiusField::Constant { value, .. } => format!("constant({value})"),
            RadiusField::FromPotential { potential, .. } => match potential.oracle() {
                SupOracle::Exact => "from-potential(exact sup)".into(),
                SupOracle::Sampled { points_per_ball } => {
                    format!("from-potential(sampled sup, {points_per_ball} points)")
                }
            },
            RadiusField::Scaled { factor, inner } => format!("scaled({factor}, {})", inner.provenance()),
            RadiusField::Max(a, b) => format!("max-of-two({}, {})", a.provenance(), b.provenance()),
            RadiusField::Table { points, .. } => format!("table({} rows)", points.len()),
            RadiusField::Slice { inner } => format!("z1-slice({})", inner.provenance()),
        }
    }

    /// Values at many points, in order.
    pub fn eval_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }
}

/// Pointwise maximum of two radius functions.
pub fn max_radius(a: RadiusField, b: RadiusField) -> RadiusField {
    RadiusField::Max(Box::new(a), Box::new(b))
}

/// Pointwise maximum with a witness; κ ∨ ρ substitution.
pub fn max_radius_ref(a: &RadiusField, b: &RadiusField) -> RadiusField {
    max_radius(a.clone(), b.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomConstant {
    pub value: f64,
    pub witness: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
}

/// Ĉ = max over pairs of max(ρ(x)/ρ(y), ρ(y)/ρ(x)); each y must lie in
/// B(x, reach·ρ(x)) where reach is 1 for the axiom itself.
pub fn radius_axiom_constant(
    field: &RadiusField,
    pairs: &[(Vec<f64>, Vec<f64>)],
    reach: f64,
) -> Result<AxiomConstant> {
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let rx = field.eval(x)?;
            let ry = field.eval(y)?;
            let dist = euclid(x, y);
            if dist >= reach * rx * (1.0 + 1e-12) {
                return Err(Error::InvalidParams(format!("pair {x:?}, {y:?} leaves B(x, reach·ρ(x))")));
            }
            Ok((rx / ry).max(ry / rx))
        })
        .collect();
    let mut best = (1.0, 0usize);
    for (i, r) in ratios.into_iter().enumerate() {
        let r = r?;
        if r > best.0 {
            best = (r, i);
        }
    }
    let witness = pairs.get(best.1).cloned().unwrap_or_default();
    Ok(AxiomConstant { value: best.0, witness, pairs: pairs.len() })
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Deterministic pairs (x, y) with x Halton-distributed in the box and
/// y ∈ B(x, reach·ρ(x)) at 0.999 of the allowed radius or less.
pub fn sample_pairs(
    field: &RadiusField,
    domain: &[(f64, f64)],
    count: usize,
    reach: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let d = domain.len();
    let dirs = quad::unit_ball_samples(d, count);
    (0..count)
        .map(|i| {
            let x: Vec<f64> = (0..d)
                .map(|k| domain[k].0 + (domain[k].1 - domain[k].0) * quad::halton(i + 1, [2, 3, 5, 7][k % 4]))
                .collect();
            let rx = field.eval(&x)?;
            let y: Vec<f64> = (0..d).map(|k| x[k] + 0.999 * reach * rx * dirs[i][k]).collect();
            Ok((x, y))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichAudit {
    pub points: usize,
    pub violations: usize,
    /// min over points of sup_{B(x,ρ)} V · ρ² · 4D̂ (≥ 1 expected).
    pub min_lower_ratio: f64,
    /// max over points of sup_{B(x,ρ)} V · ρ² (≤ 1 expected).
    pub max_upper_ratio: f64,
}

/// ρ⁻²/(4D̂) ≤ ‖V‖_{L∞(B(x,ρ(x)))} ≤ ρ⁻² at each point, with the same sup oracle.
pub fn potential_sandwich_audit(v: &Potential, b: Bisection, points: &[Vec<f64>], d_hat: f64) -> Result<SandwichAudit> {
    let rows: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|x| {
            let rho = rho_from_potential(v, x, b)?;
            let s = v.sup_ball(x, rho) * rho * rho;
            Ok((s * 4.0 * d_hat, s))
        })
        .collect();
    let mut a = SandwichAudit { points: points.len(), violations: 0, min_lower_ratio: f64::INFINITY, max_upper_ratio: 0.0 };
    for r in rows {
        let (lower, upper) = r?;
        if lower < 1.0 || upper > 1.0 {
            a.violations += 1;
        }
        a.min_lower_ratio = a.min_lower_ratio.min(lower);
        a.max_upper_ratio = a.max_upper_ratio.max(upper);
    }
    Ok(a)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolynomialComparability {
    pub c: f64,
    pub m: f64,
    pub pairs: usize,
    pub witness_c: (Vec<f64>, Vec<f64>),
    pub witness_m: Option<(Vec<f64>, Vec<f64>)>,
}

/// Smallest (C, M) with C⁻¹·t^{-M} ≤ ρ(y)/ρ(x) ≤ C·t^{M}, t = max(|x−y|/ρ(x), 1):
/// C from pairs with t = 1, then M from the rest. Report only.
pub fn polynomial_comparability(field: &RadiusField, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<PolynomialComparability> {
    let rows: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let rx = field.eval(x)?;
            let ry = field.eval(y)?;
            Ok(((ry / rx).ln().abs(), (euclid(x, y) / rx).max(1.0)))
        })
        .collect();
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let mut log_c = 0.0;
    let mut wc = 0;
    for (i, &(lq, t)) in rows.iter().enumerate() {
        if t == 1.0 && lq > log_c {
            log_c = lq;
            wc = i;
        }
    }
    let mut m: f64 = 0.0;
    let mut wm = None;
    for (i, &(lq, t)) in rows.iter().enumerate() {
        if t > 1.0 {
            let need = (lq - log_c) / t.ln();
            if need > m {
                m = need;
                wm = Some(i);
            }
        }
    }
    Ok(PolynomialComparability {
        c: log_c.exp(),
        m,
        pairs: pairs.len(),
        witness_c: pairs.get(wc).cloned().unwrap_or_default(),
        witness_m: wm.map(|i| pairs[i].clone()),
    })
}

/// Bound on ρ_{Δφ} implied by the lower-bound condition with radius c:
/// r ≥ c forces r²·sup_{B(x,r)} Δφ ≥ r²·ĉ, so ρ ≤ max(c, ĉ^{-1/2}).
pub fn admissible_radius_bound(c: f64, c_inf: f64) -> f64 {
    c.max(c_inf.powf(-0.5))
}
