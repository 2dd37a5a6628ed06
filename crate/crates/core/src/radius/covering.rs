//! Greedy coverings by radius balls: keep a candidate when its shrunken
//! ball B(x, ρ(x)/(1+Ĉ²)) is disjoint from those already kept.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{euclid, RadiusField};
use crate::error::{Error, Result};

const MAX_CANDIDATES: usize = 4_000_000;
const RHO_MIN_SAMPLES: usize = 33;

#[derive(Debug, Clone, Serialize)]
pub struct Covering {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub domain: Vec<(f64, f64)>,
    pub c_hat: f64,
    pub rho_min: f64,
    pub candidate_spacing: f64,
    pub audit_points: usize,
    pub uncovered: usize,
    /// Largest number of balls containing one audit point.
    pub multiplicity: usize,
}

impl Covering {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Points of a regular lattice of the box with the given spacing, first axis
/// fastest, always including the lower corner.
fn lattice(domain: &[(f64, f64)], spacing: f64) -> Result<Vec<Vec<f64>>> {
    let counts: Vec<usize> = domain.iter().map(|(a, b)| ((b - a) / spacing).floor() as usize + 1).collect();
    let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    match total {
        Some(t) if t <= MAX_CANDIDATES => {}
        _ => return Err(Error::Grid(format!("lattice with spacing {spacing} too large"))),
    }
    let total = total.unwrap_or(0);
    Ok((0..total)
        .map(|mut i| {
            domain
                .iter()
                .zip(&counts)
                .map(|(&(a, _), &c)| {
                    let k = i % c;
                    i /= c;
                    a + k as f64 * spacing
                })
                .collect()
        })
        .collect())
}

fn cell_of(p: &[f64], lo: &[f64], size: f64) -> Vec<i64> {
    p.iter().zip(lo).map(|(x, l)| ((x - l) / size).floor() as i64).collect()
}

fn neighbor_cells(cell: &[i64]) -> Vec<Vec<i64>> {
    let d = cell.len();
    (0..3usize.pow(d as u32))
        .map(|mut i| {
            cell.iter()
                .map(|c| {
                    let off = (i % 3) as i64 - 1;
                    i /= 3;
                    c + off
                })
                .collect()
        })
        .collect()
}

/// Greedy covering of the box. Candidates lie on a lattice of spacing ρ_min/4
/// (ρ_min sampled on a 33-per-axis grid) visited first-axis-fastest; the result
/// is audited on a lattice of spacing ρ_min/2.
pub fn build_covering(field: &RadiusField, domain: &[(f64, f64)], c_hat: f64) -> Result<Covering> {
    if domain.is_empty() || domain.len() != field.dim() || domain.iter().any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidParams("covering box does not match the radius dimension".into()));
    }
    if !(c_hat >= 1.0) {
        return Err(Error::InvalidParams("Ĉ must be ≥ 1".into()));
    }
    let lo: Vec<f64> = domain.iter().map(|d| d.0).collect();
    let coarse: Vec<Vec<f64>> = {
        let per = RHO_MIN_SAMPLES;
        let total = per.pow(domain.len() as u32);
        (0..total)
            .map(|mut i| {
                domain
                    .iter()
                    .map(|&(a, b)| {
                        let k = i % per;
                        i /= per;
                        a + (b - a) * k as f64 / (per - 1) as f64
                    })
                    .collect()
            })
            .collect()
    };
    let rho_min = field.eval_many(&coarse)?.into_iter().fold(f64::INFINITY, f64::min);
    if !(rho_min > 0.0 && rho_min.is_finite()) {
        return Err(Error::InvalidParams("radius must be positive on the box".into()));
    }
    let spacing = rho_min / 4.0;
    let candidates = lattice(domain, spacing)?;
    let rho = field.eval_many(&candidates)?;
    let shrink = 1.0 / (1.0 + c_hat * c_hat);
    let max_small = rho.iter().cloned().fold(0.0, f64::max) * shrink;
    let cell = (2.0 * max_small).max(spacing);

    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<usize> = Vec::new();
    for (i, x) in candidates.iter().enumerate() {
        let key = cell_of(x, &lo, cell);
        let small = rho[i] * shrink;
        let clash = neighbor_cells(&key).iter().any(|k| {
            buckets.get(k).is_some_and(|v| {
                v.iter().any(|&j| euclid(x, &candidates[j]) < small + rho[j] * shrink)
            })
        });
        if !clash {
            buckets.entry(key).or_default().push(i);
            kept.push(i);
        }
    }

    let centers: Vec<Vec<f64>> = kept.iter().map(|&i| candidates[i].clone()).collect();
    let radii: Vec<f64> = kept.iter().map(|&i| rho[i]).collect();

    // Audit with buckets sized to the full balls.
    let big = 2.0 * radii.iter().cloned().fold(0.0, f64::max);
    let mut full: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (k, c) in centers.iter().enumerate() {
        full.entry(cell_of(c, &lo, big)).or_default().push(k);
    }
    let audit = lattice(domain, rho_min / 2.0)?;
    let counts: Vec<usize> = audit
        .par_iter()
        .map(|p| {
            neighbor_cells(&cell_of(p, &lo, big))
                .iter()
                .filter_map(|k| full.get(k))
                .flatten()
                .filter(|&&k| euclid(p, &centers[k]) < radii[k])
                .count()
        })
        .collect();
    Ok(Covering {
        uncovered: counts.iter().filter(|&&c| c == 0).count(),
        multiplicity: counts.iter().cloned().max().unwrap_or(0),
        audit_points: audit.len(),
        centers,
        radii,
        domain: domain.to_vec(),
        c_hat,
        rho_min,
        candidate_spacing: spacing,
    })
}
