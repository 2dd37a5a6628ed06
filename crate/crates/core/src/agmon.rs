//! The distance d_ρ of the conformal metric ρ⁻²|dx|²: exact radial
//! reduction and Dijkstra on box grids.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad;
use crate::radius::{euclid, RadiusField};

/// Worst-case length ratio of 3^d − 1 neighbor paths to straight segments
/// within a coordinate plane, 1/cos(π/8).
pub const STENCIL_DISTORTION: f64 = 1.0824;

/// Planar grids use every primitive move with entries in [−3, 3].
const PLANE_REACH: i64 = 3;

/// Largest number of grid nodes accepted.
pub const NODE_CAP: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GridDijkstra,
    RadialQuadrature,
    Exact,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::GridDijkstra => "grid-dijkstra",
            Method::RadialQuadrature => "radial-quadrature",
            Method::Exact => "exact",
        }
    }
}

/// Largest relative deviation of ρ(t·u) from ρ(t·e₁) over a few radii and
/// directions up to `reach`.
pub fn radial_symmetry_audit(field: &RadiusField, reach: f64) -> Result<f64> {
    let d = field.dim();
    let dirs = quad::unit_ball_samples(d, 8);
    let mut worst: f64 = 0.0;
    for k in 1..=5 {
        let t = reach * k as f64 / 5.0;
        let mut e = vec![0.0; d];
        e[0] = t;
        let base = field.eval(&e)?;
        for u in &dirs {
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-3 {
                continue;
            }
            let p: Vec<f64> = u.iter().map(|v| v * t / norm).collect();
            worst = worst.max((field.eval(&p)? - base).abs() / base);
        }
    }
    Ok(worst)
}

/// d(0, z) = ∫₀^{|z|} ds/ρ(s·e₁), assuming rays from the origin are geodesics.
pub fn distance_radial(field: &RadiusField, z: &[f64]) -> Result<f64> {
    if !field.is_radial() {
        return Err(Error::NotRadial("radius field is not declared radial".into()));
    }
    let t = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if let Some(c) = field.is_constant() {
        return Ok(t / c);
    }
    let dev = radial_symmetry_audit(field, t.max(1.0))?;
    if dev > 1e-9 {
        return Err(Error::NotRadial(format!("radial audit deviation {dev:.3e}")));
    }
    let d = field.dim();
    let err = Cell::new(None);
    let mut p = vec![0.0; d];
    let v = quad::integrate(
        |s| {
            p[0] = s;
            match field.eval(&p) {
                Ok(r) => 1.0 / r,
                Err(e) => {
                    err.set(Some(e));
                    f64::NAN
                }
            }
        },
        0.0,
        t,
        1e-10,
    );
    if let Some(e) = err.take() {
        return Err(e);
    }
    v
}

#[derive(Debug, Clone)]
struct Move {
    delta: Vec<i64>,
    offset: isize,
    length: f64,
}

/// A box grid with radii at the nodes; first axis has stride 1.
#[derive(Debug, Clone)]
pub struct MetricGrid {
    lo: Vec<f64>,
    h: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    rho: Vec<f64>,
    moves: Vec<Move>,
}

impl MetricGrid {
    pub fn new(field: &RadiusField, domain: &[(f64, f64)], h: f64) -> Result<MetricGrid> {
        let d = domain.len();
        if d == 0 || d != field.dim() || !(h > 0.0) || domain.iter().any(|(a, b)| !(a <= b)) {
            return Err(Error::Grid("box and spacing do not define a grid".into()));
        }
        let shape: Vec<usize> = domain.iter().map(|(a, b)| ((b - a) / h + 1e-9).floor() as usize + 1).collect();
        let total = shape.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c)).filter(|&t| t <= NODE_CAP);
        let total = total.ok_or_else(|| Error::Grid(format!("grid exceeds the node cap of {NODE_CAP}")))?;
        let mut strides = vec![1usize; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * shape[k - 1];
        }
        let lo: Vec<f64> = domain.iter().map(|x| x.0).collect();
        let reach = if d == 2 { PLANE_REACH } else { 1 };
        let side = (2 * reach + 1) as usize;
        let mut moves = Vec::new();
        for code in 0..side.pow(d as u32) {
            let mut c = code;
            let delta: Vec<i64> = (0..d)
                .map(|_| {
                    let v = (c % side) as i64 - reach;
                    c /= side;
                    v
                })
                .collect();
            if delta.iter().fold(0, |g, &v| gcd(g, v.unsigned_abs())) != 1 {
                continue;
            }
            let offset: isize = delta.iter().zip(&strides).map(|(&v, &s)| v as isize * s as isize).sum();
            let length = h * delta.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
            moves.push(Move { delta, offset, length });
        }
        let mut grid = MetricGrid { lo, h, shape, strides, rho: Vec::new(), moves };
        let rho: Vec<Result<f64>> = (0..total).into_par_iter().map(|i| field.eval(&grid.coords(i))).collect();
        grid.rho = rho.into_iter().collect::<Result<_>>()?;
        let rho_min = grid.rho_min();
        if !(rho_min > 0.0 && rho_min.is_finite()) {
            return Err(Error::Grid("radius must be positive and finite on the grid".into()));
        }
        if h > rho_min / 4.0 * (1.0 + 1e-9) {
            return Err(Error::Grid(format!("spacing {h} exceeds ρ_min/4 = {}", rho_min / 4.0)));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Worst-case ratio of stencil path length to euclidean length: exact
    /// from the move angles in the plane, [`STENCIL_DISTORTION`] otherwise.
    pub fn distortion(&self) -> f64 {
        if self.dim() != 2 {
            return STENCIL_DISTORTION;
        }
        let mut angles: Vec<f64> = self.moves.iter().map(|m| (m.delta[1] as f64).atan2(m.delta[0] as f64)).collect();
        angles.sort_by(f64::total_cmp);
        let mut gap: f64 = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
        for w in angles.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        1.0 / (0.5 * gap).cos()
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let k = i % n;
                i /= n;
                k
            })
            .collect()
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).iter().zip(&self.lo).map(|(&k, l)| l + k as f64 * self.h).collect()
    }

    /// Nearest node; errors when the point is outside the box.
    pub fn nearest(&self, p: &[f64]) -> Result<usize> {
        if p.len() != self.dim() {
            return Err(Error::OutsideBox(p.to_vec()));
        }
        let mut multi = Vec::with_capacity(p.len());
        for (k, &x) in p.iter().enumerate() {
            let t = (x - self.lo[k]) / self.h;
            let hi = (self.shape[k] - 1) as f64;
            if !(t >= -1e-9 && t <= hi + 1e-9) {
                return Err(Error::OutsideBox(p.to_vec()));
            }
            multi.push(t.round().clamp(0.0, hi) as usize);
        }
        Ok(self.index_of(&multi))
    }

    fn neighbors(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        let multi = self.multi_index(i);
        for m in &self.moves {
            let inside = multi
                .iter()
                .zip(&m.delta)
                .zip(&self.shape)
                .all(|((&a, &dv), &n)| (a as i64 + dv) >= 0 && (a as i64 + dv) < n as i64);
            if inside {
                let j = (i as isize + m.offset) as usize;
                visit(j, m.length * 0.5 * (1.0 / self.rho[i] + 1.0 / self.rho[j]));
            }
        }
    }

    /// Each undirected edge once, as (i, j, euclidean length) with i < j.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let multi = self.multi_index(i);
            for m in self.moves.iter().filter(|m| m.offset > 0) {
                let inside = multi
                    .iter()
                    .zip(&m.delta)
                    .zip(&self.shape)
                    .all(|((&a, &dv), &n)| (a as i64 + dv) >= 0 && (a as i64 + dv) < n as i64);
                if inside {
                    out.push((i, (i as isize + m.offset) as usize, m.length));
                }
            }
        }
        out
    }

    /// Single-source shortest paths from the node nearest to `source`.
    pub fn distances_from(&self, source: &[f64]) -> Result<DistanceField> {
        let s = self.nearest(source)?;
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut done = vec![false; self.len()];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));
        while let Some(Entry(d, i)) = heap.pop() {
            if done[i] {
                continue;
            }
            done[i] = true;
            self.neighbors(i, |j, w| {
                let nd = d + w;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            });
        }
        Ok(DistanceField { source: source.to_vec(), source_node: s, values: dist, method: Method::GridDijkstra })
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Min-heap entry ordered by distance, ties broken by node index.
#[derive(Debug, Clone, Copy)]
struct Entry(f64, usize);

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceField {
    pub source: Vec<f64>,
    pub source_node: usize,
    pub values: Vec<f64>,
    pub method: Method,
}

/// Builds the grid and runs one shortest-path sweep.
pub fn distance_grid(field: &RadiusField, domain: &[(f64, f64)], h: f64, source: &[f64]) -> Result<(MetricGrid, DistanceField)> {
    let grid = MetricGrid::new(field, domain, h)?;
    let dist = grid.distances_from(source)?;
    Ok((grid, dist))
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub samples: usize,
    pub nodes_checked: usize,
    /// Nodes with d < r/C but |p−x| ≥ rρ(x) + h.
    pub inner_violations: usize,
    /// Nodes with |p−x| < rρ(x) but d above the distorted bound C·r.
    pub outer_violations: usize,
    pub c: f64,
    pub distance_tolerance: f64,
}

/// B_ρ(x, r/C) ⊆ B(x, rρ(x)) ⊆ B_ρ(x, Cr) checked on grid nodes. Samples are
/// snapped to nodes; the outer inclusion allows the stencil distortion plus h/ρ_min.
pub fn ball_sandwich_audit(grid: &MetricGrid, samples: &[(Vec<f64>, f64)], c: f64) -> Result<SandwichReport> {
    let tol_d = grid.h() / grid.rho_min();
    let distortion = grid.distortion();
    let rows: Vec<Result<(usize, usize, usize)>> = samples
        .par_iter()
        .map(|(x, r)| {
            let field = grid.distances_from(x)?;
            let xs = grid.coords(field.source_node);
            let rx = grid.rho()[field.source_node];
            let (mut inner, mut outer) = (0, 0);
            for (i, &d) in field.values.iter().enumerate() {
                let e = euclid(&grid.coords(i), &xs);
                if d < r / c && e >= r * rx + grid.h() {
                    inner += 1;
                }
                if e < r * rx && d > distortion * c * r + tol_d {
                    outer += 1;
                }
            }
            Ok((inner, outer, field.values.len()))
        })
        .collect();
    let mut rep = SandwichReport {
        samples: samples.len(),
        nodes_checked: 0,
        inner_violations: 0,
        outer_violations: 0,
        c,
        distance_tolerance: tol_d,
    };
    for row in rows {
        let (a, b, n) = row?;
        rep.inner_violations += a;
        rep.outer_violations += b;
        rep.nodes_checked += n;
    }
    Ok(rep)
}

/// max over grid edges of |Δd|/|edge|·ρ(midpoint).
pub fn lipschitz_audit(grid: &MetricGrid, dist: &DistanceField, field: &RadiusField) -> Result<f64> {
    let edges = grid.edges();
    let vals: Vec<Result<f64>> = edges
        .par_iter()
        .map(|&(i, j, len)| {
            let a = grid.coords(i);
            let b = grid.coords(j);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
            Ok((dist.values[i] - dist.values[j]).abs() / len * field.eval(&mid)?)
        })
        .collect();
    vals.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::weights::Weight;

    #[test]
    fn unit_axis_distance_is_exact() {
        let f = RadiusField::constant(1.0, 2);
        let (g, d) = distance_grid(&f, &[(-2.0, 2.0), (-2.0, 2.0)], 0.125, &[0.0, 0.0]).unwrap();
        let t = g.nearest(&[1.0, 0.0]).unwrap();
        assert!((d.values[t] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_spacing_rejected() {
        let f = RadiusField::constant(1.0, 2);
        assert!(matches!(MetricGrid::new(&f, &[(0.0, 1.0), (0.0, 1.0)], 0.3), Err(Error::Grid(_))));
    }

    #[test]
    fn quartic_radial_closed_form() {
        // 1/ρ(s) = 2(√(s²+1)+s) integrates to s√(s²+1) + asinh s + s².
        let f = RadiusField::from_potential(Potential::laplacian(&Weight::radial_power(1, 2.0)));
        let d = distance_radial(&f, &[2.0, 0.0]).unwrap();
        let exact = 2.0 * 5f64.sqrt() + 2f64.asinh() + 4.0;
        assert!((d - exact).abs() < 1e-8 * exact);
    }
}
