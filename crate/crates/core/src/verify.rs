//! End-to-end bound verification: radius, κ, Agmon distance and kernel are
//! combined into the ratio Q(z, w), and log Q is fitted against d_κ.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agmon::{self, MetricGrid, Method};
use crate::error::{Error, Result};
use crate::fit::{fit_line, LineFit};
use crate::kernel::{build_kernel, default_degree, KernelModel};
use crate::potential::Potential;
use crate::radius::{max_radius_ref, RadiusField};
use crate::weights::hypotheses::{default_probe, inspect, HypothesisReport};
use crate::weights::spec::{make_weight, WeightSpec};
use crate::weights::{Family, Weight};

/// Rows with Q below this are kept but left out of the fit.
pub const UNDERFLOW: f64 = 1e-300;
/// |K| below this fraction of Σ|terms| is treated like a tail flag.
pub const CANCELLATION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KappaMode {
    Rho,
    Scaled { c: f64 },
    /// Nearest-row lookup; `source` is recorded in the report.
    Table { points: Vec<Vec<f64>>, values: Vec<f64>, source: String },
}

impl KappaMode {
    pub fn tag(&self) -> String {
        match self {
            KappaMode::Rho => "rho".into(),
            KappaMode::Scaled { c } => format!("scale:{c}"),
            KappaMode::Table { source, .. } => format!("table:{source}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSampler {
    /// z = s·e₁ for each s.
    pub spokes: Vec<f64>,
    pub directions: usize,
    /// d_κ spacing of the points w along each ray.
    pub step: f64,
    /// Rays stop past this distance.
    pub reach: f64,
}

impl Default for PairSampler {
    fn default() -> Self {
        PairSampler { spokes: vec![0.0, 0.5, 1.0, 1.5, 2.0], directions: 8, step: 0.25, reach: 6.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub sampler: PairSampler,
    pub window: (f64, f64),
    pub eps_min: f64,
    pub log_margin: f64,
    /// Starting degree; doubled while any row is tail-flagged.
    pub degree: Option<usize>,
    pub max_degree: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sampler: PairSampler::default(),
            window: (1.0, 6.0),
            eps_min: 0.05,
            log_margin: 0.5,
            degree: None,
            max_degree: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GateReport {
    pub open: bool,
    pub hypotheses: HypothesisReport,
    pub reasons: Vec<String>,
}

/// Admissibility, reverse-Hölder and comparability on the default probe.
pub fn hypothesis_gate(w: &Weight) -> Result<GateReport> {
    let hypotheses = inspect(w, &default_probe(w.n))?;
    let mut reasons = Vec::new();
    if !hypotheses.admissible {
        reasons.push("not admissible on the probe".into());
    }
    if !hypotheses.reverse_holder.as_ref().is_some_and(|a| a.value.is_finite()) {
        reasons.push("reverse-Hölder constant not finite".into());
    }
    if !hypotheses.delta().is_some_and(|d| d > 0.0) {
        reasons.push(format!("comparability δ̂ = {:?}", hypotheses.delta()));
    }
    Ok(GateReport { open: reasons.is_empty(), hypotheses, reasons })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRow {
    pub index: usize,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub abs_k: f64,
    pub phi_sum: f64,
    pub rho_z: f64,
    pub rho_w: f64,
    pub kappa_z: f64,
    pub d: f64,
    pub q: f64,
    pub log_q: f64,
    pub method: Method,
    pub tail_indicator: f64,
    pub flagged: bool,
    pub in_window: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaReport {
    pub mode: String,
    pub provenance: String,
    /// κ∨ρ was used because the table dipped below ρ.
    pub substituted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub weight: WeightSpec,
    pub n: usize,
    pub kappa: KappaReport,
    pub gate: GateReport,
    /// Gate closed: the run carries no theorem-backed expectation.
    pub exploratory: bool,
    pub degree: usize,
    pub grid_spacing: Option<f64>,
    pub window: (f64, f64),
    pub eps_min: f64,
    pub log_margin: f64,
    pub fit: LineFit,
    pub c_hat: f64,
    pub eps_hat: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub rows: Vec<PairRow>,
}

/// ρ_{Δφ}, with the constant case recognized so distances are exact.
pub fn rho_field(w: &Weight) -> RadiusField {
    let constant = match &w.family {
        Family::Fock => true,
        Family::RadialPower { m } => *m == 1.0,
        _ => false,
    };
    if constant {
        RadiusField::constant(1.0 / w.laplacian(&vec![0.0; w.dim()]).sqrt(), w.dim())
    } else {
        RadiusField::from_potential(Potential::laplacian(w))
    }
}

struct Pair {
    z: Vec<f64>,
    w: Vec<f64>,
    d: f64,
    method: Method,
}

fn spoke(s: f64, dim: usize) -> Vec<f64> {
    let mut z = vec![0.0; dim];
    z[0] = s;
    z
}

fn direction(j: usize, count: usize) -> (f64, f64) {
    let th = 2.0 * PI * j as f64 / count as f64;
    (th.cos(), th.sin())
}

fn targets(s: &PairSampler) -> Vec<f64> {
    let k = (s.reach / s.step + 1e-9).floor() as usize;
    (1..=k).map(|i| i as f64 * s.step).collect()
}

fn exact_pairs(z: &[f64], c: f64, s: &PairSampler) -> Vec<Pair> {
    let mut out = Vec::new();
    for j in 0..s.directions {
        let (a, b) = direction(j, s.directions);
        for &d in &targets(s) {
            let mut w = z.to_vec();
            w[0] += d * c * a;
            w[1] += d * c * b;
            out.push(Pair { z: z.to_vec(), w, d, method: Method::Exact });
        }
    }
    out
}

/// Radius t with d(0, t·e₁) = target, by bisection on the radial integral.
fn radial_inverse(field: &RadiusField, target: f64) -> Result<f64> {
    let dim = field.dim();
    let dist = |t: f64| agmon::distance_radial(field, &spoke(t, dim));
    let mut hi = 1.0;
    while dist(hi)? < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParams(format!("distance {target} not reached along the ray")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dist(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn radial_pairs(field: &RadiusField, s: &PairSampler) -> Result<Vec<Pair>> {
    let dim = field.dim();
    let radii: Vec<(f64, f64)> = targets(s)
        .par_iter()
        .map(|&d| Ok((d, radial_inverse(field, d)?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for j in 0..s.directions {
        let (a, b) = direction(j, s.directions);
        for &(d, t) in &radii {
            let mut w = vec![0.0; dim];
            w[0] = t * a;
            w[1] = t * b;
            out.push(Pair { z: vec![0.0; dim], w, d, method: Method::RadialQuadrature });
        }
    }
    Ok(out)
}

/// Minimum of the field on a 33 × 33 lattice of the square [-b, b]².
fn lattice_min(field: &RadiusField, b: f64) -> Result<f64> {
    let pts: Vec<Vec<f64>> = (0..33 * 33)
        .map(|i| vec![-b + 2.0 * b * (i % 33) as f64 / 32.0, -b + 2.0 * b * (i / 33) as f64 / 32.0])
        .collect();
    Ok(field.eval_many(&pts)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Walks each ray on the grid and snaps w to the first node at or past each
/// target distance. `None` when a ray leaves the box first.
fn walk_rays(grid: &MetricGrid, values: &[f64], z: &[f64], s: &PairSampler) -> Result<Option<Vec<Pair>>> {
    let ts = targets(s);
    let mut out = Vec::new();
    for j in 0..s.directions {
        let (a, b) = direction(j, s.directions);
        let mut k = 0;
        let mut t = 0.0;
        while k < ts.len() {
            t += grid.h() / 4.0;
            let p = [z[0] + t * a, z[1] + t * b];
            let node = match grid.nearest(&p) {
                Ok(i) => i,
                Err(Error::OutsideBox(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let d = values[node];
            while k < ts.len() && d >= ts[k] {
                out.push(Pair { z: z.to_vec(), w: grid.coords(node), d, method: Method::GridDijkstra });
                k += 1;
            }
        }
    }
    Ok(Some(out))
}

/// Grid distances in the z₁-plane, growing the box until every ray reaches
/// the sampler's reach. Returns the pairs, the spacing and the stencil distortion.
fn grid_pairs(plane: &RadiusField, zs: &[Vec<f64>], s: &PairSampler) -> Result<(Vec<Pair>, f64, f64)> {
    let far = zs.iter().map(|z| z[0].hypot(z[1])).fold(0.0, f64::max);
    let mut b = far + 1.0;
    for _ in 0..12 {
        // 1/h is an integer and b a multiple of h, so spokes on a 1/h lattice are nodes.
        let h = 1.0 / (8.0 / lattice_min(plane, b)?).ceil();
        b = (b / h).ceil() * h;
        let grid = MetricGrid::new(plane, &[(-b, b), (-b, b)], h)?;
        let walked: Vec<Option<Vec<Pair>>> = zs
            .par_iter()
            .map(|z| {
                let dist = grid.distances_from(&z[..2])?;
                walk_rays(&grid, &dist.values, &z[..2], s)
            })
            .collect::<Result<_>>()?;
        if walked.iter().all(|w| w.is_some()) {
            return Ok((walked.into_iter().flatten().flatten().collect(), h, grid.distortion()));
        }
        b *= 1.25;
    }
    Err(Error::Grid("rays kept leaving the distance box".into()))
}

fn embed(p: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    x[..p.len()].copy_from_slice(p);
    x
}

/// κ as a field, with κ∨ρ substituted when a table dips below ρ at any probe point.
pub fn kappa_field(mode: &KappaMode, rho: &RadiusField, probe: &[Vec<f64>]) -> Result<(RadiusField, bool)> {
    Ok(match mode {
        KappaMode::Rho => (rho.clone(), false),
        KappaMode::Scaled { c } => {
            if !(*c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParams("κ scale must be positive".into()));
            }
            (rho.clone().scaled(*c), false)
        }
        KappaMode::Table { points, values, .. } => {
            if points.is_empty() || points.len() != values.len() {
                return Err(Error::InvalidParams("κ table needs matching, nonempty points and values".into()));
            }
            if points.iter().any(|p| p.len() != rho.dim()) || values.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidParams("κ table rows must have the weight's dimension and κ > 0".into()));
            }
            let table = RadiusField::Table { points: points.clone(), values: values.clone() };
            let mut below = false;
            for x in probe {
                if table.eval(x)? < rho.eval(x)? {
                    below = true;
                    break;
                }
            }
            if below {
                (max_radius_ref(&table, rho), true)
            } else {
                (table, false)
            }
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDistance {
    pub d: f64,
    pub method: Method,
    pub grid_spacing: Option<f64>,
    /// Grid runs measure to the node nearest `w`.
    pub w_node: Vec<f64>,
}

/// d_κ(z, w) by the cheapest exact route: closed form for constant κ,
/// radial quadrature from the origin, otherwise Dijkstra in the z₁-plane.
pub fn pair_distance(field: &RadiusField, z: &[f64], w: &[f64], h: Option<f64>) -> Result<PairDistance> {
    let dim = field.dim();
    if z.len() != dim || w.len() != dim {
        return Err(Error::InvalidParams(format!("points must have {dim} real coordinates")));
    }
    if let Some(c) = field.is_constant() {
        let d = crate::radius::euclid(z, w) / c;
        return Ok(PairDistance { d, method: Method::Exact, grid_spacing: None, w_node: w.to_vec() });
    }
    if field.is_radial() {
        let origin = |p: &[f64]| p.iter().all(|v| *v == 0.0);
        if origin(z) || origin(w) {
            let d = agmon::distance_radial(field, if origin(z) { w } else { z })?;
            return Ok(PairDistance { d, method: Method::RadialQuadrature, grid_spacing: None, w_node: w.to_vec() });
        }
    }
    let planar = |p: &[f64]| p[2..].iter().all(|v| *v == 0.0);
    let plane = if dim == 2 {
        field.clone()
    } else if field.is_radial() && planar(z) && planar(w) {
        RadiusField::Slice { inner: Box::new(field.clone()) }
    } else {
        return Err(Error::Unsupported("grid distances need n = 1 or points in the z1-plane".into()));
    };
    let b = z[..2].iter().chain(&w[..2]).fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let h = match h {
        Some(h) => h,
        None => 1.0 / (8.0 / lattice_min(&plane, b)?).ceil(),
    };
    let b = (b / h).ceil() * h;
    let grid = MetricGrid::new(&plane, &[(-b, b), (-b, b)], h)?;
    let dist = grid.distances_from(&z[..2])?;
    let node = grid.nearest(&w[..2])?;
    Ok(PairDistance {
        d: dist.values[node],
        method: Method::GridDijkstra,
        grid_spacing: Some(h),
        w_node: embed(&grid.coords(node), dim),
    })
}

/// Samples pairs, evaluates Q, and fits log Q against d_κ over the window.
pub fn verify_bound(spec: &WeightSpec, kappa: &KappaMode, cfg: &VerifyConfig) -> Result<BoundReport> {
    let w = make_weight(spec)?;
    let dim = w.dim();
    let s = &cfg.sampler;
    if s.spokes.is_empty() || s.directions == 0 || !(s.step > 0.0) || !(s.reach >= s.step) {
        return Err(Error::InvalidParams("pair sampler needs spokes, directions and a positive step".into()));
    }
    let (lo, hi) = cfg.window;
    if !(lo < hi) {
        return Err(Error::InvalidParams("fit window must have d_lo < d_hi".into()));
    }
    let gate = hypothesis_gate(&w)?;
    let mut notes = Vec::new();
    let rho = rho_field(&w);
    let zs: Vec<Vec<f64>> = s.spokes.iter().map(|&t| spoke(t, dim)).collect();

    // κ ≥ ρ is checked on the spokes and the table rows.
    let mut probe = zs.clone();
    if let KappaMode::Table { points, .. } = kappa {
        probe.extend(points.iter().cloned());
    }
    let (kfield, substituted) = kappa_field(kappa, &rho, &probe)?;
    if substituted {
        notes.push("κ < ρ somewhere in the table; κ∨ρ was used".into());
    }

    let mut pairs: Vec<Pair> =
        zs.iter().map(|z| Pair { z: z.clone(), w: z.clone(), d: 0.0, method: Method::Exact }).collect();
    let mut grid_spacing = None;
    if let Some(c) = kfield.is_constant() {
        for z in &zs {
            pairs.extend(exact_pairs(z, c, s));
        }
    } else {
        let mut rest = Vec::new();
        for z in &zs {
            if z.iter().all(|v| *v == 0.0) && kfield.is_radial() {
                pairs.extend(radial_pairs(&kfield, s)?);
            } else {
                rest.push(z.clone());
            }
        }
        if !rest.is_empty() {
            let plane = if dim == 2 {
                kfield.clone()
            } else if kfield.is_radial() {
                notes.push("distances taken in the z1-plane, which a radial κ leaves invariant".into());
                RadiusField::Slice { inner: Box::new(kfield.clone()) }
            } else {
                return Err(Error::Unsupported("grid distances for n ≥ 2 need a radial or constant κ".into()));
            };
            let (grid_rows, h, distortion) = grid_pairs(&plane, &rest, s)?;
            pairs.extend(grid_rows.into_iter().map(|p| Pair { w: embed(&p.w, dim), ..p }));
            grid_spacing = Some(h);
            notes.push(format!(
                "grid distances use spacing {h:.4e}; stencil overestimate ≤ {:.2}%",
                (distortion - 1.0) * 100.0
            ));
        }
    }

    let mut degree = cfg.degree.unwrap_or_else(|| default_degree(w.n));
    let (model, values) = loop {
        let model = build_kernel(&w, degree)?;
        let values = eval_pairs(&model, &pairs)?;
        let flagged = values.iter().any(|v| v.1);
        if !flagged || degree * 2 > cfg.max_degree {
            break (model, values);
        }
        degree *= 2;
    };

    let rows: Vec<PairRow> = pairs
        .par_iter()
        .zip(&values)
        .enumerate()
        .map(|(index, (p, &(abs_k, flagged, tail_indicator)))| {
            let phi_sum = w.phi(&p.z) + w.phi(&p.w);
            let rho_z = rho.eval(&p.z)?;
            let rho_w = rho.eval(&p.w)?;
            let kappa_z = kfield.eval(&p.z)?;
            let nn = w.n as i32;
            let q = abs_k * (-phi_sum).exp() * rho_z.powi(nn) * rho_w.powi(nn) * (rho_z / kappa_z);
            Ok(PairRow {
                index,
                z: p.z.clone(),
                w: p.w.clone(),
                abs_k,
                phi_sum,
                rho_z,
                rho_w,
                kappa_z,
                d: p.d,
                q,
                log_q: q.ln(),
                method: p.method,
                tail_indicator,
                flagged,
                in_window: p.d >= lo && p.d <= hi && q >= UNDERFLOW,
            })
        })
        .collect::<Result<_>>()?;

    if let Some(r) = rows.iter().find(|r| r.in_window && r.flagged) {
        return Err(Error::Quadrature(format!(
            "kernel value flagged at z = {:?}, w = {:?} even at degree {}",
            r.z, r.w, model.degree
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.in_window).map(|r| (r.d, r.log_q)).unzip();
    if xs.len() < 8 {
        return Err(Error::Fit(format!("only {} pairs in the fit window", xs.len())));
    }
    let fit = fit_line(&xs, &ys)?;
    let verdict = if fit.slope <= -cfg.eps_min && fit.max_residual_above <= cfg.log_margin {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    if !gate.open {
        notes.push("hypothesis gate closed: exploratory run".into());
    }
    Ok(BoundReport {
        weight: spec.clone(),
        n: w.n,
        kappa: KappaReport { mode: kappa.tag(), provenance: kfield.provenance(), substituted },
        exploratory: !gate.open,
        gate,
        degree: model.degree,
        grid_spacing,
        window: cfg.window,
        eps_min: cfg.eps_min,
        log_margin: cfg.log_margin,
        c_hat: fit.intercept.exp(),
        eps_hat: -fit.slope,
        fit,
        verdict,
        notes,
        rows,
    })
}

/// (|K|, flagged, tail indicator) per pair.
fn eval_pairs(model: &KernelModel, pairs: &[Pair]) -> Result<Vec<(f64, bool, f64)>> {
    pairs
        .par_iter()
        .map(|p| {
            let v = model.eval(&p.z, &p.w)?;
            let a = v.k.norm();
            Ok((a, v.warning || a < CANCELLATION * v.magnitude, v.tail_indicator))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub eps_hat: f64,
    pub fit: LineFit,
    /// (d, ln value, residual) for the rows used.
    pub residuals: Vec<(f64, f64, f64)>,
    pub underflow_excluded: usize,
}

/// Fits ln(profile) against d_κ(t) over r₀ ≤ d ≤ d_hi, skipping values below 1e-14.
pub fn decay_report<D>(profile: &[(f64, f64)], d_of_t: D, r0: f64, d_hi: f64) -> Result<DecayReport>
where
    D: Fn(f64) -> Result<f64>,
{
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut underflow_excluded = 0;
    for &(t, v) in profile {
        let d = d_of_t(t)?;
        if d < r0 || d > d_hi {
            continue;
        }
        if v < 1e-14 {
            underflow_excluded += 1;
            continue;
        }
        xs.push(d);
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Err(Error::Fit("decay profile has fewer than two usable points".into()));
    }
    let fit = fit_line(&xs, &ys)?;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(&d, &y)| (d, y, y - fit.intercept - fit.slope * d))
        .collect();
    Ok(DecayReport { eps_hat: -fit.slope, fit, residuals, underflow_excluded })
}
