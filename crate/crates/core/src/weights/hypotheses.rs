//! Probe-set estimates of the doubling, reverse-Hölder, lower-bound and
//! eigenvalue-comparability constants. None of these are certified.

use rayon::prelude::*;
use serde::Serialize;

use super::{min_eigenvalue, Weight};
use crate::error::{Error, Result};
use crate::potential::{Potential, SupOracle};
use crate::quad;

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub description: String,
}

/// Centers on a uniform grid of [-2, 2]^{2n} (5 per axis for n = 1, 3 per
/// axis otherwise) and radii {1/4, 1/2, 1, 2}.
pub fn default_probe(n: usize) -> Probe {
    let d = 2 * n;
    let per_axis = if n == 1 { 5 } else { 3 };
    let centers = grid_points(d, -2.0, 2.0, per_axis);
    Probe {
        description: format!("grid {per_axis}^{d} on [-2,2]^{d}; radii 0.25,0.5,1,2"),
        centers,
        radii: vec![0.25, 0.5, 1.0, 2.0],
    }
}

pub(crate) fn grid_points(d: usize, lo: f64, hi: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut i| {
            (0..d)
                .map(|_| {
                    let k = i % per_axis;
                    i /= per_axis;
                    if per_axis == 1 {
                        0.5 * (lo + hi)
                    } else {
                        lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparability {
    pub delta: f64,
    pub witness: Vec<f64>,
    pub skipped: usize,
}

/// δ̂ = min over the probe of λ_min(H_φ)/Δφ, skipping points where Δφ = 0.
pub fn comparability_delta(w: &Weight, probe: &[Vec<f64>]) -> Result<Comparability> {
    if probe.is_empty() {
        return Err(Error::InvalidParams("empty probe".into()));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut skipped = 0;
    for x in probe {
        let h = w.hessian(x);
        let lap = 4.0 * (0..w.n).map(|j| h[(j, j)].re).sum::<f64>();
        if lap <= 0.0 {
            skipped += 1;
            continue;
        }
        let q = min_eigenvalue(&h).max(0.0) / lap;
        if best.as_ref().is_none_or(|b| q < b.0) {
            best = Some((q, x.clone()));
        }
    }
    let (delta, witness) = best.ok_or(Error::LaplacianVanishes)?;
    Ok(Comparability { delta, witness, skipped })
}

#[derive(Debug, Clone, Serialize)]
pub struct Doubling {
    pub value: f64,
    pub witness_center: Vec<f64>,
    pub witness_radius: f64,
    pub pairs: usize,
    pub skipped: usize,
    pub oracle: SupOracle,
}

/// D̂ = max over (center, r) of sup_{B(x,2r)} V / sup_{B(x,r)} V.
pub fn doubling_constant(v: &Potential, centers: &[Vec<f64>], radii: &[f64]) -> Result<Doubling> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParams("radii must be positive and sorted".into()));
    }
    let rows: Vec<Vec<Option<f64>>> = centers
        .par_iter()
        .map(|x| {
            radii
                .iter()
                .map(|&r| {
                    let small = v.sup_ball(x, r);
                    if small > 0.0 {
                        Some(v.sup_ball(x, 2.0 * r) / small)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    let mut skipped = 0;
    for (i, row) in rows.iter().enumerate() {
        for (j, q) in row.iter().enumerate() {
            match q {
                None => skipped += 1,
                Some(q) => {
                    if best.is_none_or(|b| *q > b.0) {
                        best = Some((*q, i, j));
                    }
                }
            }
        }
    }
    let (value, i, j) = best.ok_or(Error::ZeroPotential)?;
    Ok(Doubling {
        value,
        witness_center: centers[i].clone(),
        witness_radius: radii[j],
        pairs: centers.len() * radii.len(),
        skipped,
        oracle: v.oracle(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReverseHolder {
    pub value: f64,
    pub witness_center: Vec<f64>,
    pub witness_radius: f64,
    pub skipped: usize,
}

/// Â = max over probes of ‖Δφ‖_{L∞(B)}·r^{2n} / ∫_B Δφ.
pub fn reverse_holder_constant(w: &Weight, centers: &[Vec<f64>], radii: &[f64]) -> Result<ReverseHolder> {
    let v = Potential::laplacian(w);
    let d = w.dim();
    let pairs: Vec<(usize, usize)> =
        (0..centers.len()).flat_map(|i| (0..radii.len()).map(move |j| (i, j))).collect();
    let vals: Vec<Result<Option<f64>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let r = radii[j];
            let integral = quad::ball_integral(&centers[i], r, |p| w.laplacian(p))?;
            if integral <= 0.0 {
                return Ok(None);
            }
            Ok(Some(v.sup_ball(&centers[i], r) * r.powi(d as i32) / integral))
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    let mut skipped = 0;
    for (k, val) in vals.into_iter().enumerate() {
        match val? {
            None => skipped += 1,
            Some(q) => {
                if best.is_none_or(|b| q > b.0) {
                    best = Some((q, pairs[k].0, pairs[k].1));
                }
            }
        }
    }
    let (value, i, j) = best.ok_or(Error::ZeroPotential)?;
    Ok(ReverseHolder { value, witness_center: centers[i].clone(), witness_radius: radii[j], skipped })
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub family: String,
    pub n: usize,
    /// D̂; absent when Δφ vanishes on every probed ball.
    pub doubling: Option<Doubling>,
    pub reverse_holder: Option<ReverseHolder>,
    /// c used in the lower-bound condition.
    pub admissibility_radius: f64,
    /// ĉ = inf over probe centers of sup_{B(z,c)} Δφ.
    pub admissibility_inf: f64,
    pub comparability: Option<Comparability>,
    pub admissible: bool,
    pub probe: String,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn doubling_value(&self) -> Option<f64> {
        self.doubling.as_ref().map(|d| d.value)
    }

    pub fn delta(&self) -> Option<f64> {
        self.comparability.as_ref().map(|c| c.delta)
    }

    /// Admissible, finite Â and δ̂ > 0.
    pub fn gate_open(&self) -> bool {
        self.admissible
            && self.reverse_holder.as_ref().is_some_and(|a| a.value.is_finite())
            && self.delta().is_some_and(|d| d > 0.0)
    }
}

/// ĉ together with D̂; admissible iff both are positive and finite.
pub fn admissibility_check(w: &Weight, c: f64, centers: &[Vec<f64>], radii: &[f64]) -> Result<HypothesisReport> {
    if !(c > 0.0) {
        return Err(Error::InvalidParams("admissibility radius must be > 0".into()));
    }
    let v = Potential::laplacian(w);
    let sups: Vec<f64> = centers.par_iter().map(|x| v.sup_ball(x, c)).collect();
    let c_inf = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut notes = Vec::new();
    let doubling = match doubling_constant(&v, centers, radii) {
        Ok(d) => Some(d),
        Err(Error::ZeroPotential) => {
            notes.push("Laplacian vanishes on every probed ball".into());
            None
        }
        Err(e) => return Err(e),
    };
    let admissible = c_inf > 0.0 && c_inf.is_finite() && doubling.as_ref().is_some_and(|d| d.value.is_finite());
    Ok(HypothesisReport {
        family: w.family.tag().into(),
        n: w.n,
        doubling,
        reverse_holder: None,
        admissibility_radius: c,
        admissibility_inf: c_inf,
        comparability: None,
        admissible,
        probe: format!("{} centers, radii {:?}", centers.len(), radii),
        notes,
    })
}

/// Every hypothesis scan on one probe, with admissibility radius c = 1.
pub fn inspect(w: &Weight, probe: &Probe) -> Result<HypothesisReport> {
    let mut rep = admissibility_check(w, 1.0, &probe.centers, &probe.radii)?;
    rep.probe = probe.description.clone();
    match reverse_holder_constant(w, &probe.centers, &probe.radii) {
        Ok(a) => rep.reverse_holder = Some(a),
        Err(Error::ZeroPotential) => rep.notes.push("reverse-Hölder undefined: zero integrals".into()),
        Err(e) => return Err(e),
    }
    match comparability_delta(w, &probe.centers) {
        Ok(c) => rep.comparability = Some(c),
        Err(Error::LaplacianVanishes) => rep.notes.push("comparability undefined: Δφ = 0 on probe".into()),
        Err(e) => return Err(e),
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{Family, Monomial};
    use std::f64::consts::PI;

    #[test]
    fn fock_two_delta_eighth() {
        let c = comparability_delta(&Weight::fock(2), &default_probe(2).centers).unwrap();
        assert_eq!(c.delta, 0.125);
    }

    #[test]
    fn split_weight_fails_comparability() {
        let w = Weight::checked(
            2,
            Family::GammaMonomials {
                terms: vec![Monomial { alpha: vec![1, 0], coef: 1.0 }, Monomial { alpha: vec![0, 2], coef: 1.0 }],
            },
        )
        .unwrap();
        let c = comparability_delta(&w, &[vec![0.5, 0.5, 0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(c.delta, 0.0);
    }

    #[test]
    fn reverse_holder_closed_forms() {
        let fock = reverse_holder_constant(&Weight::fock(1), &[vec![0.3, 0.1]], &[0.7]).unwrap();
        assert!((fock.value - 1.0 / PI).abs() < 1e-12);
        let quartic = reverse_holder_constant(&Weight::radial_power(1, 2.0), &[vec![0.0, 0.0]], &[0.8]).unwrap();
        assert!((quartic.value - 2.0 / PI).abs() < 1e-12);
        let far = reverse_holder_constant(&Weight::radial_power(1, 2.0), &[vec![10.0, 0.0]], &[0.01]).unwrap();
        assert!((far.value - 1.0 / PI).abs() < 5e-3);
    }

    #[test]
    fn harmonic_not_admissible() {
        let w = Weight::checked(1, Family::Harmonic).unwrap();
        let p = default_probe(1);
        let r = admissibility_check(&w, 1.0, &p.centers, &p.radii).unwrap();
        assert!(!r.admissible);
        assert_eq!(r.admissibility_inf, 0.0);
    }
}
