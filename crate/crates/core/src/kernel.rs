//! Weighted Bergman kernels for weights invariant under z_j ↦ e^{iθ}z_j:
//! monomials are orthogonal, so K(z,w) = Σ z^α w̄^α / c_α.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad;
use crate::weights::{Family, Profile, Weight};

/// Relative size of the last degree shell above which evaluations are flagged.
pub const TAIL_THRESHOLD: f64 = 1e-7;

pub fn default_degree(n: usize) -> usize {
    match n {
        1 => 64,
        2 => 32,
        _ => 16,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Moments {
    /// c_α from one radial integral.
    Radial,
    /// c_α as a product of one-variable integrals.
    Split,
    /// Two-variable integral in logarithmic coordinates.
    Mixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelModel {
    #[serde(skip)]
    pub weight: Weight,
    pub n: usize,
    pub degree: usize,
    pub moments: Moments,
    /// Multi-indices ordered by total degree, then lexicographically.
    pub alphas: Vec<Vec<u32>>,
    /// ln c_α in the order of `alphas`.
    pub log_c: Vec<f64>,
    /// Largest t on the diagonal ray z = w = t·e₁ with the tail indicator below threshold.
    pub validated_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelValue {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub k: Complex64,
    pub degree: usize,
    /// Last shell's share of Σ|terms|.
    pub tail_indicator: f64,
    /// Geometric extrapolation from the last two shells.
    pub tail_estimate: f64,
    /// Σ|terms|; |K| much below it means cancellation.
    pub magnitude: f64,
    pub warning: bool,
}

fn multi_indices(n: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a);
            rec(n, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 0..=degree as u32 {
        rec(n, k, &mut Vec::new(), &mut out);
    }
    out
}

fn log_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// ln ∫₀^∞ s^a e^{−2f(s)} ds, shifted by the peak of the integrand.
fn log_moment(a: u32, f: &Profile) -> Result<f64> {
    let g = |s: f64| {
        let base = -2.0 * f.eval(s).0;
        if a == 0 {
            base
        } else {
            a as f64 * s.ln() + base
        }
    };
    let ts: Vec<f64> = (0..=840).map(|i| -30.0 + 0.05 * i as f64).collect();
    let vals: Vec<f64> = ts.iter().map(|t| g(t.exp())).collect();
    let (ip, &gp) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Quadrature("empty scan".into()))?;
    if !gp.is_finite() || ip + 1 == vals.len() || vals[vals.len() - 1] > gp - 40.0 {
        return Err(Error::Quadrature(format!("moment of order {a} diverges: weight grows too slowly")));
    }
    let scale = (ip..vals.len()).find(|&i| vals[i] < gp - 1.0).unwrap_or(ip);
    let start = ts[scale].exp();
    let v = quad::half_line(|s| if s == 0.0 && a > 0 { 0.0 } else { (g(s) - gp).exp() }, start, 1e-12)?;
    Ok(gp + v.ln())
}

/// ln of π²∫∫ s₁^{a₁} s₂^{a₂} e^{−2φ} ds₁ds₂ for all a₁, a₂ ≤ degree, by the
/// trapezoid rule in t = ln s (step 0.05 on [−40, 6]).
fn mixed_log_moments(w: &Weight, degree: usize) -> Result<Vec<Vec<f64>>> {
    const H: f64 = 0.05;
    let ts: Vec<f64> = (0..=920).map(|i| -40.0 + H * i as f64).collect();
    let m = ts.len();
    let e: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / m, k % m);
            let x = [(ts[i].exp()).sqrt(), 0.0, (ts[j].exp()).sqrt(), 0.0];
            ts[i] + ts[j] - 2.0 * w.phi(&x)
        })
        .collect();
    let lse = |v: &mut dyn Iterator<Item = f64>| -> (f64, f64) {
        let xs: Vec<f64> = v.collect();
        let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln(), mx)
    };
    let mut out = vec![vec![0.0; degree + 1]; degree + 1];
    for a2 in 0..=degree {
        let inner: Vec<f64> = (0..m)
            .map(|i| lse(&mut (0..m).map(|j| a2 as f64 * ts[j] + e[i * m + j])).0)
            .collect();
        for a1 in 0..=degree - a2 {
            let edge = |i: usize| a1 as f64 * ts[i] + inner[i];
            let (total, peak) = lse(&mut (0..m).map(edge));
            let boundary = edge(0).max(edge(m - 1));
            let j_edge = (0..m)
                .map(|i| a1 as f64 * ts[i] + (a2 as f64 * ts[0] + e[i * m]).max(a2 as f64 * ts[m - 1] + e[i * m + m - 1]))
                .fold(f64::NEG_INFINITY, f64::max);
            if boundary > peak - 36.0 || j_edge > peak - 36.0 {
                return Err(Error::Quadrature(format!("moment ({a1}, {a2}) does not decay inside the window")));
            }
            out[a1][a2] = 2.0 * PI.ln() + 2.0 * H.ln() + total;
        }
    }
    Ok(out)
}

fn symmetry_audit(w: &Weight) -> Result<()> {
    if !w.per_variable_symmetric() {
        return Err(Error::NoSymmetry(format!("{} is not rotation invariant per variable", w.family.tag())));
    }
    let d = w.dim();
    for p in quad::unit_ball_samples(d, 6) {
        let x: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let base = w.phi(&x);
        for (j, th) in [0.7f64, 2.1, -1.3].iter().enumerate() {
            let mut y = x.clone();
            let k = j % w.n;
            let (s, c) = th.sin_cos();
            y[2 * k] = c * x[2 * k] - s * x[2 * k + 1];
            y[2 * k + 1] = s * x[2 * k] + c * x[2 * k + 1];
            if (w.phi(&y) - base).abs() > 1e-10 * (1.0 + base.abs()) {
                return Err(Error::NoSymmetry(format!("φ changes under rotation of z_{}", k + 1)));
            }
        }
    }
    Ok(())
}

/// Builds the coefficient table up to total degree `degree`.
pub fn build_kernel(w: &Weight, degree: usize) -> Result<KernelModel> {
    symmetry_audit(w)?;
    let n = w.n;
    let alphas = multi_indices(n, degree);
    let shift = -2.0 * w.offset;
    let (moments, log_c) = if let Some(p) = w.radial_profile() {
        let radial: Vec<Result<f64>> = (0..=degree as u32)
            .into_par_iter()
            .map(|k| log_moment(k + n as u32 - 1, &p))
            .collect();
        let radial: Vec<f64> = radial.into_iter().collect::<Result<_>>()?;
        let log_c = alphas
            .iter()
            .map(|a| {
                let k: u32 = a.iter().sum();
                n as f64 * PI.ln() + a.iter().map(|&x| log_factorial(x)).sum::<f64>()
                    - log_factorial(k + n as u32 - 1)
                    + radial[k as usize]
                    + shift
            })
            .collect();
        (Moments::Radial, log_c)
    } else if let Some(parts) = w.split_profiles() {
        let tables: Vec<Result<Vec<f64>>> = parts
            .par_iter()
            .map(|p| (0..=degree as u32).map(|k| Ok(PI.ln() + log_moment(k, p)?)).collect())
            .collect();
        let tables: Vec<Vec<f64>> = tables.into_iter().collect::<Result<_>>()?;
        let log_c = alphas
            .iter()
            .map(|a| a.iter().enumerate().map(|(j, &x)| tables[j][x as usize]).sum::<f64>() + shift)
            .collect();
        (Moments::Split, log_c)
    } else if n == 2 && matches!(w.family, Family::GammaMonomials { .. }) {
        let t = mixed_log_moments(&Weight { offset: 0.0, ..w.clone() }, degree)?;
        let log_c = alphas.iter().map(|a| t[a[0] as usize][a[1] as usize] + shift).collect();
        (Moments::Mixed, log_c)
    } else {
        return Err(Error::Unsupported(format!("kernel for {} with n = {n}", w.family.tag())));
    };
    let mut model = KernelModel { weight: w.clone(), n, degree, moments, alphas, log_c, validated_radius: 0.0 };
    model.validated_radius = model.scan_validated_radius();
    Ok(model)
}

struct Sums {
    k: Complex64,
    shells: Vec<f64>,
}

impl KernelModel {
    pub fn c(&self, alpha: &[u32]) -> Option<f64> {
        self.alphas.iter().position(|a| a == alpha).map(|i| self.log_c[i].exp())
    }

    fn sums(&self, z: &[Complex64], w: &[Complex64]) -> Sums {
        let u: Vec<Complex64> = z.iter().zip(w).map(|(a, b)| a * b.conj()).collect();
        let lnu: Vec<f64> = u.iter().map(|v| v.norm().ln()).collect();
        let arg: Vec<f64> = u.iter().map(|v| v.arg()).collect();
        let mut k = Complex64::new(0.0, 0.0);
        let mut shells = vec![0.0; self.degree + 1];
        for (a, lc) in self.alphas.iter().zip(&self.log_c) {
            let mut lm = -lc;
            let mut ph = 0.0;
            let mut zero = false;
            for (j, &aj) in a.iter().enumerate() {
                if aj > 0 {
                    if u[j] == Complex64::new(0.0, 0.0) {
                        zero = true;
                        break;
                    }
                    lm += aj as f64 * lnu[j];
                    ph += aj as f64 * arg[j];
                }
            }
            if zero {
                continue;
            }
            let mag = lm.exp();
            k += Complex64::from_polar(mag, ph);
            shells[a.iter().sum::<u32>() as usize] += mag;
        }
        Sums { k, shells }
    }

    fn tail(&self, shells: &[f64]) -> (f64, f64) {
        let total: f64 = shells.iter().sum();
        let last = shells[self.degree];
        let indicator = if total > 0.0 { last / total } else { 0.0 };
        let estimate = if self.degree == 0 || last == 0.0 {
            0.0
        } else {
            let q = last / shells[self.degree - 1];
            if q < 1.0 {
                last * q / (1.0 - q)
            } else {
                f64::INFINITY
            }
        };
        (indicator, estimate)
    }

    fn scan_validated_radius(&self) -> f64 {
        let mut r = 0.0;
        loop {
            let t = r + 0.05;
            if t > 50.0 {
                return r;
            }
            let mut z = vec![Complex64::new(0.0, 0.0); self.n];
            z[0] = Complex64::new(t, 0.0);
            let s = self.sums(&z, &z);
            if self.tail(&s.shells).0 >= TAIL_THRESHOLD {
                return r;
            }
            r = t;
        }
    }

    /// K(z, w) for real 2n-vectors. Pairs are put in a canonical order so that
    /// K(w, z) is the exact conjugate of K(z, w).
    pub fn eval(&self, z: &[f64], w: &[f64]) -> Result<KernelValue> {
        if z.len() != 2 * self.n || w.len() != 2 * self.n {
            return Err(Error::InvalidParams("point dimension does not match the model".into()));
        }
        let swap = z.iter().zip(w).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Greater);
        let (a, b) = if swap { (w, z) } else { (z, w) };
        let s = self.sums(&to_complex(a), &to_complex(b));
        let (tail_indicator, tail_estimate) = self.tail(&s.shells);
        Ok(KernelValue {
            z: z.to_vec(),
            w: w.to_vec(),
            k: if swap { s.k.conj() } else { s.k },
            degree: self.degree,
            tail_indicator,
            tail_estimate,
            magnitude: s.shells.iter().sum(),
            warning: tail_indicator > TAIL_THRESHOLD,
        })
    }

    /// K on complex coordinates without canonical ordering (n = 1 audits).
    fn eval_c(&self, z: Complex64, w: Complex64) -> Complex64 {
        self.sums(&[z], &[w]).k
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Polynomial in one variable, coefficients from degree 0 up.
pub fn poly_eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn require_plane(m: &KernelModel) -> Result<()> {
    if m.n != 1 {
        return Err(Error::Unsupported("this audit is implemented for n = 1".into()));
    }
    Ok(())
}

/// Scale where |w|^{2N+1}e^{−2φ(w)} peaks, used to start half-line integrals.
fn radial_start(m: &KernelModel) -> f64 {
    let mut best = (f64::NEG_INFINITY, 1.0);
    for i in 1..=400 {
        let r = 0.05 * i as f64;
        let v = (2 * m.degree + 1) as f64 * r.ln() - 2.0 * m.weight.phi(&[r, 0.0]);
        if v > best.0 {
            best = (v, r);
        }
    }
    best.1.max(1.0)
}

/// max over z of |h(z) − ∫ K(z,w) h(w) e^{−2φ(w)} dL(w)|, by angular
/// trapezoid with 2N + 8 nodes and adaptive radial Gauss–Legendre (n = 1).
pub fn reproducing_audit(m: &KernelModel, h: &[Complex64], points: &[Complex64]) -> Result<f64> {
    require_plane(m)?;
    if h.len() > m.degree + 1 {
        return Err(Error::InvalidParams("polynomial degree exceeds the model degree".into()));
    }
    let na = 2 * m.degree + 8;
    let start = radial_start(m);
    let res: Vec<Result<f64>> = points
        .par_iter()
        .map(|&z| {
            // Returns (Σ K·h, Σ |K·h|) over the ring, times r·e^{−2φ}.
            let ring = |r: f64| -> (Complex64, f64) {
                if r == 0.0 {
                    return (Complex64::new(0.0, 0.0), 0.0);
                }
                let weight = (-2.0 * m.weight.phi(&[r, 0.0])).exp();
                let mut s = Complex64::new(0.0, 0.0);
                let mut a = 0.0;
                for k in 0..na {
                    let w = Complex64::from_polar(r, 2.0 * PI * k as f64 / na as f64);
                    let v = m.eval_c(z, w) * poly_eval(h, w);
                    s += v;
                    a += v.norm();
                }
                let f = 2.0 * PI / na as f64 * r * weight;
                (s * f, a * f)
            };
            // Cancellation makes the signed integrals small; the floor follows the absolute one.
            let scale = quad::half_line(|r| ring(r).1, start, 1e-6)?;
            let re = quad::half_line_abs(|r| ring(r).0.re, start, 1e-13, 1e-14 * scale)?;
            let im = quad::half_line_abs(|r| ring(r).0.im, start, 1e-13, 1e-14 * scale)?;
            Ok((poly_eval(h, z) - Complex64::new(re, im)).norm())
        })
        .collect();
    res.into_iter().try_fold(0.0f64, |a, r| Ok(a.max(r?)))
}

/// vᴴG⁻¹v / K(z,z) with v_α = conj(z^α) and G = diag(c_α), the Gram matrix
/// of the truncated monomial basis.
pub fn diag_variational_audit(m: &KernelModel, z: &[f64]) -> Result<f64> {
    let zc = to_complex(z);
    let mut q = 0.0;
    for (a, lc) in m.alphas.iter().zip(&m.log_c).rev() {
        let v: f64 = a.iter().zip(&zc).map(|(&e, c)| c.norm_sqr().powi(e as i32)).product();
        q += v / lc.exp();
    }
    let k = m.eval(z, z)?.k.re;
    Ok(q / k)
}

/// Largest |∫ z^α z̄^β e^{−2φ}| / √(c_α c_β) over the given pairs, computed on
/// Cartesian Gauss–Legendre panels (n = 1).
pub fn orthogonality_audit(m: &KernelModel, pairs: &[(u32, u32)]) -> Result<f64> {
    require_plane(m)?;
    let res: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let top = (a + b) as f64;
            let g = |r: f64| top * r.max(1e-300).ln() - 2.0 * m.weight.phi(&[r, 0.0]);
            let peak = (1..=2000).map(|i| g(0.01 * i as f64)).fold(f64::NEG_INFINITY, f64::max);
            let mut reach = 0.5;
            while g(reach) > peak - 45.0 || reach < 1.0 {
                reach += 0.25;
                if reach > 100.0 {
                    return Err(Error::Quadrature("weight does not decay".into()));
                }
            }
            let panels = (reach / 0.125).ceil() as usize * 2;
            let step = 2.0 * reach / panels as f64;
            let gl = quad::gl32();
            let mut total = Complex64::new(0.0, 0.0);
            for px in 0..panels {
                for py in 0..panels {
                    let (x0, y0) = (-reach + px as f64 * step, -reach + py as f64 * step);
                    for (tx, wx) in gl.nodes.iter().zip(&gl.weights) {
                        let x = x0 + 0.5 * step * (tx + 1.0);
                        for (ty, wy) in gl.nodes.iter().zip(&gl.weights) {
                            let y = y0 + 0.5 * step * (ty + 1.0);
                            let z = Complex64::new(x, y);
                            let f = z.powu(a) * z.conj().powu(b) * (-2.0 * m.weight.phi(&[x, y])).exp();
                            total += f * (wx * wy * 0.25 * step * step);
                        }
                    }
                }
            }
            let norm = (m.c(&[a]).unwrap_or(f64::NAN) * m.c(&[b]).unwrap_or(f64::NAN)).sqrt();
            if a == b {
                Ok((total.re - norm).abs() / norm)
            } else {
                Ok(total.norm() / norm)
            }
        })
        .collect();
    res.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SubMeanValue {
    pub value: f64,
    pub witness: Vec<f64>,
    pub witness_radius: f64,
}

/// Ĉ_hol = max over samples of |h(z)|²e^{−2φ(z)}·|B(z,r)| / ∫_{B(z,r)}|h|²e^{−2φ}.
pub fn submeanvalue_audit<H>(w: &Weight, h: H, samples: &[(Vec<f64>, f64)]) -> Result<SubMeanValue>
where
    H: Fn(&[f64]) -> Complex64 + Sync,
{
    let vals: Vec<Result<f64>> = samples
        .par_iter()
        .map(|(z, r)| {
            let top = h(z).norm_sqr() * (-2.0 * w.phi(z)).exp() * quad::ball_volume(z.len(), *r);
            let bottom = quad::ball_integral(z, *r, |p| h(p).norm_sqr() * (-2.0 * w.phi(p)).exp())?;
            Ok(top / bottom)
        })
        .collect();
    let mut best = SubMeanValue { value: 0.0, witness: Vec::new(), witness_radius: 0.0 };
    for (i, v) in vals.into_iter().enumerate() {
        let v = v?;
        if v > best.value || best.witness.is_empty() {
            best = SubMeanValue { value: v, witness: samples[i].0.clone(), witness_radius: samples[i].1 };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_coefficients() {
        let m = build_kernel(&Weight::fock(1), 8).unwrap();
        assert!((m.c(&[0]).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((m.c(&[1]).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!((m.c(&[2]).unwrap() - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_origin() {
        let m = build_kernel(&Weight::radial_power(1, 2.0), 16).unwrap();
        let c0 = PI.powf(1.5) / (2.0 * 2f64.sqrt());
        assert!((m.c(&[0]).unwrap() - c0).abs() < 1e-10 * c0);
        assert!((m.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap().k.re - 1.0 / c0).abs() < 1e-12);
    }

    #[test]
    fn index_count() {
        assert_eq!(multi_indices(2, 32).len(), 33 * 34 / 2);
        assert_eq!(multi_indices(1, 5).len(), 6);
    }

    #[test]
    fn harmonic_rejected() {
        let w = Weight::unchecked(1, Family::Harmonic);
        assert!(matches!(build_kernel(&w, 4), Err(Error::NoSymmetry(_))));
    }

    #[test]
    fn flat_diverges() {
        let w = Weight::unchecked(1, Family::Flat);
        assert!(matches!(build_kernel(&w, 4), Err(Error::Quadrature(_))));
    }
}
