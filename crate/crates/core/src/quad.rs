//! Gauss–Legendre panels, adaptive integration on intervals and half-lines,
//! ball quadrature and low-discrepancy ball samples.

use std::f64::consts::PI;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Nodes per Gauss–Legendre panel used by the adaptive integrators.
pub const PANEL_NODES: usize = 32;

/// A quadrature rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn gauss_legendre(n: usize) -> Rule {
        let gl = GaussLegendre::new(n.max(2)).expect("degree >= 2");
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Apply the rule on [a, b].
    pub fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

pub fn gl32() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(PANEL_NODES))
}

pub fn gl16() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(16))
}

pub fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    gl32().apply(a, b, f)
}

const MAX_DEPTH: u32 = 40;

/// Adaptive bisection of 32-node panels until the two-level difference is
/// below `abs_tol`.
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    let whole = panel(f, a, b);
    recurse(f, a, b, whole, abs_tol.max(f64::MIN_POSITIVE), MAX_DEPTH)
}

fn recurse<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = panel(f, a, m);
    let right = panel(f, m, b);
    let sum = left + right;
    if !sum.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    if (sum - whole).abs() <= tol || (sum - whole).abs() <= 1e-15 * sum.abs() {
        return Ok(sum);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!("depth exhausted on [{a}, {b}]")));
    }
    Ok(recurse(f, a, m, left, 0.5 * tol, depth - 1)? + recurse(f, m, b, right, 0.5 * tol, depth - 1)?)
}

/// Relative accuracy of a definite integral over [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let crude = panel(&mut f, a, b);
    adaptive(&mut f, a, b, rel_tol * crude.abs())
}

/// Integral over [0, ∞) by interval doubling: [0, s], [s, 2s], [2s, 4s], …
/// `start` should lie at or beyond the integrand's peak; doubling stops once
/// a decreasing segment contributes less than `rel_tol` of the running total.
pub fn half_line<F: FnMut(f64) -> f64>(f: F, start: f64, rel_tol: f64) -> Result<f64> {
    half_line_abs(f, start, rel_tol, 0.0)
}

/// As [`half_line`], with an absolute floor on the accepted error for
/// integrals that may vanish.
pub fn half_line_abs<F: FnMut(f64) -> f64>(mut f: F, start: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let mut b = start;
    let crude = panel(&mut f, 0.0, b);
    let mut total = adaptive(&mut f, 0.0, b, (rel_tol * crude.abs()).max(abs_tol))?;
    let mut prev = total.abs();
    for _ in 0..80 {
        let a = b;
        b *= 2.0;
        let crude = panel(&mut f, a, b);
        let seg = adaptive(&mut f, a, b, (0.1 * rel_tol * total.abs().max(crude.abs())).max(0.1 * abs_tol))?;
        total += seg;
        if !total.is_finite() {
            break;
        }
        if seg.abs() <= (rel_tol * total.abs()).max(abs_tol) && seg.abs() <= prev.max(abs_tol) {
            return Ok(total);
        }
        prev = seg.abs();
    }
    Err(Error::Quadrature("half-line integral does not converge".into()))
}

/// Volume of the euclidean ball of radius `r` in ℝ^d.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let unit = if d.is_multiple_of(2) {
        let mut v = 1.0;
        let mut k = 2;
        while k <= d {
            v *= 2.0 * PI / k as f64;
            k += 2;
        }
        v
    } else {
        let mut v = 2.0;
        let mut k = 3;
        while k <= d {
            v *= 2.0 * PI / k as f64;
            k += 2;
        }
        v
    };
    unit * r.powi(d as i32)
}

/// ∫ over B(center, r) ⊂ ℝ^d for d ∈ {2, 4}. Polar coordinates in the plane,
/// Hopf coordinates (two angles and one latitude) on ℂ².
pub fn ball_integral<F: FnMut(&[f64]) -> f64>(center: &[f64], r: f64, mut f: F) -> Result<f64> {
    let d = center.len();
    let gl = gl32();
    let mut x = center.to_vec();
    match d {
        2 => {
            let m = 128;
            let mut total = 0.0;
            for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
                let rad = 0.5 * r * (t + 1.0);
                let mut ring = 0.0;
                for k in 0..m {
                    let th = 2.0 * PI * k as f64 / m as f64;
                    x[0] = center[0] + rad * th.cos();
                    x[1] = center[1] + rad * th.sin();
                    ring += f(&x);
                }
                total += wt * rad * ring * 2.0 * PI / m as f64;
            }
            Ok(total * 0.5 * r)
        }
        4 => {
            let m = 12;
            let lat = gl16();
            let mut total = 0.0;
            for (t, wt) in lat.nodes.iter().zip(&lat.weights) {
                let rad = 0.5 * r * (t + 1.0);
                let mut shell = 0.0;
                for (e, we) in lat.nodes.iter().zip(&lat.weights) {
                    let eta = 0.25 * PI * (e + 1.0);
                    let (se, ce) = eta.sin_cos();
                    let mut torus = 0.0;
                    for i in 0..m {
                        let a = 2.0 * PI * i as f64 / m as f64;
                        for j in 0..m {
                            let b = 2.0 * PI * j as f64 / m as f64;
                            x[0] = center[0] + rad * ce * a.cos();
                            x[1] = center[1] + rad * ce * a.sin();
                            x[2] = center[2] + rad * se * b.cos();
                            x[3] = center[3] + rad * se * b.sin();
                            torus += f(&x);
                        }
                    }
                    let cell = (2.0 * PI / m as f64).powi(2);
                    shell += we * 0.25 * PI * se * ce * torus * cell;
                }
                total += wt * rad.powi(3) * shell;
            }
            Ok(total * 0.5 * r)
        }
        _ => Err(Error::Unsupported(format!("ball quadrature in dimension {d}"))),
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: usize, base: u32) -> f64 {
    let b = base as usize;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % b) as f64;
        index /= b;
    }
    r
}

/// The first `count` Halton points of [-1, 1]^d that fall inside the unit ball.
pub fn unit_ball_samples(d: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len());
    let mut out = Vec::with_capacity(count);
    let mut i = 1usize;
    while out.len() < count {
        let p: Vec<f64> = (0..d).map(|k| 2.0 * halton(i, PRIMES[k]) - 1.0).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out
}

/// Deterministic sample count per ball: 64·d² points (d = real dimension).
pub fn ball_sample_count(d: usize) -> usize {
    64 * d * d
}

/// Cached unit-ball sample sets, one per real dimension.
pub fn cached_ball_samples(d: usize) -> &'static [Vec<f64>] {
    static CACHE: [OnceLock<Vec<Vec<f64>>>; 13] = [const { OnceLock::new() }; 13];
    CACHE[d].get_or_init(|| unit_ball_samples(d, ball_sample_count(d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_half_line() {
        let v = half_line(|x| (-x * x).exp(), 1.0, 1e-13).unwrap();
        assert!((v - PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(2, 2.0) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(4, 1.0) - PI * PI / 2.0).abs() < 1e-12);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ball_integral_of_radial_square() {
        // ∫_{B(0,r)} |x|² = 2π r⁴/4 in the plane, π² r⁶/3 in ℝ⁴.
        let v2 = ball_integral(&[0.0, 0.0], 1.5, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        assert!((v2 - 2.0 * PI * 1.5f64.powi(4) / 4.0).abs() < 1e-12);
        let v4 = ball_integral(&[0.0; 4], 1.2, |x| x.iter().map(|t| t * t).sum()).unwrap();
        assert!((v4 - PI * PI * 1.2f64.powi(6) / 3.0).abs() < 1e-11);
    }

    #[test]
    fn samples_lie_in_ball() {
        let s = unit_ball_samples(4, 100);
        assert_eq!(s.len(), 100);
        assert!(s.iter().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0));
    }
}
