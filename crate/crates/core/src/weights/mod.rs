//! Weight families on ℂⁿ with closed-form gradient, complex Hessian and
//! Laplacian, plus the hypothesis scans run against them.
//!
//! Points are real 2n-vectors `(x1, y1, …, xn, yn)` with `z_j = x_j + i y_j`.

pub mod hypotheses;
pub mod spec;

pub use hypotheses::{
    admissibility_check, comparability_delta, default_probe, doubling_constant, inspect,
    reverse_holder_constant, Comparability, Doubling, HypothesisReport, ReverseHolder,
};
pub use spec::{make_weight, WeightSpec};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// f(s) = Σ c·s^p as a function of s = |z|² (or s = |z_j|² for one variable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub terms: Vec<(f64, f64)>,
}

impl Profile {
    pub fn power(coef: f64, p: f64) -> Profile {
        Profile { terms: vec![(coef, p)] }
    }

    /// Returns (f, f', s·f'') at s ≥ 0.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let mut f = 0.0;
        let mut f1 = 0.0;
        let mut sf2 = 0.0;
        for &(c, p) in &self.terms {
            if p == 0.0 {
                f += c;
                continue;
            }
            f += c * s.powf(p);
            f1 += c * p * pow_or_zero(s, p - 1.0);
            if p != 1.0 {
                sf2 += c * p * (p - 1.0) * pow_or_zero(s, p - 1.0);
            }
        }
        (f, f1, sf2)
    }

    /// Nonnegative coefficients with powers ≥ 1 make the Laplacian a
    /// nondecreasing function of |z|.
    pub fn laplacian_monotone(&self) -> bool {
        self.terms.iter().all(|&(c, p)| c == 0.0 || (c > 0.0 && p >= 1.0))
    }
}

/// s^q with the convention 0^0 = 1 and 0^q = 0 for q > 0.
fn pow_or_zero(s: f64, q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else if s == 0.0 {
        0.0
    } else {
        s.powf(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub alpha: Vec<u32>,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// φ = |z|²
    Fock,
    /// φ = |z|^{2m}
    RadialPower { m: f64 },
    /// φ = Σ c·|z_1|^{2α_1}⋯|z_n|^{2α_n}
    GammaMonomials { terms: Vec<Monomial> },
    /// φ = Σ_j f_j(|z_j|²)
    Decoupled { parts: Vec<Profile> },
    /// φ = f(|z|²)
    CustomRadial { profile: Profile },
    /// φ = Σ Re(z_j²); Δφ ≡ 0. Audit mode only.
    Harmonic,
    /// φ ≡ 0. Audit mode only.
    Flat,
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Fock => "fock",
            Family::RadialPower { .. } => "radial_power",
            Family::GammaMonomials { .. } => "gamma_monomials",
            Family::Decoupled { .. } => "decoupled",
            Family::CustomRadial { .. } => "custom_radial",
            Family::Harmonic => "harmonic",
            Family::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub n: usize,
    pub family: Family,
    /// Constant added to φ; changes no derivative.
    pub offset: f64,
}

fn zs(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

impl Weight {
    /// Build without the plurisubharmonicity probe. Prefer [`make_weight`]
    /// or [`Weight::checked`].
    pub fn unchecked(n: usize, family: Family) -> Weight {
        Weight { n, family, offset: 0.0 }
    }

    pub fn checked(n: usize, family: Family) -> Result<Weight> {
        let w = Weight::unchecked(n, family);
        w.validate()?;
        Ok(w)
    }

    pub fn fock(n: usize) -> Weight {
        Weight::unchecked(n, Family::Fock)
    }

    pub fn radial_power(n: usize, m: f64) -> Weight {
        Weight::unchecked(n, Family::RadialPower { m })
    }

    pub fn with_offset(mut self, a: f64) -> Weight {
        self.offset = a;
        self
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Profile f with φ = f(|z|²), when φ is radial.
    pub fn radial_profile(&self) -> Option<Profile> {
        match &self.family {
            Family::Fock => Some(Profile::power(1.0, 1.0)),
            Family::RadialPower { m } => Some(Profile::power(1.0, *m)),
            Family::CustomRadial { profile } => Some(profile.clone()),
            Family::Flat => Some(Profile { terms: vec![] }),
            Family::GammaMonomials { terms } if self.n == 1 => Some(Profile {
                terms: terms.iter().map(|t| (t.coef, t.alpha[0] as f64)).collect(),
            }),
            Family::Decoupled { parts } if self.n == 1 => Some(parts[0].clone()),
            _ => None,
        }
    }

    /// Per-variable profiles f_j with φ = Σ f_j(|z_j|²), when φ splits so.
    pub fn split_profiles(&self) -> Option<Vec<Profile>> {
        match &self.family {
            Family::Fock => Some(vec![Profile::power(1.0, 1.0); self.n]),
            Family::Decoupled { parts } => Some(parts.clone()),
            Family::GammaMonomials { terms } => {
                let mut parts = vec![Profile { terms: vec![] }; self.n];
                for t in terms {
                    let nz: Vec<usize> = (0..self.n).filter(|&j| t.alpha[j] > 0).collect();
                    match nz.len() {
                        0 => {}
                        1 => parts[nz[0]].terms.push((t.coef, t.alpha[nz[0]] as f64)),
                        _ => return None,
                    }
                }
                Some(parts)
            }
            _ if self.n == 1 => self.radial_profile().map(|p| vec![p]),
            _ => None,
        }
    }

    /// Whether e^{-2φ} is invariant under z_j ↦ e^{iθ_j} z_j for each j.
    pub fn per_variable_symmetric(&self) -> bool {
        !matches!(self.family, Family::Harmonic)
    }

    /// Whether the radial Laplacian profile is nondecreasing in |z|, so that
    /// ball sups sit at the far boundary point.
    pub fn laplacian_radial_monotone(&self) -> bool {
        match self.radial_profile() {
            Some(p) => p.laplacian_monotone(),
            None => matches!(self.family, Family::Harmonic),
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        let z = zs(x);
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        let core = match &self.family {
            Family::Fock => s,
            Family::RadialPower { m } => s.powf(*m),
            Family::CustomRadial { profile } => profile.eval(s).0,
            Family::Decoupled { parts } => {
                parts.iter().zip(&z).map(|(p, v)| p.eval(v.norm_sqr()).0).sum()
            }
            Family::GammaMonomials { terms } => terms
                .iter()
                .map(|t| {
                    t.coef
                        * z.iter()
                            .zip(&t.alpha)
                            .map(|(v, &a)| v.norm_sqr().powi(a as i32))
                            .product::<f64>()
                })
                .sum(),
            Family::Harmonic => z.iter().map(|v| v.re * v.re - v.im * v.im).sum(),
            Family::Flat => 0.0,
        };
        core + self.offset
    }

    /// ∂φ/∂z_j = (φ_{x_j} − i φ_{y_j})/2.
    pub fn dphi_dz(&self, x: &[f64]) -> Vec<Complex64> {
        let z = zs(x);
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        match &self.family {
            Family::Fock => z.iter().map(|v| v.conj()).collect(),
            Family::RadialPower { .. } | Family::CustomRadial { .. } | Family::Flat => {
                let f1 = self.radial_profile().unwrap().eval(s).1;
                z.iter().map(|v| v.conj() * f1).collect()
            }
            Family::Decoupled { parts } => parts
                .iter()
                .zip(&z)
                .map(|(p, v)| v.conj() * p.eval(v.norm_sqr()).1)
                .collect(),
            Family::GammaMonomials { terms } => {
                let sj: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
                (0..self.n)
                    .map(|j| {
                        let mut g = 0.0;
                        for t in terms {
                            let a = t.alpha[j];
                            if a == 0 {
                                continue;
                            }
                            let mut prod = t.coef * a as f64 * sj[j].powi(a as i32 - 1);
                            for (i, &ai) in t.alpha.iter().enumerate() {
                                if i != j {
                                    prod *= sj[i].powi(ai as i32);
                                }
                            }
                            g += prod;
                        }
                        z[j].conj() * g
                    })
                    .collect()
            }
            Family::Harmonic => z.clone(),
        }
    }

    /// Real gradient (φ_{x1}, φ_{y1}, …).
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.dphi_dz(x).iter().flat_map(|d| [2.0 * d.re, -2.0 * d.im]).collect()
    }

    /// Complex Hessian H_{jk} = ∂²φ/∂z_j∂z̄_k.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.n;
        let z = zs(x);
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        let mut h = DMatrix::<Complex64>::zeros(n, n);
        match &self.family {
            Family::Fock => {
                for j in 0..n {
                    h[(j, j)] = Complex64::new(1.0, 0.0);
                }
            }
            Family::RadialPower { .. } | Family::CustomRadial { .. } | Family::Flat => {
                let (_, f1, sf2) = self.radial_profile().unwrap().eval(s);
                for j in 0..n {
                    for k in 0..n {
                        let mut v = if s > 0.0 { z[j].conj() * z[k] * (sf2 / s) } else { Complex64::new(0.0, 0.0) };
                        if j == k {
                            v += f1;
                        }
                        h[(j, k)] = v;
                    }
                }
            }
            Family::Decoupled { parts } => {
                for j in 0..n {
                    let (_, f1, sf2) = parts[j].eval(z[j].norm_sqr());
                    h[(j, j)] = Complex64::new(f1 + sf2, 0.0);
                }
            }
            Family::GammaMonomials { terms } => {
                let sj: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
                for t in terms {
                    for j in 0..n {
                        let aj = t.alpha[j];
                        if aj == 0 {
                            continue;
                        }
                        for k in 0..n {
                            let ak = t.alpha[k];
                            if ak == 0 {
                                continue;
                            }
                            let mut prod = t.coef;
                            for (i, &ai) in t.alpha.iter().enumerate() {
                                let e = if i == j || i == k { ai as i32 - 1 } else { ai as i32 };
                                prod *= sj[i].powi(e);
                            }
                            if j == k {
                                h[(j, j)] += Complex64::new(prod * (aj * aj) as f64, 0.0);
                            } else {
                                h[(j, k)] += z[j].conj() * z[k] * (prod * (aj * ak) as f64);
                            }
                        }
                    }
                }
            }
            Family::Harmonic => {}
        }
        h
    }

    /// Δφ = 4·tr H_φ.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let h = self.hessian(x);
        4.0 * (0..self.n).map(|j| h[(j, j)].re).sum::<f64>()
    }

    /// Laplacian along the ray t ↦ t·e₁ for radial weights.
    pub fn laplacian_profile(&self, t: f64) -> f64 {
        if let Some(p) = self.radial_profile() {
            // Eigenvalues f' (n−1 times) and f' + s f'' give 4(n f' + s f'').
            let (_, f1, sf2) = p.eval(t * t);
            return 4.0 * (self.n as f64 * f1 + sf2);
        }
        let mut x = vec![0.0; self.dim()];
        x[0] = t;
        self.laplacian(&x)
    }

    /// Structural parameter checks followed by the eigenvalue probe.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("dimension n must be ≥ 1".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidParams("offset must be finite".into()));
        }
        match &self.family {
            Family::RadialPower { m } => {
                if !(m.is_finite() && *m >= 1.0) {
                    return Err(Error::InvalidParams(format!("power m = {m} must be ≥ 1")));
                }
            }
            Family::GammaMonomials { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidParams("gamma set is empty".into()));
                }
                for t in terms {
                    if t.alpha.len() != self.n {
                        return Err(Error::InvalidParams(format!(
                            "exponent {:?} has length {} but n = {}",
                            t.alpha,
                            t.alpha.len(),
                            self.n
                        )));
                    }
                    if t.alpha.iter().all(|&a| a == 0) {
                        return Err(Error::InvalidParams("exponent must have a nonzero entry".into()));
                    }
                    if !(t.coef.is_finite() && t.coef > 0.0) {
                        return Err(Error::InvalidParams(format!("coefficient {} must be > 0", t.coef)));
                    }
                }
            }
            Family::Decoupled { parts } => {
                if parts.len() != self.n {
                    return Err(Error::InvalidParams(format!(
                        "{} parts for n = {}",
                        parts.len(),
                        self.n
                    )));
                }
                for p in parts {
                    check_profile(p)?;
                }
            }
            Family::CustomRadial { profile } => check_profile(profile)?,
            Family::Harmonic => {
                // tr H ≡ 0 with H Hermitian PSD forces H ≡ 0; Re(z_j²) qualifies.
            }
            Family::Fock | Family::Flat => {}
        }
        self.probe_plurisubharmonic()
    }

    fn probe_plurisubharmonic(&self) -> Result<()> {
        let d = self.dim();
        let per_axis = match d {
            2 => 13,
            4 => 7,
            _ => 3,
        };
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        loop {
            for k in 0..d {
                x[k] = -3.0 + 6.0 * idx[k] as f64 / (per_axis - 1) as f64;
            }
            self.check_point(&x)?;
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        if self.radial_profile().is_some() {
            for i in 0..=200 {
                let mut x = vec![0.0; d];
                x[0] = 0.05 * i as f64;
                self.check_point(&x)?;
            }
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        let lam = min_eigenvalue(&self.hessian(x));
        if lam < -1e-10 || !lam.is_finite() {
            return Err(Error::NotPlurisubharmonic { point: x.to_vec(), lambda: lam });
        }
        Ok(())
    }
}

fn check_profile(p: &Profile) -> Result<()> {
    for &(c, q) in &p.terms {
        if !c.is_finite() || !q.is_finite() || q < 0.0 {
            return Err(Error::InvalidParams(format!("bad profile term ({c}, {q})")));
        }
        if q > 0.0 && q < 1.0 && c != 0.0 {
            return Err(Error::InvalidParams(format!("power {q} in (0, 1) is not C²")));
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a Hermitian matrix; closed form for n ≤ 2.
pub fn min_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    match h.nrows() {
        1 => h[(0, 0)].re,
        2 => {
            let a = h[(0, 0)].re;
            let d = h[(1, 1)].re;
            let b = h[(0, 1)].norm();
            let m = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            m - r
        }
        _ => h
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    }
}
