//! Finite-difference forms for the weighted ∂̄-complex on (0,1)-forms over a
//! box [−L, L]^{2n}, with zero values outside the interior ("unknown") nodes.
//!
//! A (0,1)-form is stored component-major: `u[j·m + q]` is u_j at the q-th
//! unknown node, m the number of unknown nodes. Functions (0-forms) live on
//! every grid node. All inner products use w = h^{2n}·e^{−2φ}.

mod audits;
mod solve;

pub use audits::{
    canonical_solution, coercivity_rayleigh, diamagnetic_audit, fefferman_phong_constant,
    localization_identity_audit, neumann_bergman_audit, schrodinger_equivalence_audit, smooth_ramp,
    CanonicalSolution, FeffermanPhong, NeumannReport, SchrodingerReport,
};
pub use solve::{inverse_iteration, pcg, CgReport, Eigen, CG_MAX_ITER};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::radius::RadiusField;
use crate::weights::Weight;

pub type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn halo(self) -> usize {
        match self {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 2,
        }
    }

    /// Centered first-derivative weights as (offset, coefficient).
    pub fn coefs(self, h: f64) -> Vec<(i64, f64)> {
        match self {
            StencilOrder::Second => vec![(-1, -0.5 / h), (1, 0.5 / h)],
            StencilOrder::Fourth => {
                let s = 1.0 / (12.0 * h);
                vec![(-2, s), (-1, -8.0 * s), (1, 8.0 * s), (2, -s)]
            }
        }
    }
}

/// Uniform grid on [−L, L]^{2n} with `points` nodes per axis; the first axis
/// has stride 1 and axes come in (x_j, y_j) pairs.
#[derive(Debug, Clone, Serialize)]
pub struct FormGrid {
    pub n: usize,
    pub half_width: f64,
    pub h: f64,
    pub order: StencilOrder,
    pub points: usize,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    unknown: Vec<usize>,
}

impl FormGrid {
    pub fn new(n: usize, half_width: f64, h: f64, order: StencilOrder) -> Result<FormGrid> {
        if n == 0 || !(half_width > 0.0) || !(h > 0.0) {
            return Err(Error::Grid("need n ≥ 1, L > 0 and h > 0".into()));
        }
        let cells = (2.0 * half_width / h).round();
        if (cells * h - 2.0 * half_width).abs() > 1e-9 * half_width {
            return Err(Error::Grid(format!("h = {h} does not divide 2L = {}", 2.0 * half_width)));
        }
        let points = cells as usize + 1;
        let d = 2 * n;
        let total = (points as f64).powi(d as i32);
        if total > crate::agmon::NODE_CAP as f64 {
            return Err(Error::Grid(format!("{total} nodes exceed the node cap")));
        }
        let halo = order.halo();
        if points <= 2 * halo {
            return Err(Error::Grid("box has no interior nodes".into()));
        }
        let strides: Vec<usize> = (0..d).map(|a| points.pow(a as u32)).collect();
        let total = points.pow(d as u32);
        let unknown = (0..total)
            .filter(|&p| (0..d).all(|a| {
                let i = (p / strides[a]) % points;
                i >= halo && i + halo < points
            }))
            .collect();
        Ok(FormGrid { n, half_width, h, order, points, strides, unknown })
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn full_len(&self) -> usize {
        self.points.pow(self.dim() as u32)
    }

    pub fn unknown_len(&self) -> usize {
        self.unknown.len()
    }

    /// Full-grid indices of the unknown nodes.
    pub fn unknown_nodes(&self) -> &[usize] {
        &self.unknown
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| -self.half_width + ((p / self.strides[a]) % self.points) as f64 * self.h)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// out += scale·D_axis v (or its adjoint), on full-grid vectors; values
    /// outside the box count as zero.
    fn axis_apply(&self, v: &[C], axis: usize, scale: C, adjoint: bool, out: &mut [C]) {
        let stride = self.strides[axis] as i64;
        let np = self.points as i64;
        let coefs = self.order.coefs(self.h);
        let sc = if adjoint { scale.conj() } else { scale };
        for (p, o) in out.iter_mut().enumerate() {
            let i = ((p / self.strides[axis]) % self.points) as i64;
            let mut acc = ZERO;
            for &(off, c) in &coefs {
                let off = if adjoint { -off } else { off };
                let q = i + off;
                if q >= 0 && q < np {
                    acc += v[(p as i64 + off * stride) as usize] * c;
                }
            }
            *o += sc * acc;
        }
    }

    /// ∂̄_k = (D_{x_k} + i D_{y_k})/2 on a full-grid function.
    pub fn dbar(&self, v: &[C], k: usize) -> Vec<C> {
        let mut out = vec![ZERO; v.len()];
        self.axis_apply(v, 2 * k, C::new(0.5, 0.0), false, &mut out);
        self.axis_apply(v, 2 * k + 1, C::new(0.0, 0.5), false, &mut out);
        out
    }

    /// Matrix adjoint of [`FormGrid::dbar`] (unweighted).
    pub fn dbar_adjoint(&self, v: &[C], k: usize) -> Vec<C> {
        let mut out = vec![ZERO; v.len()];
        self.axis_apply(v, 2 * k, C::new(0.5, 0.0), true, &mut out);
        self.axis_apply(v, 2 * k + 1, C::new(0.0, 0.5), true, &mut out);
        out
    }

    /// ∂_k = (D_{x_k} − i D_{y_k})/2.
    pub fn partial(&self, v: &[C], k: usize) -> Vec<C> {
        let mut out = vec![ZERO; v.len()];
        self.axis_apply(v, 2 * k, C::new(0.5, 0.0), false, &mut out);
        self.axis_apply(v, 2 * k + 1, C::new(0.0, -0.5), false, &mut out);
        out
    }

    /// Real partial derivative along one axis.
    pub fn deriv(&self, v: &[C], axis: usize) -> Vec<C> {
        let mut out = vec![ZERO; v.len()];
        self.axis_apply(v, axis, C::new(1.0, 0.0), false, &mut out);
        out
    }

    pub fn extend(&self, u: &[C]) -> Vec<C> {
        let mut out = vec![ZERO; self.full_len()];
        for (q, &p) in self.unknown.iter().enumerate() {
            out[p] = u[q];
        }
        out
    }

    pub fn restrict(&self, v: &[C]) -> Vec<C> {
        self.unknown.iter().map(|&p| v[p]).collect()
    }

    /// Samples an n-component field at the unknown nodes.
    pub fn sample_form<F: Fn(&[f64]) -> Vec<C>>(&self, f: F) -> Vec<C> {
        let m = self.unknown_len();
        let mut out = vec![ZERO; self.n * m];
        for (q, &p) in self.unknown.iter().enumerate() {
            let v = f(&self.coords(p));
            for j in 0..self.n {
                out[j * m + q] = v[j];
            }
        }
        out
    }

    /// Samples a function at every node.
    pub fn sample_function<F: Fn(&[f64]) -> C>(&self, f: F) -> Vec<C> {
        (0..self.full_len()).map(|p| f(&self.coords(p))).collect()
    }

    /// Largest |u| outside the cube of half-width `frac·L`, relative to max |u|.
    pub fn margin_ratio(&self, u: &[C], frac: f64) -> f64 {
        let m = self.unknown_len();
        let mut inside: f64 = 0.0;
        let mut outside: f64 = 0.0;
        for (q, &p) in self.unknown.iter().enumerate() {
            let far = self.coords(p).iter().any(|x| x.abs() > frac * self.half_width + 1e-12);
            for j in 0..u.len() / m {
                let a = u[j * m + q].norm();
                if far {
                    outside = outside.max(a);
                } else {
                    inside = inside.max(a);
                }
            }
        }
        if inside == 0.0 {
            if outside == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            outside / inside
        }
    }
}

/// The weight sampled on a grid with the Hessian at unknown nodes.
#[derive(Debug, Clone)]
pub struct FormAssembly {
    pub weight: Weight,
    pub grid: FormGrid,
    /// h^{2n}·e^{−2φ} at every node.
    pub w_full: Vec<f64>,
    /// Same at the unknown nodes.
    pub w_unknown: Vec<f64>,
    /// H_jk = ∂²φ/∂z_j∂z̄_k row-major at each unknown node.
    hess: Vec<Vec<C>>,
    /// min ρ_{Δφ} on the box, when Δφ does not vanish there.
    pub rho_min: Option<f64>,
}

const WEIGHT_FLOOR: f64 = 1e-280;

/// Samples φ and H_φ on the grid. Requires h ≤ ρ_min/4 for ρ_{Δφ} sampled on
/// a 33-per-axis lattice of the box (skipped when Δφ vanishes).
pub fn assemble_mkh(w: &Weight, grid: &FormGrid) -> Result<FormAssembly> {
    if w.n != grid.n {
        return Err(Error::InvalidParams("weight and grid dimensions differ".into()));
    }
    let rho_min = resolution_radius(w, grid.half_width)?;
    if let Some(r) = rho_min {
        if grid.h > 0.25 * r * (1.0 + 1e-9) {
            return Err(Error::Grid(format!("h = {} exceeds ρ_min/4 = {:.6}", grid.h, r / 4.0)));
        }
    }
    let vol = grid.cell_volume();
    let w_full: Vec<f64> = (0..grid.full_len()).map(|p| vol * (-2.0 * w.phi(&grid.coords(p))).exp()).collect();
    if w_full.iter().any(|&x| !(x > WEIGHT_FLOOR) || !x.is_finite()) {
        return Err(Error::Grid("e^{−2φ} leaves the floating-point range on this box".into()));
    }
    let w_unknown = grid.restrict_real(&w_full);
    let n = grid.n;
    let hess = grid
        .unknown
        .iter()
        .map(|&p| {
            let h = w.hessian(&grid.coords(p));
            (0..n * n).map(|i| h[(i / n, i % n)]).collect()
        })
        .collect();
    Ok(FormAssembly { weight: w.clone(), grid: grid.clone(), w_full, w_unknown, hess, rho_min })
}

fn resolution_radius(w: &Weight, half_width: f64) -> Result<Option<f64>> {
    let v = Potential::laplacian(w);
    let d = w.dim();
    let probe = crate::weights::default_probe(w.n);
    if probe.centers.iter().all(|x| w.laplacian(x) <= 0.0) {
        return Ok(None);
    }
    let field = RadiusField::from_potential(v);
    let per: usize = if d == 2 { 33 } else { 5 };
    let total = per.pow(d as u32);
    let mut best = f64::INFINITY;
    for mut i in 0..total {
        let x: Vec<f64> = (0..d)
            .map(|_| {
                let k = i % per;
                i /= per;
                -half_width + 2.0 * half_width * k as f64 / (per - 1) as f64
            })
            .collect();
        best = best.min(field.eval(&x)?);
    }
    Ok(Some(best))
}

impl FormGrid {
    fn restrict_real(&self, v: &[f64]) -> Vec<f64> {
        self.unknown.iter().map(|&p| v[p]).collect()
    }
}

impl FormAssembly {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn m(&self) -> usize {
        self.grid.unknown_len()
    }

    pub fn len(&self) -> usize {
        self.n() * self.m()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn component<'a>(&self, u: &'a [C], j: usize) -> &'a [C] {
        &u[j * self.m()..(j + 1) * self.m()]
    }

    /// (u, v)_φ for forms on unknown nodes.
    pub fn form_inner(&self, u: &[C], v: &[C]) -> C {
        let m = self.m();
        u.iter().zip(v).enumerate().map(|(i, (a, b))| a * b.conj() * self.w_unknown[i % m]).sum()
    }

    /// (f, g)_φ for functions on all nodes.
    pub fn function_inner(&self, f: &[C], g: &[C]) -> C {
        f.iter().zip(g).zip(&self.w_full).map(|((a, b), w)| a * b.conj() * w).sum()
    }

    fn weighted_norm_sqr(&self, v: &[C]) -> f64 {
        v.iter().zip(&self.w_full).map(|(a, w)| a.norm_sqr() * w).sum()
    }

    /// Σ_{jk} H_jk u_j ū_k at unknown node q.
    fn levi(&self, u: &[C], q: usize) -> f64 {
        let n = self.n();
        let m = self.m();
        let h = &self.hess[q];
        let mut s = ZERO;
        for j in 0..n {
            for k in 0..n {
                s += h[j * n + k] * u[j * m + q] * u[k * m + q].conj();
            }
        }
        s.re
    }

    /// Σ_{j,k} ‖∂̄_k u_j‖²_φ + 2∫(H_φ u, u)e^{−2φ}.
    pub fn mkh_energy(&self, u: &[C]) -> f64 {
        let n = self.n();
        let mut e = 0.0;
        for j in 0..n {
            let v = self.grid.extend(self.component(u, j));
            for k in 0..n {
                e += self.weighted_norm_sqr(&self.grid.dbar(&v, k));
            }
        }
        e + 2.0 * (0..self.m()).map(|q| self.w_unknown[q] * self.levi(u, q)).sum::<f64>()
    }

    /// Operator of the MKH form: Re⟨A u, u⟩ = mkh_energy(u).
    pub fn apply_mkh(&self, u: &[C]) -> Vec<C> {
        let n = self.n();
        let m = self.m();
        let mut out = vec![ZERO; u.len()];
        for j in 0..n {
            let v = self.grid.extend(self.component(u, j));
            let mut acc = vec![ZERO; v.len()];
            for k in 0..n {
                let mut t = self.grid.dbar(&v, k);
                t.iter_mut().zip(&self.w_full).for_each(|(a, w)| *a *= w);
                let back = self.grid.dbar_adjoint(&t, k);
                acc.iter_mut().zip(back).for_each(|(a, b)| *a += b);
            }
            for (q, &p) in self.grid.unknown.iter().enumerate() {
                out[j * m + q] = acc[p];
            }
        }
        for q in 0..m {
            let h = &self.hess[q];
            for k in 0..n {
                let mut s = ZERO;
                for j in 0..n {
                    s += h[j * n + k] * u[j * m + q];
                }
                out[k * m + q] += s * (2.0 * self.w_unknown[q]);
            }
        }
        out
    }

    /// Diagonal of the MKH operator.
    pub fn diag_mkh(&self) -> Vec<f64> {
        let n = self.n();
        let m = self.m();
        let coefs = self.grid.order.coefs(self.grid.h);
        let mut out = vec![0.0; n * m];
        for (q, &p) in self.grid.unknown.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..n {
                for axis in [2 * k, 2 * k + 1] {
                    for &(o, c) in &coefs {
                        let r = p as i64 - o * self.grid.strides[axis] as i64;
                        s += c * c / 4.0 * self.w_full[r as usize];
                    }
                }
            }
            for j in 0..n {
                out[j * m + q] = s + 2.0 * self.w_unknown[q] * self.hess[q][j * n + j].re;
            }
        }
        out
    }

    /// ∂̄*_φ u = e^{2φ}Σ_j ∂̄_jᴴ(e^{−2φ}u_j) as a function on all nodes: the
    /// exact adjoint of ∂̄ for the weighted inner products.
    pub fn dbar_star(&self, u: &[C]) -> Vec<C> {
        let mut f = vec![ZERO; self.grid.full_len()];
        for j in 0..self.n() {
            let mut v = self.grid.extend(self.component(u, j));
            v.iter_mut().zip(&self.w_full).for_each(|(a, w)| *a *= w);
            let t = self.grid.dbar_adjoint(&v, j);
            f.iter_mut().zip(t).for_each(|(a, b)| *a += b);
        }
        f.iter_mut().zip(&self.w_full).for_each(|(a, w)| *a /= w);
        f
    }

    /// ∂̄ of a function restricted to unknown nodes, as a (0,1)-form.
    pub fn dbar_function(&self, f: &[C]) -> Vec<C> {
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.n() {
            out.extend(self.grid.restrict(&self.grid.dbar(f, k)));
        }
        out
    }

    /// (∂̄u)_{jk} = ∂̄_j u_k − ∂̄_k u_j for j < k, on all nodes.
    fn dbar_form(&self, u: &[C]) -> Vec<Vec<C>> {
        let n = self.n();
        let ext: Vec<Vec<C>> = (0..n).map(|j| self.grid.extend(self.component(u, j))).collect();
        let mut out = Vec::new();
        for j in 0..n {
            for k in j + 1..n {
                let a = self.grid.dbar(&ext[k], j);
                let b = self.grid.dbar(&ext[j], k);
                out.push(a.iter().zip(&b).map(|(x, y)| x - y).collect());
            }
        }
        out
    }

    /// ‖∂̄*_φ u‖²_φ + ‖∂̄u‖²_φ.
    pub fn star_energy(&self, u: &[C]) -> f64 {
        let f = self.dbar_star(u);
        self.weighted_norm_sqr(&f) + self.dbar_form(u).iter().map(|v| self.weighted_norm_sqr(v)).sum::<f64>()
    }

    /// Operator of [`FormAssembly::star_energy`].
    pub fn apply_star(&self, u: &[C]) -> Vec<C> {
        let n = self.n();
        let m = self.m();
        let f = self.dbar_star(u);
        let mut out = vec![ZERO; u.len()];
        for j in 0..n {
            let t = self.grid.dbar(&f, j);
            for (q, &p) in self.grid.unknown.iter().enumerate() {
                out[j * m + q] = t[p] * self.w_unknown[q];
            }
        }
        if n > 1 {
            let pairs = self.dbar_form(u);
            let mut idx = 0;
            for j in 0..n {
                for k in j + 1..n {
                    let mut t = pairs[idx].clone();
                    idx += 1;
                    t.iter_mut().zip(&self.w_full).for_each(|(a, w)| *a *= w);
                    // ∂̄_j u_k − ∂̄_k u_j: gradient +∂̄_jᴴ for u_k and −∂̄_kᴴ for u_j.
                    let pk = self.grid.dbar_adjoint(&t, j);
                    let pj = self.grid.dbar_adjoint(&t, k);
                    for (q, &p) in self.grid.unknown.iter().enumerate() {
                        out[k * m + q] += pk[p];
                        out[j * m + q] -= pj[p];
                    }
                }
            }
        }
        out
    }

    /// Diagonal of the star operator.
    pub fn diag_star(&self) -> Vec<f64> {
        let n = self.n();
        let m = self.m();
        let coefs = self.grid.order.coefs(self.grid.h);
        let mut out = vec![0.0; n * m];
        for (q, &p) in self.grid.unknown.iter().enumerate() {
            let wq = self.w_unknown[q];
            let per_var = |k: usize, inverse: bool| -> f64 {
                let mut s = 0.0;
                for axis in [2 * k, 2 * k + 1] {
                    for &(o, c) in &coefs {
                        let sign = if inverse { 1 } else { -1 };
                        let r = (p as i64 + sign * o * self.grid.strides[axis] as i64) as usize;
                        s += c * c / 4.0 * if inverse { 1.0 / self.w_full[r] } else { self.w_full[r] };
                    }
                }
                s
            };
            for j in 0..n {
                let mut s = wq * wq * per_var(j, true);
                for k in (0..n).filter(|&k| k != j) {
                    s += per_var(k, false);
                }
                out[j * m + q] = s;
            }
        }
        out
    }

    /// Plain weighted mass per unknown entry.
    pub fn mass(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.w_unknown[i % self.m()]).collect()
    }

    /// Mass weighted by κ⁻² (that is, μ² with μ = 1/κ).
    pub fn mass_kappa(&self, kappa: &RadiusField) -> Result<Vec<f64>> {
        let k: Vec<f64> = self
            .grid
            .unknown
            .iter()
            .map(|&p| kappa.eval(&self.grid.coords(p)))
            .collect::<Result<_>>()?;
        Ok((0..self.len()).map(|i| self.w_unknown[i % self.m()] / (k[i % self.m()] * k[i % self.m()])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: &[f64]) -> Vec<C> {
        vec![C::new((-(x[0] * x[0] + x[1] * x[1]) / 0.5).exp(), 0.3 * x[0])]
    }

    #[test]
    fn operators_are_adjoint_to_forms() {
        let g = FormGrid::new(1, 2.0, 0.1, StencilOrder::Second).unwrap();
        let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
        let u = g.sample_form(bump);
        let e = a.mkh_energy(&u);
        let q: C = a.apply_mkh(&u).iter().zip(&u).map(|(x, y)| x * y.conj()).sum();
        assert!((q.re - e).abs() < 1e-12 * e && q.im.abs() < 1e-12 * e);
        let s = a.star_energy(&u);
        let q: C = a.apply_star(&u).iter().zip(&u).map(|(x, y)| x * y.conj()).sum();
        assert!((q.re - s).abs() < 1e-12 * s && q.im.abs() < 1e-12 * s);
    }

    #[test]
    fn diagonal_matches_unit_vectors() {
        let g = FormGrid::new(1, 1.0, 0.125, StencilOrder::Fourth).unwrap();
        let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
        let dm = a.diag_mkh();
        let ds = a.diag_star();
        for i in [0, 3, 7, a.len() - 1] {
            let mut e = vec![ZERO; a.len()];
            e[i] = C::new(1.0, 0.0);
            assert!((a.apply_mkh(&e)[i].re - dm[i]).abs() < 1e-12 * dm[i]);
            assert!((a.apply_star(&e)[i].re - ds[i]).abs() < 1e-12 * ds[i]);
        }
    }
}
