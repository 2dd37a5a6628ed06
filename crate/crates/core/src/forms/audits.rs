//! Form-level audits built on [`FormAssembly`].

use serde::Serialize;

use super::solve::{inverse_iteration, pcg, CgReport, Eigen};
use super::{FormAssembly, FormGrid, C, ZERO};
use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::potential::Potential;
use crate::radius::RadiusField;

/// Trials must vanish (to this relative size) outside the allowed region.
const MARGIN_TOL: f64 = 1e-10;

/// 1 on [0, inner], 0 on [outer, ∞), quintic smoothstep between; returns
/// (η, dη/dr).
pub fn smooth_ramp(r: f64, inner: f64, outer: f64) -> (f64, f64) {
    if r <= inner {
        return (1.0, 0.0);
    }
    if r >= outer {
        return (0.0, 0.0);
    }
    let w = outer - inner;
    let t = (r - inner) / w;
    let s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (1.0 - s, -ds / w)
}

#[derive(Debug, Clone, Serialize)]
pub struct SchrodingerReport {
    /// max over trials of |E_φ(e^φu) − ¼(‖∇_A u‖² + (Vu,u))| / E_φ(e^φu).
    pub deviation: f64,
    pub trials: usize,
    /// max over unknown nodes of |tr V − (2−n)Δφ| / (1 + |Δφ|).
    pub trace_error: f64,
    /// min over nodes of the smallest eigenvalue bound of V (n = 1: V itself).
    pub v_min: f64,
    /// max over nodes of ‖V‖ entries (zero for the Fock weight in ℂ²).
    pub v_max_abs: f64,
}

fn v_matrix(asm: &FormAssembly, q: usize) -> Vec<C> {
    let n = asm.n();
    let h = &asm.hess[q];
    let tr: f64 = (0..n).map(|j| h[j * n + j].re).sum();
    (0..n * n)
        .map(|i| {
            let diag = if i / n == i % n { 4.0 * tr } else { 0.0 };
            h[i] * 8.0 - diag
        })
        .collect()
}

/// E_φ(U_φu) against ¼(∫|∇_A u|² + ∫(Vu,u)) with U_φu = e^φu, A = ∇⊥φ and
/// V = 8H_φ − 4tr(H_φ)I, both discretized with the assembly's stencil.
pub fn schrodinger_equivalence_audit(asm: &FormAssembly, trials: &[Vec<C>]) -> Result<SchrodingerReport> {
    let g = &asm.grid;
    let n = asm.n();
    let m = asm.m();
    let vol = g.cell_volume();
    let nodes = g.unknown_nodes();
    let phi: Vec<f64> = nodes.iter().map(|&p| asm.weight.phi(&g.coords(p))).collect();
    let grads: Vec<Vec<f64>> = nodes.iter().map(|&p| asm.weight.grad(&g.coords(p))).collect();
    let vmats: Vec<Vec<C>> = (0..m).map(|q| v_matrix(asm, q)).collect();
    let mut trace_error: f64 = 0.0;
    let mut v_min = f64::INFINITY;
    let mut v_max_abs: f64 = 0.0;
    for (q, &p) in nodes.iter().enumerate() {
        let tr: f64 = (0..n).map(|j| vmats[q][j * n + j].re).sum();
        let lap = asm.weight.laplacian(&g.coords(p));
        trace_error = trace_error.max((tr - (2.0 - n as f64) * lap).abs() / (1.0 + lap.abs()));
        v_max_abs = v_max_abs.max(vmats[q].iter().map(|c| c.norm()).fold(0.0, f64::max));
        if n == 1 {
            v_min = v_min.min(vmats[q][0].re);
        }
    }
    let mut deviation: f64 = 0.0;
    for u in trials {
        if u.len() != asm.len() {
            return Err(Error::InvalidParams("trial length does not match the assembly".into()));
        }
        if g.margin_ratio(u, 0.9) > MARGIN_TOL {
            return Err(Error::InvalidParams("trial reaches the outer 10% margin of the box".into()));
        }
        let lifted: Vec<C> = u.iter().enumerate().map(|(i, a)| a * phi[i % m].exp()).collect();
        let lhs = asm.mkh_energy(&lifted);
        let mut rhs = 0.0;
        for j in 0..n {
            let comp = &u[j * m..(j + 1) * m];
            let ext = g.extend(comp);
            for k in 0..n {
                for (axis, other, sign) in [(2 * k, 2 * k + 1, 1.0), (2 * k + 1, 2 * k, -1.0)] {
                    // A = (−φ_y, φ_x) per variable: ∇_A = D_x + iφ_y, D_y − iφ_x.
                    let mut d = g.deriv(&ext, axis);
                    for (q, &pn) in nodes.iter().enumerate() {
                        d[pn] += C::new(0.0, sign * grads[q][other]) * comp[q];
                    }
                    rhs += vol * d.iter().map(|c| c.norm_sqr()).sum::<f64>();
                }
            }
        }
        for q in 0..m {
            let mut s = ZERO;
            for j in 0..n {
                for k in 0..n {
                    s += vmats[q][j * n + k] * u[j * m + q] * u[k * m + q].conj();
                }
            }
            rhs += vol * s.re;
        }
        rhs *= 0.25;
        deviation = deviation.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok(SchrodingerReport { deviation, trials: trials.len(), trace_error, v_min, v_max_abs })
}

/// Number of interior nodes where |∇_A u| < |∇|u|| − 10h, all derivatives by
/// the grid's centered stencil.
pub fn diamagnetic_audit<A, U>(grid: &FormGrid, a: A, u: U) -> usize
where
    A: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> C,
{
    let vals = grid.sample_function(&u);
    let abs: Vec<C> = vals.iter().map(|v| C::new(v.norm(), 0.0)).collect();
    let d = grid.dim();
    let dv: Vec<Vec<C>> = (0..d).map(|ax| grid.deriv(&vals, ax)).collect();
    let da: Vec<Vec<C>> = (0..d).map(|ax| grid.deriv(&abs, ax)).collect();
    let mut count = 0;
    for &p in grid.unknown_nodes() {
        let x = grid.coords(p);
        let av = a(&x);
        let mag: f64 = (0..d).map(|ax| (dv[ax][p] - C::new(0.0, av[ax]) * vals[p]).norm_sqr()).sum::<f64>().sqrt();
        let grad_abs: f64 = (0..d).map(|ax| da[ax][p].re.powi(2)).sum::<f64>().sqrt();
        if mag < grad_abs - 10.0 * grid.h {
            count += 1;
        }
    }
    count
}

/// Smallest generalized Rayleigh quotient of the MKH form against a diagonal
/// mass. Compactly supported trials span a subspace of the form domain, so
/// λ̂ < 1 refutes coercivity for that mass and λ̂ ≥ 1 certifies nothing.
pub fn coercivity_rayleigh(asm: &FormAssembly, mass: &[f64]) -> Result<Eigen> {
    if mass.len() != asm.len() || mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParams("mass must be positive with one entry per unknown".into()));
    }
    let diag = asm.diag_mkh();
    inverse_iteration(|u| asm.apply_mkh(u), &diag, mass, 1e-8, 2000)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeffermanPhong {
    pub value: f64,
    pub witness_center: Vec<f64>,
    pub witness_sigma: f64,
    pub trials: usize,
}

/// Ĉ_FP = max over Gaussian trials f = e^{−|x−c|²/2σ²} of
/// ∫ρ⁻²f² / (∫|∇f|² + ∫Vf²), by the midpoint rule on [c ± 6σ] with 96 cells per axis (plane only).
pub fn fefferman_phong_constant(v: &Potential, rho: &RadiusField, trials: &[(Vec<f64>, f64)]) -> Result<FeffermanPhong> {
    if v.dim() != 2 {
        return Err(Error::Unsupported("Fefferman–Phong audit is implemented in the plane".into()));
    }
    let per = 96;
    let mut best = FeffermanPhong { value: 0.0, witness_center: Vec::new(), witness_sigma: 0.0, trials: trials.len() };
    for (c, sigma) in trials {
        if !(*sigma > 0.0) {
            return Err(Error::InvalidParams("trial width must be positive".into()));
        }
        let step = 12.0 * sigma / per as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..per {
            for j in 0..per {
                let x = [c[0] - 6.0 * sigma + (i as f64 + 0.5) * step, c[1] - 6.0 * sigma + (j as f64 + 0.5) * step];
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                let f = (-r2 / (2.0 * sigma * sigma)).exp();
                let grad2 = r2 / sigma.powi(4) * f * f;
                let r = rho.eval(&x)?;
                num += f * f / (r * r);
                den += grad2 + v.value(&x) * f * f;
            }
        }
        if !(den > 0.0) {
            return Err(Error::InvalidParams("trial with zero energy".into()));
        }
        let q = num / den;
        if q > best.value || best.witness_center.is_empty() {
            best.value = q;
            best.witness_center = c.clone();
            best.witness_sigma = *sigma;
        }
    }
    Ok(best)
}

/// Relative gap in E(ηu) = ¼∫|∇η|²|u|²e^{−2φ} + Re(η□u, ηu)_φ, with □ taken
/// weakly through the MKH operator. `eta` returns (η, ∇η).
pub fn localization_identity_audit<E>(asm: &FormAssembly, u: &[C], eta: E) -> Result<f64>
where
    E: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if u.len() != asm.len() {
        return Err(Error::InvalidParams("trial length does not match the assembly".into()));
    }
    let g = &asm.grid;
    let m = asm.m();
    let vals: Vec<(f64, f64)> = g
        .unknown_nodes()
        .iter()
        .map(|&p| {
            let (e, de) = eta(&g.coords(p));
            (e, de.iter().map(|v| v * v).sum())
        })
        .collect();
    let eu: Vec<C> = u.iter().enumerate().map(|(i, a)| a * vals[i % m].0).collect();
    let e2u: Vec<C> = u.iter().enumerate().map(|(i, a)| a * vals[i % m].0 * vals[i % m].0).collect();
    let lhs = asm.mkh_energy(&eu);
    let grad_term: f64 = u.iter().enumerate().map(|(i, a)| asm.w_unknown[i % m] * vals[i % m].1 * a.norm_sqr()).sum();
    let weak: C = asm.apply_mkh(u).iter().zip(&e2u).map(|(x, y)| x * y.conj()).sum();
    let rhs = 0.25 * grad_term + weak.re;
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).abs() / scale)
}

#[derive(Debug, Clone, Serialize)]
pub struct CanonicalSolution {
    /// f = ∂̄*_φ g on every node.
    #[serde(skip)]
    pub f: Vec<C>,
    #[serde(skip)]
    pub g: Vec<C>,
    pub cg: CgReport,
    /// (t, max_{|w−z₀|≈t} |f(w)|e^{−φ(w)}) in bins of width h.
    pub profile: Vec<(f64, f64)>,
    /// |(f, z^k)_φ| / (‖f‖_φ‖z^k‖_φ) for k = 0..4.
    pub orthogonality: Vec<f64>,
}

fn require_plane(asm: &FormAssembly) -> Result<()> {
    if asm.n() != 1 {
        return Err(Error::Unsupported("canonical solutions are computed for n = 1".into()));
    }
    Ok(())
}

/// Solves the weak problem (□g, v)_φ = (u, v)_φ through the star form and
/// returns f = ∂̄*_φ g, so that ∂̄f = u on the unknown nodes and f is
/// orthogonal to every polynomial the stencil differentiates exactly.
fn neumann_solve(asm: &FormAssembly, u: &[C]) -> Result<(Vec<C>, Vec<C>, CgReport)> {
    let rhs: Vec<C> = u.iter().zip(&asm.w_unknown).map(|(a, w)| a * w).collect();
    let diag = asm.diag_star();
    let (g, rep) = pcg(|v| asm.apply_star(v), &diag, &rhs, 1e-8)?;
    Ok((asm.dbar_star(&g), g, rep))
}

fn decay_profile(asm: &FormAssembly, f: &[C], center: &[f64]) -> Vec<(f64, f64)> {
    let g = &asm.grid;
    let bins = (g.half_width / g.h).floor() as usize + 1;
    let mut prof = vec![0.0f64; bins];
    for (p, v) in f.iter().enumerate() {
        let x = g.coords(p);
        let t = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let b = (t / g.h).round() as usize;
        if b < bins {
            prof[b] = prof[b].max(v.norm() * (-asm.weight.phi(&x)).exp());
        }
    }
    prof.into_iter().enumerate().map(|(b, v)| (b as f64 * g.h, v)).collect()
}

fn monomial(asm: &FormAssembly, k: u32) -> Vec<C> {
    asm.grid.sample_function(|x| C::new(x[0], x[1]).powu(k))
}

/// Canonical solution of ∂̄f = u for a datum sampled at the unknown nodes
/// (n = 1), with its decay profile around `center`.
pub fn canonical_solution(asm: &FormAssembly, datum: &[C], center: &[f64]) -> Result<CanonicalSolution> {
    require_plane(asm)?;
    if datum.len() != asm.len() {
        return Err(Error::InvalidParams("datum length does not match the assembly".into()));
    }
    if asm.grid.margin_ratio(datum, 0.5) > MARGIN_TOL {
        return Err(Error::InvalidParams("datum must be supported in the inner half of the box".into()));
    }
    let (f, g, cg) = neumann_solve(asm, datum)?;
    let f_norm = asm.function_inner(&f, &f).re.sqrt();
    let orthogonality = (0..=4)
        .map(|k| {
            let zk = monomial(asm, k);
            let zn = asm.function_inner(&zk, &zk).re.sqrt();
            if f_norm == 0.0 {
                0.0
            } else {
                asm.function_inner(&f, &zk).norm() / (f_norm * zn)
            }
        })
        .collect();
    let profile = decay_profile(asm, &f, center);
    Ok(CanonicalSolution { f, g, cg, profile, orthogonality })
}

#[derive(Debug, Clone, Serialize)]
pub struct NeumannReport {
    /// max over the inner region of |B₁f − B₂f|e^{−φ} / max |f|e^{−φ} there.
    pub deviation: f64,
    pub inner_nodes: usize,
    pub cg: CgReport,
}

/// B_φf two ways on the inner quarter |x|_∞ ≤ L/2: f − ∂̄*_φN_φ∂̄f from the
/// discrete solve, and Σ_k (f, z^k)_φ z^k / c_k from the kernel model.
pub fn neumann_bergman_audit(asm: &FormAssembly, model: &KernelModel, f: &[C]) -> Result<NeumannReport> {
    require_plane(asm)?;
    if model.n != 1 {
        return Err(Error::InvalidParams("kernel model must be for n = 1".into()));
    }
    let g = &asm.grid;
    if f.len() != g.full_len() {
        return Err(Error::InvalidParams("function must be sampled on every node".into()));
    }
    let u = asm.dbar_function(f);
    let (star, _, cg) = neumann_solve(asm, &u)?;
    let b1: Vec<C> = f.iter().zip(&star).map(|(a, b)| a - b).collect();
    let mut b2 = vec![ZERO; f.len()];
    for (a, lc) in model.alphas.iter().zip(&model.log_c) {
        let zk = monomial(asm, a[0]);
        let coef = asm.function_inner(f, &zk) / lc.exp();
        if coef.norm() == 0.0 {
            continue;
        }
        b2.iter_mut().zip(&zk).for_each(|(x, z)| *x += coef * z);
    }
    let (mut dev, mut scale, mut count) = (0.0f64, 0.0f64, 0usize);
    for p in 0..f.len() {
        let x = g.coords(p);
        if x.iter().all(|v| v.abs() <= 0.5 * g.half_width + 1e-12) {
            let e = (-asm.weight.phi(&x)).exp();
            dev = dev.max((b1[p] - b2[p]).norm() * e);
            scale = scale.max(f[p].norm() * e);
            count += 1;
        }
    }
    if scale == 0.0 {
        return Err(Error::InvalidParams("f vanishes on the inner region".into()));
    }
    Ok(NeumannReport { deviation: dev / scale, inner_nodes: count, cg })
}
