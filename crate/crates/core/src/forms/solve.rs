//! Jacobi-preconditioned conjugate gradients and inverse iteration for
//! Hermitian positive definite operators given as closures.

use serde::Serialize;

use super::{C, ZERO};
use crate::error::{Error, Result};

pub const CG_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    /// ‖r‖/‖b‖ in the D⁻¹-norm at exit.
    pub relative_residual: f64,
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves A x = b from x₀ = 0 until ‖r‖_{D⁻¹} ≤ tol·‖b‖_{D⁻¹}.
pub fn pcg<A: Fn(&[C]) -> Vec<C>>(apply: A, diag: &[f64], b: &[C], tol: f64) -> Result<(Vec<C>, CgReport)> {
    let nn = b.len();
    let mut x = vec![ZERO; nn];
    let mut r = b.to_vec();
    let mut z: Vec<C> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut rz = dot(&r, &z).re;
    let b_norm = rz.sqrt();
    if b_norm == 0.0 {
        return Ok((x, CgReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut p = z.clone();
    for it in 1..=CG_MAX_ITER {
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) {
            return Err(Error::Solver(format!("operator not positive definite at iteration {it}")));
        }
        let alpha = rz / pap;
        for i in 0..nn {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        z.iter_mut().zip(&r).zip(diag).for_each(|((zi, ri), d)| *zi = ri / d);
        let rz_new = dot(&r, &z).re;
        let rel = rz_new.max(0.0).sqrt() / b_norm;
        if rel <= tol {
            return Ok((x, CgReport { iterations: it, relative_residual: rel }));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..nn {
            p[i] = z[i] + p[i] * beta;
        }
    }
    Err(Error::Solver(format!("conjugate gradients did not reach {tol:e} in {CG_MAX_ITER} iterations")))
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigen {
    pub lambda: f64,
    #[serde(skip)]
    pub vector: Vec<C>,
    pub iterations: usize,
    pub cg_iterations: usize,
}

/// Smallest generalized eigenvalue of A x = λ M x (M diagonal, positive) by
/// inverse iteration from the all-ones vector, stopping when the Rayleigh
/// quotient changes by less than `tol` relative.
pub fn inverse_iteration<A: Fn(&[C]) -> Vec<C>>(
    apply: A,
    diag: &[f64],
    mass: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Eigen> {
    let rayleigh = |x: &[C], ax: &[C]| -> f64 {
        let num = dot(x, ax).re;
        let den: f64 = x.iter().zip(mass).map(|(a, m)| a.norm_sqr() * m).sum();
        num / den
    };
    let mut x = vec![C::new(1.0, 0.0); mass.len()];
    let mut lambda = rayleigh(&x, &apply(&x));
    let mut cg_total = 0;
    for it in 1..=max_iter {
        let rhs: Vec<C> = x.iter().zip(mass).map(|(a, m)| a * m).collect();
        let (y, rep) = pcg(&apply, diag, &rhs, 1e-10)?;
        cg_total += rep.iterations;
        let norm = y.iter().zip(mass).map(|(a, m)| a.norm_sqr() * m).sum::<f64>().sqrt();
        x = y.iter().map(|a| a / norm).collect();
        let next = rayleigh(&x, &apply(&x));
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(Eigen { lambda: next, vector: x, iterations: it, cg_iterations: cg_total });
        }
        lambda = next;
    }
    Err(Error::Solver(format!("inverse iteration did not settle in {max_iter} steps (last λ = {lambda})")))
}
