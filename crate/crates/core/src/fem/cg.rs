//! Jacobi-preconditioned conjugate gradients, optionally deflated against the
//! rigid-body kernel.

use serde::{Deserialize, Serialize};

use super::deflation::RigidBodyModes;
use super::sparse::{dot, norm, SparseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgOptions {
    /// Stop when `‖b − A x‖ ≤ tol ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual of the recurrence.
    pub residual: f64,
}

/// Solves `A x = b` from `x0 = 0`.
///
/// With `deflation`, `b` is projected onto the complement of the kernel
/// first and the iterate stays there, so a singular `A` yields the
/// minimum-norm solution of the projected system.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    opts: &CgOptions,
    deflation: Option<&RigidBodyModes>,
) -> Result<CgOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n, "rhs length does not match matrix dimension");
    let mut r = b.to_vec();
    if let Some(d) = deflation {
        d.project(&mut r);
    }
    let bnorm = norm(&r);
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("CG right-hand side"));
    }
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut Vec<f64>| {
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        if let Some(d) = deflation {
            d.project(z);
        }
    };

    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for it in 1..=opts.max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rz.is_finite() {
            return Err(Error::NonFinite("CG iteration"));
        }
        if pap <= 0.0 {
            // Exhausted the numerically attainable subspace.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = norm(&r) / bnorm;
        if residual <= opts.tol {
            if let Some(d) = deflation {
                d.project(&mut x);
            }
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual,
            });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgMaxIter {
        iterations: opts.max_iter,
        residual,
    })
}
