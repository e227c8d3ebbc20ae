//! Rigid-body kernel of pure-traction elasticity.
//!
//! Without displacement constraints the stiffness matrix is singular with the
//! six infinitesimal rigid motions as kernel. Solving on the quotient space
//! amounts to projecting the right-hand side and every CG search direction onto
//! the orthogonal complement of that kernel.

use super::sparse::dot;
use crate::error::{Error, Result};
use crate::mesh::TetMesh;

/// Orthonormal basis (Euclidean, over vector dofs) of the rigid-body motions.
#[derive(Debug, Clone)]
pub struct RigidBodyModes {
    basis: Vec<Vec<f64>>,
}

impl RigidBodyModes {
    /// Three translations and three linearised rotations about the nodal
    /// centroid, orthonormalised by two passes of modified Gram–Schmidt.
    pub fn new(mesh: &TetMesh) -> Result<Self> {
        Self::from_points(mesh.nodes())
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        let n = points.len();
        let mut center = [0.0; 3];
        for p in points {
            for k in 0..3 {
                center[k] += p[k] / n as f64;
            }
        }
        let mut raw = vec![vec![0.0; 3 * n]; 6];
        for (i, p) in points.iter().enumerate() {
            let x = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            for k in 0..3 {
                raw[k][3 * i + k] = 1.0;
            }
            // ω × x for ω = e_x, e_y, e_z
            raw[3][3 * i + 1] = -x[2];
            raw[3][3 * i + 2] = x[1];
            raw[4][3 * i] = x[2];
            raw[4][3 * i + 2] = -x[0];
            raw[5][3 * i] = -x[1];
            raw[5][3 * i + 1] = x[0];
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(6);
        for mut v in raw {
            let n0 = dot(&v, &v).sqrt();
            for _pass in 0..2 {
                for q in &basis {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
                }
            }
            let nv = dot(&v, &v).sqrt();
            if !(nv > 1e-10 * n0) {
                return Err(Error::DegenerateRigidModes);
            }
            v.iter_mut().for_each(|vi| *vi /= nv);
            basis.push(v);
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Coefficients of `v` along each mode.
    pub fn coefficients(&self, v: &[f64]) -> [f64; 6] {
        let mut c = [0.0; 6];
        for (ck, q) in c.iter_mut().zip(&self.basis) {
            *ck = dot(q, v);
        }
        c
    }

    /// In-place `v ← (I − Q Qᵀ) v`.
    pub fn project(&self, v: &mut [f64]) {
        for q in &self.basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
        }
    }

    pub fn projected(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        self.project(&mut w);
        w
    }
}
