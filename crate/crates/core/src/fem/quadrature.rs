//! Collapsed-coordinate (Duffy) Gauss rules on the tetrahedron and discrete
//! error norms for P1 fields.

use super::assembly::{element_gradient, element_strain, quad_point};
use crate::mesh::TetMesh;

/// Quadrature on a tetrahedron: barycentric points and weights summing to 1
/// (multiply by the element volume).
#[derive(Debug, Clone)]
pub struct TetQuadrature {
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

impl TetQuadrature {
    /// 64-point conical product rule, exact for polynomials of degree ≤ 5.
    pub fn conical_gauss4() -> Self {
        let gl: Vec<(f64, f64)> = GAUSS4_NODES
            .iter()
            .zip(GAUSS4_WEIGHTS)
            .map(|(&x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        let mut points = Vec::with_capacity(64);
        let mut weights = Vec::with_capacity(64);
        for &(a, wa) in &gl {
            for &(b, wb) in &gl {
                for &(c, wc) in &gl {
                    let x1 = a;
                    let x2 = (1.0 - a) * b;
                    let x3 = (1.0 - a) * (1.0 - b) * c;
                    let jac = (1.0 - a) * (1.0 - a) * (1.0 - b);
                    points.push([1.0 - x1 - x2 - x3, x1, x2, x3]);
                    weights.push(6.0 * wa * wb * wc * jac);
                }
            }
        }
        Self { points, weights }
    }

    /// Centroid rule, exact for linear functions.
    pub fn centroid() -> Self {
        Self {
            points: vec![[0.25; 4]],
            weights: vec![1.0],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 4], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `‖a_h − a‖_{L²}` for a nodal P1 field.
pub fn l2_error_scalar(mesh: &TetMesh, ah: &[f64], exact: impl Fn([f64; 3]) -> f64) -> f64 {
    let quad = TetQuadrature::conical_gauss4();
    let mut acc = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.geometry()[e].volume;
        for (bary, w) in quad.iter() {
            let uh: f64 = (0..4).map(|k| bary[k] * ah[t[k]]).sum();
            let d = uh - exact(quad_point(mesh, t, bary));
            acc += vol * w * d * d;
        }
    }
    acc.sqrt()
}

/// `|a_h − a|_{H¹}` (gradient seminorm).
pub fn h1_error_scalar(
    mesh: &TetMesh,
    ah: &[f64],
    grad_exact: impl Fn([f64; 3]) -> [f64; 3],
) -> f64 {
    let quad = TetQuadrature::conical_gauss4();
    let mut acc = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.geometry()[e].volume;
        let gh = element_gradient(mesh, e, ah);
        for (bary, w) in quad.iter() {
            let g = grad_exact(quad_point(mesh, t, bary));
            acc += vol * w * (0..3).map(|k| (gh[k] - g[k]).powi(2)).sum::<f64>();
        }
    }
    acc.sqrt()
}

/// `‖u_h − u‖_{L²}` for nodal displacements (3 dofs per node).
pub fn l2_error_vector(mesh: &TetMesh, uh: &[f64], exact: impl Fn([f64; 3]) -> [f64; 3]) -> f64 {
    let quad = TetQuadrature::conical_gauss4();
    let mut acc = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.geometry()[e].volume;
        for (bary, w) in quad.iter() {
            let ue = exact(quad_point(mesh, t, bary));
            for k in 0..3 {
                let v: f64 = (0..4).map(|a| bary[a] * uh[3 * t[a] + k]).sum();
                acc += vol * w * (v - ue[k]).powi(2);
            }
        }
    }
    acc.sqrt()
}

/// `|u_h − u|_{H¹}` with the full displacement gradient `∂u_i/∂x_j`.
pub fn h1_error_vector(
    mesh: &TetMesh,
    uh: &[f64],
    grad_exact: impl Fn([f64; 3]) -> [[f64; 3]; 3],
) -> f64 {
    let quad = TetQuadrature::conical_gauss4();
    let mut acc = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let geo = &mesh.geometry()[e];
        let mut gh = [[0.0; 3]; 3];
        for (a, &node) in t.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    gh[i][j] += uh[3 * node + i] * geo.grads[a][j];
                }
            }
        }
        for (bary, w) in quad.iter() {
            let g = grad_exact(quad_point(mesh, t, bary));
            let mut d = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    d += (gh[i][j] - g[i][j]).powi(2);
                }
            }
            acc += geo.volume * w * d;
        }
    }
    acc.sqrt()
}

/// `½ ∫ C ε(u):ε(u)` with one (λ, μ) per element; P1 strains are constant.
pub fn strain_energy(
    mesh: &TetMesh,
    u: &[f64],
    tensors: &[crate::materials::IsotropicTensor],
) -> f64 {
    (0..mesh.num_elements())
        .map(|e| {
            let eps = element_strain(mesh, e, u);
            0.5 * mesh.geometry()[e].volume * tensors[e].contract(&eps, &eps)
        })
        .sum()
}
