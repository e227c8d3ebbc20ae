//! Manufactured solutions on the unit cube.

use scaffold_opt::fem::{
    assemble_body_force, assemble_diffusion, assemble_elasticity, assemble_scalar_source,
    h1_error_scalar, h1_error_vector, l2_error_scalar, l2_error_vector, solve_cg, CgOptions,
    ConstrainedSystem, DofMap, SparseMatrix, TetQuadrature,
};
use scaffold_opt::materials::IsotropicTensor;
use scaffold_opt::mesh::TetMesh;
use std::f64::consts::PI;

use super::box_mesh;

pub const TIGHT: CgOptions = CgOptions {
    tol: 1e-13,
    max_iter: 50_000,
};

fn boundary_nodes(mesh: &TetMesh) -> Vec<bool> {
    let mut mask = vec![false; mesh.num_nodes()];
    for f in mesh.facets() {
        for &i in &f.nodes {
            mask[i] = true;
        }
    }
    mask
}

fn solve_constrained(k: SparseMatrix, mut rhs: Vec<f64>, map: &DofMap) -> Vec<f64> {
    let sys = ConstrainedSystem::new(k, map);
    sys.adjust_rhs(&mut rhs);
    solve_cg(sys.matrix(), &rhs, &TIGHT, None).unwrap().x
}

const LAMBDA: f64 = 1.2;
const MU: f64 = 0.8;

fn u_exact(x: [f64; 3]) -> [f64; 3] {
    [x[0] * x[0], x[0] * x[1], x[2] * x[2]]
}

fn grad_u_exact(x: [f64; 3]) -> [[f64; 3]; 3] {
    [
        [2.0 * x[0], 0.0, 0.0],
        [x[1], x[0], 0.0],
        [0.0, 0.0, 2.0 * x[2]],
    ]
}

/// Errors (L², H¹) of the P1 elasticity solution for `u = (x², xy, z²)`.
pub fn elasticity_errors(n: usize) -> (f64, f64) {
    let mesh = box_mesh([n, n, n], [1.0, 1.0, 1.0], None);
    let tensors = vec![
        IsotropicTensor {
            lambda: LAMBDA,
            mu: MU,
        };
        mesh.num_elements()
    ];
    let k = assemble_elasticity(&mesh, &tensors).unwrap();
    let f = [-(3.0 * LAMBDA + 5.0 * MU), 0.0, -(2.0 * LAMBDA + 4.0 * MU)];
    let rhs = assemble_body_force(&mesh, &TetQuadrature::conical_gauss4(), |_| f);
    let mut map = DofMap::vector(mesh.num_nodes());
    let nodes = mesh.nodes().to_vec();
    map.constrain_nodes(&boundary_nodes(&mesh), |i, c| u_exact(nodes[i])[c]);
    let u = solve_constrained(k, rhs, &map);
    (
        l2_error_vector(&mesh, &u, u_exact),
        h1_error_vector(&mesh, &u, grad_u_exact),
    )
}

fn a_exact(x: [f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

fn grad_a_exact(x: [f64; 3]) -> [f64; 3] {
    let (s, c) = (x.map(|v| (PI * v).sin()), x.map(|v| (PI * v).cos()));
    [
        PI * c[0] * s[1] * s[2],
        PI * s[0] * c[1] * s[2],
        PI * s[0] * s[1] * c[2],
    ]
}

/// Errors of `−Δa = 3π² a` with homogeneous Dirichlet data.
pub fn diffusion_errors(n: usize) -> (f64, f64) {
    let mesh = box_mesh([n, n, n], [1.0, 1.0, 1.0], None);
    let (k, _) = assemble_diffusion(&mesh, &vec![1.0; mesh.num_elements()]).unwrap();
    let rhs = assemble_scalar_source(&mesh, &TetQuadrature::conical_gauss4(), |x| {
        3.0 * PI * PI * a_exact(x)
    });
    let mut map = DofMap::scalar(mesh.num_nodes());
    map.constrain_nodes(&boundary_nodes(&mesh), |_, _| 0.0);
    let a = solve_constrained(k, rhs, &map);
    (
        l2_error_scalar(&mesh, &a, a_exact),
        h1_error_scalar(&mesh, &a, grad_a_exact),
    )
}
