//! P1 finite elements on tetrahedra: assembly for vector elasticity and scalar
//! diffusion, Dirichlet elimination, and a Jacobi-preconditioned CG solver with
//! rigid-body deflation for traction-only elasticity.

mod assembly;
mod cg;
mod deflation;
mod dirichlet;
mod quadrature;
mod sparse;

pub use assembly::{
    assemble_body_force, assemble_diffusion, assemble_elasticity, assemble_neumann_load,
    assemble_scalar_source, consistent_mass, design_lumped_mass, element_average, element_gradient,
    element_strain, lumped_mass, DiffusionOperator, ElasticOperator, Traction, TractionTable,
};
pub use cg::{solve_cg, CgOptions, CgOutcome};
pub use deflation::RigidBodyModes;
pub use dirichlet::{apply_dirichlet, ConstrainedSystem, DofMap};
pub use quadrature::{
    h1_error_scalar, h1_error_vector, l2_error_scalar, l2_error_vector, strain_energy,
    TetQuadrature,
};
pub use sparse::{dot, norm, SparseMatrix};
