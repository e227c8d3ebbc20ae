#![allow(dead_code)]

pub mod mms;

use scaffold_opt::fem::{Traction, TractionTable};
use scaffold_opt::forward::{DensityField, Problem, Schedule, SolverOptions};
use scaffold_opt::materials::MaterialParams;
use scaffold_opt::mesh::{
    generate_box_mesh, BoundaryFacet, DiffusionTag, ElasticMode, ElasticTag, FixtureSlab, Region,
    TetMesh, BOX_BOTTOM_GROUP, BOX_FIXTURE_BOTTOM_GROUP, BOX_FIXTURE_TOP_GROUP, BOX_TOP_GROUP,
};

/// Uniform pressure over both end faces, plate included.
pub fn pressure_load(p: f64) -> TractionTable {
    [
        (BOX_TOP_GROUP, Traction::Pressure(p)),
        (BOX_BOTTOM_GROUP, Traction::Pressure(p)),
        (BOX_FIXTURE_TOP_GROUP, Traction::Pressure(p)),
        (BOX_FIXTURE_BOTTOM_GROUP, Traction::Pressure(p)),
    ]
    .into_iter()
    .collect()
}

pub fn box_mesh(div: [usize; 3], len: [f64; 3], fixture: Option<FixtureSlab>) -> TetMesh {
    generate_box_mesh(div, len, fixture).unwrap()
}

pub fn problem(mesh: TetMesh, params: MaterialParams, horizon: f64, pressure: f64) -> Problem {
    Problem::new(
        mesh,
        params,
        &pressure_load(pressure),
        ElasticMode::PureNeumann,
        Schedule::new(horizon, 1.0).unwrap(),
        SolverOptions::default(),
    )
    .unwrap()
}

/// Smooth deterministic density inside the box.
pub fn wavy_density(mesh: &TetMesh, params: &MaterialParams) -> DensityField {
    let mid = 0.5 * (params.c_p + params.cap_p);
    let amp = 0.3 * (params.cap_p - params.c_p);
    DensityField::new(
        mesh.nodes()
            .iter()
            .map(|p| mid + amp * (1.3 * p[0] + 0.7 * p[1] - 0.4 * p[2]).sin())
            .collect(),
    )
}

/// One tetrahedron with traction-free, no-flux faces.
pub fn single_tet_mesh(pts: [[f64; 3]; 4]) -> TetMesh {
    let faces = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    let facets = faces
        .iter()
        .map(|&nodes| BoundaryFacet {
            nodes,
            elastic: ElasticTag::NeumannFree,
            diffusion: DiffusionTag::Neumann,
        })
        .collect();
    TetMesh::new(
        pts.to_vec(),
        vec![[0, 1, 2, 3]],
        facets,
        vec![Region::Design],
    )
    .unwrap()
}

/// Box whose bottom face is clamped; the top stays loaded.
pub fn clamped_box(div: [usize; 3], len: [f64; 3]) -> TetMesh {
    let m = box_mesh(div, len, None);
    let facets = m
        .facets()
        .iter()
        .map(|f| BoundaryFacet {
            elastic: if f.elastic == ElasticTag::NeumannLoaded(BOX_BOTTOM_GROUP) {
                ElasticTag::Dirichlet
            } else {
                f.elastic
            },
            ..*f
        })
        .collect();
    TetMesh::new(
        m.nodes().to_vec(),
        m.tets().to_vec(),
        facets,
        m.regions().to_vec(),
    )
    .unwrap()
}

pub fn clamped_problem(
    mesh: TetMesh,
    params: MaterialParams,
    horizon: f64,
    pressure: f64,
) -> Problem {
    let load: TractionTable = [(BOX_TOP_GROUP, Traction::Pressure(pressure))]
        .into_iter()
        .collect();
    Problem::new(
        mesh,
        params,
        &load,
        ElasticMode::HardDirichlet,
        Schedule::new(horizon, 1.0).unwrap(),
        SolverOptions::default(),
    )
    .unwrap()
}
