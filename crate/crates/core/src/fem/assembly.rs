//! P1 assembly on tetrahedra.
//!
//! The global sparsity pattern and each element's scatter positions are
//! computed once per mesh; re-assembly with new coefficients then touches
//! only the value array, in a fixed element order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::quadrature::TetQuadrature;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::materials::IsotropicTensor;
use crate::mesh::{ElasticTag, ElementGeometry, Region, TetMesh};

/// Surface load on one group of ELASTIC_NEUMANN_LOADED facets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traction {
    /// Constant traction vector (N/mm²).
    Vector([f64; 3]),
    /// Normal pressure (N/mm²), positive when compressive: `t = −p n`.
    Pressure(f64),
}

pub type TractionTable = BTreeMap<u32, Traction>;

fn node_pattern(mesh: &TetMesh) -> Vec<BTreeSet<usize>> {
    let mut rows = vec![BTreeSet::new(); mesh.num_nodes()];
    for t in mesh.tets() {
        for &a in t {
            for &b in t {
                rows[a].insert(b);
            }
        }
    }
    rows
}

/// Linear strain of element `e` for nodal displacements `u` (3 dofs per node).
pub fn element_strain(mesh: &TetMesh, e: usize, u: &[f64]) -> [[f64; 3]; 3] {
    let t = &mesh.tets()[e];
    let g = &mesh.geometry()[e].grads;
    let mut du = [[0.0; 3]; 3];
    for (a, &node) in t.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                du[i][j] += u[3 * node + i] * g[a][j];
            }
        }
    }
    let mut eps = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            eps[i][j] = 0.5 * (du[i][j] + du[j][i]);
        }
    }
    eps
}

/// Constant gradient of a P1 scalar field on element `e`.
pub fn element_gradient(mesh: &TetMesh, e: usize, a: &[f64]) -> [f64; 3] {
    let t = &mesh.tets()[e];
    let g = &mesh.geometry()[e].grads;
    let mut grad = [0.0; 3];
    for (k, &node) in t.iter().enumerate() {
        for j in 0..3 {
            grad[j] += a[node] * g[k][j];
        }
    }
    grad
}

pub fn element_average(mesh: &TetMesh, e: usize, a: &[f64]) -> f64 {
    mesh.tets()[e].iter().map(|&i| a[i]).sum::<f64>() * 0.25
}

/// Cached assembly data for vector elasticity.
#[derive(Debug, Clone)]
pub struct ElasticOperator {
    pattern: SparseMatrix,
    lambda_part: Vec<[f64; 144]>,
    mu_part: Vec<[f64; 144]>,
    scatter: Vec<[usize; 144]>,
}

impl ElasticOperator {
    pub fn new(mesh: &TetMesh) -> Self {
        let node_rows = node_pattern(mesh);
        let mut rows = vec![BTreeSet::new(); 3 * mesh.num_nodes()];
        for (a, cols) in node_rows.iter().enumerate() {
            for i in 0..3 {
                rows[3 * a + i].extend(cols.iter().flat_map(|&b| (0..3).map(move |j| 3 * b + j)));
            }
        }
        let pattern = SparseMatrix::from_rows(&rows);
        let mut lambda_part = Vec::with_capacity(mesh.num_elements());
        let mut mu_part = Vec::with_capacity(mesh.num_elements());
        let mut scatter = Vec::with_capacity(mesh.num_elements());
        for (t, geo) in mesh.tets().iter().zip(mesh.geometry()) {
            let (kl, km) = elastic_element_parts(geo);
            lambda_part.push(kl);
            mu_part.push(km);
            let mut s = [0usize; 144];
            for a in 0..4 {
                for i in 0..3 {
                    for b in 0..4 {
                        for j in 0..3 {
                            s[(3 * a + i) * 12 + 3 * b + j] = pattern
                                .position(3 * t[a] + i, 3 * t[b] + j)
                                .expect("element block lies in pattern");
                        }
                    }
                }
            }
            scatter.push(s);
        }
        Self {
            pattern,
            lambda_part,
            mu_part,
            scatter,
        }
    }

    pub fn element_matrix(&self, e: usize, c: &IsotropicTensor) -> [f64; 144] {
        let mut k = [0.0; 144];
        for (kk, (l, m)) in k
            .iter_mut()
            .zip(self.lambda_part[e].iter().zip(&self.mu_part[e]))
        {
            *kk = c.lambda * l + c.mu * m;
        }
        k
    }

    /// Global stiffness for one tensor per element.
    pub fn assemble(&self, tensors: &[IsotropicTensor]) -> SparseMatrix {
        assert_eq!(tensors.len(), self.scatter.len(), "one tensor per element");
        let mut k = self.pattern.clone();
        let vals = k.values_mut();
        for (e, c) in tensors.iter().enumerate() {
            let (lp, mp, s) = (&self.lambda_part[e], &self.mu_part[e], &self.scatter[e]);
            for q in 0..144 {
                vals[s[q]] += c.lambda * lp[q] + c.mu * mp[q];
            }
        }
        k
    }

    /// Global stiffness for per-element Young moduli and a common Poisson ratio.
    pub fn assemble_young(&self, young: &[f64], nu: f64) -> SparseMatrix {
        let unit = IsotropicTensor::from_young(1.0, nu);
        let tensors: Vec<IsotropicTensor> = young
            .iter()
            .map(|&e| IsotropicTensor {
                lambda: e * unit.lambda,
                mu: e * unit.mu,
            })
            .collect();
        self.assemble(&tensors)
    }
}

/// `K_e = λ Kλ + μ Kμ` for constant-gradient P1 elements.
fn elastic_element_parts(geo: &ElementGeometry) -> ([f64; 144], [f64; 144]) {
    let mut kl = [0.0; 144];
    let mut km = [0.0; 144];
    let g = &geo.grads;
    let v = geo.volume;
    for a in 0..4 {
        for b in 0..4 {
            let gab: f64 = (0..3).map(|k| g[a][k] * g[b][k]).sum();
            for i in 0..3 {
                for j in 0..3 {
                    let q = (3 * a + i) * 12 + 3 * b + j;
                    kl[q] = v * g[a][i] * g[b][j];
                    km[q] = v * (g[a][j] * g[b][i] + if i == j { gab } else { 0.0 });
                }
            }
        }
    }
    (kl, km)
}

/// Assembles the elasticity stiffness `∫ C ε(u) : ε(v)`.
pub fn assemble_elasticity(mesh: &TetMesh, tensors: &[IsotropicTensor]) -> Result<SparseMatrix> {
    if tensors.len() != mesh.num_elements() {
        return Err(Error::InvalidMesh(format!(
            "{} tensors for {} elements",
            tensors.len(),
            mesh.num_elements()
        )));
    }
    Ok(ElasticOperator::new(mesh).assemble(tensors))
}

/// Cached assembly data for scalar diffusion.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    pattern: SparseMatrix,
    unit: Vec<[f64; 16]>,
    scatter: Vec<[usize; 16]>,
}

impl DiffusionOperator {
    pub fn new(mesh: &TetMesh) -> Self {
        let pattern = SparseMatrix::from_rows(&node_pattern(mesh));
        let mut unit = Vec::with_capacity(mesh.num_elements());
        let mut scatter = Vec::with_capacity(mesh.num_elements());
        for (t, geo) in mesh.tets().iter().zip(mesh.geometry()) {
            let mut k = [0.0; 16];
            let mut s = [0usize; 16];
            for a in 0..4 {
                for b in 0..4 {
                    k[4 * a + b] = geo.volume
                        * (0..3)
                            .map(|c| geo.grads[a][c] * geo.grads[b][c])
                            .sum::<f64>();
                    s[4 * a + b] = pattern
                        .position(t[a], t[b])
                        .expect("element block lies in pattern");
                }
            }
            unit.push(k);
            scatter.push(s);
        }
        Self {
            pattern,
            unit,
            scatter,
        }
    }

    /// `∫ D ∇a · ∇v` with one coefficient per element.
    pub fn stiffness(&self, coeff: &[f64]) -> SparseMatrix {
        let mut k = self.pattern.clone();
        let vals = k.values_mut();
        for (e, &d) in coeff.iter().enumerate() {
            for q in 0..16 {
                vals[self.scatter[e][q]] += d * self.unit[e][q];
            }
        }
        k
    }

    /// Empty matrix with the scalar pattern, used to compose systems.
    pub fn zero(&self) -> SparseMatrix {
        self.pattern.clone()
    }
}

/// Diffusion stiffness `∫ D ∇a·∇v` and the lumped mass matrix (diagonal).
pub fn assemble_diffusion(
    mesh: &TetMesh,
    diffusivity: &[f64],
) -> Result<(SparseMatrix, SparseMatrix)> {
    if diffusivity.len() != mesh.num_elements() {
        return Err(Error::InvalidMesh(format!(
            "{} diffusivities for {} elements",
            diffusivity.len(),
            mesh.num_elements()
        )));
    }
    if let Some((e, &d)) = diffusivity.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::Domain {
            quantity: "diffusivity",
            value: d,
            range: format!("(0, inf) at element {e}"),
        });
    }
    let op = DiffusionOperator::new(mesh);
    let k = op.stiffness(diffusivity);
    let mut m = op.zero();
    m.add_diagonal(&lumped_mass(mesh));
    Ok((k, m))
}

/// Row sums of the consistent P1 mass matrix: `Σ_e vol_e / 4` per node.
pub fn lumped_mass(mesh: &TetMesh) -> Vec<f64> {
    lumped_mass_where(mesh, |_| true)
}

/// Lumped mass restricted to DESIGN elements.
pub fn design_lumped_mass(mesh: &TetMesh) -> Vec<f64> {
    lumped_mass_where(mesh, |r| r == Region::Design)
}

fn lumped_mass_where(mesh: &TetMesh, keep: impl Fn(Region) -> bool) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_nodes()];
    for ((t, geo), &r) in mesh.tets().iter().zip(mesh.geometry()).zip(mesh.regions()) {
        if keep(r) {
            for &i in t {
                m[i] += 0.25 * geo.volume;
            }
        }
    }
    m
}

/// Consistent P1 mass matrix `∫ φ_a φ_b` (vol/10 diagonal, vol/20 off-diagonal).
pub fn consistent_mass(mesh: &TetMesh) -> SparseMatrix {
    let op = DiffusionOperator::new(mesh);
    let mut m = op.zero();
    for (t, geo) in mesh.tets().iter().zip(mesh.geometry()) {
        for a in 0..4 {
            for b in 0..4 {
                let w = if a == b { 0.1 } else { 0.05 };
                m.add(t[a], t[b], w * geo.volume);
            }
        }
    }
    m
}

/// Nodal load from surface tractions on traction-loaded facets: each facet
/// contributes `area / 3 · t` to each of its nodes.
pub fn assemble_neumann_load(mesh: &TetMesh, tractions: &TractionTable) -> Result<Vec<f64>> {
    let mut f = vec![0.0; 3 * mesh.num_nodes()];
    for facet in mesh.facets() {
        let ElasticTag::NeumannLoaded(group) = facet.elastic else {
            continue;
        };
        let t = match tractions.get(&group) {
            Some(Traction::Vector(v)) => *v,
            Some(Traction::Pressure(p)) => {
                let n = mesh.facet_outward_normal(facet);
                [-p * n[0], -p * n[1], -p * n[2]]
            }
            None => return Err(Error::MissingTraction(group)),
        };
        let w = mesh.facet_area(facet) / 3.0;
        for &node in &facet.nodes {
            for k in 0..3 {
                f[3 * node + k] += w * t[k];
            }
        }
    }
    Ok(f)
}

/// `∫ f · v` for a vector body force evaluated at quadrature points.
pub fn assemble_body_force(
    mesh: &TetMesh,
    quad: &TetQuadrature,
    force: impl Fn([f64; 3]) -> [f64; 3],
) -> Vec<f64> {
    let mut out = vec![0.0; 3 * mesh.num_nodes()];
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.geometry()[e].volume;
        for (bary, w) in quad.iter() {
            let x = quad_point(mesh, t, bary);
            let fx = force(x);
            for a in 0..4 {
                for k in 0..3 {
                    out[3 * t[a] + k] += vol * w * bary[a] * fx[k];
                }
            }
        }
    }
    out
}

/// `∫ f v` for a scalar source evaluated at quadrature points.
pub fn assemble_scalar_source(
    mesh: &TetMesh,
    quad: &TetQuadrature,
    source: impl Fn([f64; 3]) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_nodes()];
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.geometry()[e].volume;
        for (bary, w) in quad.iter() {
            let fx = source(quad_point(mesh, t, bary));
            for a in 0..4 {
                out[t[a]] += vol * w * bary[a] * fx;
            }
        }
    }
    out
}

pub(crate) fn quad_point(mesh: &TetMesh, t: &[usize; 4], bary: &[f64; 4]) -> [f64; 3] {
    let mut x = [0.0; 3];
    for a in 0..4 {
        let p = mesh.nodes()[t[a]];
        for k in 0..3 {
            x[k] += bary[a] * p[k];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::dot;
    use crate::fem::RigidBodyModes;
    use crate::mesh::{
        faces_of, generate_box_mesh, BoundaryFacet, DiffusionTag, BOX_BOTTOM_GROUP, BOX_TOP_GROUP,
    };

    fn reference_mesh() -> TetMesh {
        let tet = [0, 1, 2, 3];
        let facets = faces_of(&tet)
            .iter()
            .map(|&f| BoundaryFacet {
                nodes: f,
                elastic: ElasticTag::NeumannFree,
                diffusion: DiffusionTag::Dirichlet,
            })
            .collect();
        TetMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![tet],
            facets,
            vec![Region::Design],
        )
        .unwrap()
    }

    #[test]
    fn reference_tet_rigid_modes_in_kernel() {
        let m = reference_mesh();
        let c = IsotropicTensor::from_young(7.0, 0.3);
        let k = assemble_elasticity(&m, &[c]).unwrap();
        let modes = RigidBodyModes::new(&m).unwrap();
        for r in modes.basis() {
            let kr = k.matvec(r);
            assert!(kr.iter().all(|v| v.abs() < 1e-10), "{kr:?}");
        }
        assert!(k.max_asymmetry() <= 1e-12 * k.max_abs());
    }

    #[test]
    fn box_stiffness_symmetric_psd() {
        let m = generate_box_mesh([2, 2, 2], [1.0, 1.0, 2.0], None).unwrap();
        let tensors = vec![IsotropicTensor::from_young(3.0, 0.25); m.num_elements()];
        let k = assemble_elasticity(&m, &tensors).unwrap();
        assert!(k.max_asymmetry() <= 1e-12 * k.max_abs());
        for s in 0..5 {
            let v: Vec<f64> = (0..k.dim())
                .map(|i| ((i * 31 + s * 17) % 11) as f64 - 5.0)
                .collect();
            assert!(k.bilinear(&v, &v) >= -1e-10);
        }
    }

    #[test]
    fn uniform_stretch_energy() {
        // u = (x, 0, 0), λ = 0, μ = 1: ½∫ 2μ ε:ε = volume
        let m = generate_box_mesh([2, 2, 2], [1.0, 1.0, 1.0], None).unwrap();
        let c = IsotropicTensor {
            lambda: 0.0,
            mu: 1.0,
        };
        let k = assemble_elasticity(&m, &vec![c; m.num_elements()]).unwrap();
        let mut u = vec![0.0; 3 * m.num_nodes()];
        for (i, p) in m.nodes().iter().enumerate() {
            u[3 * i] = p[0];
        }
        assert!((0.5 * k.bilinear(&u, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_examples() {
        let m = reference_mesh();
        let (k, mass) = assemble_diffusion(&m, &[1.0]).unwrap();
        assert!((k.get(0, 0) - 0.5).abs() < 1e-15);
        assert!(k.matvec(&[1.0; 4]).iter().all(|v| v.abs() < 1e-12));
        let total: f64 = mass.diagonal().iter().sum();
        assert!((total - 1.0 / 6.0).abs() < 1e-15);
        assert!(assemble_diffusion(&m, &[0.0]).is_err());

        let b = generate_box_mesh([2, 3, 2], [1.0, 2.0, 3.0], None).unwrap();
        let (k, mass) = assemble_diffusion(&b, &vec![2.0; b.num_elements()]).unwrap();
        assert!(k
            .matvec(&vec![1.0; b.num_nodes()])
            .iter()
            .all(|v| v.abs() < 1e-12));
        assert!((mass.diagonal().iter().sum::<f64>() - 6.0).abs() < 1e-12);
        assert!(mass.diagonal().iter().all(|&d| d > 0.0));
        let cm = consistent_mass(&b);
        let ones = vec![1.0; b.num_nodes()];
        assert!((cm.bilinear(&ones, &ones) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn neumann_load_resultants() {
        let m = generate_box_mesh([2, 2, 1], [1.0, 1.0, 1.0], None).unwrap();
        let mut table = TractionTable::new();
        table.insert(BOX_TOP_GROUP, Traction::Vector([0.0, 0.0, -1.0]));
        table.insert(BOX_BOTTOM_GROUP, Traction::Vector([0.0, 0.0, 0.0]));
        let f = assemble_neumann_load(&m, &table).unwrap();
        let total: [f64; 3] = (0..3)
            .map(|k| f.iter().skip(k).step_by(3).sum())
            .collect::<Vec<f64>>()
            .try_into()
            .unwrap();
        assert!(total[0].abs() < 1e-15 && total[1].abs() < 1e-15);
        assert!((total[2] + 1.0).abs() < 1e-12);

        table.insert(BOX_TOP_GROUP, Traction::Vector([0.0; 3]));
        assert!(assemble_neumann_load(&m, &table)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        table.remove(&BOX_BOTTOM_GROUP);
        assert!(matches!(
            assemble_neumann_load(&m, &table),
            Err(Error::MissingTraction(2))
        ));
    }

    #[test]
    fn pressure_of_300n_on_100mm2() {
        let m = generate_box_mesh([2, 2, 2], [10.0, 10.0, 20.0], None).unwrap();
        let area = m
            .boundary_areas()
            .elastic_area(ElasticTag::NeumannLoaded(BOX_TOP_GROUP));
        assert!((area - 100.0).abs() < 1e-10);
        let p = 300.0 / area;
        assert!((p - 3.0).abs() < 1e-12);
        let mut table = TractionTable::new();
        table.insert(BOX_TOP_GROUP, Traction::Pressure(p));
        table.insert(BOX_BOTTOM_GROUP, Traction::Pressure(p));
        let f = assemble_neumann_load(&m, &table).unwrap();
        let top: f64 = (0..m.num_nodes())
            .filter(|&i| m.nodes()[i][2] > 19.0)
            .map(|i| f[3 * i + 2])
            .sum();
        assert!((top + 300.0).abs() < 1e-10 * 300.0);
        let modes = RigidBodyModes::new(&m).unwrap();
        let f_norm = dot(&f, &f).sqrt();
        assert!(modes
            .coefficients(&f)
            .iter()
            .all(|c| c.abs() < 1e-12 * f_norm));
    }
}
