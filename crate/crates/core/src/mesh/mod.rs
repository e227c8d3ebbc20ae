//! Tetrahedral meshes with tagged boundary facets and element regions.
//!
//! Units are fixed across the crate: millimetres, newtons, megapascals and
//! weeks. A [`TetMesh`] is validated once at construction and is immutable
//! afterwards; per-element geometry (volume and P1 basis gradients) is cached
//! alongside the connectivity.

mod gmsh;

use std::collections::{BTreeMap, HashMap, HashSet};

pub use gmsh::{load_mesh, parse_msh, FacetTags, TagMap};

use crate::error::{Error, Result};

/// Smallest element volume (mm³) accepted as non-degenerate.
pub const MIN_ELEMENT_VOLUME: f64 = 1e-14;

/// Load group of the `z = max` face produced by [`generate_box_mesh`].
pub const BOX_TOP_GROUP: u32 = 1;
/// Load group of the `z = 0` face produced by [`generate_box_mesh`].
pub const BOX_BOTTOM_GROUP: u32 = 2;
/// Load group of the `z = max` faces of FIXTURE elements in a box mesh.
pub const BOX_FIXTURE_TOP_GROUP: u32 = 3;
/// Load group of the `z = 0` faces of FIXTURE elements in a box mesh.
pub const BOX_FIXTURE_BOTTOM_GROUP: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Design,
    Fixture,
}

/// Boundary tag for the elasticity equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElasticTag {
    Dirichlet,
    /// Traction-loaded facet; the payload selects the traction from the load table.
    NeumannLoaded(u32),
    NeumannFree,
}

/// Boundary tag for the bio-molecule diffusion equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiffusionTag {
    /// Saturated (a = 1), adjacent to healthy bone.
    Dirichlet,
    /// No flux.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub nodes: [usize; 3],
    pub elastic: ElasticTag,
    pub diffusion: DiffusionTag,
}

/// Volume and constant P1 basis gradients (1/mm) of one tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub volume: f64,
    pub grads: [[f64; 3]; 4],
}

/// Computes the geometry of a tetrahedron from its four vertices.
///
/// The signed volume must exceed [`MIN_ELEMENT_VOLUME`]; inverted or flat
/// elements are rejected.
pub fn tet_geometry(p: &[[f64; 3]; 4]) -> Result<ElementGeometry> {
    let e1 = sub(p[1], p[0]);
    let e2 = sub(p[2], p[0]);
    let e3 = sub(p[3], p[0]);
    let det = dot(e1, cross(e2, e3));
    let volume = det / 6.0;
    if !(volume > MIN_ELEMENT_VOLUME) {
        return Err(Error::DegenerateElement { element: 0, volume });
    }
    // Rows of J^{-1} with J = [e1 e2 e3] are the gradients of the barycentric
    // coordinates of vertices 1..3.
    let g1 = scale(cross(e2, e3), 1.0 / det);
    let g2 = scale(cross(e3, e1), 1.0 / det);
    let g3 = scale(cross(e1, e2), 1.0 / det);
    let g0 = [
        -(g1[0] + g2[0] + g3[0]),
        -(g1[1] + g2[1] + g3[1]),
        -(g1[2] + g2[2] + g3[2]),
    ];
    Ok(ElementGeometry {
        volume,
        grads: [g0, g1, g2, g3],
    })
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    nodes: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    facets: Vec<BoundaryFacet>,
    regions: Vec<Region>,
    geometry: Vec<ElementGeometry>,
}

impl TetMesh {
    /// Builds a mesh and checks every structural invariant: indices in range,
    /// positive orientation, no duplicate elements, and a one-to-one match
    /// between tagged facets and the topological boundary.
    pub fn new(
        nodes: Vec<[f64; 3]>,
        tets: Vec<[usize; 4]>,
        facets: Vec<BoundaryFacet>,
        regions: Vec<Region>,
    ) -> Result<Self> {
        if regions.len() != tets.len() {
            return Err(Error::InvalidMesh(format!(
                "{} region tags for {} elements",
                regions.len(),
                tets.len()
            )));
        }
        let n = nodes.len();
        let mut seen = HashSet::with_capacity(tets.len());
        let mut geometry = Vec::with_capacity(tets.len());
        for (e, tet) in tets.iter().enumerate() {
            if let Some(&bad) = tet.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references node {bad} (mesh has {n} nodes)"
                )));
            }
            let mut key = *tet;
            key.sort_unstable();
            if key.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidMesh(format!("element {e} repeats a node")));
            }
            if !seen.insert(key) {
                return Err(Error::InvalidMesh(format!("element {e} is listed twice")));
            }
            let pts = tet.map(|i| nodes[i]);
            let geo = tet_geometry(&pts).map_err(|err| match err {
                Error::DegenerateElement { volume, .. } => Error::InvalidMesh(format!(
                    "element {e} is inverted or degenerate (signed volume {volume:e})"
                )),
                other => other,
            })?;
            geometry.push(geo);
        }

        let face_count = face_multiplicity(&tets);
        let mut tagged = HashSet::with_capacity(facets.len());
        for (f, facet) in facets.iter().enumerate() {
            if let Some(&bad) = facet.nodes.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "facet {f} references node {bad} (mesh has {n} nodes)"
                )));
            }
            let key = sorted3(facet.nodes);
            match face_count.get(&key) {
                Some(1) => {}
                Some(_) => {
                    return Err(Error::InvalidMesh(format!(
                        "facet {f} {:?} is interior, not on the boundary",
                        facet.nodes
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "facet {f} {:?} is not a face of any element",
                        facet.nodes
                    )))
                }
            }
            if !tagged.insert(key) {
                return Err(Error::InvalidMesh(format!(
                    "facet {f} {:?} is tagged more than once",
                    facet.nodes
                )));
            }
        }
        let untagged = face_count
            .iter()
            .filter(|&(k, &c)| c == 1 && !tagged.contains(k))
            .count();
        if untagged > 0 {
            return Err(Error::InvalidMesh(format!(
                "{untagged} boundary facets carry no tag"
            )));
        }

        Ok(Self {
            nodes,
            tets,
            facets,
            regions,
            geometry,
        })
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.tets.len()
    }

    pub fn is_fixture(&self, e: usize) -> bool {
        self.regions[e] == Region::Fixture
    }

    pub fn has_fixture(&self) -> bool {
        self.regions.contains(&Region::Fixture)
    }

    /// Volume and basis gradients of element `e`.
    pub fn element_geometry(&self, e: usize) -> Result<&ElementGeometry> {
        self.geometry.get(e).ok_or_else(|| {
            Error::InvalidMesh(format!(
                "element index {e} out of range ({} elements)",
                self.tets.len()
            ))
        })
    }

    /// Cached geometry of every element, in element order.
    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume).sum()
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let t = &self.tets[e];
        let mut c = [0.0; 3];
        for &i in t {
            for (ck, pk) in c.iter_mut().zip(self.nodes[i]) {
                *ck += 0.25 * pk;
            }
        }
        c
    }

    pub fn facet_area(&self, facet: &BoundaryFacet) -> f64 {
        let [a, b, c] = facet.nodes.map(|i| self.nodes[i]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Unit normal of a boundary facet pointing out of the domain.
    pub fn facet_outward_normal(&self, facet: &BoundaryFacet) -> [f64; 3] {
        let [a, b, c] = facet.nodes.map(|i| self.nodes[i]);
        let mut nrm = cross(sub(b, a), sub(c, a));
        let len = norm(nrm);
        nrm = scale(nrm, 1.0 / len);
        // The owning element's opposite vertex lies on the inner side.
        let key = sorted3(facet.nodes);
        let owner = self
            .tets
            .iter()
            .find(|t| faces_of(t).iter().any(|f| sorted3(*f) == key))
            .expect("validated facet has an owning element");
        let apex = owner
            .iter()
            .find(|i| !facet.nodes.contains(i))
            .map(|&i| self.nodes[i])
            .expect("tetrahedron has a vertex off the facet");
        if dot(nrm, sub(apex, a)) > 0.0 {
            nrm = scale(nrm, -1.0);
        }
        nrm
    }

    /// Nodes touched by at least one facet with a diffusion Dirichlet tag.
    pub fn diffusion_dirichlet_nodes(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for f in self
            .facets
            .iter()
            .filter(|f| f.diffusion == DiffusionTag::Dirichlet)
        {
            for &i in &f.nodes {
                mask[i] = true;
            }
        }
        mask
    }

    /// Nodes touched by at least one facet with an elastic Dirichlet tag.
    pub fn elastic_dirichlet_nodes(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for f in self
            .facets
            .iter()
            .filter(|f| f.elastic == ElasticTag::Dirichlet)
        {
            for &i in &f.nodes {
                mask[i] = true;
            }
        }
        mask
    }

    /// `true` for nodes adjacent to at least one DESIGN element. Nodes whose
    /// every neighbour is FIXTURE carry no design freedom.
    pub fn design_nodes(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for (t, r) in self.tets.iter().zip(&self.regions) {
            if *r == Region::Design {
                for &i in t {
                    mask[i] = true;
                }
            }
        }
        mask
    }

    /// DESIGN elements sharing at least one node with a FIXTURE element.
    pub fn near_fixture_elements(&self) -> Vec<bool> {
        let mut fixture_node = vec![false; self.nodes.len()];
        for (t, r) in self.tets.iter().zip(&self.regions) {
            if *r == Region::Fixture {
                for &i in t {
                    fixture_node[i] = true;
                }
            }
        }
        self.tets
            .iter()
            .zip(&self.regions)
            .map(|(t, r)| *r == Region::Design && t.iter().any(|&i| fixture_node[i]))
            .collect()
    }

    /// Same connectivity and boundary tags with every element relabelled DESIGN.
    pub fn without_fixture(&self) -> Self {
        let mut m = self.clone();
        m.regions.iter_mut().for_each(|r| *r = Region::Design);
        m
    }

    /// The DESIGN elements alone, with the map from new to old node indices.
    ///
    /// Facets shared with removed FIXTURE elements become traction-free and
    /// no-flux; surviving boundary facets keep their tags.
    pub fn design_submesh(&self) -> Result<(Self, Vec<usize>)> {
        let keep: Vec<usize> = (0..self.tets.len())
            .filter(|&e| self.regions[e] == Region::Design)
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidMesh("mesh has no DESIGN elements".into()));
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut old_id = Vec::new();
        for &e in &keep {
            for &v in &self.tets[e] {
                if new_id[v] == usize::MAX {
                    new_id[v] = old_id.len();
                    old_id.push(v);
                }
            }
        }
        let nodes = old_id.iter().map(|&v| self.nodes[v]).collect();
        let tets: Vec<[usize; 4]> = keep
            .iter()
            .map(|&e| self.tets[e].map(|v| new_id[v]))
            .collect();
        let old_tags: HashMap<[usize; 3], &BoundaryFacet> =
            self.facets.iter().map(|f| (sorted3(f.nodes), f)).collect();
        let fixture_faces: HashSet<[usize; 3]> = self
            .tets
            .iter()
            .zip(&self.regions)
            .filter(|(_, r)| **r == Region::Fixture)
            .flat_map(|(t, _)| faces_of(t).map(sorted3))
            .collect();
        let mut facets = Vec::new();
        for &e in &keep {
            for face in faces_of(&self.tets[e]) {
                let key = sorted3(face);
                let tag = old_tags.get(&key);
                let shared = fixture_faces.contains(&key);
                let (elastic, diffusion) = match (tag, shared) {
                    (Some(f), _) => (f.elastic, f.diffusion),
                    (None, true) => (ElasticTag::NeumannFree, DiffusionTag::Neumann),
                    (None, false) => continue,
                };
                facets.push(BoundaryFacet {
                    nodes: face.map(|v| new_id[v]),
                    elastic,
                    diffusion,
                });
            }
        }
        let regions = vec![Region::Design; tets.len()];
        Ok((Self::new(nodes, tets, facets, regions)?, old_id))
    }

    /// Total facet area per elastic and diffusion tag.
    pub fn boundary_areas(&self) -> BoundaryAreas {
        let mut areas = BoundaryAreas::default();
        for f in &self.facets {
            let a = self.facet_area(f);
            *areas.elastic.entry(f.elastic).or_default() += a;
            *areas.diffusion.entry(f.diffusion).or_default() += a;
            areas.total += a;
        }
        areas
    }

    /// Checks that the tagged boundary partition admits the requested
    /// elasticity formulation and that a saturation boundary exists.
    pub fn validate_boundary_partition(&self, mode: ElasticMode) -> Result<PartitionReport> {
        let areas = self.boundary_areas();
        let dirichlet = areas.elastic_area(ElasticTag::Dirichlet);
        let diffusion_dirichlet = areas.diffusion_area(DiffusionTag::Dirichlet);
        if !(diffusion_dirichlet > 0.0) {
            return Err(Error::BoundaryPartition(
                "no diffusion Dirichlet (saturation) boundary".into(),
            ));
        }
        let rigid_body_handling = match mode {
            ElasticMode::HardDirichlet => {
                if !(dirichlet > 0.0) {
                    return Err(Error::BoundaryPartition(
                        "hard-Dirichlet mode needs elastic Dirichlet facets of nonzero area".into(),
                    ));
                }
                false
            }
            ElasticMode::PureNeumann => {
                if self
                    .facets
                    .iter()
                    .any(|f| f.elastic == ElasticTag::Dirichlet)
                {
                    return Err(Error::BoundaryPartition(
                        "pure-Neumann mode forbids elastic Dirichlet facets".into(),
                    ));
                }
                true
            }
        };
        Ok(PartitionReport {
            mode,
            areas,
            rigid_body_handling,
        })
    }
}

/// How the elastic equation is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElasticMode {
    /// Zero displacement on ELASTIC_DIRICHLET facets.
    HardDirichlet,
    /// Tractions only; solved on the quotient by rigid-body motions.
    PureNeumann,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryAreas {
    pub elastic: BTreeMap<ElasticTag, f64>,
    pub diffusion: BTreeMap<DiffusionTag, f64>,
    pub total: f64,
}

impl BoundaryAreas {
    pub fn elastic_area(&self, tag: ElasticTag) -> f64 {
        self.elastic.get(&tag).copied().unwrap_or(0.0)
    }

    pub fn diffusion_area(&self, tag: DiffusionTag) -> f64 {
        self.diffusion.get(&tag).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub mode: ElasticMode,
    pub areas: BoundaryAreas,
    /// Set when the elastic operator has a rigid-body kernel that the solver must deflate.
    pub rigid_body_handling: bool,
}

/// Axis-aligned slab of FIXTURE elements: every element whose centroid
/// coordinate along `axis` lies in `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct FixtureSlab {
    pub axis: usize,
    pub min: f64,
    pub max: f64,
}

/// Structured box `[0,Lx]×[0,Ly]×[0,Lz]` with every hexahedron split into six
/// tetrahedra around its main diagonal.
///
/// Top and bottom (`z`) faces are traction-loaded ([`BOX_TOP_GROUP`],
/// [`BOX_BOTTOM_GROUP`]) and saturated for diffusion; lateral faces are
/// traction-free and no-flux. End faces of FIXTURE elements carry their own
/// load groups ([`BOX_FIXTURE_TOP_GROUP`], [`BOX_FIXTURE_BOTTOM_GROUP`]) so the
/// plate can be loaded independently of the scaffold.
pub fn generate_box_mesh(
    divisions: [usize; 3],
    lengths: [f64; 3],
    fixture: Option<FixtureSlab>,
) -> Result<TetMesh> {
    if divisions.contains(&0) {
        return Err(Error::InvalidMesh(format!(
            "box divisions must be >= 1, got {divisions:?}"
        )));
    }
    if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidMesh(format!(
            "box lengths must be positive, got {lengths:?}"
        )));
    }
    if let Some(slab) = fixture {
        if slab.axis > 2 {
            return Err(Error::InvalidMesh(format!(
                "fixture axis {} > 2",
                slab.axis
            )));
        }
    }
    let [nx, ny, nz] = divisions;
    let id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([
                    lengths[0] * i as f64 / nx as f64,
                    lengths[1] * j as f64 / ny as f64,
                    lengths[2] * k as f64 / nz as f64,
                ]);
            }
        }
    }

    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [id(c[0], c[1], c[2]), 0, 0, 0];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = id(c[0], c[1], c[2]);
                    }
                    let pts = tet.map(|v| nodes[v]);
                    let e1 = sub(pts[1], pts[0]);
                    if dot(e1, cross(sub(pts[2], pts[0]), sub(pts[3], pts[0]))) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let regions: Vec<Region> = tets
        .iter()
        .map(|t| {
            let inside = fixture.is_some_and(|slab| {
                let c: f64 = t.iter().map(|&v| nodes[v][slab.axis]).sum::<f64>() / 4.0;
                c >= slab.min && c <= slab.max
            });
            if inside {
                Region::Fixture
            } else {
                Region::Design
            }
        })
        .collect();

    let fixture_faces: HashSet<[usize; 3]> = tets
        .iter()
        .zip(&regions)
        .filter(|(_, r)| **r == Region::Fixture)
        .flat_map(|(t, _)| faces_of(t).map(sorted3))
        .collect();
    let tol = 1e-9 * lengths.iter().cloned().fold(0.0, f64::max);
    let mut facets = Vec::new();
    for (key, count) in face_multiplicity(&tets) {
        if count != 1 {
            continue;
        }
        let zs = key.map(|v| nodes[v][2]);
        let on_plate = fixture_faces.contains(&key);
        let (elastic, diffusion) = if zs.iter().all(|z| (z - lengths[2]).abs() < tol) {
            let g = if on_plate {
                BOX_FIXTURE_TOP_GROUP
            } else {
                BOX_TOP_GROUP
            };
            (ElasticTag::NeumannLoaded(g), DiffusionTag::Dirichlet)
        } else if zs.iter().all(|z| z.abs() < tol) {
            let g = if on_plate {
                BOX_FIXTURE_BOTTOM_GROUP
            } else {
                BOX_BOTTOM_GROUP
            };
            (ElasticTag::NeumannLoaded(g), DiffusionTag::Dirichlet)
        } else {
            (ElasticTag::NeumannFree, DiffusionTag::Neumann)
        };
        facets.push(BoundaryFacet {
            nodes: key,
            elastic,
            diffusion,
        });
    }
    facets.sort_by_key(|f| f.nodes);

    TetMesh::new(nodes, tets, facets, regions)
}

pub(crate) fn faces_of(t: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [t[1], t[2], t[3]],
        [t[0], t[2], t[3]],
        [t[0], t[1], t[3]],
        [t[0], t[1], t[2]],
    ]
}

fn face_multiplicity(tets: &[[usize; 4]]) -> BTreeMap<[usize; 3], usize> {
    let mut count: HashMap<[usize; 3], usize> = HashMap::with_capacity(2 * tets.len());
    for t in tets {
        for f in faces_of(t) {
            *count.entry(sorted3(f)).or_default() += 1;
        }
    }
    count.into_iter().collect()
}

pub(crate) fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_tet() -> [[f64; 3]; 4] {
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }

    fn single_tet_mesh() -> TetMesh {
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
            reference_tet().to_vec(),
            vec![tet],
            facets,
            vec![Region::Design],
        )
        .unwrap()
    }

    #[test]
    fn reference_tet_geometry() {
        let g = tet_geometry(&reference_tet()).unwrap();
        assert!((g.volume - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.grads[0], [-1.0, -1.0, -1.0]);
        assert_eq!(g.grads[1], [1.0, 0.0, 0.0]);
        assert_eq!(g.grads[2], [0.0, 1.0, 0.0]);
        assert_eq!(g.grads[3], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn scaled_tet_geometry() {
        let base = tet_geometry(&reference_tet()).unwrap();
        let scaled = tet_geometry(&reference_tet().map(|p| scale(p, 2.0))).unwrap();
        assert!((scaled.volume - 8.0 * base.volume).abs() < 1e-14);
        for (gs, gb) in scaled.grads.iter().zip(&base.grads) {
            for k in 0..3 {
                assert!((gs[k] - 0.5 * gb[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_tet_is_degenerate() {
        let mut p = reference_tet();
        p[3] = [0.3, 0.3, 0.0];
        assert!(matches!(
            tet_geometry(&p),
            Err(Error::DegenerateElement { .. })
        ));
    }

    #[test]
    fn single_tet_mesh_is_valid() {
        let m = single_tet_mesh();
        assert_eq!(m.num_elements(), 1);
        assert!((m.total_volume() - 1.0 / 6.0).abs() < 1e-15);
        let g = m.element_geometry(0).unwrap();
        assert!(m.element_geometry(1).is_err());
        let sum: [f64; 3] = g
            .grads
            .iter()
            .fold([0.0; 3], |a, v| [a[0] + v[0], a[1] + v[1], a[2] + v[2]]);
        assert!(sum.iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn rejects_inverted_duplicate_and_untagged() {
        let p = reference_tet().to_vec();
        let facets: Vec<_> = faces_of(&[0, 1, 2, 3])
            .iter()
            .map(|&f| BoundaryFacet {
                nodes: f,
                elastic: ElasticTag::NeumannFree,
                diffusion: DiffusionTag::Neumann,
            })
            .collect();
        let inverted = TetMesh::new(
            p.clone(),
            vec![[0, 2, 1, 3]],
            facets.clone(),
            vec![Region::Design],
        );
        assert!(matches!(inverted, Err(Error::InvalidMesh(_))));

        let untagged = TetMesh::new(
            p.clone(),
            vec![[0, 1, 2, 3]],
            facets[..3].to_vec(),
            vec![Region::Design],
        );
        assert!(untagged.unwrap_err().to_string().contains("no tag"));

        let out_of_range = TetMesh::new(p, vec![[0, 1, 2, 7]], vec![], vec![Region::Design]);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn box_counts_and_volume() {
        let m = generate_box_mesh([1, 1, 1], [1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(m.num_elements(), 6);
        assert!((m.total_volume() - 1.0).abs() < 1e-12);

        let m = generate_box_mesh([2, 2, 2], [1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(m.num_elements(), 48);
        assert_eq!(m.num_nodes(), 27);

        let m = generate_box_mesh([3, 2, 5], [2.0, 3.0, 7.0], None).unwrap();
        assert!((m.total_volume() - 42.0).abs() < 1e-10 * 42.0);
        let areas = m.boundary_areas();
        let exact = 2.0 * (2.0 * 3.0 + 2.0 * 7.0 + 3.0 * 7.0);
        assert!((areas.total - exact).abs() < 1e-10 * exact);
        let by_tag: f64 = areas.elastic.values().sum();
        assert!((by_tag - areas.total).abs() < 1e-10 * exact);
        assert!((areas.elastic_area(ElasticTag::NeumannLoaded(BOX_TOP_GROUP)) - 6.0).abs() < 1e-12);
        assert!((areas.diffusion_area(DiffusionTag::Dirichlet) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn box_fixture_slab() {
        let slab = FixtureSlab {
            axis: 0,
            min: f64::NEG_INFINITY,
            max: 0.2,
        };
        let m = generate_box_mesh([1, 1, 2], [1.0, 1.0, 2.0], Some(slab)).unwrap();
        for e in 0..m.num_elements() {
            assert_eq!(m.is_fixture(e), m.centroid(e)[0] < 0.2);
        }
        let m = generate_box_mesh([5, 1, 2], [1.0, 1.0, 2.0], Some(slab)).unwrap();
        for e in 0..m.num_elements() {
            assert_eq!(m.is_fixture(e), m.centroid(e)[0] < 0.2);
        }
        assert!(m.has_fixture());
        assert!(!m.without_fixture().has_fixture());
        let areas = m.boundary_areas();
        let plate_top = areas.elastic_area(ElasticTag::NeumannLoaded(BOX_FIXTURE_TOP_GROUP));
        let top = areas.elastic_area(ElasticTag::NeumannLoaded(BOX_TOP_GROUP));
        assert!((plate_top - 0.2).abs() < 1e-12);
        assert!((top - 0.8).abs() < 1e-12);
    }

    #[test]
    fn design_submesh_drops_plate() {
        let slab = FixtureSlab {
            axis: 0,
            min: 0.0,
            max: 1.0,
        };
        let m = generate_box_mesh([4, 2, 2], [4.0, 2.0, 2.0], Some(slab)).unwrap();
        let (sub, map) = m.design_submesh().unwrap();
        assert!(!sub.has_fixture());
        assert_eq!(sub.num_elements(), 6 * 3 * 2 * 2);
        assert_eq!(sub.num_nodes(), 4 * 3 * 3);
        assert!((sub.total_volume() - 12.0).abs() < 1e-12);
        for (i, &old) in map.iter().enumerate() {
            assert_eq!(sub.nodes()[i], m.nodes()[old]);
        }
        let areas = sub.boundary_areas();
        assert!((areas.total - 2.0 * (3.0 * 2.0 * 2.0 + 2.0 * 2.0)).abs() < 1e-12);
        assert!((areas.elastic_area(ElasticTag::NeumannLoaded(BOX_TOP_GROUP)) - 6.0).abs() < 1e-12);
        assert_eq!(
            areas.elastic_area(ElasticTag::NeumannLoaded(BOX_FIXTURE_TOP_GROUP)),
            0.0
        );
    }

    #[test]
    fn outward_normals_point_out() {
        let m = generate_box_mesh([2, 2, 2], [1.0, 2.0, 3.0], None).unwrap();
        let center = [0.5, 1.0, 1.5];
        for f in m.facets() {
            let n = m.facet_outward_normal(f);
            let p = m.nodes()[f.nodes[0]];
            assert!(dot(n, sub(p, center)) > 0.0);
        }
    }

    #[test]
    fn partition_checks() {
        let m = generate_box_mesh([1, 1, 1], [1.0, 1.0, 1.0], None).unwrap();
        let rep = m
            .validate_boundary_partition(ElasticMode::PureNeumann)
            .unwrap();
        assert!(rep.rigid_body_handling);
        assert!(m
            .validate_boundary_partition(ElasticMode::HardDirichlet)
            .is_err());

        let mut facets = m.facets().to_vec();
        facets
            .iter_mut()
            .for_each(|f| f.diffusion = DiffusionTag::Neumann);
        let no_sat = TetMesh::new(
            m.nodes().to_vec(),
            m.tets().to_vec(),
            facets.clone(),
            m.regions().to_vec(),
        )
        .unwrap();
        assert!(no_sat
            .validate_boundary_partition(ElasticMode::PureNeumann)
            .is_err());

        facets[0].diffusion = DiffusionTag::Dirichlet;
        facets[0].elastic = ElasticTag::Dirichlet;
        let one = TetMesh::new(
            m.nodes().to_vec(),
            m.tets().to_vec(),
            facets,
            m.regions().to_vec(),
        )
        .unwrap();
        let rep = one
            .validate_boundary_partition(ElasticMode::HardDirichlet)
            .unwrap();
        assert!(!rep.rigid_body_handling);
        assert!(one
            .validate_boundary_partition(ElasticMode::PureNeumann)
            .is_err());
    }

    #[test]
    fn near_fixture_shell_and_design_mask() {
        let slab = FixtureSlab {
            axis: 0,
            min: 0.0,
            max: 1.0,
        };
        let m = generate_box_mesh([4, 1, 1], [4.0, 1.0, 1.0], Some(slab)).unwrap();
        let near = m.near_fixture_elements();
        for e in 0..m.num_elements() {
            let cx = m.centroid(e)[0];
            assert_eq!(near[e], cx > 1.0 && cx < 2.0, "element {e} centroid {cx}");
        }
        let design = m.design_nodes();
        for (i, p) in m.nodes().iter().enumerate() {
            assert_eq!(design[i], p[0] > 0.5);
        }
    }
}
