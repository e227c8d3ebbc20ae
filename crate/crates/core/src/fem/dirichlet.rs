use std::collections::BTreeMap;

use super::sparse::SparseMatrix;

/// Node-to-dof numbering (1 or 3 components per node) plus prescribed values.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    components: usize,
    num_nodes: usize,
    prescribed: BTreeMap<usize, f64>,
}

impl DofMap {
    pub fn scalar(num_nodes: usize) -> Self {
        Self {
            components: 1,
            num_nodes,
            prescribed: BTreeMap::new(),
        }
    }

    pub fn vector(num_nodes: usize) -> Self {
        Self {
            components: 3,
            num_nodes,
            prescribed: BTreeMap::new(),
        }
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        debug_assert!(component < self.components && node < self.num_nodes);
        self.components * node + component
    }

    pub fn num_dofs(&self) -> usize {
        self.components * self.num_nodes
    }

    pub fn constrain(&mut self, dof: usize, value: f64) {
        assert!(dof < self.num_dofs(), "dof {dof} out of range");
        self.prescribed.insert(dof, value);
    }

    /// Constrains every component of each node where `mask` is set.
    pub fn constrain_nodes(&mut self, mask: &[bool], value: impl Fn(usize, usize) -> f64) {
        for (node, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            for c in 0..self.components {
                let d = self.dof(node, c);
                self.prescribed.insert(d, value(node, c));
            }
        }
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.prescribed.contains_key(&dof)
    }

    pub fn prescribed(&self) -> &BTreeMap<usize, f64> {
        &self.prescribed
    }

    pub fn constrained_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_dofs()];
        for &d in self.prescribed.keys() {
            m[d] = true;
        }
        m
    }
}

/// Symmetric elimination of prescribed dofs in `A x = b`.
///
/// Constrained rows and columns are zeroed with a unit diagonal, the
/// coupling to prescribed values moves to the right-hand side, and the
/// constrained right-hand-side entries are set to the prescribed values.
pub fn apply_dirichlet(a: &mut SparseMatrix, rhs: &mut [f64], map: &DofMap) {
    let sys = ConstrainedSystem::new(a.clone(), map);
    sys.adjust_rhs(rhs);
    *a = sys.matrix;
}

/// A matrix with Dirichlet elimination applied, reusable for many right-hand
/// sides.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    matrix: SparseMatrix,
    /// `A[:, C] g` computed before elimination.
    lift: Vec<f64>,
    mask: Vec<bool>,
    values: Vec<(usize, f64)>,
}

impl ConstrainedSystem {
    pub fn new(mut a: SparseMatrix, map: &DofMap) -> Self {
        let n = a.dim();
        let mask = map.constrained_mask();
        let mut g = vec![0.0; n];
        for (&d, &v) in map.prescribed() {
            g[d] = v;
        }
        let lift = a.matvec(&g);
        for i in 0..n {
            for k in a.row_range(i) {
                let j = a.col(k);
                if mask[i] || mask[j] {
                    a.values_mut()[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        Self {
            matrix: a,
            lift,
            mask,
            values: map.prescribed().iter().map(|(&d, &v)| (d, v)).collect(),
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn constrained(&self) -> &[bool] {
        &self.mask
    }

    pub fn adjust_rhs(&self, rhs: &mut [f64]) {
        for (i, r) in rhs.iter_mut().enumerate() {
            if !self.mask[i] {
                *r -= self.lift[i];
            }
        }
        for &(d, v) in &self.values {
            rhs[d] = v;
        }
    }

    /// Zeroes constrained entries; the right-hand side of the transposed
    /// (adjoint) system.
    pub fn homogenize(&self, rhs: &mut [f64]) {
        for (r, &m) in rhs.iter_mut().zip(&self.mask) {
            if m {
                *r = 0.0;
            }
        }
    }
}
