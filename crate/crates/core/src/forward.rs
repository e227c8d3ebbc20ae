//! Semi-implicit time stepping of the coupled state
//! `(u, a1, a2, c, b)` for a fixed scaffold density.
//!
//! One step `t_n → t_{n+1}`:
//!
//! 1. elasticity at `t_n` with `C(ρ_e, σ(t_n), b^n)`;
//! 2. both molecule species: implicit diffusion and decay with lumped mass,
//!    source `k2_i S(ε(u^n)) c^n` taken explicitly, `a = 1` imposed on the
//!    saturation boundary;
//! 3. osteoblasts, per element, driven by the new element averages of `a1, a2`;
//! 4. bone, per element, driven by the new `a1` and `c`.
//!
//! The growth laws use a capacity-implicit update (see [`capacity_update`])
//! so `0 ≤ c, b ≤ 1 − ρ_e` holds for any step size. FIXTURE elements have
//! fixed stiffness and diffusivity and no growth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_neumann_load, element_average, element_strain, lumped_mass, norm, solve_cg, CgOptions,
    ConstrainedSystem, DiffusionOperator, DofMap, ElasticOperator, RigidBodyModes, SparseMatrix,
    TractionTable,
};
use crate::materials::{self, MaterialParams, BOX_SLACK};
use crate::mesh::{ElasticMode, TetMesh};

/// Relative resultant force/moment above which a traction load counts as
/// unbalanced in pure-Neumann mode.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// Most negative molecule concentration tolerated before a run aborts.
pub const CONCENTRATION_FLOOR: f64 = -1e-10;

/// Roundoff allowance on the capacity bounds.
pub const CAPACITY_TOL: f64 = 1e-14;

/// Uniform time grid `0, Δt, …, T` in weeks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub horizon_weeks: f64,
    pub dt_weeks: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            horizon_weeks: 52.0,
            dt_weeks: 1.0,
        }
    }
}

impl Schedule {
    pub fn new(horizon_weeks: f64, dt_weeks: f64) -> Result<Self> {
        let s = Self {
            horizon_weeks,
            dt_weeks,
        };
        s.steps()?;
        Ok(s)
    }

    /// Number of steps `N = T / Δt`; `T` must be an integer multiple of `Δt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt_weeks > 0.0) || !(self.horizon_weeks >= 0.0) {
            return Err(Error::Config(format!(
                "schedule needs dt > 0 and T >= 0, got T = {}, dt = {}",
                self.horizon_weeks, self.dt_weeks
            )));
        }
        let n = (self.horizon_weeks / self.dt_weeks).round();
        if (n * self.dt_weeks - self.horizon_weeks).abs() > 1e-9 * self.dt_weeks {
            return Err(Error::Config(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon_weeks, self.dt_weeks
            )));
        }
        Ok(n as usize)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt_weeks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub elastic: CgOptions,
    pub diffusion: CgOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            elastic: CgOptions {
                tol: 1e-12,
                max_iter: 20_000,
            },
            diffusion: CgOptions {
                tol: 1e-14,
                max_iter: 5_000,
            },
        }
    }
}

/// Nodal scaffold volume fraction ρ, the control variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn uniform(num_nodes: usize, value: f64) -> Self {
        Self {
            values: vec![value; num_nodes],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-element density, the mean of the four nodal values.
    pub fn element_values(&self, mesh: &TetMesh) -> Vec<f64> {
        (0..mesh.num_elements())
            .map(|e| element_average(mesh, e, &self.values))
            .collect()
    }

    /// Checks `c_P ≤ ρ_j ≤ C_P` up to [`BOX_SLACK`] on every design node.
    pub fn check_box(&self, params: &MaterialParams, design: &[bool]) -> Result<()> {
        for (j, (&r, &d)) in self.values.iter().zip(design).enumerate() {
            if d && !(r >= params.c_p - BOX_SLACK && r <= params.cap_p + BOX_SLACK) {
                return Err(Error::Domain {
                    quantity: "nodal density",
                    value: r,
                    range: format!("[{}, {}] at node {j}", params.c_p, params.cap_p),
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        self.values.iter_mut().for_each(|r| *r = r.clamp(lo, hi));
    }
}

/// Time series of the state. Displacements and concentrations are nodal; cell
/// density, bone fraction, stimulus and Young modulus are per element.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho_elem: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub a: [Vec<Vec<f64>>; 2],
    pub c: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub stimulus: Vec<Vec<f64>>,
    pub young: Vec<Vec<f64>>,
}

impl StateTrajectory {
    pub fn num_states(&self) -> usize {
        self.times.len()
    }

    pub fn final_bone(&self) -> &[f64] {
        self.b
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

/// `x ← (x + Δt G) / (1 + Δt G / κ)`, the logistic step with implicit
/// capacity term. Stays in `[x, κ]` whenever `0 ≤ x ≤ κ`, for every `Δt G ≥ 0`.
pub fn capacity_update(x: f64, drive_dt: f64, capacity: f64) -> f64 {
    if drive_dt == 0.0 {
        return x;
    }
    let next = (x + drive_dt) / (1.0 + drive_dt / capacity);
    next.clamp(x, capacity.max(x))
}

/// Partial derivatives of [`capacity_update`] with respect to `x`, `Δt G`
/// and `κ`.
pub fn capacity_update_partials(x: f64, drive_dt: f64, capacity: f64) -> (f64, f64, f64) {
    let den = 1.0 + drive_dt / capacity;
    let d_x = 1.0 / den;
    let d_drive = (1.0 - x / capacity) / (den * den);
    let d_cap = (x + drive_dt) * drive_dt / (capacity * capacity * den * den);
    (d_x, d_drive, d_cap)
}

/// Per-element osteoblast update.
pub fn step_cells(
    params: &MaterialParams,
    c: f64,
    a1_avg: f64,
    a2_avg: f64,
    rho_e: f64,
    dt: f64,
) -> f64 {
    let g = params.k6 * a1_avg * a2_avg * (1.0 + params.k7 * c);
    capacity_update(c, dt * g, 1.0 - rho_e)
}

/// Per-element bone update; osteoblasts and bone have independent capacities.
pub fn step_bone(
    params: &MaterialParams,
    b: f64,
    a1_avg: f64,
    c_next: f64,
    rho_e: f64,
    dt: f64,
) -> f64 {
    let g = params.k4 * a1_avg * c_next;
    capacity_update(b, dt * g, 1.0 - rho_e)
}

/// Diffusion systems of both species for one density field.
pub struct DiffusionSystems {
    pub(crate) systems: [ConstrainedSystem; 2],
}

/// Mesh, parameters, load and all density-independent operators of one
/// forward model.
pub struct Problem {
    mesh: TetMesh,
    params: MaterialParams,
    schedule: Schedule,
    solver: SolverOptions,
    mode: ElasticMode,
    load: Vec<f64>,
    elastic_op: ElasticOperator,
    diffusion_op: DiffusionOperator,
    lumped: Vec<f64>,
    deflation: Option<RigidBodyModes>,
    elastic_dofs: DofMap,
    diffusion_dofs: DofMap,
    design_nodes: Vec<bool>,
    initial_a: [f64; 2],
    saturation: f64,
}

impl Problem {
    pub fn new(
        mesh: TetMesh,
        params: MaterialParams,
        tractions: &TractionTable,
        mode: ElasticMode,
        schedule: Schedule,
        solver: SolverOptions,
    ) -> Result<Self> {
        params.validate()?;
        schedule.steps()?;
        mesh.validate_boundary_partition(mode)?;
        let load = assemble_neumann_load(&mesh, tractions)?;
        let deflation = match mode {
            ElasticMode::PureNeumann => Some(RigidBodyModes::new(&mesh)?),
            ElasticMode::HardDirichlet => None,
        };
        if let Some(modes) = &deflation {
            check_equilibrium(modes, &load)?;
        }
        let mut elastic_dofs = DofMap::vector(mesh.num_nodes());
        if mode == ElasticMode::HardDirichlet {
            elastic_dofs.constrain_nodes(&mesh.elastic_dirichlet_nodes(), |_, _| 0.0);
        }
        let mut diffusion_dofs = DofMap::scalar(mesh.num_nodes());
        diffusion_dofs.constrain_nodes(&mesh.diffusion_dirichlet_nodes(), |_, _| 1.0);
        Ok(Self {
            elastic_op: ElasticOperator::new(&mesh),
            diffusion_op: DiffusionOperator::new(&mesh),
            lumped: lumped_mass(&mesh),
            design_nodes: mesh.design_nodes(),
            mesh,
            params,
            schedule,
            solver,
            mode,
            load,
            deflation,
            elastic_dofs,
            diffusion_dofs,
            initial_a: [0.0; 2],
            saturation: 1.0,
        })
    }

    /// Uniform interior pre-seeding of the molecule concentrations at t = 0.
    pub fn with_initial_molecules(mut self, a0: [f64; 2]) -> Result<Self> {
        if a0.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Config(format!(
                "initial molecule levels must be >= 0, got {a0:?}"
            )));
        }
        self.initial_a = a0;
        Ok(self)
    }

    /// Replaces the boundary level `a = 1` of both species; a homogeneous
    /// level turns the diffusion steps into a pure decay problem.
    pub fn with_saturation_level(mut self, level: f64) -> Self {
        self.saturation = level;
        let mask = self.mesh.diffusion_dirichlet_nodes();
        self.diffusion_dofs = DofMap::scalar(self.mesh.num_nodes());
        self.diffusion_dofs.constrain_nodes(&mask, |_, _| level);
        self
    }

    pub fn mesh(&self) -> &TetMesh {
        &self.mesh
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    pub fn mode(&self) -> ElasticMode {
        self.mode
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn design_nodes(&self) -> &[bool] {
        &self.design_nodes
    }

    pub(crate) fn deflation(&self) -> Option<&RigidBodyModes> {
        self.deflation.as_ref()
    }

    pub(crate) fn elastic_op(&self) -> &ElasticOperator {
        &self.elastic_op
    }

    pub(crate) fn elastic_dofs(&self) -> &DofMap {
        &self.elastic_dofs
    }

    /// Same problem with a different traction load.
    pub fn with_load(mut self, tractions: &TractionTable) -> Result<Self> {
        let load = assemble_neumann_load(&self.mesh, tractions)?;
        if let Some(modes) = &self.deflation {
            check_equilibrium(modes, &load)?;
        }
        self.load = load;
        Ok(self)
    }

    /// Young modulus per element at one time level.
    pub fn young_moduli(&self, rho_elem: &[f64], b: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (0..self.mesh.num_elements())
            .map(|e| {
                if self.mesh.is_fixture(e) {
                    Ok(self.params.e_fixture)
                } else {
                    self.params
                        .young_modulus(rho_elem[e].clamp(0.0, 1.0), sigma, b[e])
                }
            })
            .collect()
    }

    /// Elastic equilibrium for given element moduli.
    pub fn solve_elasticity(&self, young: &[f64]) -> Result<Vec<f64>> {
        let k = self.elastic_op.assemble_young(young, self.params.nu);
        self.solve_elastic_system(k, &self.load)
    }

    /// Solves `K x = rhs` with the problem's constraints (Dirichlet elimination
    /// or rigid-body deflation). The matrix is symmetric, so this also serves
    /// the adjoint solves.
    pub(crate) fn solve_elastic_system(&self, k: SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            ElasticMode::PureNeumann => {
                let modes = self
                    .deflation
                    .as_ref()
                    .expect("pure-Neumann problems carry rigid modes");
                check_equilibrium(modes, rhs)?;
                Ok(solve_cg(&k, rhs, &self.solver.elastic, Some(modes))?.x)
            }
            ElasticMode::HardDirichlet => {
                let sys = ConstrainedSystem::new(k, &self.elastic_dofs);
                let mut b = rhs.to_vec();
                sys.adjust_rhs(&mut b);
                Ok(solve_cg(sys.matrix(), &b, &self.solver.elastic, None)?.x)
            }
        }
    }

    /// Displacement at one time level for density `ρ_e`, bone `b` and decay `σ`.
    pub fn solve_elasticity_at(&self, rho_elem: &[f64], b: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.solve_elasticity(&self.young_moduli(rho_elem, b, sigma)?)
    }

    pub fn element_diffusivities(&self, rho_elem: &[f64]) -> Result<Vec<f64>> {
        (0..self.mesh.num_elements())
            .map(|e| {
                if self.mesh.is_fixture(e) {
                    Ok(self.params.fixture_diffusivity())
                } else {
                    self.params.diffusivity(rho_elem[e])
                }
            })
            .collect()
    }

    /// `M + Δt (K_D + k3_i M)` with the saturation boundary eliminated, per species.
    pub fn diffusion_systems(&self, rho_elem: &[f64]) -> Result<DiffusionSystems> {
        let diffusivity = self.element_diffusivities(rho_elem)?;
        let dt = self.schedule.dt_weeks;
        let kd = self.diffusion_op.stiffness(&diffusivity);
        let build = |k3: f64| {
            let mut a = self.diffusion_op.zero();
            a.axpy(dt, &kd);
            let diag: Vec<f64> = self.lumped.iter().map(|m| m * (1.0 + dt * k3)).collect();
            a.add_diagonal(&diag);
            ConstrainedSystem::new(a, &self.diffusion_dofs)
        };
        Ok(DiffusionSystems {
            systems: [build(self.params.k3[0]), build(self.params.k3[1])],
        })
    }

    /// Nodal load `∫ k2_i S c φ_j` of an element-constant source.
    pub fn source_load(&self, species: usize, stimulus: &[f64], c: &[f64]) -> Vec<f64> {
        let k2 = self.params.k2[species];
        let mut f = vec![0.0; self.mesh.num_nodes()];
        for (e, t) in self.mesh.tets().iter().enumerate() {
            let s = k2 * stimulus[e] * c[e] * 0.25 * self.mesh.geometry()[e].volume;
            if s != 0.0 {
                for &j in t {
                    f[j] += s;
                }
            }
        }
        f
    }

    /// One semi-implicit diffusion step for `species` (0 or 1).
    pub fn step_diffusion(
        &self,
        systems: &DiffusionSystems,
        species: usize,
        a_prev: &[f64],
        stimulus: &[f64],
        c: &[f64],
    ) -> Result<Vec<f64>> {
        let dt = self.schedule.dt_weeks;
        let f = self.source_load(species, stimulus, c);
        let mut rhs: Vec<f64> = a_prev
            .iter()
            .zip(&self.lumped)
            .zip(&f)
            .map(|((a, m), fj)| m * a + dt * fj)
            .collect();
        let sys = &systems.systems[species];
        sys.adjust_rhs(&mut rhs);
        Ok(solve_cg(sys.matrix(), &rhs, &self.solver.diffusion, None)?.x)
    }

    /// Stimulus per element for displacement `u`.
    pub fn stimulus_field(&self, u: &[f64]) -> Result<Vec<f64>> {
        (0..self.mesh.num_elements())
            .map(|e| self.params.stimulus(&element_strain(&self.mesh, e, u)))
            .collect()
    }

    pub fn initial_molecules(&self, species: usize) -> Vec<f64> {
        let mut a = vec![self.initial_a[species]; self.mesh.num_nodes()];
        for &d in self.diffusion_dofs.prescribed().keys() {
            a[d] = self.saturation;
        }
        a
    }

    /// Runs the full time loop for density `rho`.
    pub fn solve_forward(&self, rho: &DensityField) -> Result<StateTrajectory> {
        if rho.len() != self.mesh.num_nodes() {
            return Err(Error::Config(format!(
                "density has {} values for {} nodes",
                rho.len(),
                self.mesh.num_nodes()
            )));
        }
        rho.check_box(&self.params, &self.design_nodes)?;
        let mesh = &self.mesh;
        let p = &self.params;
        let steps = self.schedule.steps()?;
        let dt = self.schedule.dt_weeks;
        let ne = mesh.num_elements();
        let rho_elem = rho.element_values(mesh);
        let systems = self.diffusion_systems(&rho_elem)?;

        let mut traj = StateTrajectory {
            times: Vec::with_capacity(steps + 1),
            sigma: Vec::with_capacity(steps + 1),
            rho_elem: rho_elem.clone(),
            u: Vec::with_capacity(steps + 1),
            a: [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)],
            c: Vec::with_capacity(steps + 1),
            b: Vec::with_capacity(steps + 1),
            stimulus: Vec::with_capacity(steps + 1),
            young: Vec::with_capacity(steps + 1),
        };
        let mut a = [self.initial_molecules(0), self.initial_molecules(1)];
        let mut c = vec![0.0; ne];
        let mut b = vec![0.0; ne];

        for n in 0..=steps {
            let t = self.schedule.time(n);
            let sigma = materials::sigma(t, p.k1);
            let young = self.young_moduli(&rho_elem, &b, sigma)?;
            let u = self.solve_elasticity(&young)?;
            let stim = self.stimulus_field(&u)?;
            traj.times.push(t);
            traj.sigma.push(sigma);

            if n < steps {
                let a1 = self.step_diffusion(&systems, 0, &a[0], &stim, &c)?;
                let a2 = self.step_diffusion(&systems, 1, &a[1], &stim, &c)?;
                let mut c_next = vec![0.0; ne];
                let mut b_next = vec![0.0; ne];
                for e in 0..ne {
                    if mesh.is_fixture(e) {
                        continue;
                    }
                    let a1e = element_average(mesh, e, &a1);
                    let a2e = element_average(mesh, e, &a2);
                    c_next[e] = step_cells(p, c[e], a1e, a2e, rho_elem[e], dt);
                    b_next[e] = step_bone(p, b[e], a1e, c_next[e], rho_elem[e], dt);
                }
                traj.u.push(u);
                traj.stimulus.push(stim);
                traj.young.push(young);
                traj.a[0].push(std::mem::replace(&mut a[0], a1));
                traj.a[1].push(std::mem::replace(&mut a[1], a2));
                traj.c.push(std::mem::replace(&mut c, c_next));
                traj.b.push(std::mem::replace(&mut b, b_next));
                self.check_step(n + 1, &rho_elem, &a, &c, &b)?;
            } else {
                traj.u.push(u);
                traj.stimulus.push(stim);
                traj.young.push(young);
            }
        }
        let [a1, a2] = a;
        traj.a[0].push(a1);
        traj.a[1].push(a2);
        traj.c.push(c);
        traj.b.push(b);
        Ok(traj)
    }

    fn check_step(
        &self,
        step: usize,
        rho_elem: &[f64],
        a: &[Vec<f64>; 2],
        c: &[f64],
        b: &[f64],
    ) -> Result<()> {
        for (species, field) in a.iter().enumerate() {
            if let Some((j, &v)) = field
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= CONCENTRATION_FLOOR))
            {
                return Err(Error::Invariant {
                    step,
                    index: j,
                    what: format!("a{} = {v:e} is negative or not finite", species + 1),
                });
            }
        }
        for e in 0..c.len() {
            let cap = 1.0 - rho_elem[e] + CAPACITY_TOL;
            for (name, v) in [("c", c[e]), ("b", b[e])] {
                if !(v >= 0.0 && v <= cap) {
                    return Err(Error::Invariant {
                        step,
                        index: e,
                        what: format!(
                            "{name} = {v} outside [0, 1 - rho_e = {}]",
                            1.0 - rho_elem[e]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_equilibrium(modes: &RigidBodyModes, load: &[f64]) -> Result<()> {
    let scale = norm(load);
    if scale == 0.0 {
        return Ok(());
    }
    let coeff = modes.coefficients(load);
    let ratio = coeff.iter().map(|c| c * c).sum::<f64>().sqrt() / scale;
    if ratio > EQUILIBRIUM_TOL {
        return Err(Error::UnbalancedLoad(ratio));
    }
    Ok(())
}
