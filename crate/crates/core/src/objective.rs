//! Objective functionals on top of a forward trajectory.
//!
//! `Φ(ρ) = s·F(E) + s·G(b) + η·R(ρ) + β·K(ρ)` with `s = −1` for maximization,
//! so every problem is minimized. `F` is a normalized trapezoidal `L^p` norm in
//! time of the elastic energy, `G` the bone volume at the final time, `R` a
//! discrete H¹-type norm and `K` a squared-hinge box penalty. `R` and `K` only
//! see the design region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{element_strain, DiffusionOperator};
use crate::forward::{DensityField, Problem, StateTrajectory};
use crate::materials::{IsotropicTensor, MaterialParams};
use crate::mesh::TetMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `L^p` norm of `E` in time with `p > 0`, a smooth stand-in for `max_t E`.
    MaxEnergyLp,
    /// `L^p` norm with `p < 0`, a smooth stand-in for `min_t E`.
    MinEnergyLp,
    /// `∫ b(T)`.
    BoneVolume,
    /// Only the regularizer and penalty terms; no forward solve.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Min,
    Max,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub p: f64,
    pub eta: f64,
    pub beta: f64,
    pub sense: Sense,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::MaxEnergyLp,
            p: 5.0,
            eta: 0.0,
            beta: 1.0,
            sense: Sense::Min,
        }
    }
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p == 0.0 {
            return Err(Error::Objective(format!(
                "exponent p must be finite and nonzero, got {}",
                self.p
            )));
        }
        match self.kind {
            ObjectiveKind::MaxEnergyLp if self.p < 0.0 => {
                return Err(Error::Objective(format!(
                    "max_energy_lp needs p > 0, got {}",
                    self.p
                )))
            }
            ObjectiveKind::MinEnergyLp if self.p > 0.0 => {
                return Err(Error::Objective(format!(
                    "min_energy_lp needs p < 0, got {}",
                    self.p
                )))
            }
            _ => {}
        }
        if !(self.eta >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Objective(format!(
                "weights must be >= 0, got eta = {}, beta = {}",
                self.eta, self.beta
            )));
        }
        Ok(())
    }

    pub fn needs_forward(&self) -> bool {
        self.kind != ObjectiveKind::None
    }
}

/// `½ vol_e C_unit ε_e : ε_e` per element, the strain energy for unit Young modulus.
pub fn unit_energy_density(mesh: &TetMesh, nu: f64, u: &[f64]) -> Vec<f64> {
    let unit = IsotropicTensor::from_young(1.0, nu);
    (0..mesh.num_elements())
        .map(|e| {
            let eps = element_strain(mesh, e, u);
            0.5 * mesh.geometry()[e].volume * unit.contract(&eps, &eps)
        })
        .collect()
}

/// Elastic energy `E_n = ½ Σ_e vol_e C_e ε_e : ε_e` at every stored time level.
pub fn elastic_energy_trajectory(
    mesh: &TetMesh,
    params: &MaterialParams,
    traj: &StateTrajectory,
) -> Vec<f64> {
    traj.u
        .iter()
        .zip(&traj.young)
        .map(|(u, young)| {
            unit_energy_density(mesh, params.nu, u)
                .iter()
                .zip(young)
                .map(|(psi, e)| psi * e)
                .sum()
        })
        .collect()
}

/// Trapezoidal weights `Δt·(½, 1, …, 1, ½)`; a single sample gets weight 0.
pub fn trapezoid_weights(samples: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; samples];
    if let Some(first) = w.first_mut() {
        *first *= 0.5;
    }
    if let Some(last) = w.last_mut() {
        *last *= 0.5;
    }
    if samples == 1 {
        w[0] = 0.0;
    }
    w
}

/// `(Σ_n w_n E_n^p)^{1/p}` with trapezoidal weights, divided inside the root by
/// `|I| = (N−1)Δt` when `normalized`. A single sample returns itself when
/// normalized.
pub fn lp_time_norm(e: &[f64], dt: f64, p: f64, normalized: bool) -> Result<f64> {
    check_lp_domain(e, p)?;
    if normalized && e.len() == 1 {
        return Ok(e[0]);
    }
    let w = trapezoid_weights(e.len(), dt);
    let mut sum: f64 = e.iter().zip(&w).map(|(en, wn)| wn * en.powf(p)).sum();
    if normalized {
        sum /= interval_length(e.len(), dt);
    }
    Ok(sum.powf(1.0 / p))
}

/// `∂/∂E_n` of the normalized [`lp_time_norm`].
pub fn lp_time_norm_gradient(e: &[f64], dt: f64, p: f64) -> Result<Vec<f64>> {
    check_lp_domain(e, p)?;
    if e.len() == 1 {
        return Ok(vec![1.0]);
    }
    let f = lp_time_norm(e, dt, p, true)?;
    let t = interval_length(e.len(), dt);
    let w = trapezoid_weights(e.len(), dt);
    Ok(e.iter()
        .zip(&w)
        .map(|(en, wn)| {
            if *wn == 0.0 {
                0.0
            } else {
                f.powf(1.0 - p) * wn * en.powf(p - 1.0) / t
            }
        })
        .collect())
}

fn interval_length(samples: usize, dt: f64) -> f64 {
    (samples - 1) as f64 * dt
}

fn check_lp_domain(e: &[f64], p: f64) -> Result<()> {
    if e.is_empty() {
        return Err(Error::Objective("empty energy series".into()));
    }
    for (n, &en) in e.iter().enumerate() {
        if !en.is_finite() || en < 0.0 || (p < 0.0 && en <= 0.0) {
            return Err(Error::Objective(format!(
                "energy sample {n} = {en:e} outside the domain of the L^{p} norm"
            )));
        }
    }
    Ok(())
}

/// `Σ_e vol_e b_e` for element values `b`.
pub fn bone_volume(mesh: &TetMesh, b: &[f64]) -> f64 {
    mesh.geometry()
        .iter()
        .zip(b)
        .map(|(g, be)| g.volume * be)
        .sum()
}

/// Squared-hinge violation of `[c_P, C_P]` at one node.
fn hinge(rho: f64, lo: f64, hi: f64) -> (f64, f64) {
    let below = (lo - rho).max(0.0);
    let above = (rho - hi).max(0.0);
    (below * below + above * above, 2.0 * (above - below))
}

/// `K(ρ) = Σ_j m_j [max(0, c_P − ρ_j)² + max(0, ρ_j − C_P)²]` with design
/// lumped masses `m`.
pub fn box_penalty(rho: &[f64], mass: &[f64], lo: f64, hi: f64) -> f64 {
    rho.iter()
        .zip(mass)
        .map(|(&r, &m)| m * hinge(r, lo, hi).0)
        .sum()
}

pub fn box_penalty_gradient(rho: &[f64], mass: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    rho.iter()
        .zip(mass)
        .map(|(&r, &m)| m * hinge(r, lo, hi).1)
        .collect()
}

/// Unit-coefficient lumped mass and stiffness restricted to the design region.
pub struct Regularizer {
    mass: Vec<f64>,
    stiffness: crate::fem::SparseMatrix,
}

impl Regularizer {
    pub fn new(mesh: &TetMesh) -> Self {
        let coeff: Vec<f64> = (0..mesh.num_elements())
            .map(|e| if mesh.is_fixture(e) { 0.0 } else { 1.0 })
            .collect();
        Self {
            mass: crate::fem::design_lumped_mass(mesh),
            stiffness: DiffusionOperator::new(mesh).stiffness(&coeff),
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `R(ρ) = ρᵀMρ + ρᵀKρ`.
    pub fn value(&self, rho: &[f64]) -> f64 {
        let m: f64 = rho.iter().zip(&self.mass).map(|(r, m)| m * r * r).sum();
        m + self.stiffness.bilinear(rho, rho)
    }

    pub fn gradient(&self, rho: &[f64]) -> Vec<f64> {
        let k = self.stiffness.matvec(rho);
        rho.iter()
            .zip(&self.mass)
            .zip(&k)
            .map(|((r, m), kr)| 2.0 * (m * r + kr))
            .collect()
    }
}

/// The four terms of `Φ`, each with its weight and sign applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub energy: f64,
    pub bone: f64,
    pub regularizer: f64,
    pub penalty: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.energy + self.bone + self.regularizer + self.penalty
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub terms: ObjectiveTerms,
    pub energies: Vec<f64>,
    pub trajectory: Option<StateTrajectory>,
}

/// Objective evaluator bound to one problem.
pub struct Objective<'a> {
    problem: &'a Problem,
    spec: ObjectiveSpec,
    regularizer: Regularizer,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a Problem, spec: ObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            regularizer: Regularizer::new(problem.mesh()),
            problem,
            spec,
        })
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    /// State-independent part `η R + β K`.
    pub fn design_terms(&self, rho: &[f64]) -> (f64, f64) {
        let p = self.problem.params();
        (
            self.spec.eta * self.regularizer.value(rho),
            self.spec.beta * box_penalty(rho, self.regularizer.mass(), p.c_p, p.cap_p),
        )
    }

    /// Signed state terms `s F(E)` and `s G(b)`.
    pub fn state_terms(&self, energies: &[f64], traj: &StateTrajectory) -> Result<(f64, f64)> {
        let s = self.spec.sense.sign();
        let dt = self.problem.schedule().dt_weeks;
        Ok(match self.spec.kind {
            ObjectiveKind::MaxEnergyLp | ObjectiveKind::MinEnergyLp => {
                (s * lp_time_norm(energies, dt, self.spec.p, true)?, 0.0)
            }
            ObjectiveKind::BoneVolume => {
                (0.0, s * bone_volume(self.problem.mesh(), traj.final_bone()))
            }
            ObjectiveKind::None => (0.0, 0.0),
        })
    }

    /// Reduced objective `Φ(ρ)`: forward solve followed by the composition.
    pub fn evaluate(&self, rho: &DensityField) -> Result<Evaluation> {
        let (regularizer, penalty) = self.design_terms(rho.values());
        let (energy, bone, energies, trajectory) = if self.spec.needs_forward() {
            let traj = self.problem.solve_forward(rho)?;
            let energies =
                elastic_energy_trajectory(self.problem.mesh(), self.problem.params(), &traj);
            let (energy, bone) = self.state_terms(&energies, &traj)?;
            (energy, bone, energies, Some(traj))
        } else {
            (0.0, 0.0, Vec::new(), None)
        };
        let terms = ObjectiveTerms {
            energy,
            bone,
            regularizer,
            penalty,
        };
        Ok(Evaluation {
            value: terms.total(),
            terms,
            energies,
            trajectory,
        })
    }

    pub fn value(&self, rho: &DensityField) -> Result<f64> {
        Ok(self.evaluate(rho)?.value)
    }
}
