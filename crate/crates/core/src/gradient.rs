//! Derivative of the reduced objective with respect to nodal density.
//!
//! [`gradient_fd`] is the central-difference oracle. [`gradient_adjoint`]
//! transposes the discrete time-stepping scheme of [`crate::forward`] step by
//! step, so both agree up to finite-difference and solver error.

use rayon::prelude::*;

use crate::error::Result;
use crate::fem::{element_average, element_gradient, element_strain, solve_cg, ConstrainedSystem};
use crate::forward::{capacity_update_partials, DensityField, StateTrajectory};
use crate::materials::{stimulus_derivative, IsotropicTensor};
use crate::mesh::ElasticMode;
use crate::objective::{
    box_penalty_gradient, lp_time_norm_gradient, unit_energy_density, Objective, ObjectiveKind,
};

/// Central differences `(Φ(ρ + h e_j) − Φ(ρ − h e_j)) / 2h` on unmasked nodes,
/// zero elsewhere. Perturbed densities are not clamped.
pub fn gradient_fd(objective: &Objective, rho: &DensityField, h: f64) -> Result<Vec<f64>> {
    let mask = objective.problem().design_nodes();
    (0..rho.len())
        .into_par_iter()
        .map(|j| {
            if !mask[j] {
                return Ok(0.0);
            }
            let probe = |delta: f64| {
                let mut r = rho.clone();
                r.values_mut()[j] += delta;
                objective.value(&r)
            };
            Ok((probe(h)? - probe(-h)?) / (2.0 * h))
        })
        .collect()
}

/// Central difference of `Φ` along direction `d`.
pub fn directional_fd(objective: &Objective, rho: &DensityField, d: &[f64], h: f64) -> Result<f64> {
    let shifted = |s: f64| {
        let v = rho
            .values()
            .iter()
            .zip(d)
            .map(|(r, di)| r + s * di)
            .collect();
        objective.value(&DensityField::new(v))
    };
    let (plus, minus) = rayon::join(|| shifted(h), || shifted(-h));
    Ok((plus? - minus?) / (2.0 * h))
}

/// Scaled max-norm discrepancy `max_j |g_j − r_j| / max_j |r_j|` against a
/// reference `r`; absolute when the reference vanishes.
pub fn relative_discrepancy(g: &[f64], reference: &[f64]) -> f64 {
    let diff = g
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Relative Euclidean discrepancy `‖g − r‖ / ‖r‖`.
pub fn relative_l2_discrepancy(g: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = g
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Objective value and adjoint gradient from one forward and one reverse sweep.
pub fn value_and_gradient(objective: &Objective, rho: &DensityField) -> Result<(f64, Vec<f64>)> {
    let eval = objective.evaluate(rho)?;
    let problem = objective.problem();
    let spec = objective.spec();
    let p = problem.params();

    let mut grad = match &eval.trajectory {
        Some(traj) => state_gradient(objective, traj, &eval.energies)?,
        None => vec![0.0; rho.len()],
    };
    if spec.eta > 0.0 {
        for (g, r) in grad
            .iter_mut()
            .zip(objective.regularizer().gradient(rho.values()))
        {
            *g += spec.eta * r;
        }
    }
    if spec.beta > 0.0 {
        let k = box_penalty_gradient(rho.values(), objective.regularizer().mass(), p.c_p, p.cap_p);
        for (g, kj) in grad.iter_mut().zip(k) {
            *g += spec.beta * kj;
        }
    }
    for (g, &m) in grad.iter_mut().zip(problem.design_nodes()) {
        if !m {
            *g = 0.0;
        }
    }
    Ok((eval.value, grad))
}

pub fn gradient_adjoint(objective: &Objective, rho: &DensityField) -> Result<Vec<f64>> {
    Ok(value_and_gradient(objective, rho)?.1)
}

/// Reverse sweep through the stored trajectory for the state terms `s F + s G`.
fn state_gradient(
    objective: &Objective,
    traj: &StateTrajectory,
    energies: &[f64],
) -> Result<Vec<f64>> {
    let problem = objective.problem();
    let spec = objective.spec();
    let mesh = problem.mesh();
    let p = problem.params();
    let dt = problem.schedule().dt_weeks;
    let s = spec.sense.sign();
    let ne = mesh.num_elements();
    let nn = mesh.num_nodes();
    let steps = traj.num_states() - 1;
    let rho_e = &traj.rho_elem;
    let geom = mesh.geometry();

    let energy_bar: Vec<f64> = match spec.kind {
        ObjectiveKind::MaxEnergyLp | ObjectiveKind::MinEnergyLp => {
            lp_time_norm_gradient(energies, dt, spec.p)?
                .into_iter()
                .map(|g| s * g)
                .collect()
        }
        _ => vec![0.0; energies.len()],
    };

    let mut rho_bar = vec![0.0; ne];
    let mut b_bar = vec![0.0; ne];
    let mut c_bar = vec![0.0; ne];
    let mut a_bar = [vec![0.0; nn], vec![0.0; nn]];
    if spec.kind == ObjectiveKind::BoneVolume {
        for e in 0..ne {
            if !mesh.is_fixture(e) {
                b_bar[e] = s * geom[e].volume;
            }
        }
    }

    let systems = problem.diffusion_systems(rho_e)?;
    let mut stim_bar = vec![0.0; ne];
    elastic_adjoint(
        objective,
        traj,
        steps,
        energy_bar[steps],
        &stim_bar,
        &mut rho_bar,
        &mut b_bar,
    )?;

    for n in (0..steps).rev() {
        // growth laws, bone first
        let mut a_avg_bar = [vec![0.0; ne], vec![0.0; ne]];
        let mut c_prev_bar = vec![0.0; ne];
        let mut b_prev_bar = vec![0.0; ne];
        for e in 0..ne {
            if mesh.is_fixture(e) {
                continue;
            }
            let cap = 1.0 - rho_e[e];
            let a1 = element_average(mesh, e, &traj.a[0][n + 1]);
            let a2 = element_average(mesh, e, &traj.a[1][n + 1]);
            let (c0, c1, b0) = (traj.c[n][e], traj.c[n + 1][e], traj.b[n][e]);

            let gb = p.k4 * a1 * c1;
            let (dx, dg, dk) = capacity_update_partials(b0, dt * gb, cap);
            b_prev_bar[e] += b_bar[e] * dx;
            let g_bar = b_bar[e] * dg * dt;
            a_avg_bar[0][e] += g_bar * p.k4 * c1;
            let c1_bar = c_bar[e] + g_bar * p.k4 * a1;
            rho_bar[e] -= b_bar[e] * dk;

            let growth = 1.0 + p.k7 * c0;
            let gc = p.k6 * a1 * a2 * growth;
            let (dx, dg, dk) = capacity_update_partials(c0, dt * gc, cap);
            c_prev_bar[e] += c1_bar * dx;
            let g_bar = c1_bar * dg * dt;
            a_avg_bar[0][e] += g_bar * p.k6 * a2 * growth;
            a_avg_bar[1][e] += g_bar * p.k6 * a1 * growth;
            c_prev_bar[e] += g_bar * p.k6 * a1 * a2 * p.k7;
            rho_bar[e] -= c1_bar * dk;
        }
        for (species, avg_bar) in a_avg_bar.iter().enumerate() {
            for (e, t) in mesh.tets().iter().enumerate() {
                for &j in t {
                    a_bar[species][j] += 0.25 * avg_bar[e];
                }
            }
        }

        // diffusion of both species
        stim_bar.iter_mut().for_each(|v| *v = 0.0);
        for species in 0..2 {
            let sys = &systems.systems[species];
            let mut rhs = std::mem::take(&mut a_bar[species]);
            sys.homogenize(&mut rhs);
            let mu = solve_cg(sys.matrix(), &rhs, &problem.solver().diffusion, None)?.x;
            let a_next = &traj.a[species][n + 1];
            let k2 = p.k2[species];
            for e in 0..ne {
                let t = &mesh.tets()[e];
                let src_bar: f64 =
                    t.iter().map(|&j| mu[j]).sum::<f64>() * dt * 0.25 * geom[e].volume;
                c_prev_bar[e] += src_bar * k2 * traj.stimulus[n][e];
                stim_bar[e] += src_bar * k2 * traj.c[n][e];
                if !mesh.is_fixture(e) {
                    let gm = element_gradient(mesh, e, &mu);
                    let ga = element_gradient(mesh, e, a_next);
                    let dot = gm[0] * ga[0] + gm[1] * ga[1] + gm[2] * ga[2];
                    rho_bar[e] += dt * p.d0 * geom[e].volume * dot;
                }
            }
            a_bar[species] = mu
                .iter()
                .zip(problem.lumped_mass())
                .map(|(m, mj)| m * mj)
                .collect();
        }
        c_bar = c_prev_bar;
        b_bar = b_prev_bar;

        elastic_adjoint(
            objective,
            traj,
            n,
            energy_bar[n],
            &stim_bar,
            &mut rho_bar,
            &mut b_bar,
        )?;
    }

    let mut grad = vec![0.0; nn];
    for (e, t) in mesh.tets().iter().enumerate() {
        for &j in t {
            grad[j] += 0.25 * rho_bar[e];
        }
    }
    Ok(grad)
}

/// Transposes the elasticity solve at level `n` given the adjoints of the
/// energy `E_n` and of the element stimuli.
fn elastic_adjoint(
    objective: &Objective,
    traj: &StateTrajectory,
    n: usize,
    energy_bar: f64,
    stim_bar: &[f64],
    rho_bar: &mut [f64],
    b_bar: &mut [f64],
) -> Result<()> {
    let problem = objective.problem();
    let mesh = problem.mesh();
    let p = problem.params();
    let u = &traj.u[n];
    let young = &traj.young[n];
    if energy_bar == 0.0 && stim_bar.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    let k = problem.elastic_op().assemble_young(young, p.nu);
    let mut u_bar = vec![0.0; u.len()];
    if energy_bar != 0.0 {
        let ku = k.matvec(u);
        for (ub, kv) in u_bar.iter_mut().zip(&ku) {
            *ub += energy_bar * kv;
        }
    }
    for (e, t) in mesh.tets().iter().enumerate() {
        if stim_bar[e] == 0.0 {
            continue;
        }
        let eps = element_strain(mesh, e, u);
        let d = stimulus_derivative(&eps, p.stimulus)?;
        let grads = &mesh.geometry()[e].grads;
        for (a, &node) in t.iter().enumerate() {
            for i in 0..3 {
                let v: f64 = (0..3).map(|kk| d[i][kk] * grads[a][kk]).sum();
                u_bar[3 * node + i] += stim_bar[e] * v;
            }
        }
    }
    let v = match problem.mode() {
        ElasticMode::PureNeumann => {
            let modes = problem
                .deflation()
                .expect("pure-Neumann problems carry rigid modes");
            modes.project(&mut u_bar);
            solve_cg(&k, &u_bar, &problem.solver().elastic, Some(modes))?.x
        }
        ElasticMode::HardDirichlet => {
            let sys = ConstrainedSystem::new(k, problem.elastic_dofs());
            sys.homogenize(&mut u_bar);
            solve_cg(sys.matrix(), &u_bar, &problem.solver().elastic, None)?.x
        }
    };
    let psi = unit_energy_density(mesh, p.nu, u);
    let unit = IsotropicTensor::from_young(1.0, p.nu);
    let sigma = traj.sigma[n];
    for e in 0..mesh.num_elements() {
        if mesh.is_fixture(e) {
            continue;
        }
        let eu = element_strain(mesh, e, u);
        let ev = element_strain(mesh, e, &v);
        let y_bar = energy_bar * psi[e] - mesh.geometry()[e].volume * unit.contract(&ev, &eu);
        rho_bar[e] += y_bar * p.e_scaffold * sigma;
        b_bar[e] += y_bar * p.e_bone;
    }
    Ok(())
}
