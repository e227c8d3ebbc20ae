//! Drivers behind the command-line subcommands. Each writes its files into an
//! output directory and returns a summary for the caller to report.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{DensityField, Problem, StateTrajectory};
use crate::gradient::{directional_fd, gradient_fd, relative_discrepancy, value_and_gradient};
use crate::io::{
    write_csv, write_history, EnergyRow, GradCheckRow, ShieldingRow, VtkField, VtkFile,
};
use crate::mesh::TetMesh;
use crate::objective::{bone_volume, elastic_energy_trajectory, unit_energy_density, Objective};
use crate::optimizer::{gradient_flow_with, OptimizerState};

pub const ENERGY_HEADER: [&str; 3] = ["t_weeks", "elastic_energy_Nmm", "bone_volume_mm3"];
pub const SHIELDING_HEADER: [&str; 4] = ["arch", "region", "mean_rho", "mean_stimulus"];
const GRAD_HEADER: [&str; 5] = [
    "node",
    "masked",
    "adjoint",
    "finite_difference",
    "abs_error",
];

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn region_field(mesh: &TetMesh) -> VtkField {
    VtkField::Scalar(
        (0..mesh.num_elements())
            .map(|e| if mesh.is_fixture(e) { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Strain energy per unit volume in every element at time level `n`.
fn energy_density(problem: &Problem, traj: &StateTrajectory, n: usize) -> Vec<f64> {
    let mesh = problem.mesh();
    unit_energy_density(mesh, problem.params().nu, &traj.u[n])
        .iter()
        .zip(&traj.young[n])
        .zip(mesh.geometry())
        .map(|((psi, y), g)| psi * y / g.volume)
        .collect()
}

fn state_vtk(problem: &Problem, rho: &DensityField, traj: &StateTrajectory, n: usize) -> VtkFile {
    VtkFile::new(format!("t = {} weeks", traj.times[n]))
        .point("u", VtkField::Vector(traj.u[n].clone()))
        .point("a1", VtkField::Scalar(traj.a[0][n].clone()))
        .point("a2", VtkField::Scalar(traj.a[1][n].clone()))
        .point("rho", VtkField::Scalar(rho.values().to_vec()))
        .cell("c", VtkField::Scalar(traj.c[n].clone()))
        .cell("b", VtkField::Scalar(traj.b[n].clone()))
        .cell("rho_elem", VtkField::Scalar(traj.rho_elem.clone()))
        .cell("stimulus", VtkField::Scalar(traj.stimulus[n].clone()))
        .cell(
            "energy_density",
            VtkField::Scalar(energy_density(problem, traj, n)),
        )
        .cell("fixture", region_field(problem.mesh()))
}

/// Writes `state_NNNN.vtk` every `cadence` steps (and at the final step) plus
/// `energy.csv`.
pub fn write_trajectory(
    problem: &Problem,
    rho: &DensityField,
    traj: &StateTrajectory,
    dir: &Path,
    cadence: usize,
) -> Result<Vec<EnergyRow>> {
    create_dir(dir)?;
    let mesh = problem.mesh();
    let energies = elastic_energy_trajectory(mesh, problem.params(), traj);
    let last = traj.num_states() - 1;
    let mut rows = Vec::with_capacity(traj.num_states());
    for n in 0..=last {
        rows.push(EnergyRow {
            t_weeks: traj.times[n],
            elastic_energy_nmm: energies[n],
            bone_volume_mm3: bone_volume(mesh, &traj.b[n]),
        });
        if n % cadence == 0 || n == last {
            state_vtk(problem, rho, traj, n).write(&dir.join(format!("state_{n:04}.vtk")), mesh)?;
        }
    }
    write_csv(&dir.join("energy.csv"), &ENERGY_HEADER, &rows)?;
    Ok(rows)
}

pub struct Simulation {
    pub problem: Problem,
    pub rho: DensityField,
    pub trajectory: StateTrajectory,
    pub energy: Vec<EnergyRow>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Simulation> {
    let mesh = cfg.build_mesh()?;
    let rho = cfg.initial_density(&mesh);
    let problem = cfg.build_problem(mesh)?;
    let trajectory = problem.solve_forward(&rho)?;
    let energy = write_trajectory(&problem, &rho, &trajectory, out, cfg.output.cadence)?;
    Ok(Simulation {
        problem,
        rho,
        trajectory,
        energy,
    })
}

fn density_vtk(mesh: &TetMesh, rho: &DensityField, title: &str) -> VtkFile {
    VtkFile::new(title)
        .point("rho", VtkField::Scalar(rho.values().to_vec()))
        .cell("rho_elem", VtkField::Scalar(rho.element_values(mesh)))
        .cell("fixture", region_field(mesh))
}

/// Runs the gradient flow, writing `history.csv`, density snapshots every
/// `cadence` iterations and the final `rho.vtk` into `dir`.
pub fn optimize_problem(
    problem: &Problem,
    cfg: &RunConfig,
    rho0: DensityField,
    dir: &Path,
) -> Result<OptimizerState> {
    create_dir(dir)?;
    let objective = Objective::new(problem, cfg.objective)?;
    let mesh = problem.mesh();
    let cadence = cfg.output.cadence;
    let state = gradient_flow_with(&objective, rho0, &cfg.optimizer, |row, rho| {
        if row.iter % cadence == 0 {
            density_vtk(mesh, rho, &format!("iterate {}", row.iter))
                .write(&dir.join(format!("density_{:04}.vtk", row.iter)), mesh)?;
        }
        Ok(())
    })?;
    write_history(&dir.join("history.csv"), &state.history)?;
    density_vtk(mesh, &state.rho, "optimized density").write(&dir.join("rho.vtk"), mesh)?;
    Ok(state)
}

pub struct Optimization {
    pub state: OptimizerState,
    pub final_energy: Vec<EnergyRow>,
}

pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<Optimization> {
    let mesh = cfg.build_mesh()?;
    let rho0 = cfg.initial_density(&mesh);
    let problem = cfg.build_problem(mesh)?;
    let state = optimize_problem(&problem, cfg, rho0, out)?;
    let traj = problem.solve_forward(&state.rho)?;
    let final_energy = write_trajectory(
        &problem,
        &state.rho,
        &traj,
        &out.join("final"),
        cfg.output.cadence,
    )?;
    Ok(Optimization {
        state,
        final_energy,
    })
}

pub struct GradCheck {
    pub max_discrepancy: f64,
    pub directional: Vec<(f64, f64)>,
    pub max_directional_discrepancy: f64,
    pub passed: bool,
}

/// Random directions supported on unmasked nodes with entries in `[−1, 1]`.
pub fn random_directions(mask: &[bool], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            mask.iter()
                .map(|&m| {
                    let v: f64 = rng.gen_range(-1.0..=1.0);
                    if m {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn directional_discrepancy(fd: f64, adjoint: f64) -> f64 {
    let scale = fd.abs();
    if scale == 0.0 {
        (fd - adjoint).abs()
    } else {
        (fd - adjoint).abs() / scale
    }
}

/// Compares adjoint and central-difference gradients at `rho`, writing
/// `grad_check.csv` (per node) and `grad_check_summary.csv`.
pub fn grad_check_problem(
    problem: &Problem,
    cfg: &RunConfig,
    rho: &DensityField,
    dir: &Path,
) -> Result<GradCheck> {
    create_dir(dir)?;
    let objective = Objective::new(problem, cfg.objective)?;
    let h = cfg.gradient.h;
    let (_, adjoint) = value_and_gradient(&objective, rho)?;
    let fd = gradient_fd(&objective, rho, h)?;
    let mask = problem.design_nodes();
    let rows: Vec<GradCheckRow> = (0..rho.len())
        .map(|j| GradCheckRow {
            node: j,
            masked: !mask[j],
            adjoint: adjoint[j],
            finite_difference: fd[j],
            abs_error: (adjoint[j] - fd[j]).abs(),
        })
        .collect();
    write_csv(&dir.join("grad_check.csv"), &GRAD_HEADER, &rows)?;

    let max_discrepancy = relative_discrepancy(&adjoint, &fd);
    let mut directional = Vec::new();
    for d in random_directions(mask, cfg.gradient.directions, cfg.seed) {
        let fd_d = directional_fd(&objective, rho, &d, h)?;
        let ad_d: f64 = adjoint.iter().zip(&d).map(|(g, di)| g * di).sum();
        directional.push((fd_d, ad_d));
    }
    let max_directional_discrepancy = directional
        .iter()
        .map(|(f, a)| directional_discrepancy(*f, *a))
        .fold(0.0, f64::max);
    let passed = max_discrepancy <= cfg.gradient.tolerance
        && max_directional_discrepancy <= cfg.gradient.tolerance;

    let mut summary: Vec<(String, f64)> = vec![
        ("max_relative_discrepancy".into(), max_discrepancy),
        (
            "max_directional_discrepancy".into(),
            max_directional_discrepancy,
        ),
        ("tolerance".into(), cfg.gradient.tolerance),
        ("h".into(), h),
    ];
    for (i, (f, a)) in directional.iter().enumerate() {
        summary.push((format!("direction_{i}_fd"), *f));
        summary.push((format!("direction_{i}_adjoint"), *a));
    }
    write_csv(
        &dir.join("grad_check_summary.csv"),
        &["metric", "value"],
        &summary,
    )?;
    Ok(GradCheck {
        max_discrepancy,
        directional,
        max_directional_discrepancy,
        passed,
    })
}

pub fn grad_check(cfg: &RunConfig, out: &Path) -> Result<GradCheck> {
    let mesh = cfg.build_mesh()?;
    let rho = check_density(&mesh, cfg);
    let problem = cfg.build_problem(mesh)?;
    grad_check_problem(&problem, cfg, &rho, out)
}

/// Non-uniform density inside the box so that the check exercises spatial
/// variation; uniform densities hide transposition errors in symmetric meshes.
pub fn check_density(mesh: &TetMesh, cfg: &RunConfig) -> DensityField {
    let p = &cfg.materials;
    let mid = cfg.initial.rho.unwrap_or(0.5 * (p.c_p + p.cap_p));
    let amp = 0.25
        * (p.cap_p - p.c_p)
            .min(2.0 * (mid - p.c_p))
            .min(2.0 * (p.cap_p - mid));
    let (lo, hi) = bounding_box(mesh);
    DensityField::new(
        mesh.nodes()
            .iter()
            .map(|x| {
                let s: f64 = (0..3)
                    .map(|k| {
                        let len = (hi[k] - lo[k]).max(f64::MIN_POSITIVE);
                        (k as f64 + 1.0) * (x[k] - lo[k]) / len
                    })
                    .sum();
                mid + amp * (2.1 * s).sin()
            })
            .collect(),
    )
}

fn bounding_box(mesh: &TetMesh) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.nodes() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

pub struct Architecture {
    pub state: OptimizerState,
    /// Forward run of the optimized density under the fixture-present model.
    pub trajectory: StateTrajectory,
    pub near: RegionMeans,
    pub far: RegionMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMeans {
    pub rho: f64,
    /// Mean stimulus at t = 0.
    pub stimulus: f64,
}

pub struct Shielding {
    pub a: Architecture,
    pub b: Architecture,
    pub rows: Vec<ShieldingRow>,
}

/// Time of the second strain snapshot written per architecture.
pub const STRAIN_SNAPSHOT_WEEKS: f64 = 8.0;

/// Relative margin required for the directional comparisons.
pub const SHIELDING_MARGIN: f64 = 0.01;

impl Shielding {
    /// Architecture B puts less scaffold next to the fixture than far from it.
    pub fn low_density_near_fixture(&self) -> bool {
        self.b.near.rho < (1.0 - SHIELDING_MARGIN) * self.b.far.rho
    }

    /// Architecture B strains the tissue next to the fixture more than A.
    pub fn mitigates_shielding(&self) -> bool {
        self.b.near.stimulus > (1.0 + SHIELDING_MARGIN) * self.a.near.stimulus
    }
}

fn volume_mean(mesh: &TetMesh, mask: &[bool], v: &[f64]) -> f64 {
    let (mut sum, mut vol) = (0.0, 0.0);
    for (e, g) in mesh.geometry().iter().enumerate() {
        if mask[e] {
            sum += g.volume * v[e];
            vol += g.volume;
        }
    }
    sum / vol
}

/// Optimizes with the fixture excluded (A, on the DESIGN submesh) and
/// included (B), then evaluates both densities under the fixture-present model.
pub fn stress_shielding(cfg: &RunConfig, out: &Path) -> Result<Shielding> {
    let mesh = cfg.build_mesh()?;
    if !mesh.has_fixture() {
        return Err(Error::Config(
            "stress-shielding needs a mesh with a fixture region".into(),
        ));
    }
    let near = mesh.near_fixture_elements();
    let far: Vec<bool> = (0..mesh.num_elements())
        .map(|e| !mesh.is_fixture(e) && !near[e])
        .collect();
    if !far.iter().any(|f| *f) || !near.iter().any(|n| *n) {
        return Err(Error::Config(
            "fixture leaves no near or no far design region".into(),
        ));
    }
    let rho0 = cfg.initial_density(&mesh);
    let (scaffold, node_map) = mesh.design_submesh()?;
    let rho0_a = cfg.initial_density(&scaffold);
    let with_fixture = cfg.build_problem(mesh.clone())?;
    let without_fixture = cfg.build_problem(scaffold)?;
    let dir_a = out.join("arch_a");
    let dir_b = out.join("arch_b");
    let (state_a, state_b) = rayon::join(
        || optimize_problem(&without_fixture, cfg, rho0_a, &dir_a),
        || optimize_problem(&with_fixture, cfg, rho0.clone(), &dir_b),
    );
    let (mut state_a, state_b) = (state_a?, state_b?);
    // Plate-only nodes are not design nodes; they keep the initial value.
    let mut lifted = rho0.into_values();
    for (i, &old) in node_map.iter().enumerate() {
        lifted[old] = state_a.rho.values()[i];
    }
    state_a.rho = DensityField::new(lifted);

    let evaluate = |state: OptimizerState, dir: &Path| -> Result<Architecture> {
        let traj = with_fixture.solve_forward(&state.rho)?;
        // Snapshot at eight weeks, or the last state for shorter horizons.
        let later = traj
            .times
            .iter()
            .position(|t| *t >= STRAIN_SNAPSHOT_WEEKS - 1e-9)
            .unwrap_or(traj.num_states() - 1);
        for (n, tag) in [
            (0, "t0".to_string()),
            (later, format!("t{}", traj.times[later])),
        ] {
            state_vtk(&with_fixture, &state.rho, &traj, n)
                .cell(
                    "near_fixture",
                    VtkField::Scalar(near.iter().map(|&b| b as u8 as f64).collect()),
                )
                .write(&dir.join(format!("strain_{tag}.vtk")), &mesh)?;
        }
        let means = |mask: &[bool]| RegionMeans {
            rho: volume_mean(&mesh, mask, &traj.rho_elem),
            stimulus: volume_mean(&mesh, mask, &traj.stimulus[0]),
        };
        Ok(Architecture {
            near: means(&near),
            far: means(&far),
            state,
            trajectory: traj,
        })
    };
    let a = evaluate(state_a, &dir_a)?;
    let b = evaluate(state_b, &dir_b)?;
    let mut rows = Vec::new();
    for (name, arch) in [("A", &a), ("B", &b)] {
        for (region, m) in [("near", arch.near), ("far", arch.far)] {
            rows.push(ShieldingRow {
                arch: name.into(),
                region: region.into(),
                mean_rho: m.rho,
                mean_stimulus: m.stimulus,
            });
        }
    }
    write_csv(&out.join("shielding_report.csv"), &SHIELDING_HEADER, &rows)?;
    Ok(Shielding { a, b, rows })
}

/// Output directory: the CLI override, else the config value.
pub fn output_dir(cfg: &RunConfig, cli: Option<PathBuf>) -> PathBuf {
    cli.unwrap_or_else(|| cfg.output.dir.clone())
}
