//! Projected L² gradient flow with backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::DensityField;
use crate::gradient::value_and_gradient;
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Initial step. `None` picks `0.05 (C_P − c_P) / max|d_0|`.
    pub tau0: Option<f64>,
    pub max_iter: usize,
    pub shrink: f64,
    pub grow: f64,
    pub max_halvings: usize,
    /// Stop once the masked L² norm of the gradient drops to this value.
    pub tol_g: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tau0: None,
            max_iter: 30,
            shrink: 0.5,
            grow: 1.2,
            max_halvings: 20,
            tol_g: 1e-10,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau0 {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tau0 must be positive, got {t}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.grow >= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < shrink < 1 and grow >= 1, got {} and {}",
                self.shrink, self.grow
            )));
        }
        if !(self.tol_g >= 0.0) {
            return Err(Error::Config(format!(
                "tol_g must be >= 0, got {}",
                self.tol_g
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    MaxIter,
    Converged,
    NoDescent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_l2: f64,
    /// Step that produced this iterate (0 for the start).
    pub step: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub rho: DensityField,
    pub objective: f64,
    pub grad_l2: f64,
    pub tau: f64,
    pub status: Status,
    pub history: Vec<HistoryRow>,
}

/// L² Riesz representative: solves `M_lumped d = g`, masked entries zero.
pub fn l2_riesz(g: &[f64], mass: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(mass)
        .map(|(gj, mj)| if *mj > 0.0 { gj / mj } else { 0.0 })
        .collect()
}

/// `sqrt(gᵀ M⁻¹ g)`, the L² norm of the Riesz representative.
pub fn dual_norm(g: &[f64], mass: &[f64]) -> f64 {
    g.iter()
        .zip(mass)
        .filter(|(_, m)| **m > 0.0)
        .map(|(gj, mj)| gj * gj / mj)
        .sum::<f64>()
        .sqrt()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        })
}

/// Projected gradient flow `ρ ← clamp(ρ − τ M⁻¹ g)` from `rho0`.
///
/// A trial step is accepted when `Φ` does not increase; otherwise `τ` is
/// multiplied by `shrink`, at most `max_halvings` times. After acceptance `τ`
/// grows by `grow`, capped at ten times the initial step.
pub fn gradient_flow(
    objective: &Objective,
    rho0: DensityField,
    opts: &OptimizerOptions,
) -> Result<OptimizerState> {
    gradient_flow_with(objective, rho0, opts, |_, _| Ok(()))
}

/// [`gradient_flow`] calling `on_accept` with every recorded iterate,
/// including the start.
pub fn gradient_flow_with(
    objective: &Objective,
    rho0: DensityField,
    opts: &OptimizerOptions,
    mut on_accept: impl FnMut(&HistoryRow, &DensityField) -> Result<()>,
) -> Result<OptimizerState> {
    opts.validate()?;
    let p = objective.problem().params();
    let (lo, hi) = (p.c_p, p.cap_p);
    let mass = objective.regularizer().mass();
    let mut rho = rho0;
    let with_iter = |iteration: usize| {
        move |e: Error| Error::Iterate {
            iteration,
            source: Box::new(e),
        }
    };
    let (mut phi, mut g) = value_and_gradient(objective, &rho).map_err(with_iter(0))?;
    let mut g_norm = dual_norm(&g, mass);
    let (rmin, rmax) = min_max(rho.values());
    let mut history = vec![HistoryRow {
        iter: 0,
        objective: phi,
        grad_l2: g_norm,
        step: 0.0,
        rho_min: rmin,
        rho_max: rmax,
    }];
    on_accept(&history[0], &rho)?;

    let mut d = l2_riesz(&g, mass);
    let d_max = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tau0 = opts.tau0.unwrap_or(if d_max > 0.0 {
        0.05 * (hi - lo) / d_max
    } else {
        1.0
    });
    let mut tau = tau0;
    let mut status = Status::MaxIter;

    for k in 1..=opts.max_iter {
        if g_norm <= opts.tol_g {
            status = Status::Converged;
            break;
        }
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = rho.clone();
            trial
                .values_mut()
                .iter_mut()
                .zip(&d)
                .for_each(|(r, dj)| *r = (*r - tau * dj).clamp(lo, hi));
            let (phi_t, g_t) = value_and_gradient(objective, &trial).map_err(with_iter(k))?;
            if phi_t <= phi {
                accepted = Some((trial, phi_t, g_t));
                break;
            }
            tau *= opts.shrink;
        }
        let Some((trial, phi_t, g_t)) = accepted else {
            status = Status::NoDescent;
            break;
        };
        rho = trial;
        phi = phi_t;
        g = g_t;
        g_norm = dual_norm(&g, mass);
        d = l2_riesz(&g, mass);
        let (rmin, rmax) = min_max(rho.values());
        history.push(HistoryRow {
            iter: k,
            objective: phi,
            grad_l2: g_norm,
            step: tau,
            rho_min: rmin,
            rho_max: rmax,
        });
        on_accept(&history[k], &rho)?;
        tau = (tau * opts.grow).min(10.0 * tau0);
    }
    if status == Status::MaxIter && g_norm <= opts.tol_g {
        status = Status::Converged;
    }
    Ok(OptimizerState {
        rho,
        objective: phi,
        grad_l2: g_norm,
        tau,
        status,
        history,
    })
}
