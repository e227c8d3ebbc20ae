use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::HistoryRow;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyRow {
    pub t_weeks: f64,
    pub elastic_energy_nmm: f64,
    pub bone_volume_mm3: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradCheckRow {
    pub node: usize,
    pub masked: bool,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShieldingRow {
    pub arch: String,
    pub region: String,
    pub mean_rho: f64,
    pub mean_stimulus: f64,
}

#[derive(Serialize)]
struct HistoryRecord {
    iter: usize,
    objective: f64,
    grad_l2: f64,
    step: f64,
    rho_min: f64,
    rho_max: f64,
}

impl From<&HistoryRow> for HistoryRecord {
    fn from(h: &HistoryRow) -> Self {
        Self {
            iter: h.iter,
            objective: h.objective,
            grad_l2: h.grad_l2,
            step: h.step,
            rho_min: h.rho_min,
            rho_max: h.rho_max,
        }
    }
}

/// Writes `rows` as RFC-4180 CSV with a header row taken from `header`.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let rows: Vec<HistoryRecord> = history.iter().map(HistoryRecord::from).collect();
    write_csv(
        path,
        &["iter", "objective", "grad_l2", "step", "rho_min", "rho_max"],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy.csv");
        let rows = [
            EnergyRow {
                t_weeks: 0.0,
                elastic_energy_nmm: 1.5,
                bone_volume_mm3: 0.0,
            },
            EnergyRow {
                t_weeks: 1.0,
                elastic_energy_nmm: 1.25e-3,
                bone_volume_mm3: 0.1,
            },
        ];
        write_csv(
            &path,
            &["t_weeks", "elastic_energy_Nmm", "bone_volume_mm3"],
            &rows,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "t_weeks,elastic_energy_Nmm,bone_volume_mm3\n0.0,1.5,0.0\n1.0,0.00125,0.1\n"
        );
    }
}
