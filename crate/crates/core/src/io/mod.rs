//! File output: VTK legacy ASCII snapshots and CSV tables.

mod tables;
mod vtk;

pub use tables::{write_csv, write_history, EnergyRow, GradCheckRow, ShieldingRow};
pub use vtk::{VtkField, VtkFile};
