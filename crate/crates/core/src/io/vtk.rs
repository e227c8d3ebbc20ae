use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::TetMesh;

/// VTK cell type of a linear tetrahedron.
const VTK_TETRA: u8 = 10;

#[derive(Debug, Clone)]
pub enum VtkField {
    Scalar(Vec<f64>),
    /// Three components per entry, interleaved.
    Vector(Vec<f64>),
}

/// One `UNSTRUCTURED_GRID` snapshot with point and cell data.
#[derive(Debug, Clone, Default)]
pub struct VtkFile {
    title: String,
    point_data: Vec<(String, VtkField)>,
    cell_data: Vec<(String, VtkField)>,
}

impl VtkFile {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn point(mut self, name: &str, field: VtkField) -> Self {
        self.point_data.push((name.to_string(), field));
        self
    }

    pub fn cell(mut self, name: &str, field: VtkField) -> Self {
        self.cell_data.push((name.to_string(), field));
        self
    }

    pub fn render(&self, mesh: &TetMesh) -> Result<String> {
        let np = mesh.num_nodes();
        let ne = mesh.num_elements();
        let mut s = String::new();
        // The header line is fixed by the format; the title must fit on one line.
        let title: String = self
            .title
            .chars()
            .filter(|c| *c != '\n')
            .take(255)
            .collect();
        let _ = writeln!(
            s,
            "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID"
        );
        let _ = writeln!(s, "POINTS {np} double");
        for p in mesh.nodes() {
            let _ = writeln!(s, "{} {} {}", num(p[0]), num(p[1]), num(p[2]));
        }
        let _ = writeln!(s, "CELLS {ne} {}", 5 * ne);
        for t in mesh.tets() {
            let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(s, "CELL_TYPES {ne}");
        for _ in 0..ne {
            let _ = writeln!(s, "{VTK_TETRA}");
        }
        section(&mut s, "POINT_DATA", np, &self.point_data)?;
        section(&mut s, "CELL_DATA", ne, &self.cell_data)?;
        Ok(s)
    }

    pub fn write(&self, path: &Path, mesh: &TetMesh) -> Result<()> {
        let text = self.render(mesh)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn section(s: &mut String, kind: &str, count: usize, fields: &[(String, VtkField)]) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    let _ = writeln!(s, "{kind} {count}");
    for (name, field) in fields {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid VTK field name {name:?}")));
        }
        match field {
            VtkField::Scalar(v) => {
                check_len(name, v.len(), count)?;
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{}", num(*x));
                }
            }
            VtkField::Vector(v) => {
                check_len(name, v.len(), 3 * count)?;
                let _ = writeln!(s, "VECTORS {name} double");
                for c in v.chunks(3) {
                    let _ = writeln!(s, "{} {} {}", num(c[0]), num(c[1]), num(c[2]));
                }
            }
        }
    }
    Ok(())
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!(
            "VTK field {name} has {got} values, expected {want}"
        )));
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}
