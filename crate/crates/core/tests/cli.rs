use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_BOX: &str = r#"
[mesh]
kind = "box"
divisions = [2, 2, 4]
lengths = [5.0, 5.0, 10.0]

[schedule]
horizon_weeks = 4.0
dt_weeks = 1.0
"#;

fn run(sub: &str, config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_scaffold-opt"))
        .args([sub, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env("SCAFFOLD_OPT_THREADS", "2")
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

struct Tokens<'a> {
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> &'a str {
        let t = self.items[self.pos];
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).copied()
    }

    fn number(&mut self) -> f64 {
        self.next().parse().unwrap()
    }

    fn count(&mut self) -> usize {
        self.next().parse().unwrap()
    }
}

/// Checks the legacy-VTK layout and returns (points, cells).
fn validate_vtk(path: &Path) -> (usize, usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# vtk DataFile Version 3.0"));
    lines.next().unwrap();
    assert_eq!(lines.next(), Some("ASCII"));
    assert_eq!(lines.next(), Some("DATASET UNSTRUCTURED_GRID"));
    let mut t = Tokens {
        items: lines.flat_map(str::split_whitespace).collect(),
        pos: 0,
    };
    assert_eq!(t.next(), "POINTS");
    let np = t.count();
    assert_eq!(t.next(), "double");
    for _ in 0..3 * np {
        assert!(t.number().is_finite());
    }
    assert_eq!(t.next(), "CELLS");
    let nc = t.count();
    assert_eq!(t.count(), 5 * nc);
    for _ in 0..nc {
        assert_eq!(t.next(), "4");
        for _ in 0..4 {
            assert!(t.count() < np);
        }
    }
    assert_eq!(t.next(), "CELL_TYPES");
    assert_eq!(t.count(), nc);
    for _ in 0..nc {
        assert_eq!(t.next(), "10");
    }
    let mut fields = 0;
    while t.peek().is_some() {
        let n = match t.next() {
            "POINT_DATA" => np,
            "CELL_DATA" => nc,
            other => panic!("unexpected section {other}"),
        };
        assert_eq!(t.count(), n);
        while let Some(kind @ ("SCALARS" | "VECTORS")) = t.peek() {
            t.next();
            t.next();
            assert_eq!(t.next(), "double");
            let width = if kind == "SCALARS" {
                assert_eq!(t.next(), "1");
                assert_eq!(t.next(), "LOOKUP_TABLE");
                assert_eq!(t.next(), "default");
                1
            } else {
                3
            };
            for _ in 0..width * n {
                assert!(t.number().is_finite());
            }
            fields += 1;
        }
    }
    assert!(fields > 0);
    (np, nc)
}

#[test]
fn simulate_writes_one_file_per_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", SMALL_BOX, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let od = dir.path().join("out");
    let mut vtk: Vec<_> = fs::read_dir(&od)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "vtk"))
        .collect();
    vtk.sort();
    assert_eq!(vtk.len(), 5);
    for p in &vtk {
        assert_eq!(validate_vtk(p), (3 * 3 * 5, 6 * 2 * 2 * 4));
    }
    let rows = csv_rows(&od.join("energy.csv"));
    assert_eq!(rows.len(), 5);
    for (n, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<f64>().unwrap(), n as f64);
        assert!(r[1].parse::<f64>().unwrap() > 0.0);
    }
    let header = fs::read_to_string(od.join("energy.csv")).unwrap();
    assert!(header.starts_with("t_weeks,elastic_energy_Nmm,bone_volume_mm3\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let config = format!("{SMALL_BOX}\n[optimizer]\nmax_iter = 3\n");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run("optimize", &config, a.path()).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_scaffold-opt"))
        .args(["optimize", "--config"])
        .arg(a.path().join("run.toml"))
        .arg("--out")
        .arg(b.path().join("out"))
        .env("SCAFFOLD_OPT_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["history.csv", "final/energy.csv"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn missing_mesh_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[mesh]
kind = "gmsh"
path = "no_such_mesh.msh"
regions = { 1 = "design" }
[mesh.facets]
10 = { elastic = "loaded", group = 1, diffusion = "dirichlet" }
"#;
    let out = run("simulate", config, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_mesh.msh"));
}

#[test]
fn malformed_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", "[mesh]\nkind = \"sphere\"\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad_schedule = SMALL_BOX.replace("dt_weeks = 1.0", "dt_weeks = 3.0");
    assert_eq!(
        run("simulate", &bad_schedule, dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn solver_failure_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_BOX}\n[solver.elastic]\ntol = 1e-14\nmax_iter = 1\n");
    let out = run("simulate", &config, dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_iterations_record_the_start() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_BOX}\n[optimizer]\nmax_iter = 0\n");
    assert!(run("optimize", &config, dir.path()).status.success());
    let rows = csv_rows(&dir.path().join("out/history.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
    assert!(dir.path().join("out/density_0000.vtk").exists());
    validate_vtk(&dir.path().join("out/rho.vtk"));
}

#[test]
fn quadratic_config_follows_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        "{SMALL_BOX}\n[objective]\nkind = \"none\"\neta = 1.0\n\
         [optimizer]\ntau0 = 0.01\ngrow = 1.0\nmax_iter = 6\n[initial]\nrho = 0.5\n"
    );
    assert!(run("optimize", &config, dir.path()).status.success());
    let rows = csv_rows(&dir.path().join("out/history.csv"));
    assert_eq!(rows.len(), 7);
    let mut r = 0.5f64;
    for row in &rows[1..] {
        r *= 1.0 - 2.0 * 0.01;
        let lo: f64 = row[4].parse().unwrap();
        let hi: f64 = row[5].parse().unwrap();
        assert!((lo - r).abs() <= 1e-10 && (hi - r).abs() <= 1e-10);
    }
}

#[test]
fn grad_check_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[mesh]
kind = "box"
divisions = [2, 1, 2]
lengths = [2.0, 1.0, 2.0]

[schedule]
horizon_weeks = 2.0

[gradient]
directions = 3
"#;
    let out = run("grad-check", config, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let rows = csv_rows(&dir.path().join("out/grad_check.csv"));
    assert_eq!(rows.len(), 3 * 2 * 3);
    let summary = csv_rows(&dir.path().join("out/grad_check_summary.csv"));
    assert_eq!(summary.len(), 4 + 2 * 3);
}

#[test]
fn stress_shielding_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[mesh]
kind = "box"
divisions = [4, 2, 2]
lengths = [4.0, 2.0, 4.0]
fixture = { axis = 0, min = 0.0, max = 1.0 }

[load]
total_force_n = 8.0
force_groups = [1, 2]
tractions = { 3 = { vector = [0.0, 0.0, 0.0] }, 4 = { vector = [0.0, 0.0, 0.0] } }

[schedule]
horizon_weeks = 2.0

[optimizer]
max_iter = 2
"#;
    let out = run("stress-shielding", config, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let od = dir.path().join("out");
    let rows = csv_rows(&od.join("shielding_report.csv"));
    let keys: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert_eq!(
        keys,
        [("A", "near"), ("A", "far"), ("B", "near"), ("B", "far")]
    );
    for arch in ["arch_a", "arch_b"] {
        for f in ["rho.vtk", "strain_t0.vtk", "strain_t2.vtk"] {
            validate_vtk(&od.join(arch).join(f));
        }
    }
}
