//! File output: plain-text matrices, trajectory CSV/JSON.
//!
//! Matrix text format: the first line is `rows cols`, followed by one line per
//! row of space-separated values in `{:.16e}` notation (17 significant digits).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bearing_core::analysis::AnalysisReport;
use bearing_core::linalg::{nullspace_basis, Matrix};
use bearing_core::simulation::Trajectory;
use bearing_core::Formation;
use serde::Serialize;

pub fn matrix_to_text(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Inverse of [`matrix_to_text`].
pub fn matrix_from_text(text: &str) -> Option<Matrix> {
    let mut lines = text.lines();
    let mut header = lines.next()?.split_whitespace().map(|t| t.parse::<usize>());
    let (rows, cols) = (header.next()?.ok()?, header.next()?.ok()?);
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines.take(rows) {
        for token in line.split_whitespace() {
            values.push(token.parse::<f64>().ok()?);
        }
    }
    (values.len() == rows * cols).then(|| Matrix::from_row_slice(rows, cols, &values))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
struct MatrixBundle {
    name: String,
    n: usize,
    d: usize,
    m: usize,
    incidence: Vec<Vec<f64>>,
    bearing_rigidity: Vec<Vec<f64>>,
    bearing_laplacian: Vec<Vec<f64>>,
    /// Basis vectors as columns stored one per entry.
    null_rigidity_basis: Vec<Vec<f64>>,
    null_laplacian_basis: Vec<Vec<f64>>,
}

/// Writes `H`, `R_B`, `L_B` and orthonormal null-space bases (as columns) for
/// `f`, plus one JSON bundle. Returns the written paths.
pub fn write_matrices(dir: &Path, name: &str, f: &Formation, rank_tol: f64) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let h = f.graph().incidence_matrix();
    let r = f.bearing_rigidity_matrix();
    let l = f.bearing_laplacian();
    let null_r = nullspace_basis(r, rank_tol).map_err(io::Error::other)?;
    let null_l = nullspace_basis(l, rank_tol).map_err(io::Error::other)?;

    let files = [
        ("H", &h),
        ("R_B", r),
        ("L_B", l),
        ("null_R_B", null_r.as_matrix()),
        ("null_L_B", null_l.as_matrix()),
    ];
    let mut written = Vec::new();
    for (suffix, m) in files {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, matrix_to_text(m))?;
        written.push(path);
    }
    let bundle = MatrixBundle {
        name: name.to_owned(),
        n: f.agent_count(),
        d: f.dim(),
        m: f.graph().edge_count(),
        incidence: rows_of(&h),
        bearing_rigidity: rows_of(r),
        bearing_laplacian: rows_of(l),
        null_rigidity_basis: rows_of(&null_r.as_matrix().transpose()),
        null_laplacian_basis: rows_of(&null_l.as_matrix().transpose()),
    };
    let path = dir.join(format!("{name}_matrices.json"));
    fs::write(&path, serde_json::to_string_pretty(&bundle)?)?;
    written.push(path);
    Ok(written)
}

fn axis_name(a: usize) -> String {
    match a {
        0 => "x".to_owned(),
        1 => "y".to_owned(),
        2 => "z".to_owned(),
        _ => format!("a{}", a + 1),
    }
}

/// Header plus one row per sample; undefined bearing errors are written as `nan`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.dim;
    let n = traj.positions.first().map_or(0, |p| p.len() / d);
    let mut out = String::from("t");
    for i in 1..=n {
        for a in 0..d {
            write!(out, ",p{i}_{}", axis_name(a)).unwrap();
        }
    }
    out.push_str(",control_norm,bearing_error\n");
    for k in 0..traj.len() {
        write!(out, "{:.16e}", traj.times[k]).unwrap();
        for x in &traj.positions[k] {
            write!(out, ",{x:.16e}").unwrap();
        }
        write!(out, ",{:.16e}", traj.control_norm[k]).unwrap();
        match traj.bearing_error[k] {
            Some(e) => writeln!(out, ",{e:.16e}").unwrap(),
            None => out.push_str(",nan\n"),
        }
    }
    out
}

pub fn trajectory_json(traj: &Trajectory) -> String {
    serde_json::to_string_pretty(traj).expect("trajectory serializes")
}

pub fn report_json(report: &AnalysisReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use bearing_core::simulation::{simulate, SimulationConfig};
    use bearing_core::DirectedGraph;
    use nalgebra::{dmatrix, dvector};

    fn single_edge() -> Formation {
        let g = DirectedGraph::new(2, &[(1, 2)]).unwrap();
        Formation::new(g, 2, dvector![0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn matrix_text_round_trips_exactly() {
        let m = dmatrix![0.1, -2.0 / 3.0, 1e-300; 5.0, f64::MIN_POSITIVE, -0.0];
        let text = matrix_to_text(&m);
        assert!(text.starts_with("2 3\n"));
        assert_eq!(matrix_from_text(&text).unwrap(), m);
        assert!(matrix_from_text("2 2\n1 2\n3\n").is_none());
    }

    #[test]
    fn writes_matrix_files() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_matrices(dir.path(), "edge", &single_edge(), 1e-10).unwrap();
        assert_eq!(written.len(), 6);
        let r = matrix_from_text(&fs::read_to_string(dir.path().join("edge_R_B.txt")).unwrap()).unwrap();
        assert_eq!(r.shape(), (2, 4));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("edge_matrices.json")).unwrap()).unwrap();
        assert_eq!(json["bearing_laplacian"].as_array().unwrap().len(), 4);
        assert_eq!(json["null_rigidity_basis"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn csv_layout() {
        let f = single_edge();
        let cfg = SimulationConfig {
            t_max: 0.05,
            ..Default::default()
        };
        let traj = simulate(f.constraints_from_target(), &dvector![0.0, 1.0, 1.0, 0.0], &cfg, Some(4)).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,p1_x,p1_y,p2_x,p2_y,control_norm,bearing_error");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), traj.len());
        let first: Vec<f64> = rows[0].split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[2], 1.0);
        assert_eq!(first[5], traj.control_norm[0]);

        let json: serde_json::Value = serde_json::from_str(&trajectory_json(&traj)).unwrap();
        assert_eq!(json["seed"], 4);
        assert_eq!(json["config"]["integrator"], "rk4");
    }
}
