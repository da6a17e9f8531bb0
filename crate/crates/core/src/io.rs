//! Plain-text outputs: design CSV, PGM image, legacy VTK mesh, history CSV.

use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::optimize::HistoryRow;
use std::fmt::Write as _;
use std::path::Path;

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| with_path(path, e))
}

/// `element,x,rho_hat,rho_bar` with shortest round-trip formatting.
pub fn design_csv(x: &[f64], rho_hat: &[f64], rho_bar: &[f64]) -> String {
    let mut s = String::from("element,x,rho_hat,rho_bar\n");
    for e in 0..x.len() {
        let _ = writeln!(s, "{e},{:?},{:?},{:?}", x[e], rho_hat[e], rho_bar[e]);
    }
    s
}

pub fn write_design_csv(path: &Path, x: &[f64], rho_hat: &[f64], rho_bar: &[f64]) -> Result<()> {
    write(path, design_csv(x, rho_hat, rho_bar).as_bytes())
}

/// The `x` column of a design CSV.
pub fn parse_design_csv(text: &str) -> Result<Vec<f64>> {
    let mut x = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .nth(1)
            .and_then(|t| t.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("design csv line {}: cannot read x", i + 1)))?;
        x.push(v);
    }
    Ok(x)
}

pub fn read_design_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(path, e))?;
    parse_design_csv(&text)
}

/// Binary PGM of `ρ̄` scaled to 0–255, top image row = top of the domain.
pub fn pgm(mesh: &Mesh2D, rho: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mesh.nx, mesh.ny).into_bytes();
    for j in (0..mesh.ny).rev() {
        for i in 0..mesh.nx {
            let v = rho[mesh.element_id(i, j)].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, mesh: &Mesh2D, rho: &[f64]) -> Result<()> {
    write(path, &pgm(mesh, rho))
}

/// Legacy ASCII VTK unstructured grid with quad cells and named cell fields.
pub fn vtk(mesh: &Mesh2D, cell_data: &[(&str, &[f64])]) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\ndesign\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_node());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let ne = mesh.n_ele();
    let _ = writeln!(s, "CELLS {} {}", ne, 5 * ne);
    for c in &mesh.elements {
        let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("9\n");
    }
    if !cell_data.is_empty() {
        let _ = writeln!(s, "CELL_DATA {ne}");
        for (name, v) in cell_data {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in v.iter() {
                let _ = writeln!(s, "{x:?}");
            }
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &Mesh2D, cell_data: &[(&str, &[f64])]) -> Result<()> {
    write(path, vtk(mesh, cell_data).as_bytes())
}

pub const HISTORY_HEADER: &str = "iter,p,p_l,beta,c_max_this_iter,objective,mean,std,constraint";

pub fn history_line(r: &HistoryRow) -> String {
    format!(
        "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
        r.iter, r.p, r.p_l, r.beta, r.c_max, r.objective, r.mean, r.std, r.constraint
    )
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&history_line(r));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::project;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn design_round_trip_is_bitwise() {
        let x = vec![0.1 + 0.2, 1.0 / 3.0, 1e-300, 0.999_999_999_999_999_9];
        let back = parse_design_csv(&design_csv(&x, &x, &x)).unwrap();
        assert_eq!(x, back);
    }

    #[test]
    fn pgm_solid_and_checkerboard() {
        let m = build_structured_mesh(2, 2, 2.0, 2.0).unwrap();
        let img = pgm(&m, &[1.0; 4]);
        assert!(img.ends_with(&[255, 255, 255, 255]));
        // elements 1 (bottom-right) and 2 (top-left) solid
        let rho: Vec<f64> = [0.0, 1.0, 1.0, 0.0].iter().map(|&r| project(r, 4.0, 0.5)).collect();
        let img = pgm(&m, &rho);
        assert_eq!(&img[img.len() - 4..], &[255, 0, 0, 255]);
    }

    #[test]
    fn vtk_layout() {
        let m = build_structured_mesh(2, 1, 2.0, 1.0).unwrap();
        let s = vtk(&m, &[("rho", &[0.5, 1.0])]);
        assert!(s.contains("POINTS 6 double"));
        assert!(s.contains("CELLS 2 10"));
        assert!(s.contains("CELL_TYPES 2\n9\n9\n"));
        assert!(s.contains("SCALARS rho double 1"));
    }
}
