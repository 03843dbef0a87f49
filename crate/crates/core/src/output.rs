//! CSV and legacy VTK writers. Floats are written with 17 significant
//! digits; every writer is deterministic.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cdr::ConvergenceRow;
use crate::error::Result;
use crate::hyperbolic::DiagnosticRow;
use crate::scalar::Real;
use crate::space::FeSpace;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Header line plus one line per row.
pub fn write_csv<W: Write>(out: &mut W, headers: &[String], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", headers.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Nodal samples of 1D fields ordered by `x` (element by element, so DG
/// interfaces appear twice): columns `x, name_0, name_1, ...`.
pub fn profile_rows<T: Real>(space: &FeSpace<T>, fields: &[&[T]]) -> Vec<Vec<f64>> {
    let p = space.degree();
    let mut rows = Vec::new();
    for e in 0..space.num_elements() {
        let dofs = space.element_dofs(e);
        for (i, &d) in dofs.iter().enumerate().take(p + 1) {
            if !space.is_dg() && e > 0 && i == 0 {
                continue;
            }
            let mut row = vec![space.dof_coords()[d][0].as_f64()];
            row.extend(fields.iter().map(|f| f[d].as_f64()));
            rows.push(row);
        }
    }
    rows
}

/// `x, <names>` profile of a 1D field. An empty field list yields a
/// header-only file.
pub fn write_profile_csv<T: Real>(path: &Path, space: &FeSpace<T>, names: &[&str], fields: &[&[T]]) -> Result<()> {
    let mut out = create(path)?;
    let mut headers = vec!["x".to_string()];
    headers.extend(names.iter().map(|s| s.to_string()));
    let rows = if fields.is_empty() { Vec::new() } else { profile_rows(space, fields) };
    write_csv(&mut out, &headers, &rows)?;
    out.flush()?;
    Ok(())
}

pub fn diagnostics_headers(components: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "t".to_string(), "dt".to_string()];
    for kind in ["min", "max", "mass"] {
        h.extend((0..components).map(|c| format!("{kind}_{c}")));
    }
    h
}

pub fn write_diagnostics_csv<W: Write>(out: &mut W, rows: &[DiagnosticRow]) -> Result<()> {
    let m = rows.first().map_or(0, |r| r.min.len());
    writeln!(out, "{}", diagnostics_headers(m).join(","))?;
    for r in rows {
        let mut cells = vec![r.step.to_string(), fmt_f64(r.t), fmt_f64(r.dt)];
        for v in r.min.iter().chain(&r.max).chain(&r.mass) {
            cells.push(fmt_f64(*v));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub const CONVERGENCE_HEADERS: [&str; 7] = ["h", "dofs", "err_L2", "err_S", "rate_L2", "rate_S", "picard_iters"];

/// Rates of the first level are left empty.
pub fn write_convergence_csv<W: Write>(out: &mut W, rows: &[ConvergenceRow]) -> Result<()> {
    writeln!(out, "{}", CONVERGENCE_HEADERS.join(","))?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.h),
            r.dofs,
            fmt_f64(r.err_l2),
            fmt_f64(r.err_s),
            opt(r.rate_l2),
            opt(r.rate_s),
            r.picard_iters
        )?;
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Field attached to a VTK dump.
pub enum VtkField<'a, T> {
    /// One value per degree of freedom of the space.
    Point(&'a str, &'a [T]),
    /// One value per element.
    Cell(&'a str, &'a [T]),
}

/// Position of VTK node `k` within the local `(p+1)^d` node lattice.
fn vtk_order(p: usize, dim: usize) -> (Vec<usize>, u8) {
    let idx = |ix: usize, iy: usize| ix + (p + 1) * iy;
    match (dim, p) {
        (1, 1) => (vec![0, 1], 3),
        (1, _) => (vec![0, 2, 1], 21),
        (_, 1) => (vec![idx(0, 0), idx(1, 0), idx(1, 1), idx(0, 1)], 9),
        _ => (
            vec![
                idx(0, 0),
                idx(2, 0),
                idx(2, 2),
                idx(0, 2),
                idx(1, 0),
                idx(2, 1),
                idx(1, 2),
                idx(0, 1),
                idx(1, 1),
            ],
            28,
        ),
    }
}

/// Legacy ASCII unstructured grid; every element carries its own
/// `(p+1)^d` points.
pub fn write_vtk<T: Real, W: Write>(out: &mut W, space: &FeSpace<T>, title: &str, fields: &[VtkField<'_, T>]) -> Result<()> {
    let n_el = space.num_elements();
    let n_loc = space.n_loc();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.replace('\n', " "))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", n_el * n_loc)?;
    for e in 0..n_el {
        let mesh = space.mesh();
        for l in 0..n_loc {
            let x = mesh.to_physical(e, space.basis().node(l));
            writeln!(out, "{} {} 0", fmt_f64(x[0].as_f64()), fmt_f64(x[1].as_f64()))?;
        }
    }
    let (order, cell_type) = vtk_order(space.degree(), space.dim());
    writeln!(out, "CELLS {} {}", n_el, n_el * (order.len() + 1))?;
    for e in 0..n_el {
        let ids: Vec<String> = order.iter().map(|l| (e * n_loc + l).to_string()).collect();
        writeln!(out, "{} {}", order.len(), ids.join(" "))?;
    }
    writeln!(out, "CELL_TYPES {n_el}")?;
    for _ in 0..n_el {
        writeln!(out, "{cell_type}")?;
    }
    let points: Vec<_> = fields.iter().filter_map(|f| match f {
        VtkField::Point(n, v) => Some((*n, *v)),
        _ => None,
    }).collect();
    let cells: Vec<_> = fields.iter().filter_map(|f| match f {
        VtkField::Cell(n, v) => Some((*n, *v)),
        _ => None,
    }).collect();
    if !points.is_empty() {
        writeln!(out, "POINT_DATA {}", n_el * n_loc)?;
        for (name, v) in points {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for e in 0..n_el {
                for &d in space.element_dofs(e) {
                    writeln!(out, "{}", fmt_f64(v[d].as_f64()))?;
                }
            }
        }
    }
    if !cells.is_empty() {
        writeln!(out, "CELL_DATA {n_el}")?;
        for (name, v) in cells {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for x in v.iter().take(n_el) {
                writeln!(out, "{}", fmt_f64(x.as_f64()))?;
            }
        }
    }
    Ok(())
}

pub fn write_vtk_file<T: Real>(path: &Path, space: &FeSpace<T>, title: &str, fields: &[VtkField<'_, T>]) -> Result<()> {
    let mut out = create(path)?;
    write_vtk(&mut out, space, title, fields)?;
    out.flush()?;
    Ok(())
}
