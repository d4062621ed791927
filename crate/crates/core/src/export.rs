//! Snapshot export: VTK legacy ASCII structured grids, per-element CSV, and
//! PGM images, plus reflection of half/quarter models to full domains.
//!
//! File layouts:
//!
//! * VTK: `DATASET STRUCTURED_GRID` with points ordered x-fastest, one
//!   `CELL_DATA` scalar array per material column for both realizations
//!   (`rho_blueprint_k`, `rho_eroded_k`), and `POINT_DATA` with the nodal
//!   pressure (scalars, Pa) and displacement (vectors, m).
//! * CSV: one row per element, `element,x,y,rho_1..rho_m` with centroid
//!   coordinates and blueprint densities; floats are written with shortest
//!   round-trip formatting, so reading them back is exact.
//! * PGM: plain `P2`, maxval 255 (255 = solid), image rows from the top of
//!   the domain down.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::OptimizationResult;
use crate::sensitivity::AnalysisModel;

/// Element and nodal fields of a finished design on its grid.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub nelx: usize,
    pub nely: usize,
    pub lx: f64,
    pub ly: f64,
    /// Material columns per element, column-major (`k * nel + e`).
    pub m: usize,
    pub blueprint: Vec<f64>,
    pub eroded: Vec<f64>,
    /// Nodal pressure of the blueprint realization, Pa.
    pub pressure: Vec<f64>,
    /// Nodal displacement of the blueprint realization, `(ux, uy)` pairs.
    pub displacement: Vec<f64>,
}

impl FieldSnapshot {
    pub fn n_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn n_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn from_result(model: &AnalysisModel, result: &OptimizationResult) -> Self {
        Self {
            nelx: model.mesh.nelx,
            nely: model.mesh.nely,
            lx: model.mesh.lx,
            ly: model.mesh.ly,
            m: result.blueprint.projected.n_materials(),
            blueprint: result.blueprint.projected.as_slice().to_vec(),
            eroded: result.eroded.projected.as_slice().to_vec(),
            pressure: result.blueprint.pressure.pressure.clone(),
            displacement: result.blueprint.structure.u.clone(),
        }
    }

    fn element(&self, ex: usize, ey: usize) -> usize {
        ex * self.nely + ey
    }

    fn node(&self, ix: usize, iy: usize) -> usize {
        ix * (self.nely + 1) + iy
    }

    fn consistent(&self) -> Result<()> {
        let nel = self.n_elements();
        let nn = self.n_nodes();
        if self.blueprint.len() != nel * self.m
            || self.eroded.len() != nel * self.m
            || self.pressure.len() != nn
            || self.displacement.len() != 2 * nn
        {
            return Err(Error::Contract("snapshot field sizes inconsistent".into()));
        }
        Ok(())
    }
}

/// Which domain edges are symmetry lines to unfold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MirrorSpec {
    /// Reflect about the right edge (`x = lx`).
    pub mirror_x: bool,
    /// Reflect about the bottom edge (`y = 0`).
    pub mirror_y: bool,
}

impl MirrorSpec {
    pub fn for_benchmark(name: crate::mesh::BenchmarkName) -> Self {
        match name {
            crate::mesh::BenchmarkName::Gripper | crate::mesh::BenchmarkName::ComparisonCase => {
                Self {
                    mirror_x: false,
                    mirror_y: true,
                }
            }
            crate::mesh::BenchmarkName::Contractor => Self {
                mirror_x: true,
                mirror_y: true,
            },
        }
    }
}

/// Unfolds a half or quarter model into the full domain. Element counts grow
/// by a factor of two per reflection; mirrored displacement components flip
/// sign across their symmetry line.
pub fn mirror_full_design(snapshot: &FieldSnapshot, spec: MirrorSpec) -> Result<FieldSnapshot> {
    snapshot.consistent()?;
    if !spec.mirror_x && !spec.mirror_y {
        return Err(Error::Validation(
            "mirror spec selects no symmetry line".into(),
        ));
    }
    let mut out = snapshot.clone();
    if spec.mirror_x {
        out = mirror_about_right_edge(&out);
    }
    if spec.mirror_y {
        out = mirror_about_bottom_edge(&out);
    }
    Ok(out)
}

fn mirror_about_bottom_edge(s: &FieldSnapshot) -> FieldSnapshot {
    let (nelx, nely) = (s.nelx, s.nely);
    let nely2 = 2 * nely;
    let nel2 = nelx * nely2;
    let mut blueprint = vec![0.0; nel2 * s.m];
    let mut eroded = vec![0.0; nel2 * s.m];
    for k in 0..s.m {
        for ex in 0..nelx {
            for fy in 0..nely2 {
                let sy = if fy < nely { nely - 1 - fy } else { fy - nely };
                let src = k * s.n_elements() + s.element(ex, sy);
                let dst = k * nel2 + ex * nely2 + fy;
                blueprint[dst] = s.blueprint[src];
                eroded[dst] = s.eroded[src];
            }
        }
    }
    let nn2 = (nelx + 1) * (nely2 + 1);
    let mut pressure = vec![0.0; nn2];
    let mut displacement = vec![0.0; 2 * nn2];
    for ix in 0..=nelx {
        for fy in 0..=nely2 {
            let sy = (fy as isize - nely as isize).unsigned_abs();
            let src = s.node(ix, sy);
            let dst = ix * (nely2 + 1) + fy;
            let flip = if fy < nely { -1.0 } else { 1.0 };
            pressure[dst] = s.pressure[src];
            displacement[2 * dst] = s.displacement[2 * src];
            displacement[2 * dst + 1] = flip * s.displacement[2 * src + 1];
        }
    }
    FieldSnapshot {
        nelx,
        nely: nely2,
        lx: s.lx,
        ly: 2.0 * s.ly,
        m: s.m,
        blueprint,
        eroded,
        pressure,
        displacement,
    }
}

fn mirror_about_right_edge(s: &FieldSnapshot) -> FieldSnapshot {
    let (nelx, nely) = (s.nelx, s.nely);
    let nelx2 = 2 * nelx;
    let nel2 = nelx2 * nely;
    let mut blueprint = vec![0.0; nel2 * s.m];
    let mut eroded = vec![0.0; nel2 * s.m];
    for k in 0..s.m {
        for fx in 0..nelx2 {
            let sx = if fx < nelx { fx } else { 2 * nelx - 1 - fx };
            for ey in 0..nely {
                let src = k * s.n_elements() + s.element(sx, ey);
                let dst = k * nel2 + fx * nely + ey;
                blueprint[dst] = s.blueprint[src];
                eroded[dst] = s.eroded[src];
            }
        }
    }
    let nn2 = (nelx2 + 1) * (nely + 1);
    let mut pressure = vec![0.0; nn2];
    let mut displacement = vec![0.0; 2 * nn2];
    for fx in 0..=nelx2 {
        let sx = if fx <= nelx { fx } else { 2 * nelx - fx };
        let flip = if fx > nelx { -1.0 } else { 1.0 };
        for iy in 0..=nely {
            let src = s.node(sx, iy);
            let dst = fx * (nely + 1) + iy;
            pressure[dst] = s.pressure[src];
            displacement[2 * dst] = flip * s.displacement[2 * src];
            displacement[2 * dst + 1] = s.displacement[2 * src + 1];
        }
    }
    FieldSnapshot {
        nelx: nelx2,
        nely,
        lx: 2.0 * s.lx,
        ly: s.ly,
        m: s.m,
        blueprint,
        eroded,
        pressure,
        displacement,
    }
}

/// VTK legacy ASCII structured grid, points x-fastest.
pub fn write_vtk(snapshot: &FieldSnapshot, path: &Path) -> Result<()> {
    snapshot.consistent()?;
    let (nelx, nely) = (snapshot.nelx, snapshot.nely);
    let (dx, dy) = (
        snapshot.lx / nelx as f64,
        snapshot.ly / nely as f64,
    );
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("pneumech design snapshot\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_GRID\n");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", nelx + 1, nely + 1);
    let _ = writeln!(out, "POINTS {} double", snapshot.n_nodes());
    for iy in 0..=nely {
        for ix in 0..=nelx {
            let _ = writeln!(out, "{} {} 0", ix as f64 * dx, iy as f64 * dy);
        }
    }
    let _ = writeln!(out, "CELL_DATA {}", snapshot.n_elements());
    for k in 0..snapshot.m {
        for (name, data) in [
            ("rho_blueprint", &snapshot.blueprint),
            ("rho_eroded", &snapshot.eroded),
        ] {
            let _ = writeln!(out, "SCALARS {name}_{} double 1", k + 1);
            out.push_str("LOOKUP_TABLE default\n");
            for ey in 0..nely {
                for ex in 0..nelx {
                    let e = k * snapshot.n_elements() + ex * nely + ey;
                    let _ = writeln!(out, "{}", data[e]);
                }
            }
        }
    }
    let _ = writeln!(out, "POINT_DATA {}", snapshot.n_nodes());
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for iy in 0..=nely {
        for ix in 0..=nelx {
            let _ = writeln!(out, "{}", snapshot.pressure[ix * (nely + 1) + iy]);
        }
    }
    out.push_str("VECTORS displacement double\n");
    for iy in 0..=nely {
        for ix in 0..=nelx {
            let n = ix * (nely + 1) + iy;
            let _ = writeln!(
                out,
                "{} {} 0",
                snapshot.displacement[2 * n],
                snapshot.displacement[2 * n + 1]
            );
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One row per element: index, centroid coordinates, blueprint densities.
pub fn write_csv(snapshot: &FieldSnapshot, path: &Path) -> Result<()> {
    snapshot.consistent()?;
    let (dx, dy) = (
        snapshot.lx / snapshot.nelx as f64,
        snapshot.ly / snapshot.nely as f64,
    );
    let mut out = String::from("element,x,y");
    for k in 0..snapshot.m {
        let _ = write!(out, ",rho_{}", k + 1);
    }
    out.push('\n');
    for e in 0..snapshot.n_elements() {
        let ex = e / snapshot.nely;
        let ey = e % snapshot.nely;
        let _ = write!(
            out,
            "{e},{},{}",
            (ex as f64 + 0.5) * dx,
            (ey as f64 + 0.5) * dy
        );
        for k in 0..snapshot.m {
            let _ = write!(out, ",{}", snapshot.blueprint[k * snapshot.n_elements() + e]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads back a CSV produced by [`write_csv`]; returns the density columns.
pub fn read_csv_densities(path: &Path, m: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut columns = vec![Vec::new(); m];
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + m {
            return Err(Error::Validation(format!(
                "csv row has {} fields, expected {}",
                fields.len(),
                3 + m
            )));
        }
        for k in 0..m {
            columns[k].push(
                fields[3 + k]
                    .parse()
                    .map_err(|e| Error::Validation(format!("bad float in csv: {e}")))?,
            );
        }
    }
    Ok(columns)
}

/// Plain-text PGM of one material column, 255 = solid, top row first.
pub fn write_pgm(snapshot: &FieldSnapshot, column: usize, path: &Path) -> Result<()> {
    snapshot.consistent()?;
    if column >= snapshot.m {
        return Err(Error::Contract(format!(
            "column {column} out of range for {} materials",
            snapshot.m
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "P2\n{} {}\n255", snapshot.nelx, snapshot.nely);
    for ey in (0..snapshot.nely).rev() {
        let mut first = true;
        for ex in 0..snapshot.nelx {
            let v = snapshot.blueprint[column * snapshot.n_elements() + ex * snapshot.nely + ey];
            let gray = (v.clamp(0.0, 1.0) * 255.0).round() as u32;
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{gray}");
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
