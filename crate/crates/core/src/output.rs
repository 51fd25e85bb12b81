//! Legacy-VTK snapshots and CSV tables.
//!
//! Floating-point values are written with 17 significant digits so files
//! round-trip exactly and are byte-identical across deterministic runs.

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{ConvergenceTable, SweepRow};
use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::mesh::QuadMesh;
use crate::param::{jacobian, ParamPoint};
use crate::solver::StepResult;

/// VTK cell type of a linear quadrilateral.
pub const VTK_QUAD: u8 = 9;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One output frame: reference geometry plus displacement and per-element
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkSnapshot {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 4]>,
    pub displacement: Vec<[f64; 2]>,
    /// 0 convex, 1 concave, 2 degenerate.
    pub class: Vec<i32>,
    /// Smallest corner Jacobian determinant of the reference map.
    pub min_det_j: Vec<f64>,
    /// det F evaluated with the element's centroid gradients.
    pub det_fbar: Vec<f64>,
}

impl VtkSnapshot {
    pub fn new(mesh: &QuadMesh, disc: &Discretization, u: &[f64]) -> Result<Self> {
        if u.len() != 2 * mesh.num_nodes() || disc.elements.len() != mesh.num_elems() {
            return Err(Error::InvalidMesh("snapshot sizes do not match the mesh".into()));
        }
        let min_det_j = (0..mesh.num_elems())
            .map(|e| {
                let c = mesh.elem_coords(e);
                (0..4)
                    .map(|a| jacobian(&c, &ParamPoint::corner(a)).1)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let det_fbar = mesh
            .elems
            .iter()
            .zip(&disc.elements)
            .map(|(nodes, q)| {
                let mut f = [[1.0, 0.0], [0.0, 1.0]];
                for (a, &n) in nodes.iter().enumerate() {
                    for (i, row) in f.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v += u[2 * n + i] * q.centroid_grads[a][j];
                        }
                    }
                }
                f[0][0] * f[1][1] - f[0][1] * f[1][0]
            })
            .collect();
        Ok(VtkSnapshot {
            points: mesh.nodes.iter().map(|p| [p.x, p.y]).collect(),
            cells: mesh.elems.clone(),
            displacement: u.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            class: disc.report.classes.iter().map(|c| c.code()).collect(),
            min_det_j,
            det_fbar,
        })
    }

    pub fn to_vtk_string(&self) -> String {
        let (np, nc) = (self.points.len(), self.cells.len());
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\ntfem snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(s, "POINTS {np} double");
        for p in &self.points {
            let _ = writeln!(s, "{} {} {}", num(p[0]), num(p[1]), num(0.0));
        }
        let _ = writeln!(s, "CELLS {nc} {}", 5 * nc);
        for c in &self.cells {
            let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
        }
        let _ = writeln!(s, "CELL_TYPES {nc}");
        for _ in &self.cells {
            let _ = writeln!(s, "{VTK_QUAD}");
        }
        let _ = writeln!(s, "POINT_DATA {np}\nVECTORS displacement double");
        for d in &self.displacement {
            let _ = writeln!(s, "{} {} {}", num(d[0]), num(d[1]), num(0.0));
        }
        let _ = writeln!(s, "CELL_DATA {nc}\nSCALARS class int 1\nLOOKUP_TABLE default");
        for c in &self.class {
            let _ = writeln!(s, "{c}");
        }
        for (name, vals) in [("min_detJ", &self.min_det_j), ("det_Fbar", &self.det_fbar)] {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in vals {
                let _ = writeln!(s, "{}", num(*v));
            }
        }
        s
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_vtk(snapshot: &VtkSnapshot, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &snapshot.to_vtk_string())
}

/// Per-step table; `probes` holds the probed displacement of each named
/// point at each step.
pub fn step_table_csv(steps: &[StepResult], probe_names: &[String], probes: &[Vec<[f64; 2]>]) -> String {
    let mut s = String::from("step,load_factor,newton_iters,min_det_f,constraint_residual,residual_norm");
    for name in probe_names {
        let _ = write!(s, ",{name}_ux,{name}_uy");
    }
    s.push('\n');
    for (k, st) in steps.iter().enumerate() {
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            num(st.load_factor),
            st.newton_iters,
            num(st.min_det_f),
            num(st.constraint_residual),
            num(st.residual_norm)
        );
        for v in probes.get(k).into_iter().flatten() {
            let _ = write!(s, ",{},{}", num(v[0]), num(v[1]));
        }
        s.push('\n');
    }
    s
}

/// Convergence table with a trailing `slope` row (slope, log-space RMS
/// residual). Failed rows carry their message in the `status` column.
pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut s = String::from(
        "n,h,dofs,constraints,probe,h1_error,condition,max_newton,max_constraint_residual,status\n",
    );
    for r in &table.rows {
        let status = match &r.failed {
            None => "ok".to_string(),
            Some(m) => format!("failed: {}", m.replace([',', '\n', '"'], " ")),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            num(r.h),
            r.dofs,
            r.constraints,
            opt(r.probe),
            opt(r.h1_error),
            opt(r.condition),
            r.max_newton.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.max_constraint_residual),
            status
        );
    }
    let _ = writeln!(
        s,
        "slope,{},{}",
        opt(table.fit.map(|f| f.slope)),
        opt(table.fit.map(|f| f.residual))
    );
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("nu,regular,itfem_tangled,fem_tangled,itfem_min_det_f\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(r.nu),
            opt(r.regular),
            opt(r.itfem),
            opt(r.fem_tangled),
            opt(r.min_det_f)
        );
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_file(path.as_ref(), text)
}
