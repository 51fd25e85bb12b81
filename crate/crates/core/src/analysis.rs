//! Error norms, probes and convergence studies.

use rayon::prelude::*;

use crate::assembly::{Discretization, DofMap, LoadCase, Method};
use crate::error::{Error, Result};
use crate::material::{Mat2, MaterialModel};
use crate::mesh::{bbox, classify_mesh, ElementClass, Point2, QuadMesh};
use crate::param::{inverse_bilinear, map_point, physical_gradients, ParamPoint, EPS_XI};
use crate::problems::{Preset, Tangle};
use crate::solver::{assemble_at, condition_number, run, Problem, SolverConfig};

/// Uniform bucket grid over element bounding boxes.
///
/// A point is attributed to the element whose simple polygon contains it and
/// is located at that element's positive-Jacobian preimage, so the lookup is
/// unambiguous on tangled meshes too.
#[derive(Debug, Clone)]
pub struct Locator {
    lo: Point2,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
    classes: Vec<ElementClass>,
    tol: f64,
}

impl Locator {
    pub fn new(mesh: &QuadMesh) -> Result<Self> {
        let classes = classify_mesh(mesh)?.classes;
        let (lo, hi) = mesh.bounding_box();
        let ext = hi - lo;
        let target = (mesh.num_elems().max(1) as f64).sqrt();
        let aspect = (ext.x / ext.y.max(f64::MIN_POSITIVE)).max(1e-6);
        let nx = ((target * aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let ny = ((target / aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let cell = [ext.x.max(f64::MIN_POSITIVE) / nx as f64, ext.y.max(f64::MIN_POSITIVE) / ny as f64];
        let mut loc = Locator {
            lo,
            cell,
            dims: [nx, ny],
            buckets: vec![Vec::new(); nx * ny],
            classes,
            tol: 1e-10 * ext.norm(),
        };
        for e in 0..mesh.num_elems() {
            let (a, b) = bbox(&mesh.elem_coords(e));
            let (i0, j0) = loc.cell_of(&Point2::new(a.x - loc.tol, a.y - loc.tol));
            let (i1, j1) = loc.cell_of(&Point2::new(b.x + loc.tol, b.y + loc.tol));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(e);
                }
            }
        }
        Ok(loc)
    }

    fn cell_of(&self, x: &Point2) -> (usize, usize) {
        let f = |v: f64, lo: f64, h: f64, n: usize| (((v - lo) / h).floor().max(0.0) as usize).min(n - 1);
        (
            f(x.x, self.lo.x, self.cell[0], self.dims[0]),
            f(x.y, self.lo.y, self.cell[1], self.dims[1]),
        )
    }

    /// Element and parametric coordinates of `x`.
    pub fn locate(&self, mesh: &QuadMesh, x: &Point2) -> Result<(usize, ParamPoint)> {
        let (i, j) = self.cell_of(x);
        for &e in &self.buckets[j * self.dims[0] + i] {
            let coords = mesh.elem_coords(e);
            let Ok(pre) = inverse_bilinear(&coords, x) else {
                continue;
            };
            let Some(p) = pre.iter().find(|p| p.is_positive() && p.point.in_box(EPS_XI)) else {
                continue;
            };
            if self.classes[e].is_concave() && !in_polygon(&coords, x, self.tol) {
                continue;
            }
            return Ok((e, p.point));
        }
        Err(Error::PointNotLocated { x: x.x, y: x.y })
    }
}

/// Point-in-quadrilateral test that accepts points within `tol` of an edge.
fn in_polygon(q: &[Point2; 4], x: &Point2, tol: f64) -> bool {
    let mut inside = false;
    for k in 0..4 {
        let (a, b) = (q[k], q[(k + 1) % 4]);
        let ab = b - a;
        let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        if (a + ab * t - x).norm() <= tol {
            return true;
        }
        if (a.y > x.y) != (b.y > x.y) && x.x < a.x + (x.y - a.y) / (b.y - a.y) * ab.x {
            inside = !inside;
        }
    }
    inside
}

fn interpolate(mesh: &QuadMesh, u: &[f64], e: usize, p: &ParamPoint) -> [f64; 2] {
    let n = crate::param::shape_q4(p);
    let mut out = [0.0; 2];
    for (a, &node) in mesh.elems[e].iter().enumerate() {
        out[0] += n[a] * u[2 * node];
        out[1] += n[a] * u[2 * node + 1];
    }
    out
}

fn gradient(u: &[f64], nodes: &[usize; 4], grads: &[[f64; 2]; 4]) -> Mat2 {
    let mut h = Mat2::zeros();
    for (a, &node) in nodes.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                h[(i, j)] += u[2 * node + i] * grads[a][j];
            }
        }
    }
    h
}

/// A displacement field on a (usually fine, regular) mesh, evaluable at
/// arbitrary physical points.
#[derive(Debug, Clone)]
pub struct ReferenceField {
    pub mesh: QuadMesh,
    /// Full nodal displacement vector.
    pub u: Vec<f64>,
    locator: Locator,
}

impl ReferenceField {
    pub fn new(mesh: QuadMesh, u: Vec<f64>) -> Result<Self> {
        if u.len() != 2 * mesh.num_nodes() {
            return Err(Error::InvalidMesh(format!(
                "field has {} entries, mesh has {} dofs",
                u.len(),
                2 * mesh.num_nodes()
            )));
        }
        let locator = Locator::new(&mesh)?;
        Ok(ReferenceField { mesh, u, locator })
    }

    pub fn locate(&self, x: &Point2) -> Result<(usize, ParamPoint)> {
        self.locator.locate(&self.mesh, x)
    }

    pub fn value(&self, x: &Point2) -> Result<[f64; 2]> {
        let (e, p) = self.locate(x)?;
        Ok(interpolate(&self.mesh, &self.u, e, &p))
    }

    /// Displacement gradient `∂u_i/∂X_J` of the bilinear interpolant.
    pub fn gradient(&self, x: &Point2) -> Result<Mat2> {
        let (e, p) = self.locate(x)?;
        let (grads, _) = physical_gradients(&self.mesh.elem_coords(e), &p);
        Ok(gradient(&self.u, &self.mesh.elems[e], &grads))
    }
}

/// `‖∇u_ref − ∇u_h‖` over the quadrature points of `disc`.
pub fn h1_seminorm_error_with(
    mesh: &QuadMesh,
    disc: &Discretization,
    u: &[f64],
    reference: &ReferenceField,
) -> Result<f64> {
    let parts: Vec<f64> = disc
        .elements
        .par_iter()
        .enumerate()
        .map(|(e, quad)| {
            quad.points.iter().try_fold(0.0, |acc, qp| {
                let gh = gradient(u, &mesh.elems[e], &qp.grads);
                let gr = reference.gradient(&qp.x)?;
                Ok(acc + qp.weight * (gr - gh).norm_squared())
            })
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// H¹ seminorm of the difference between `u` on `mesh` and the reference
/// field, integrated with the concave-aware quadrature of `mesh`.
pub fn h1_seminorm_error(mesh: &QuadMesh, u: &[f64], reference: &ReferenceField) -> Result<f64> {
    let disc = Discretization::new(mesh, Method::itfem())?;
    h1_seminorm_error_with(mesh, &disc, u, reference)
}

/// Displacement at `x`: the nodal value when `x` is a node, otherwise the
/// interpolated value in the element whose polygon contains it.
pub fn probe(mesh: &QuadMesh, u: &[f64], x: &Point2) -> Result<[f64; 2]> {
    let (lo, hi) = mesh.bounding_box();
    if let Some(n) = mesh.find_node(x, 1e-9 * (hi - lo).norm()) {
        return Ok([u[2 * n], u[2 * n + 1]]);
    }
    let loc = Locator::new(mesh)?;
    let (e, p) = loc.locate(mesh, x)?;
    Ok(interpolate(mesh, u, e, &p))
}

/// Physical position of a located point (used to check the locator).
pub fn located_position(mesh: &QuadMesh, e: usize, p: &ParamPoint) -> Point2 {
    map_point(&mesh.elem_coords(e), p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares fit of `log e = intercept + slope · log h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(SlopeFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Mesh-size parameter of refinement level `n`.
pub fn mesh_size(n: u32) -> f64 {
    0.5f64.powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMethod {
    FemRegular,
    FemTangled,
    ItfemTangled,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 3] = [
        StudyMethod::FemRegular,
        StudyMethod::FemTangled,
        StudyMethod::ItfemTangled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyMethod::FemRegular => "fem_regular",
            StudyMethod::FemTangled => "fem_tangled",
            StudyMethod::ItfemTangled => "itfem_tangled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        StudyMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown study method `{s}` (expected fem_regular, fem_tangled or itfem_tangled)"
                ))
            })
    }

    fn tangled(self) -> bool {
        self != StudyMethod::FemRegular
    }
}

/// Everything a convergence study needs besides the method.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub preset: Preset,
    pub tangle: Tangle,
    pub material: MaterialModel,
    pub loads: LoadCase,
    pub probe: Point2,
    pub probe_component: usize,
    /// Method inside is ignored; the study method decides it.
    pub solver: SolverConfig,
    pub ns: Vec<u32>,
    pub reference_n: u32,
    pub condition: bool,
}

impl StudySpec {
    pub fn for_preset(preset: Preset, ns: Vec<u32>, reference_n: u32) -> Self {
        let (probe, probe_component) = preset.probe();
        StudySpec {
            preset,
            tangle: preset.default_tangle(),
            material: preset.default_material(),
            loads: preset.default_loads(),
            probe,
            probe_component,
            solver: SolverConfig::default(),
            ns,
            reference_n,
            condition: false,
        }
    }

    fn mesh_for(&self, method: StudyMethod, n: u32) -> Result<QuadMesh> {
        let tangle = if method.tangled() { self.tangle } else { Tangle::None };
        self.preset.mesh(n, tangle)
    }

    fn config_for(&self, method: StudyMethod) -> SolverConfig {
        let mut c = self.solver;
        c.method = match method {
            StudyMethod::ItfemTangled => match self.solver.method {
                m @ Method::Itfem { .. } => m,
                Method::Fem => Method::itfem(),
            },
            _ => Method::Fem,
        };
        c
    }

    /// Solves on the regular reference mesh.
    pub fn reference(&self) -> Result<ReferenceField> {
        let mesh = self.preset.mesh(self.reference_n, Tangle::None)?;
        let res = run(
            &Problem {
                mesh: &mesh,
                material: self.material,
                loads: &self.loads,
            },
            &self.config_for(StudyMethod::FemRegular),
        )?;
        let u = res.final_u().to_vec();
        ReferenceField::new(mesh, u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub h: f64,
    pub dofs: usize,
    pub constraints: usize,
    pub probe: Option<f64>,
    pub h1_error: Option<f64>,
    pub condition: Option<f64>,
    pub max_newton: Option<usize>,
    pub max_constraint_residual: Option<f64>,
    /// Largest per-step `max |Cᵀu| / ‖u‖∞`.
    pub relative_constraint_residual: Option<f64>,
    /// Smallest det F over quadrature points at the final state.
    pub min_det_f: Option<f64>,
    /// Failure message when the run did not complete.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub method: StudyMethod,
    pub rows: Vec<ConvergenceRow>,
    pub fit: Option<SlopeFit>,
}

impl ConvergenceTable {
    pub fn row(&self, n: u32) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

fn study_row(
    spec: &StudySpec,
    method: StudyMethod,
    n: u32,
    reference: Option<&ReferenceField>,
) -> ConvergenceRow {
    let mut row = ConvergenceRow {
        n,
        h: mesh_size(n),
        dofs: 0,
        constraints: 0,
        probe: None,
        h1_error: None,
        condition: None,
        max_newton: None,
        max_constraint_residual: None,
        relative_constraint_residual: None,
        min_det_f: None,
        failed: None,
    };
    let body = |row: &mut ConvergenceRow| -> Result<()> {
        let mesh = spec.mesh_for(method, n)?;
        row.dofs = DofMap::new(&mesh, &spec.loads)?.num_free();
        let config = spec.config_for(method);
        let problem = Problem {
            mesh: &mesh,
            material: spec.material,
            loads: &spec.loads,
        };
        let res = run(&problem, &config)?;
        row.constraints = res.num_constraints;
        row.max_newton = res.steps.iter().map(|s| s.newton_iters).max();
        row.max_constraint_residual = Some(res.max_constraint_residual());
        row.relative_constraint_residual = Some(res.relative_constraint_residual());
        row.min_det_f = res.steps.last().map(|s| s.min_det_f);
        let u = res.final_u();
        row.probe = Some(probe(&mesh, u, &spec.probe)?[spec.probe_component]);
        if let Some(r) = reference {
            row.h1_error = Some(h1_seminorm_error(&mesh, u, r)?);
        }
        if spec.condition {
            let last = res.steps.last().expect("run has steps");
            row.condition = Some(condition_number(&assemble_at(&problem, &config, last)?)?);
        }
        Ok(())
    };
    if let Err(e) = body(&mut row) {
        row.failed = Some(e.to_string());
    }
    row
}

/// One run per refinement level; failed rows are marked and the study
/// continues.
pub fn convergence_study(
    spec: &StudySpec,
    method: StudyMethod,
    reference: Option<&ReferenceField>,
) -> ConvergenceTable {
    let rows: Vec<ConvergenceRow> = spec
        .ns
        .par_iter()
        .map(|&n| study_row(spec, method, n, reference))
        .collect();
    let (h, e): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.h1_error.map(|e| (r.h, e)))
        .unzip();
    ConvergenceTable {
        method,
        fit: fit_slope(&h, &e),
        rows,
    }
}

/// Slope of `log κ₂` against `log h`.
pub fn condition_slope(table: &ConvergenceTable) -> Option<SlopeFit> {
    let (h, k): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter_map(|r| r.condition.map(|k| (r.h, k)))
        .unzip();
    fit_slope(&h, &k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub nu: f64,
    pub regular: Option<f64>,
    pub itfem: Option<f64>,
    pub fem_tangled: Option<f64>,
    pub min_det_f: Option<f64>,
}

/// Probe values over a range of Poisson ratios at fixed shear modulus and
/// refinement level, for the three study methods.
pub fn poisson_sweep(spec: &StudySpec, mu: f64, nus: &[f64], n: u32) -> Result<Vec<SweepRow>> {
    nus.par_iter()
        .map(|&nu| {
            let mut s = spec.clone();
            s.material = crate::problems::gnh_from_poisson(mu, nu)?;
            let row = |m: StudyMethod| study_row(&s, m, n, None);
            let itfem = row(StudyMethod::ItfemTangled);
            Ok(SweepRow {
                nu,
                regular: row(StudyMethod::FemRegular).probe,
                itfem: itfem.probe,
                fem_tangled: row(StudyMethod::FemTangled).probe,
                min_det_f: itfem.min_det_f,
            })
        })
        .collect()
}
