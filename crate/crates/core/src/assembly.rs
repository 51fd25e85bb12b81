//! Discrete system: quadrature, element kernels, loads, constraints.
//!
//! Displacement dofs are numbered `2 * node + component`. Dirichlet dofs are
//! eliminated; the remaining free dofs are numbered in increasing global
//! order. Constraint columns (two per concave element) couple only the dofs
//! of the concave element itself.

use std::sync::OnceLock;

use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::material::{fbar_response, flatten, Mat2, MaterialModel};
use crate::mesh::{classify_mesh, ElementClass, Point2, QuadMesh, TangleReport};
use crate::param::{
    concave_param_quadrature, constraint_row, gauss_2x2, map_point, physical_gradients,
    polygon_centroid, positive_preimage, shape_q4, ParamPoint,
};

/// Default number of uniform refinements of the concave-element triangulation.
pub const DEFAULT_REFINE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Standard FEM: 2×2 Gauss on every element (signed Jacobian), no constraints.
    Fem,
    /// Concave elements integrated over their polygon and constrained at the
    /// re-entrant vertex.
    Itfem { refine: u32 },
}

impl Method {
    pub fn itfem() -> Self {
        Method::Itfem {
            refine: DEFAULT_REFINE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    /// Reference position.
    pub x: Point2,
    pub n: [f64; 4],
    /// `∂N_a/∂X_J`.
    pub grads: [[f64; 2]; 4],
    /// Reference-area weight (signed for FEM on tangled elements).
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementQuad {
    pub points: Vec<QuadPoint>,
    /// Shape gradients at the F-bar sample point.
    pub centroid_grads: [[f64; 2]; 4],
}

/// One scalar constraint: `Σ coeff · u[dof] = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintColumn {
    pub elem: usize,
    pub component: usize,
    pub entries: [(usize, f64); 4],
}

impl ConstraintColumn {
    pub fn eval(&self, u_full: &[f64]) -> f64 {
        self.entries.iter().map(|&(d, c)| c * u_full[d]).sum()
    }
}

/// State-independent quadrature and constraint data for one mesh and method.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub method: Method,
    pub report: TangleReport,
    pub elements: Vec<ElementQuad>,
    pub constraints: Vec<ConstraintColumn>,
}

fn gauss_points(coords: &[Point2; 4]) -> Vec<QuadPoint> {
    gauss_2x2()
        .iter()
        .map(|(xi, w)| {
            let (grads, det) = physical_gradients(coords, xi);
            QuadPoint {
                x: map_point(coords, xi),
                n: shape_q4(xi),
                grads,
                weight: w * det,
            }
        })
        .collect()
}

fn polygon_points(coords: &[Point2; 4], reentrant: usize, refine: u32) -> Result<Vec<QuadPoint>> {
    Ok(concave_param_quadrature(coords, reentrant, refine)?
        .iter()
        .map(|(xi, w)| {
            let (grads, det) = physical_gradients(coords, xi);
            QuadPoint {
                x: map_point(coords, xi),
                n: shape_q4(xi),
                grads,
                weight: w * det,
            }
        })
        .collect())
}

fn concave_centroid_point(coords: &[Point2; 4], points: &[QuadPoint]) -> Result<ParamPoint> {
    let c = polygon_centroid(coords);
    if let Ok(xi) = positive_preimage(coords, &c) {
        return Ok(xi);
    }
    // centroid inside the notch: use the polygon quadrature point closest to it
    let nearest = points
        .iter()
        .min_by(|p, q| (p.x - c).norm().total_cmp(&(q.x - c).norm()))
        .ok_or(Error::PreimageNotFound)?;
    positive_preimage(coords, &nearest.x)
}

impl Discretization {
    pub fn new(mesh: &QuadMesh, method: Method) -> Result<Self> {
        let report = classify_mesh(mesh)?;
        Self::with_report(mesh, report, method)
    }

    pub fn with_report(mesh: &QuadMesh, report: TangleReport, method: Method) -> Result<Self> {
        let centre = ParamPoint::new(0.0, 0.0);
        let elements = (0..mesh.num_elems())
            .into_par_iter()
            .map(|e| {
                let coords = mesh.elem_coords(e);
                match (method, report.classes[e]) {
                    (Method::Itfem { refine }, ElementClass::Concave { reentrant }) => {
                        let points = polygon_points(&coords, reentrant, refine)?;
                        let xi = concave_centroid_point(&coords, &points)?;
                        Ok(ElementQuad {
                            centroid_grads: physical_gradients(&coords, &xi).0,
                            points,
                        })
                    }
                    _ => Ok(ElementQuad {
                        points: gauss_points(&coords),
                        centroid_grads: physical_gradients(&coords, &centre).0,
                    }),
                }
                .map_err(|err: Error| err.in_element(e))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut constraints = Vec::new();
        if let Method::Itfem { .. } = method {
            for (e, r) in report.concave_elements() {
                let row = constraint_row(&mesh.elem_coords(e), r).map_err(|err| err.in_element(e))?;
                let nodes = mesh.elems[e];
                for component in 0..2 {
                    constraints.push(ConstraintColumn {
                        elem: e,
                        component,
                        entries: std::array::from_fn(|a| (2 * nodes[a] + component, row.coeffs[a])),
                    });
                }
            }
        }
        Ok(Discretization {
            method,
            report,
            elements,
            constraints,
        })
    }

    pub fn num_quadrature_points(&self) -> usize {
        self.elements.iter().map(|e| e.points.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirichletValue {
    Constant(f64),
    /// `grad · X + offset`.
    Affine { grad: [f64; 2], offset: f64 },
}

impl DirichletValue {
    pub fn eval(&self, x: &Point2) -> f64 {
        match *self {
            DirichletValue::Constant(v) => v,
            DirichletValue::Affine { grad, offset } => grad[0] * x.x + grad[1] * x.y + offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    pub set: String,
    pub component: usize,
    pub value: DirichletValue,
}

impl DirichletSpec {
    pub fn fixed(set: &str, component: usize) -> Self {
        DirichletSpec {
            set: set.to_string(),
            component,
            value: DirichletValue::Constant(0.0),
        }
    }
}

/// Dead traction (force per reference length) on an edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionSpec {
    pub set: String,
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadCase {
    pub body_force: [f64; 2],
    pub tractions: Vec<TractionSpec>,
    pub dirichlet: Vec<DirichletSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Free equation number per global dof.
    pub equation: Vec<Option<usize>>,
    /// Prescribed values at full load (zero on free dofs).
    pub prescribed: Vec<f64>,
    /// Global dof of each free equation.
    pub free_dofs: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &QuadMesh, loads: &LoadCase) -> Result<Self> {
        let n = 2 * mesh.num_nodes();
        let mut fixed = vec![false; n];
        let mut prescribed = vec![0.0; n];
        for spec in &loads.dirichlet {
            if spec.component > 1 {
                return Err(Error::Config(format!(
                    "displacement component {} out of range",
                    spec.component
                )));
            }
            for &node in mesh.node_set(&spec.set)? {
                let d = 2 * node + spec.component;
                fixed[d] = true;
                prescribed[d] = spec.value.eval(&mesh.nodes[node]);
            }
        }
        let mut equation = vec![None; n];
        let mut free_dofs = Vec::new();
        for d in 0..n {
            if !fixed[d] {
                equation[d] = Some(free_dofs.len());
                free_dofs.push(d);
            }
        }
        Ok(DofMap {
            equation,
            prescribed,
            free_dofs,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.equation.len()
    }

    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Full displacement vector from free values and load-scaled prescribed values.
    pub fn expand(&self, u_free: &[f64], scale: f64) -> Vec<f64> {
        let mut u: Vec<f64> = self.prescribed.iter().map(|v| v * scale).collect();
        for (k, &d) in self.free_dofs.iter().enumerate() {
            u[d] = u_free[k];
        }
        u
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }
}

/// External force vector over all dofs, for dead loads scaled by `scale`.
pub fn external_force(
    mesh: &QuadMesh,
    disc: &Discretization,
    loads: &LoadCase,
    scale: f64,
) -> Result<Vec<f64>> {
    let mut f = vec![0.0; 2 * mesh.num_nodes()];
    let b = loads.body_force;
    if b != [0.0, 0.0] {
        for (e, eq) in disc.elements.iter().enumerate() {
            let nodes = mesh.elems[e];
            for q in &eq.points {
                for a in 0..4 {
                    for i in 0..2 {
                        f[2 * nodes[a] + i] += scale * q.weight * q.n[a] * b[i];
                    }
                }
            }
        }
    }
    for t in &loads.tractions {
        for &(e, le) in mesh.edge_set(&t.set)? {
            let (n1, n2) = mesh.edge_nodes(e, le);
            let len = (mesh.nodes[n2] - mesh.nodes[n1]).norm();
            // two-point Gauss rule on the edge; exact for the linear shape functions
            let g = 0.5 / 3f64.sqrt();
            for s in [0.5 - g, 0.5 + g] {
                for i in 0..2 {
                    let v = scale * t.traction[i] * len * 0.5;
                    f[2 * n1 + i] += v * (1.0 - s);
                    f[2 * n2 + i] += v * s;
                }
            }
        }
    }
    Ok(f)
}

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;
type BMat = SMatrix<f64, 4, 8>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementResponse {
    pub r: Vec8,
    pub k: Mat8,
    /// Smallest determinant of the deformation gradient passed to the material.
    pub min_det_f: f64,
    pub energy: f64,
}

fn b_matrix(grads: &[[f64; 2]; 4]) -> BMat {
    let mut b = BMat::zeros();
    for a in 0..4 {
        for i in 0..2 {
            for j in 0..2 {
                b[(2 * i + j, 2 * a + i)] = grads[a][j];
            }
        }
    }
    b
}

fn def_grad(b: &BMat, u: &Vec8) -> Mat2 {
    let v = b * u;
    Mat2::new(1.0 + v[0], v[1], v[2], 1.0 + v[3])
}

/// Internal force and consistent tangent of one element for element
/// displacements ordered `[u0x, u0y, u1x, …]`.
pub fn element_response(
    material: &MaterialModel,
    quad: &ElementQuad,
    u: &Vec8,
    fbar: bool,
) -> Result<ElementResponse> {
    let mut r = Vec8::zeros();
    let mut k = Mat8::zeros();
    let mut min_det_f = f64::INFINITY;
    let mut energy = 0.0;
    let bc = b_matrix(&quad.centroid_grads);
    let fc = def_grad(&bc, u);
    for q in &quad.points {
        let b = b_matrix(&q.grads);
        let f = def_grad(&b, u);
        let w = q.weight;
        if fbar {
            let resp = fbar_response(material, &f, &fc)?;
            min_det_f = min_det_f.min(resp.f_bar.determinant());
            energy += w * material.energy(&resp.f_bar)?;
            r += b.transpose() * flatten(&resp.stress) * w;
            k += b.transpose() * (resp.d_gauss.0 * b + resp.d_centroid.0 * bc) * w;
        } else {
            let (p, a) = material.stress_and_tangent(&f)?;
            min_det_f = min_det_f.min(f.determinant());
            energy += w * material.energy(&f)?;
            r += b.transpose() * flatten(&p) * w;
            k += b.transpose() * a.0 * b * w;
        }
    }
    Ok(ElementResponse {
        r,
        k,
        min_det_f,
        energy,
    })
}

/// Linearized system at one state, restricted to the free dofs.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub kt: SparseColMat<usize, f64>,
    /// Active constraint columns restricted to free dofs: `(equation, coefficient)`.
    pub c: Vec<Vec<(usize, f64)>>,
    /// `internal − external` on free dofs.
    pub ru: Vec<f64>,
    /// Constraint values `Cᵀu` (over all dofs) of the active columns.
    pub g: Vec<f64>,
    pub min_det_f: f64,
    /// Stored strain energy `Σ w Ψ`.
    pub energy: f64,
    pub symmetric: bool,
}

impl AssembledSystem {
    pub fn num_free(&self) -> usize {
        self.ru.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.c.len()
    }

    /// `C λ` on the free dofs.
    pub fn c_times(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free()];
        for (col, l) in self.c.iter().zip(lambda) {
            for &(i, v) in col {
                out[i] += v * l;
            }
        }
        out
    }

    pub fn kt_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free()];
        let k = self.kt.as_ref();
        for j in 0..k.ncols() {
            for (i, val) in k.row_idx_of_col(j).zip(k.val_of_col(j)) {
                out[i] += val * v[j];
            }
        }
        out
    }
}

/// Assembler for a fixed mesh, discretization, material and Dirichlet partition.
pub struct Assembler<'a> {
    pub mesh: &'a QuadMesh,
    pub disc: &'a Discretization,
    pub dofs: &'a DofMap,
    pub material: MaterialModel,
    pub fbar: bool,
    /// Constraint columns that touch at least one free dof.
    pub active: Vec<usize>,
    pattern: OnceLock<(SymbolicSparseColMat<usize>, Argsort<usize>)>,
}

impl<'a> Assembler<'a> {
    pub fn new(
        mesh: &'a QuadMesh,
        disc: &'a Discretization,
        dofs: &'a DofMap,
        material: MaterialModel,
        fbar: bool,
    ) -> Self {
        let active = disc
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.entries
                    .iter()
                    .any(|&(d, v)| v != 0.0 && dofs.equation[d].is_some())
            })
            .map(|(k, _)| k)
            .collect();
        Assembler {
            mesh,
            disc,
            dofs,
            material,
            fbar,
            active,
            pattern: OnceLock::new(),
        }
    }

    fn element_eqs(&self, e: usize) -> [Option<usize>; 8] {
        let nodes = self.mesh.elems[e];
        std::array::from_fn(|l| self.dofs.equation[2 * nodes[l / 2] + l % 2])
    }

    fn pattern(&self) -> &(SymbolicSparseColMat<usize>, Argsort<usize>) {
        self.pattern.get_or_init(|| {
            let mut idx = Vec::new();
            for e in 0..self.mesh.num_elems() {
                let eqs = self.element_eqs(e);
                for (a, ea) in eqs.iter().enumerate() {
                    for eb in eqs.iter() {
                        if let (Some(i), Some(j)) = (ea, eb) {
                            let _ = a;
                            idx.push(Pair::new(*i, *j));
                        }
                    }
                }
            }
            let n = self.dofs.num_free();
            SymbolicSparseColMat::try_new_from_indices(n, n, &idx)
                .expect("sparsity pattern of the stiffness matrix")
        })
    }

    /// Element responses at the full displacement vector, in element order.
    pub fn element_responses(&self, u_full: &[f64]) -> Result<Vec<ElementResponse>> {
        (0..self.mesh.num_elems())
            .into_par_iter()
            .map(|e| {
                let nodes = self.mesh.elems[e];
                let ue = Vec8::from_fn(|l, _| u_full[2 * nodes[l / 2] + l % 2]);
                element_response(&self.material, &self.disc.elements[e], &ue, self.fbar)
                    .map_err(|err| err.in_element(e))
            })
            .collect()
    }

    pub fn assemble(&self, u_full: &[f64], fext_full: &[f64]) -> Result<AssembledSystem> {
        let responses = self.element_responses(u_full)?;
        let mut r_full: Vec<f64> = fext_full.iter().map(|f| -f).collect();
        let mut vals = Vec::with_capacity(64 * responses.len());
        let mut min_det_f = f64::INFINITY;
        let mut energy = 0.0;
        for (e, resp) in responses.iter().enumerate() {
            let nodes = self.mesh.elems[e];
            let eqs = self.element_eqs(e);
            for l in 0..8 {
                r_full[2 * nodes[l / 2] + l % 2] += resp.r[l];
            }
            for a in 0..8 {
                if eqs[a].is_none() {
                    continue;
                }
                for b in 0..8 {
                    if eqs[b].is_some() {
                        vals.push(resp.k[(a, b)]);
                    }
                }
            }
            min_det_f = min_det_f.min(resp.min_det_f);
            energy += resp.energy;
        }
        let (symbolic, argsort) = self.pattern();
        let kt = SparseColMat::new_from_argsort(symbolic.clone(), argsort, &vals)
            .map_err(|_| Error::SingularSystem)?;
        let mut c = Vec::with_capacity(self.active.len());
        let mut g = Vec::with_capacity(self.active.len());
        for &k in &self.active {
            let col = &self.disc.constraints[k];
            c.push(
                col.entries
                    .iter()
                    .filter_map(|&(d, v)| self.dofs.equation[d].map(|i| (i, v)))
                    .collect(),
            );
            g.push(col.eval(u_full));
        }
        Ok(AssembledSystem {
            kt,
            c,
            ru: self.dofs.restrict(&r_full),
            g,
            min_det_f,
            energy,
            symmetric: !self.fbar,
        })
    }

    /// Internal force over all dofs (reactions included).
    pub fn internal_force(&self, u_full: &[f64]) -> Result<Vec<f64>> {
        let responses = self.element_responses(u_full)?;
        let mut r = vec![0.0; u_full.len()];
        for (e, resp) in responses.iter().enumerate() {
            let nodes = self.mesh.elems[e];
            for l in 0..8 {
                r[2 * nodes[l / 2] + l % 2] += resp.r[l];
            }
        }
        Ok(r)
    }
}

/// Dense copy of a sparse matrix (tests and diagnostics).
pub fn to_dense(m: &SparseColMat<usize, f64>) -> faer::Mat<f64> {
    let m = m.as_ref();
    let mut d = faer::Mat::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j)) {
            d[(i, j)] += *v;
        }
    }
    d
}
