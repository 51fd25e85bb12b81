//! Load stepping and Newton-Raphson on the bordered system
//! `[[K, C], [Cᵀ, 0]] [Δu; Δλ] = [−(R + Cλ); −Cᵀu]`.

use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assembly::{external_force, Assembler, AssembledSystem, Discretization, DofMap, LoadCase, Method};
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::mesh::QuadMesh;

/// Dense condition numbers are refused above this dimension.
pub const DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCut {
    pub enabled: bool,
    pub max_halvings: u32,
}

impl Default for StepCut {
    fn default() -> Self {
        StepCut {
            enabled: false,
            max_halvings: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub load_steps: usize,
    /// Convergence threshold on `‖Δu‖`.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub step_cut: StepCut,
    pub fbar: bool,
    /// Sequential factorization for bitwise-reproducible runs.
    pub deterministic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::itfem(),
            load_steps: 10,
            newton_tol: 1e-9,
            max_newton: 50,
            step_cut: StepCut::default(),
            fbar: false,
            deterministic: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.load_steps == 0 || self.max_newton == 0 {
            return Err(Error::Config("load_steps and max_newton must be positive".into()));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config("newton_tol must be positive".into()));
        }
        if let Method::Itfem { refine } = self.method {
            if refine > 6 {
                return Err(Error::Config(format!("refine = {refine} exceeds 6")));
            }
        }
        Ok(())
    }
}

/// Sparse LU of the bordered matrix with the symbolic analysis reused while
/// the sparsity pattern is unchanged.
#[derive(Default)]
pub struct SaddleSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

fn matvec(m: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let m = m.as_ref();
    let mut y = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        let xj = x[j];
        for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j)) {
            y[i] += v * xj;
        }
    }
    y
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn inf_norm_matrix(m: &SparseColMat<usize, f64>) -> f64 {
    let m = m.as_ref();
    let mut rows = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j)) {
            rows[i] += v.abs();
        }
    }
    inf_norm(&rows)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale applied to the constraint block: the mean magnitude of the diagonal
/// of `K`. Constraint coefficients are dimensionless while `K` carries the
/// stiffness units, so without it the bordered matrix (and its condition
/// number) would depend on the unit system.
pub fn constraint_scale(kt: &SparseColMat<usize, f64>) -> f64 {
    let k = kt.as_ref();
    let n = k.nrows();
    let mut sum = 0.0;
    for j in 0..n {
        for (i, v) in k.row_idx_of_col(j).zip(k.val_of_col(j)) {
            if i == j {
                sum += v.abs();
            }
        }
    }
    let s = sum / n.max(1) as f64;
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// The bordered matrix `[K sC; sCᵀ 0]` as a sparse matrix, with `s` from
/// [`constraint_scale`].
pub fn bordered_matrix(
    kt: &SparseColMat<usize, f64>,
    c: &[Vec<(usize, f64)>],
) -> Result<SparseColMat<usize, f64>> {
    let s = constraint_scale(kt);
    let n = kt.nrows();
    let dim = n + c.len();
    let k = kt.as_ref();
    let mut trip = Vec::with_capacity(k.compute_nnz() + 2 * c.iter().map(Vec::len).sum::<usize>());
    for j in 0..n {
        for (i, v) in k.row_idx_of_col(j).zip(k.val_of_col(j)) {
            trip.push(Triplet::new(i, j, *v));
        }
    }
    for (l, col) in c.iter().enumerate() {
        for &(i, v) in col {
            trip.push(Triplet::new(i, n + l, s * v));
            trip.push(Triplet::new(n + l, i, s * v));
        }
    }
    SparseColMat::try_new_from_triplets(dim, dim, &trip).map_err(|_| Error::SingularSystem)
}

impl SaddleSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves the bordered system; with no constraint columns this is a plain
    /// solve with `K`.
    pub fn solve(
        &mut self,
        kt: &SparseColMat<usize, f64>,
        c: &[Vec<(usize, f64)>],
        rhs_u: &[f64],
        rhs_c: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = kt.nrows();
        let a = bordered_matrix(kt, c)?;
        let dim = a.nrows();
        let sym = a.as_ref().symbolic();
        let reuse = matches!(&self.symbolic, Some((cp, ri, _))
            if cp.as_slice() == sym.col_ptr() && ri.as_slice() == sym.row_idx());
        if !reuse {
            let s = SymbolicLu::try_new(sym).map_err(|_| Error::SingularSystem)?;
            self.symbolic = Some((sym.col_ptr().to_vec(), sym.row_idx().to_vec(), s));
        }
        let symbolic = self.symbolic.as_ref().map(|s| s.2.clone()).expect("symbolic factorization");
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_ref()).map_err(|_| Error::SingularSystem)?;

        let s = constraint_scale(kt);
        let rhs: Vec<f64> = rhs_u.iter().copied().chain(rhs_c.iter().map(|g| s * g)).collect();
        let rhs_norm = norm(&rhs);
        let mut x = vec![0.0; dim];
        let mut res = rhs.clone();
        let mut res_norm = rhs_norm;
        // iterative refinement
        for _ in 0..3 {
            if res_norm <= 1e-14 * rhs_norm || res_norm == 0.0 {
                break;
            }
            let mut d = Mat::from_fn(dim, 1, |i, _| res[i]);
            lu.solve_in_place(d.as_mut());
            let trial: Vec<f64> = (0..dim).map(|i| x[i] + d[(i, 0)]).collect();
            if !trial.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularSystem);
            }
            let ax = matvec(&a, &trial);
            let trial_res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
            let new_norm = norm(&trial_res);
            if new_norm >= res_norm {
                break;
            }
            x = trial;
            res = trial_res;
            res_norm = new_norm;
        }
        // normwise backward error; slender structures are legitimately
        // ill-conditioned, so the residual is judged against ‖A‖‖x‖
        if rhs_norm > 0.0 {
            let scale = inf_norm_matrix(&a) * inf_norm(&x) + inf_norm(&rhs);
            if !(inf_norm(&res) <= 1e-10 * scale) {
                return Err(Error::SingularSystem);
            }
        }
        let lambda = x.split_off(n).into_iter().map(|l| s * l).collect();
        Ok((x, lambda))
    }
}

/// Convenience wrapper without symbolic reuse.
pub fn saddle_solve(
    kt: &SparseColMat<usize, f64>,
    c: &[Vec<(usize, f64)>],
    rhs_u: &[f64],
    rhs_c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    SaddleSolver::new().solve(kt, c, rhs_u, rhs_c)
}

/// One Newton update of the free displacements and multipliers.
pub fn newton_step(
    solver: &mut SaddleSolver,
    sys: &AssembledSystem,
    u_free: &mut [f64],
    lambda: &mut [f64],
) -> Result<f64> {
    let c_lambda = sys.c_times(lambda);
    let rhs_u: Vec<f64> = sys.ru.iter().zip(&c_lambda).map(|(r, cl)| -(r + cl)).collect();
    let rhs_c: Vec<f64> = sys.g.iter().map(|g| -g).collect();
    let (du, dl) = solver.solve(&sys.kt, &sys.c, &rhs_u, &rhs_c)?;
    for (u, d) in u_free.iter_mut().zip(&du) {
        *u += d;
    }
    for (l, d) in lambda.iter_mut().zip(&dl) {
        *l += d;
    }
    Ok(norm(&du))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub load_factor: f64,
    /// Displacements over all dofs.
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub newton_iters: usize,
    /// `‖Δu‖` per Newton iteration.
    pub history: Vec<f64>,
    /// Smallest determinant of the deformation gradient passed to the material.
    pub min_det_f: f64,
    /// Largest `|column(C)ᵀu|` over the constraints.
    pub constraint_residual: f64,
    /// Norm of `R + Cλ` at the converged state.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub steps: Vec<StepResult>,
    pub num_free: usize,
    pub num_constraints: usize,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn final_u(&self) -> &[f64] {
        self.steps.last().map(|s| s.u.as_slice()).unwrap_or(&[])
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.constraint_residual).fold(0.0, f64::max)
    }

    /// Largest per-step ratio `max |column(C)ᵀu| / ‖u‖∞` (zero for a zero state).
    pub fn relative_constraint_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| {
                let u_max = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if u_max > 0.0 {
                    s.constraint_residual / u_max
                } else {
                    s.constraint_residual
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Everything needed to run one problem.
pub struct Problem<'a> {
    pub mesh: &'a QuadMesh,
    pub material: MaterialModel,
    pub loads: &'a LoadCase,
}

pub fn run(problem: &Problem, config: &SolverConfig) -> Result<RunResult> {
    run_with_observer(problem, config, |_| Ok(()))
}

enum StepFailure {
    Cut(Error),
    Fatal(Error),
}

/// Runs the load ramp, calling `observer` after each converged step.
pub fn run_with_observer(
    problem: &Problem,
    config: &SolverConfig,
    mut observer: impl FnMut(&StepResult) -> Result<()>,
) -> Result<RunResult> {
    config.validate()?;
    problem.material.validate()?;
    if config.deterministic {
        faer::set_global_parallelism(faer::Par::Seq);
    }
    let start = Instant::now();
    let mesh = problem.mesh;
    let disc = Discretization::new(mesh, config.method)?;
    let dofs = DofMap::new(mesh, problem.loads)?;
    let asm = Assembler::new(mesh, &disc, &dofs, problem.material, config.fbar);
    let fext_unit = external_force(mesh, &disc, problem.loads, 1.0)?;
    let mut solver = SaddleSolver::new();

    let mut steps = Vec::new();
    let mut u_free = vec![0.0; dofs.num_free()];
    let base = 1.0 / config.load_steps as f64;
    let mut factor = 0.0;
    let mut step_index = 0;
    while step_index < config.load_steps {
        let target = (step_index + 1) as f64 * base;
        let mut increment = target - factor;
        let mut halvings = 0;
        // sub-steps until the nominal target is reached
        while factor < target - 1e-14 {
            let next = if target - factor <= increment * (1.0 + 1e-12) {
                target
            } else {
                factor + increment
            };
            match newton_solve(&asm, &dofs, &fext_unit, &mut solver, &u_free, next, config) {
                Ok(step) => {
                    u_free = dofs.restrict(&step.u);
                    factor = next;
                    observer(&step)?;
                    steps.push(step);
                }
                Err(StepFailure::Cut(_)) if config.step_cut.enabled && halvings < config.step_cut.max_halvings => {
                    halvings += 1;
                    increment *= 0.5;
                }
                Err(StepFailure::Cut(err)) => {
                    return Err(match err {
                        Error::Diverged {
                            load_factor,
                            history,
                            ..
                        } => Error::Diverged {
                            step: step_index + 1,
                            load_factor,
                            history,
                        },
                        Error::Element { source, .. } if matches!(*source, Error::NonPositiveJacobianState { .. }) => {
                            Error::Diverged {
                                step: step_index + 1,
                                load_factor: next,
                                history: Vec::new(),
                            }
                        }
                        e => e,
                    });
                }
                Err(StepFailure::Fatal(err)) => return Err(err),
            }
        }
        step_index += 1;
    }
    Ok(RunResult {
        steps,
        num_free: dofs.num_free(),
        num_constraints: asm.active.len(),
        wall_time: start.elapsed(),
    })
}

fn newton_solve(
    asm: &Assembler,
    dofs: &DofMap,
    fext_unit: &[f64],
    solver: &mut SaddleSolver,
    u_start: &[f64],
    factor: f64,
    config: &SolverConfig,
) -> std::result::Result<StepResult, StepFailure> {
    let classify = |e: Error| match e.root() {
        Error::NonPositiveJacobianState { .. } | Error::SingularSystem => StepFailure::Cut(e),
        _ => StepFailure::Fatal(e),
    };
    let fext: Vec<f64> = fext_unit.iter().map(|f| f * factor).collect();
    let mut u_free = u_start.to_vec();
    let mut lambda = vec![0.0; asm.active.len()];
    let mut history = Vec::new();
    let mut increases = 0;
    for iter in 1..=config.max_newton {
        let u_full = dofs.expand(&u_free, factor);
        let sys = asm.assemble(&u_full, &fext).map_err(classify)?;
        let du = newton_step(solver, &sys, &mut u_free, &mut lambda).map_err(classify)?;
        if !du.is_finite() {
            return Err(StepFailure::Cut(Error::SingularSystem));
        }
        if let Some(&last) = history.last() {
            increases = if du > last { increases + 1 } else { 0 };
        }
        history.push(du);
        let u_scale = u_free.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // the second test only matters when roundoff in ‖Δu‖ exceeds the absolute tolerance
        if du < config.newton_tol || du <= 1e-13 * u_scale {
            let u = dofs.expand(&u_free, factor);
            let constraint_residual = asm
                .disc
                .constraints
                .iter()
                .map(|c| c.eval(&u).abs())
                .fold(0.0, f64::max);
            // a small Δu can still carry the round-off of a huge right-hand
            // side (e.g. the first iterate after a cut); the constraints are
            // linear, so one more iteration restores them
            let u_max = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if constraint_residual > 1e-10 * u_max && iter < config.max_newton {
                continue;
            }
            let sys = asm.assemble(&u, &fext).map_err(classify)?;
            let cl = sys.c_times(&lambda);
            let residual_norm = norm(&sys.ru.iter().zip(&cl).map(|(r, c)| r + c).collect::<Vec<_>>());
            return Ok(StepResult {
                load_factor: factor,
                u,
                lambda,
                newton_iters: iter,
                history,
                min_det_f: sys.min_det_f,
                constraint_residual,
                residual_norm,
            });
        }
        if increases >= 3 {
            break;
        }
    }
    Err(StepFailure::Cut(Error::Diverged {
        step: 0,
        load_factor: factor,
        history,
    }))
}

/// 2-norm condition number of the bordered matrix by dense SVD.
pub fn condition_number(sys: &AssembledSystem) -> Result<f64> {
    let a = bordered_matrix(&sys.kt, &sys.c)?;
    dense_condition_number(&a)
}

pub fn dense_condition_number(a: &SparseColMat<usize, f64>) -> Result<f64> {
    let dim = a.nrows();
    if dim > DENSE_CAP {
        return Err(Error::TooLarge { dim, cap: DENSE_CAP });
    }
    let dense = crate::assembly::to_dense(a);
    let s = dense.singular_values().map_err(|_| Error::SingularSystem)?;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Assembles the system at a converged state (diagnostics such as the
/// condition number).
pub fn assemble_at(problem: &Problem, config: &SolverConfig, step: &StepResult) -> Result<AssembledSystem> {
    let disc = Discretization::new(problem.mesh, config.method)?;
    let dofs = DofMap::new(problem.mesh, problem.loads)?;
    let asm = Assembler::new(problem.mesh, &disc, &dofs, problem.material, config.fbar);
    let fext = external_force(problem.mesh, &disc, problem.loads, step.load_factor)?;
    asm.assemble(&step.u, &fext)
}
