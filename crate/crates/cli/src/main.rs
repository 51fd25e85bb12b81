//! `tfem` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 solver failure
//! (divergence; artifacts up to the failure are still written), 4 I/O error.
//! `TFEM_THREADS` sets the worker thread count.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tfem::analysis::{convergence_study, poisson_sweep, probe};
use tfem::assembly::Discretization;
use tfem::config::RunConfig;
use tfem::mesh::{classify_mesh, read_mesh, write_mesh};
use tfem::output::{convergence_csv, step_table_csv, sweep_csv, write_text, write_vtk, VtkSnapshot};
use tfem::problems::{Preset, Tangle};
use tfem::solver::{run_with_observer, Problem};
use tfem::{Error, QuadMesh};

#[derive(Parser)]
#[command(name = "tfem", version, about = "Tangled-mesh finite elements for plane-strain hyperelasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Cooks,
    Punch,
    #[value(name = "thin_beam")]
    ThinBeam,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Cooks => Preset::Cooks,
            PresetArg::Punch => Preset::Punch,
            PresetArg::ThinBeam => Preset::ThinBeam,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark mesh and print its tangle summary.
    Mesh {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long)]
        n: u32,
        /// none, single, checkerboard, pairwise, block_center or split_pair
        #[arg(long, default_value = "none")]
        tangle: String,
        /// Tangle parameter (d for single, t otherwise).
        #[arg(long)]
        param: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one load ramp from a configuration file.
    Run { config: PathBuf },
    /// Run a convergence study from a configuration file with a [study] section.
    Study { config: PathBuf },
    /// Convert a mesh file to a VTK snapshot with zero displacement.
    Export {
        mesh: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Solver(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e.root() {
            Error::Io { .. } => Failure::Io(msg),
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidMesh(_)
            | Error::IndexOutOfRange { .. }
            | Error::SelfIntersecting { .. }
            | Error::DegenerateElement { .. }
            | Error::InadmissibleModuli(_)
            | Error::UnknownSet(_) => Failure::Usage(msg),
            _ => Failure::Solver(msg),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Mesh {
            preset,
            n,
            tangle,
            param,
            output,
        } => cmd_mesh(preset.into(), n, &tangle, param, output),
        Command::Run { config } => cmd_run(&config),
        Command::Study { config } => cmd_study(&config),
        Command::Export { mesh, output } => cmd_export(&mesh, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TFEM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("TFEM_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn summary(mesh: &QuadMesh) -> Result<String, Failure> {
    let r = classify_mesh(mesh)?;
    Ok(format!(
        "nodes {}, elements {}, concave {}, degenerate {}, min corner jacobian {:e}",
        mesh.num_nodes(),
        mesh.num_elems(),
        r.concave_count,
        r.degenerate_count(),
        r.min_corner_jacobian
    ))
}

fn cmd_mesh(preset: Preset, n: u32, tangle: &str, param: Option<f64>, output: Option<PathBuf>) -> Result<(), Failure> {
    let tangle = Tangle::from_name(tangle, param)?;
    let mesh = preset.mesh(n, tangle)?;
    let path = output.unwrap_or_else(|| PathBuf::from(format!("{}_n{n}_{}.mesh", preset.name(), tangle.name())));
    write_mesh(&mesh, &path)?;
    println!("{}: {}", path.display(), summary(&mesh)?);
    Ok(())
}

fn cmd_run(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let mesh = cfg.mesh()?;
    let loads = cfg.loads()?;
    let solver = cfg.solver_config()?;
    let probes = cfg.probe_points()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    println!("{}", summary(&mesh)?);

    let disc = Discretization::new(&mesh, solver.method)?;
    let problem = Problem {
        mesh: &mesh,
        material: cfg.material()?,
        loads: &loads,
    };
    let mut steps = Vec::new();
    let mut probe_log = Vec::new();
    let result = run_with_observer(&problem, &solver, |st| {
        let k = steps.len() + 1;
        if cfg.output.vtk {
            write_vtk(&VtkSnapshot::new(&mesh, &disc, &st.u)?, dir.join(format!("step_{k:03}.vtk")))?;
        }
        let values = probes
            .iter()
            .map(|(_, x, _)| probe(&mesh, &st.u, x))
            .collect::<tfem::Result<Vec<_>>>()?;
        println!(
            "step {k:3}  load {:.4}  newton {:2}  min det F {:.6}  constraint {:.3e}",
            st.load_factor, st.newton_iters, st.min_det_f, st.constraint_residual
        );
        probe_log.push(values);
        steps.push(st.clone());
        Ok(())
    });
    if cfg.output.csv {
        let names: Vec<String> = probes.iter().map(|p| p.0.clone()).collect();
        let path = dir.join("steps.csv");
        write_text(&path, &step_table_csv(&steps, &names, &probe_log))?;
    }
    let res = result?;
    if let Some(last) = probe_log.last() {
        for ((name, x, _), v) in probes.iter().zip(last) {
            println!("probe {name} at ({}, {}): ux {:.10e}  uy {:.10e}", x.x, x.y, v[0], v[1]);
        }
    }
    println!(
        "converged: {} free dofs, {} constraints, max constraint residual {:.3e}",
        res.num_free,
        res.num_constraints,
        res.max_constraint_residual()
    );
    Ok(())
}

fn cmd_study(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let (spec, methods) = cfg.study_spec()?;
    let study = cfg.study.as_ref().expect("validated");
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    if !methods.is_empty() {
        let reference = spec.reference()?;
        for m in &methods {
            let table = convergence_study(&spec, *m, Some(&reference));
            let path = dir.join(format!("study_{}.csv", m.name()));
            write_text(&path, &convergence_csv(&table))?;
            let failed = table.rows.iter().filter(|r| r.failed.is_some()).count();
            match table.fit {
                Some(f) => println!("{}: slope {:.4} ({failed} failed rows) -> {}", m.name(), f.slope, path.display()),
                None => println!("{}: no slope ({failed} failed rows) -> {}", m.name(), path.display()),
            }
        }
    }
    if !study.poisson_sweep.is_empty() {
        let mu = match spec.material {
            tfem::material::MaterialModel::GeneralizedNeoHookean { mu, .. } => mu,
            tfem::material::MaterialModel::StVenantKirchhoff { mu, .. } => mu,
        };
        let n = *study.n.last().expect("validated");
        let rows = poisson_sweep(&spec, mu, &study.poisson_sweep, n)?;
        let path = dir.join("poisson_sweep.csv");
        write_text(&path, &sweep_csv(&rows))?;
        println!("poisson sweep at n = {n} -> {}", path.display());
    }
    Ok(())
}

fn cmd_export(mesh_path: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let mesh = read_mesh(mesh_path)?;
    let disc = Discretization::new(&mesh, tfem::assembly::Method::itfem())?;
    let snap = VtkSnapshot::new(&mesh, &disc, &vec![0.0; 2 * mesh.num_nodes()])?;
    let path = output.unwrap_or_else(|| mesh_path.with_extension("vtk"));
    write_vtk(&snap, &path)?;
    println!("{}: {}", path.display(), summary(&mesh)?);
    Ok(())
}
