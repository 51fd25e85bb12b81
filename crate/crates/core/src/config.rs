//! Run and study configuration files (TOML).
//!
//! ```toml
//! [problem]
//! preset = "cooks"          # or: mesh = "path/to/file.mesh"
//! n = 3
//! tangle = "checkerboard"
//! tangle_param = 0.75
//!
//! [material]                # optional for presets
//! model = "stvk"
//! lambda = 100.0
//! mu = 50.0
//!
//! [solver]
//! method = "itfem"
//! load_steps = 10
//!
//! [[probes]]
//! name = "A"
//! x = 48.0
//! y = 60.0
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{StudyMethod, StudySpec};
use crate::assembly::{DirichletSpec, DirichletValue, LoadCase, Method, TractionSpec, DEFAULT_REFINE};
use crate::error::{Error, Result};
use crate::material::{elastic_constants, MaterialModel, Moduli};
use crate::mesh::{read_mesh, Point2, QuadMesh};
use crate::problems::{Preset, Tangle};
use crate::solver::{SolverConfig, StepCut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<LoadSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default = "default_tangle")]
    pub tangle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangle_param: Option<f64>,
}

fn default_tangle() -> String {
    "none".into()
}

/// Material model plus any admissible pair of elastic constants
/// (`kappa`+`mu`, `lambda`+`mu`, `e`+`nu` or `mu`+`nu`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: String,
    pub refine: u32,
    pub load_steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub step_cut: bool,
    pub max_halvings: u32,
    pub fbar: bool,
    pub deterministic: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            method: "itfem".into(),
            refine: DEFAULT_REFINE,
            load_steps: d.load_steps,
            newton_tol: d.newton_tol,
            max_newton: d.max_newton,
            step_cut: d.step_cut.enabled,
            max_halvings: d.step_cut.max_halvings,
            fbar: d.fbar,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    #[serde(default)]
    pub body_force: [f64; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traction: Vec<TractionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dirichlet: Vec<DirichletEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionEntry {
    pub set: String,
    pub value: [f64; 2],
}

/// Prescribed component `x` or `y`; the value is `value + grad · X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletEntry {
    pub set: String,
    pub component: String,
    #[serde(default)]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub name: String,
    pub x: f64,
    pub y: f64,
    /// Component reported by studies (`x` or `y`).
    #[serde(default = "default_component")]
    pub component: String,
}

fn default_component() -> String {
    "y".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            vtk: true,
            csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub n: Vec<u32>,
    pub reference_n: u32,
    #[serde(default)]
    pub condition: bool,
    /// Poisson ratios for a fixed-`n` sweep at the configured shear modulus.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poisson_sweep: Vec<f64>,
}

fn default_methods() -> Vec<String> {
    StudyMethod::ALL.iter().map(|m| m.name().to_string()).collect()
}

fn component(s: &str) -> Result<usize> {
    match s {
        "x" => Ok(0),
        "y" => Ok(1),
        other => Err(Error::Config(format!("component must be `x` or `y`, got `{other}`"))),
    }
}

impl MaterialSection {
    pub fn resolve(&self) -> Result<MaterialModel> {
        // native constants pass through untouched
        match (self.model.as_str(), self.mu, self.kappa, self.lambda, self.e, self.nu) {
            ("gnh" | "neo_hookean", Some(mu), Some(kappa), None, None, None) => {
                return MaterialModel::gnh(mu, kappa)
            }
            ("stvk" | "saint_venant_kirchhoff", Some(mu), None, Some(lambda), None, None) => {
                return MaterialModel::stvk(lambda, mu)
            }
            _ => {}
        }
        let moduli = match (self.mu, self.kappa, self.lambda, self.e, self.nu) {
            (Some(mu), Some(kappa), None, None, None) => Moduli::BulkShear { kappa, mu },
            (Some(mu), None, Some(lambda), None, None) => Moduli::Lame { lambda, mu },
            (None, None, None, Some(e), Some(nu)) => Moduli::YoungPoisson { e, nu },
            (Some(mu), None, None, None, Some(nu)) => Moduli::YoungPoisson {
                e: 2.0 * mu * (1.0 + nu),
                nu,
            },
            _ => {
                return Err(Error::Config(
                    "material needs exactly one of: kappa+mu, lambda+mu, e+nu, mu+nu".into(),
                ))
            }
        };
        let c = elastic_constants(moduli).map_err(|e| Error::Config(e.to_string()))?;
        match self.model.as_str() {
            "gnh" | "neo_hookean" => MaterialModel::gnh(c.mu, c.kappa),
            "stvk" | "saint_venant_kirchhoff" => MaterialModel::stvk(c.lambda, c.mu),
            other => Err(Error::Config(format!(
                "unknown material model `{other}` (expected gnh or stvk)"
            ))),
        }
    }
}

impl SolverSection {
    pub fn resolve(&self) -> Result<SolverConfig> {
        let method = match self.method.as_str() {
            "fem" => Method::Fem,
            "itfem" => Method::Itfem { refine: self.refine },
            other => {
                return Err(Error::Config(format!(
                    "unknown method `{other}` (expected fem or itfem)"
                )))
            }
        };
        let c = SolverConfig {
            method,
            load_steps: self.load_steps,
            newton_tol: self.newton_tol,
            max_newton: self.max_newton,
            step_cut: StepCut {
                enabled: self.step_cut,
                max_halvings: self.max_halvings,
            },
            fbar: self.fbar,
            deterministic: self.deterministic,
        };
        c.validate()?;
        Ok(c)
    }
}

impl LoadSection {
    pub fn resolve(&self) -> Result<LoadCase> {
        Ok(LoadCase {
            body_force: self.body_force,
            tractions: self
                .traction
                .iter()
                .map(|t| TractionSpec {
                    set: t.set.clone(),
                    traction: t.value,
                })
                .collect(),
            dirichlet: self
                .dirichlet
                .iter()
                .map(|d| {
                    Ok(DirichletSpec {
                        set: d.set.clone(),
                        component: component(&d.component)?,
                        value: match d.grad {
                            None => DirichletValue::Constant(d.value),
                            Some(grad) => DirichletValue::Affine {
                                grad,
                                offset: d.value,
                            },
                        },
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a configuration file. A relative mesh path is
    /// resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(mesh), Some(dir)) = (&cfg.problem.mesh, path.parent()) {
            if mesh.is_relative() {
                cfg.problem.mesh = Some(dir.join(mesh));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without reading a mesh file.
    pub fn validate(&self) -> Result<()> {
        match (&self.problem.preset, &self.problem.mesh) {
            (Some(_), None) => {
                self.preset()?;
                self.tangle()?;
            }
            (None, Some(_)) => {
                if self.problem.tangle != "none" {
                    return Err(Error::Config("tangle applies to presets only".into()));
                }
                if self.material.is_none() || self.loads.is_none() {
                    return Err(Error::Config(
                        "a mesh file needs explicit [material] and [loads] sections".into(),
                    ));
                }
            }
            _ => {
                return Err(Error::Config(
                    "[problem] needs exactly one of `preset` or `mesh`".into(),
                ))
            }
        }
        self.material()?;
        self.loads()?;
        self.solver.resolve()?;
        for p in &self.probes {
            component(&p.component)?;
        }
        if let Some(s) = &self.study {
            if self.problem.preset.is_none() {
                return Err(Error::Config("studies need a preset".into()));
            }
            if s.n.is_empty() {
                return Err(Error::Config("study needs at least one n".into()));
            }
            for m in &s.methods {
                StudyMethod::parse(m)?;
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<Option<Preset>> {
        self.problem.preset.as_deref().map(str::parse).transpose()
    }

    pub fn tangle(&self) -> Result<Tangle> {
        Tangle::from_name(&self.problem.tangle, self.problem.tangle_param)
    }

    pub fn mesh(&self) -> Result<QuadMesh> {
        match (self.preset()?, &self.problem.mesh) {
            (Some(p), _) => p.mesh(self.problem.n.unwrap_or(p.min_n() + 1), self.tangle()?),
            (None, Some(path)) => read_mesh(path),
            (None, None) => Err(Error::Config("no preset or mesh".into())),
        }
    }

    pub fn material(&self) -> Result<MaterialModel> {
        match (&self.material, self.preset()?) {
            (Some(m), _) => m.resolve(),
            (None, Some(p)) => Ok(p.default_material()),
            (None, None) => Err(Error::Config("missing [material]".into())),
        }
    }

    pub fn loads(&self) -> Result<LoadCase> {
        match (&self.loads, self.preset()?) {
            (Some(l), _) => l.resolve(),
            (None, Some(p)) => Ok(p.default_loads()),
            (None, None) => Err(Error::Config("missing [loads]".into())),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        self.solver.resolve()
    }

    /// Named probe points; presets fall back to their benchmark point.
    pub fn probe_points(&self) -> Result<Vec<(String, Point2, usize)>> {
        if self.probes.is_empty() {
            if let Some(p) = self.preset()? {
                let (x, c) = p.probe();
                return Ok(vec![("probe".into(), x, c)]);
            }
        }
        self.probes
            .iter()
            .map(|p| Ok((p.name.clone(), Point2::new(p.x, p.y), component(&p.component)?)))
            .collect()
    }

    /// Study description and the requested methods.
    pub fn study_spec(&self) -> Result<(StudySpec, Vec<StudyMethod>)> {
        let s = self
            .study
            .as_ref()
            .ok_or_else(|| Error::Config("missing [study] section".into()))?;
        let preset = self
            .preset()?
            .ok_or_else(|| Error::Config("studies need a preset".into()))?;
        let mut spec = StudySpec::for_preset(preset, s.n.clone(), s.reference_n);
        if self.problem.tangle != "none" {
            spec.tangle = self.tangle()?;
        }
        spec.material = self.material()?;
        spec.loads = self.loads()?;
        spec.solver = self.solver_config()?;
        spec.condition = s.condition;
        if let Some((_, x, c)) = self.probe_points()?.into_iter().next() {
            spec.probe = x;
            spec.probe_component = c;
        }
        let methods = s.methods.iter().map(|m| StudyMethod::parse(m)).collect::<Result<_>>()?;
        Ok((spec, methods))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[problem]
preset = "punch"
n = 2
tangle = "block_center"
tangle_param = 0.75

[material]
model = "gnh"
mu = 500.0
nu = 0.49995

[solver]
method = "itfem"
refine = 2
load_steps = 10
newton_tol = 1e-9
max_newton = 30
step_cut = true
max_halvings = 4
fbar = true
deterministic = true

[loads]
body_force = [0.0, -1.0]

[[loads.traction]]
set = "top_left"
value = [0.0, -1000.0]

[[loads.dirichlet]]
set = "left"
component = "x"

[[loads.dirichlet]]
set = "bottom"
component = "y"
value = 0.5
grad = [0.0, 0.1]

[[probes]]
name = "P"
x = 0.0
y = 1.0

[output]
dir = "results"
vtk = false
csv = true

[study]
methods = ["fem_regular", "itfem_tangled"]
n = [2, 3]
reference_n = 5
condition = true
poisson_sweep = [0.49, 0.495]
"#;

    #[test]
    fn round_trip_is_fixed_point() {
        for text in [FULL, "[problem]\npreset = \"cooks\"\n"] {
            let a = RunConfig::from_toml_str(text).unwrap();
            let s = a.to_toml_string().unwrap();
            let b = RunConfig::from_toml_str(&s).unwrap();
            assert_eq!(a, b);
            assert_eq!(s, b.to_toml_string().unwrap());
        }
    }

    #[test]
    fn full_config_resolves() {
        let c = RunConfig::from_toml_str(FULL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.tangle().unwrap(), Tangle::BlockCenter { t: 0.75 });
        let MaterialModel::GeneralizedNeoHookean { mu, kappa } = c.material().unwrap() else {
            panic!("expected gnh")
        };
        assert!((mu - 500.0).abs() < 1e-9 && (kappa - 5.0e6).abs() / 5.0e6 < 1e-4);
        let s = c.solver_config().unwrap();
        assert!(s.fbar && s.step_cut.enabled && s.step_cut.max_halvings == 4);
        let l = c.loads().unwrap();
        assert_eq!(l.dirichlet[1].component, 1);
        assert_eq!(l.body_force, [0.0, -1.0]);
        assert_eq!(c.mesh().unwrap().num_elems(), 32);
        let (spec, methods) = c.study_spec().unwrap();
        assert_eq!(methods, vec![StudyMethod::FemRegular, StudyMethod::ItfemTangled]);
        assert_eq!(spec.probe, Point2::new(0.0, 1.0));
        assert!(spec.condition);
    }

    #[test]
    fn preset_defaults_fill_gaps() {
        let c = RunConfig::from_toml_str("[problem]\npreset = \"cooks\"\nn = 3\n").unwrap();
        c.validate().unwrap();
        assert_eq!(c.material().unwrap(), Preset::Cooks.default_material());
        assert_eq!(c.probe_points().unwrap()[0].1, Point2::new(48.0, 60.0));
        assert!(c.solver_config().unwrap().deterministic);
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            "[problem]\npreset = \"bridge\"\n",
            "[problem]\npreset = \"cooks\"\ntangle = \"knot\"\n",
            "[problem]\n",
            "[problem]\npreset = \"cooks\"\nmesh = \"a.mesh\"\n",
            "[problem]\nmesh = \"a.mesh\"\n",
            "[problem]\npreset = \"cooks\"\n[solver]\nmethod = \"xfem\"\n",
            "[problem]\npreset = \"cooks\"\n[material]\nmodel = \"gnh\"\nmu = 1.0\n",
            "[problem]\npreset = \"cooks\"\n[material]\nmodel = \"gnh\"\nmu = 1.0\nnu = 0.6\n",
            "[problem]\npreset = \"cooks\"\nbogus = 1\n",
            "[problem]\npreset = \"cooks\"\n[study]\nn = [1]\nreference_n = 3\nmethods = [\"magic\"]\n",
        ];
        for text in bad {
            let r = RunConfig::from_toml_str(text).and_then(|c| c.validate());
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn relative_mesh_path_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = crate::mesh::gen_cooks(1, crate::mesh::CookTangle::None).unwrap();
        crate::mesh::write_mesh(&mesh, dir.path().join("m.mesh")).unwrap();
        let text = r#"
[problem]
mesh = "m.mesh"
[material]
model = "stvk"
lambda = 100.0
mu = 50.0
[loads]
[[loads.dirichlet]]
set = "left"
component = "x"
"#;
        std::fs::write(dir.path().join("run.toml"), text).unwrap();
        let c = RunConfig::load(dir.path().join("run.toml")).unwrap();
        assert_eq!(c.mesh().unwrap().num_elems(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn round_trip_of_perturbed_config(
                mu in 1e-3f64..1e6,
                kappa in 1e-3f64..1e9,
                tol in 1e-14f64..1e-3,
                steps in 1usize..100,
                refine in 0u32..6,
                fbar in any::<bool>(),
                x in -1e3f64..1e3,
                traction in proptest::array::uniform2(-1e4f64..1e4),
                sweep in proptest::collection::vec(0.0f64..0.5, 0..5),
            ) {
                let mut c = RunConfig::from_toml_str(FULL).unwrap();
                let m = c.material.as_mut().unwrap();
                m.mu = Some(mu);
                m.kappa = Some(kappa);
                c.solver.newton_tol = tol;
                c.solver.load_steps = steps;
                c.solver.refine = refine;
                c.solver.fbar = fbar;
                c.probes[0].x = x;
                c.loads.as_mut().unwrap().traction[0].value = traction;
                c.study.as_mut().unwrap().poisson_sweep = sweep;
                let s = c.to_toml_string().unwrap();
                let back = RunConfig::from_toml_str(&s).unwrap();
                prop_assert_eq!(&back, &c);
                prop_assert_eq!(back.to_toml_string().unwrap(), s);
            }
        }
    }
}
