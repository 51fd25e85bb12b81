//! Benchmark problems: Cook's membrane, the punch and the thin cantilever.

use std::fmt;
use std::str::FromStr;

use crate::assembly::{DirichletSpec, LoadCase, TractionSpec};
use crate::error::{Error, Result};
use crate::material::{elastic_constants, MaterialModel, Moduli};
use crate::mesh::{
    gen_cooks, gen_punch, gen_thin_beam, CookTangle, Point2, PunchTangle, QuadMesh, ThinBeamTangle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cooks,
    Punch,
    ThinBeam,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Cooks, Preset::Punch, Preset::ThinBeam];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cooks => "cooks",
            Preset::Punch => "punch",
            Preset::ThinBeam => "thin_beam",
        }
    }

    /// Tangle used when a preset is asked for its tangled mesh.
    pub fn default_tangle(self) -> Tangle {
        match self {
            Preset::Cooks => Tangle::Checkerboard { t: 0.75 },
            Preset::Punch => Tangle::Pairwise { t: 0.75 },
            Preset::ThinBeam => Tangle::SplitPair,
        }
    }

    pub fn default_material(self) -> MaterialModel {
        match self {
            Preset::Cooks => MaterialModel::StVenantKirchhoff {
                lambda: 100.0,
                mu: 50.0,
            },
            Preset::Punch => MaterialModel::GeneralizedNeoHookean {
                mu: 500.0,
                kappa: 1700.0,
            },
            Preset::ThinBeam => MaterialModel::GeneralizedNeoHookean {
                mu: 6000.0,
                kappa: 16000.0,
            },
        }
    }

    pub fn default_loads(self) -> LoadCase {
        let clamp = |set: &str| vec![DirichletSpec::fixed(set, 0), DirichletSpec::fixed(set, 1)];
        match self {
            Preset::Cooks => LoadCase {
                body_force: [0.0, 0.0],
                tractions: vec![TractionSpec {
                    set: "right".into(),
                    traction: [0.0, 5.0],
                }],
                dirichlet: clamp("left"),
            },
            Preset::Punch => LoadCase {
                body_force: [0.0, 0.0],
                tractions: vec![TractionSpec {
                    set: "top_left".into(),
                    traction: [0.0, -1000.0],
                }],
                dirichlet: vec![
                    DirichletSpec::fixed("left", 0),
                    DirichletSpec::fixed("top", 0),
                    DirichletSpec::fixed("bottom", 1),
                ],
            },
            // total end load 0.1 spread over the unit-height end
            Preset::ThinBeam => LoadCase {
                body_force: [0.0, 0.0],
                tractions: vec![TractionSpec {
                    set: "right".into(),
                    traction: [0.0, -0.1],
                }],
                dirichlet: clamp("left"),
            },
        }
    }

    /// Probe point and the displacement component reported there.
    pub fn probe(self) -> (Point2, usize) {
        match self {
            Preset::Cooks => (Point2::new(48.0, 60.0), 1),
            Preset::Punch => (Point2::new(0.0, 1.0), 1),
            Preset::ThinBeam => (Point2::new(100.0, 1.0), 1),
        }
    }

    pub fn min_n(self) -> u32 {
        match self {
            Preset::ThinBeam => 0,
            _ => 1,
        }
    }

    pub fn mesh(self, n: u32, tangle: Tangle) -> Result<QuadMesh> {
        let bad = || {
            Error::Config(format!(
                "tangle `{}` is not available for preset `{}`",
                tangle.name(),
                self.name()
            ))
        };
        match self {
            Preset::Cooks => gen_cooks(
                n,
                match tangle {
                    Tangle::None => CookTangle::None,
                    Tangle::Single { d } => CookTangle::Single { d },
                    Tangle::Checkerboard { t } => CookTangle::Checkerboard { t },
                    _ => return Err(bad()),
                },
            ),
            Preset::Punch => gen_punch(
                n,
                match tangle {
                    Tangle::None => PunchTangle::None,
                    Tangle::Pairwise { t } => PunchTangle::Pairwise { t },
                    Tangle::BlockCenter { t } => PunchTangle::BlockCenter { t },
                    _ => return Err(bad()),
                },
            ),
            Preset::ThinBeam => gen_thin_beam(
                n,
                match tangle {
                    Tangle::None => ThinBeamTangle::None,
                    Tangle::SplitPair => ThinBeamTangle::SplitPair,
                    _ => return Err(bad()),
                },
            ),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset `{s}` (expected one of: cooks, punch, thin_beam)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tangle {
    None,
    Single { d: f64 },
    Checkerboard { t: f64 },
    Pairwise { t: f64 },
    BlockCenter { t: f64 },
    SplitPair,
}

impl Tangle {
    pub const NAMES: [&'static str; 6] = [
        "none",
        "single",
        "checkerboard",
        "pairwise",
        "block_center",
        "split_pair",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Tangle::None => "none",
            Tangle::Single { .. } => "single",
            Tangle::Checkerboard { .. } => "checkerboard",
            Tangle::Pairwise { .. } => "pairwise",
            Tangle::BlockCenter { .. } => "block_center",
            Tangle::SplitPair => "split_pair",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Tangle::Single { d } => Some(d),
            Tangle::Checkerboard { t } | Tangle::Pairwise { t } | Tangle::BlockCenter { t } => Some(t),
            Tangle::None | Tangle::SplitPair => None,
        }
    }

    /// Builds a tangle from its name and optional parameter (defaults:
    /// `d = 0.3` for `single`, `t = 0.75` otherwise).
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self> {
        Ok(match name {
            "none" => Tangle::None,
            "single" => Tangle::Single {
                d: param.unwrap_or(0.3),
            },
            "checkerboard" => Tangle::Checkerboard {
                t: param.unwrap_or(0.75),
            },
            "pairwise" => Tangle::Pairwise {
                t: param.unwrap_or(0.75),
            },
            "block_center" => Tangle::BlockCenter {
                t: param.unwrap_or(0.75),
            },
            "split_pair" => Tangle::SplitPair,
            other => {
                return Err(Error::Config(format!(
                    "unknown tangle `{other}` (expected one of: {})",
                    Tangle::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Generalized neo-Hookean moduli with shear modulus `mu` and the bulk
/// modulus implied by Poisson's ratio `nu`.
pub fn gnh_from_poisson(mu: f64, nu: f64) -> Result<MaterialModel> {
    let e = 2.0 * mu * (1.0 + nu);
    let c = elastic_constants(Moduli::YoungPoisson { e, nu })?;
    MaterialModel::gnh(c.mu, c.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{external_force, Discretization, DofMap, Method};
    use approx::assert_relative_eq;

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("bridge".parse::<Preset>(), Err(Error::Config(_))));
        for n in Tangle::NAMES {
            assert_eq!(Tangle::from_name(n, None).unwrap().name(), n);
        }
        assert!(Tangle::from_name("knot", None).is_err());
    }

    #[test]
    fn preset_loads_reference_existing_sets() {
        for p in Preset::ALL {
            let n = p.min_n() + 1;
            let mesh = p.mesh(n, p.default_tangle()).unwrap();
            let loads = p.default_loads();
            let disc = Discretization::new(&mesh, Method::itfem()).unwrap();
            DofMap::new(&mesh, &loads).unwrap();
            external_force(&mesh, &disc, &loads, 1.0).unwrap();
            let (x, _) = p.probe();
            assert!(mesh.find_node(&x, 1e-9).is_some(), "{p}");
        }
    }

    #[test]
    fn thin_beam_total_load() {
        let mesh = Preset::ThinBeam.mesh(1, Tangle::None).unwrap();
        let disc = Discretization::new(&mesh, Method::Fem).unwrap();
        let f = external_force(&mesh, &disc, &Preset::ThinBeam.default_loads(), 1.0).unwrap();
        let fy: f64 = f.iter().skip(1).step_by(2).sum();
        assert_relative_eq!(fy, -0.1, max_relative = 1e-12);
    }

    #[test]
    fn poisson_conversion() {
        let MaterialModel::GeneralizedNeoHookean { mu, kappa } = gnh_from_poisson(500.0, 0.49995).unwrap() else {
            unreachable!()
        };
        assert_relative_eq!(mu, 500.0, max_relative = 1e-12);
        let c = elastic_constants(Moduli::BulkShear { kappa, mu }).unwrap();
        assert_relative_eq!(c.nu, 0.49995, max_relative = 1e-12);
        assert!(gnh_from_poisson(500.0, 0.5).is_err());
    }

    #[test]
    fn mismatched_tangle_is_rejected() {
        assert!(Preset::Cooks.mesh(2, Tangle::SplitPair).is_err());
        assert!(Preset::ThinBeam.mesh(1, Tangle::Checkerboard { t: 0.5 }).is_err());
    }
}
