//! Hyperelastic plane-strain constitutive models.
//!
//! Deformation gradients are in-plane 2×2 tensors; the out-of-plane stretch is
//! fixed at one. Tangents are `A_iJkL = ∂P_iJ/∂F_kL`, stored as a 4×4 matrix
//! with row `2i + J` and column `2k + L`.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent4(pub Matrix4<f64>);

impl Tangent4 {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0[(2 * i + j, 2 * k + l)]
    }

    /// `A : H`, i.e. `(A:H)_iJ = A_iJkL H_kL`.
    pub fn contract(&self, h: &Mat2) -> Mat2 {
        let v = self.0 * flatten(h);
        Mat2::new(v[0], v[1], v[2], v[3])
    }

    /// Largest `|A_iJkL − A_kLiJ|` relative to the largest entry.
    pub fn major_asymmetry(&self) -> f64 {
        let scale = self.0.amax().max(f64::MIN_POSITIVE);
        (self.0 - self.0.transpose()).amax() / scale
    }
}

#[inline]
pub(crate) fn flatten(m: &Mat2) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

#[inline]
fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    /// `Ψ = μ/2 (J^{-2/3} tr b − 3) + K/2 (J − 1)²` with the 3-D invariants of
    /// the plane-strain state (`b33 = 1`).
    GeneralizedNeoHookean { mu: f64, kappa: f64 },
    /// `Ψ = λ/2 (tr E)² + μ E:E`.
    StVenantKirchhoff { lambda: f64, mu: f64 },
}

impl MaterialModel {
    pub fn gnh(mu: f64, kappa: f64) -> Result<Self> {
        let m = MaterialModel::GeneralizedNeoHookean { mu, kappa };
        m.validate()?;
        Ok(m)
    }

    pub fn stvk(lambda: f64, mu: f64) -> Result<Self> {
        let m = MaterialModel::StVenantKirchhoff { lambda, mu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants().map(|_| ())
    }

    pub fn constants(&self) -> Result<ElasticConstants> {
        match *self {
            MaterialModel::GeneralizedNeoHookean { mu, kappa } => {
                elastic_constants(Moduli::BulkShear { kappa, mu })
            }
            MaterialModel::StVenantKirchhoff { lambda, mu } => {
                elastic_constants(Moduli::Lame { lambda, mu })
            }
        }
    }

    pub fn energy(&self, f: &Mat2) -> Result<f64> {
        match *self {
            MaterialModel::GeneralizedNeoHookean { mu, kappa } => {
                let j = det_positive(f)?;
                let trb = f.norm_squared() + 1.0;
                Ok(0.5 * mu * (j.powf(-2.0 / 3.0) * trb - 3.0) + 0.5 * kappa * (j - 1.0).powi(2))
            }
            MaterialModel::StVenantKirchhoff { lambda, mu } => {
                let e = green_lagrange(f);
                Ok(0.5 * lambda * e.trace().powi(2) + mu * e.norm_squared())
            }
        }
    }

    pub fn pk1(&self, f: &Mat2) -> Result<Mat2> {
        match *self {
            MaterialModel::GeneralizedNeoHookean { mu, kappa } => {
                let j = det_positive(f)?;
                let g = inv_transpose(f, j);
                let s = f.norm_squared() + 1.0;
                let c = j.powf(-2.0 / 3.0);
                Ok((f - g * (s / 3.0)) * (mu * c) + g * (kappa * j * (j - 1.0)))
            }
            MaterialModel::StVenantKirchhoff { lambda, mu } => {
                Ok(f * stvk_pk2(f, lambda, mu))
            }
        }
    }

    pub fn tangent(&self, f: &Mat2) -> Result<Tangent4> {
        self.stress_and_tangent(f).map(|(_, a)| a)
    }

    pub fn stress_and_tangent(&self, f: &Mat2) -> Result<(Mat2, Tangent4)> {
        let mut a = Matrix4::zeros();
        match *self {
            MaterialModel::GeneralizedNeoHookean { mu, kappa } => {
                let j = det_positive(f)?;
                let g = inv_transpose(f, j);
                let s = f.norm_squared() + 1.0;
                let c = j.powf(-2.0 / 3.0);
                let dev = f - g * (s / 3.0);
                let p = dev * (mu * c) + g * (kappa * j * (j - 1.0));
                let kv1 = kappa * (2.0 * j * j - j);
                let kv2 = kappa * (j * j - j);
                for i in 0..2 {
                    for jj in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                let iso = -2.0 / 3.0 * g[(k, l)] * dev[(i, jj)]
                                    + delta(i, k) * delta(jj, l)
                                    - 2.0 / 3.0 * f[(k, l)] * g[(i, jj)]
                                    + s / 3.0 * g[(i, l)] * g[(k, jj)];
                                a[(2 * i + jj, 2 * k + l)] = mu * c * iso
                                    + kv1 * g[(k, l)] * g[(i, jj)]
                                    - kv2 * g[(i, l)] * g[(k, jj)];
                            }
                        }
                    }
                }
                Ok((p, Tangent4(a)))
            }
            MaterialModel::StVenantKirchhoff { lambda, mu } => {
                let s = stvk_pk2(f, lambda, mu);
                let b = f * f.transpose();
                for i in 0..2 {
                    for jj in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                a[(2 * i + jj, 2 * k + l)] = delta(i, k) * s[(jj, l)]
                                    + lambda * f[(i, jj)] * f[(k, l)]
                                    + mu * b[(i, k)] * delta(jj, l)
                                    + mu * f[(i, l)] * f[(k, jj)];
                            }
                        }
                    }
                }
                Ok((f * s, Tangent4(a)))
            }
        }
    }
}

fn green_lagrange(f: &Mat2) -> Mat2 {
    (f.transpose() * f - Mat2::identity()) * 0.5
}

fn stvk_pk2(f: &Mat2, lambda: f64, mu: f64) -> Mat2 {
    let e = green_lagrange(f);
    Mat2::identity() * (lambda * e.trace()) + e * (2.0 * mu)
}

fn det_positive(f: &Mat2) -> Result<f64> {
    let j = f.determinant();
    if j > 0.0 && j.is_finite() {
        Ok(j)
    } else {
        Err(Error::NonPositiveJacobianState { det_f: j })
    }
}

fn inv_transpose(f: &Mat2, j: f64) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)]) / j
}

/// `F̄ = (det F_c / det F)^{1/2} F`, so that `det F̄ = det F_c`.
pub fn fbar(f_gauss: &Mat2, f_centroid: &Mat2) -> Result<Mat2> {
    let j = det_positive(f_gauss)?;
    let jc = det_positive(f_centroid)?;
    Ok(f_gauss * (jc / j).sqrt())
}

/// Stress and linearization of the F-bar element formulation at one
/// quadrature point.
///
/// The Cauchy stress is evaluated at `F̄` and integrated over the current
/// configuration; pulled back to the reference configuration this gives the
/// effective first Piola-Kirchhoff stress `P_eff = (J/J_c) α P(F̄)` with
/// `α = (J_c/J)^{1/2}`. Its linearization couples to the centroid
/// deformation gradient:
/// `dP_eff = A(F̄):dF + ½ Q (F_c^{-T}:dF_c − F^{-T}:dF)` with
/// `Q = A(F̄):F − α^{-1} P(F̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbarResponse {
    pub stress: Mat2,
    /// `∂P_eff/∂F` (unsymmetric in general).
    pub d_gauss: Tangent4,
    /// `∂P_eff/∂F_c`.
    pub d_centroid: Tangent4,
    pub f_bar: Mat2,
}

pub fn fbar_response(model: &MaterialModel, f: &Mat2, fc: &Mat2) -> Result<FbarResponse> {
    let j = det_positive(f)?;
    let jc = det_positive(fc)?;
    let alpha = (jc / j).sqrt();
    let f_bar = f * alpha;
    let (p_bar, a_bar) = model.stress_and_tangent(&f_bar)?;
    let stress = p_bar / alpha;
    let q = a_bar.contract(f) - stress;
    let g = flatten(&inv_transpose(f, j));
    let gc = flatten(&inv_transpose(fc, jc));
    let qv = flatten(&q) * 0.5;
    Ok(FbarResponse {
        stress,
        d_gauss: Tangent4(a_bar.0 - qv * g.transpose()),
        d_centroid: Tangent4(qv * gc.transpose()),
        f_bar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moduli {
    YoungPoisson { e: f64, nu: f64 },
    BulkShear { kappa: f64, mu: f64 },
    Lame { lambda: f64, mu: f64 },
}

/// Isotropic elastic constants with 3-D definitions (`K = λ + 2μ/3`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticConstants {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
}

pub fn elastic_constants(m: Moduli) -> Result<ElasticConstants> {
    let (lambda, mu) = match m {
        Moduli::YoungPoisson { e, nu } => {
            if !(nu < 0.5 && nu > -1.0) {
                return Err(Error::InadmissibleModuli(format!("Poisson ratio {nu}")));
            }
            (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
        }
        Moduli::BulkShear { kappa, mu } => (kappa - 2.0 * mu / 3.0, mu),
        Moduli::Lame { lambda, mu } => (lambda, mu),
    };
    if !(mu > 0.0) || !mu.is_finite() || !lambda.is_finite() {
        return Err(Error::InadmissibleModuli(format!("shear modulus {mu}")));
    }
    let kappa = lambda + 2.0 * mu / 3.0;
    let nu = (3.0 * kappa - 2.0 * mu) / (2.0 * (3.0 * kappa + mu));
    if !(nu < 0.5 && nu > -1.0) {
        return Err(Error::InadmissibleModuli(format!("Poisson ratio {nu}")));
    }
    let e = 9.0 * kappa * mu / (3.0 * kappa + mu);
    Ok(ElasticConstants {
        e,
        nu,
        lambda,
        mu,
        kappa,
    })
}
