//! Isoparametric Q4 toolkit.
//!
//! For a bilinear quadrilateral, `det J` is affine in the parametric
//! coordinates, so the parametric square splits along a straight line into a
//! region where the map preserves orientation (`J+`) and one where it reverses
//! it (`J−`). Each branch is invertible on its own; concave elements are
//! integrated over their simple polygon through the positive branch.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{bbox, classify_quad, cross, shoelace, ElementClass, Point2};

/// Tolerance on the parametric box `[−1, 1]²`.
pub const EPS_XI: f64 = 1e-9;

/// Parametric corner signs, counter-clockwise from `(−1, −1)`.
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub xi1: f64,
    pub xi2: f64,
}

impl ParamPoint {
    pub const fn new(xi1: f64, xi2: f64) -> Self {
        ParamPoint { xi1, xi2 }
    }

    pub fn corner(a: usize) -> Self {
        ParamPoint::new(CORNERS[a][0], CORNERS[a][1])
    }

    pub fn in_box(&self, eps: f64) -> bool {
        self.xi1.abs() <= 1.0 + eps && self.xi2.abs() <= 1.0 + eps
    }

    fn clamped(self) -> Self {
        ParamPoint::new(self.xi1.clamp(-1.0, 1.0), self.xi2.clamp(-1.0, 1.0))
    }
}

pub fn shape_q4(p: &ParamPoint) -> [f64; 4] {
    CORNERS.map(|[s, t]| 0.25 * (1.0 + s * p.xi1) * (1.0 + t * p.xi2))
}

/// Rows are `[∂N_a/∂ξ1, ∂N_a/∂ξ2]`.
pub fn grad_shape_q4(p: &ParamPoint) -> [[f64; 2]; 4] {
    CORNERS.map(|[s, t]| {
        [
            0.25 * s * (1.0 + t * p.xi2),
            0.25 * t * (1.0 + s * p.xi1),
        ]
    })
}

pub fn map_point(coords: &[Point2; 4], p: &ParamPoint) -> Point2 {
    let n = shape_q4(p);
    let mut x = Point2::origin();
    for a in 0..4 {
        x.coords += coords[a].coords * n[a];
    }
    x
}

/// `J = Σ_a X_a ⊗ ∇ξ N_a`, i.e. `J[(i, α)] = ∂x_i/∂ξ_α`.
pub fn jacobian(coords: &[Point2; 4], p: &ParamPoint) -> (Matrix2<f64>, f64) {
    let g = grad_shape_q4(p);
    let mut j = Matrix2::zeros();
    for a in 0..4 {
        for al in 0..2 {
            j[(0, al)] += coords[a].x * g[a][al];
            j[(1, al)] += coords[a].y * g[a][al];
        }
    }
    let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
    (j, det)
}

/// Shape gradients with respect to the reference coordinates, `J⁻ᵀ ∇ξ N_a`,
/// together with `det J`.
pub fn physical_gradients(coords: &[Point2; 4], p: &ParamPoint) -> ([[f64; 2]; 4], f64) {
    let (j, det) = jacobian(coords, p);
    let g = grad_shape_q4(p);
    let inv_det = 1.0 / det;
    // J⁻ᵀ = (1/det) [[J11, −J10], [−J01, J00]]
    let out = g.map(|[d1, d2]| {
        [
            inv_det * (j[(1, 1)] * d1 - j[(1, 0)] * d2),
            inv_det * (-j[(0, 1)] * d1 + j[(0, 0)] * d2),
        ]
    });
    (out, det)
}

/// `det J(ξ) = a0 + a1 ξ1 + a2 ξ2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetJCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl DetJCoeffs {
    pub fn eval(&self, p: &ParamPoint) -> f64 {
        self.a0 + self.a1 * p.xi1 + self.a2 * p.xi2
    }

    pub fn scale(&self) -> f64 {
        self.a0.abs() + self.a1.abs() + self.a2.abs()
    }
}

/// Coefficients of `x(ξ) = e0 + e1 ξ1 + e2 ξ2 + e3 ξ1 ξ2`.
fn bilinear_coeffs(coords: &[Point2; 4]) -> [Vector2<f64>; 4] {
    let mut e = [Vector2::zeros(); 4];
    for a in 0..4 {
        let [s, t] = CORNERS[a];
        let x = coords[a].coords * 0.25;
        e[0] += x;
        e[1] += x * s;
        e[2] += x * t;
        e[3] += x * (s * t);
    }
    e
}

#[inline]
fn vcross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn detj_coeffs(coords: &[Point2; 4]) -> DetJCoeffs {
    let [_, e1, e2, e3] = bilinear_coeffs(coords);
    DetJCoeffs {
        a0: vcross(&e1, &e2),
        a1: vcross(&e1, &e3),
        a2: vcross(&e3, &e2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub point: ParamPoint,
    pub det_j: f64,
}

impl Preimage {
    pub fn is_positive(&self) -> bool {
        self.det_j > 0.0
    }
}

/// Real roots of `q2 t² + q1 t + q0 = 0`.
fn quadratic_roots(q2: f64, q1: f64, q0: f64) -> Vec<f64> {
    let mag = q2.abs().max(q1.abs()).max(q0.abs());
    if mag == 0.0 {
        return Vec::new();
    }
    if q2.abs() <= 1e-14 * mag {
        return if q1 != 0.0 { vec![-q0 / q1] } else { Vec::new() };
    }
    let mut disc = q1 * q1 - 4.0 * q2 * q0;
    if disc < 0.0 {
        if disc < -1e-13 * (q1 * q1 + (4.0 * q2 * q0).abs()) {
            return Vec::new();
        }
        disc = 0.0;
    }
    let q = -0.5 * (q1 + q1.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / q2, q0 / q]
}

/// All preimages of `x` in the closed parametric square.
///
/// Elimination of one coordinate gives a scalar quadratic; its roots are
/// polished with at most three Newton steps. Roots where `|det J|` falls below
/// `1e-12` of the element's Jacobian scale sit on the fold line and are dropped.
pub fn inverse_bilinear(coords: &[Point2; 4], x: &Point2) -> Result<Vec<Preimage>> {
    // work in coordinates centred on the element and scaled by its diagonal
    let (lo, hi) = bbox(coords);
    let scale = (hi - lo).norm();
    let centre = nalgebra::center(&lo, &hi);
    let local: [Point2; 4] = coords.map(|p| Point2::from((p - centre) / scale));
    let z = (x - centre) / scale;
    let [e0, b, c, d] = bilinear_coeffs(&local);
    let a = e0 - z;
    let detc = detj_coeffs(&local);

    let mut candidates: Vec<ParamPoint> = Vec::new();
    // eliminate ξ2: (a + b ξ1) × (c + d ξ1) = 0
    for s in quadratic_roots(vcross(&b, &d), vcross(&a, &d) + vcross(&b, &c), vcross(&a, &c)) {
        let col = c + d * s;
        let n2 = col.norm_squared();
        if n2 > 1e-20 {
            let t = -(a + b * s).dot(&col) / n2;
            candidates.push(ParamPoint::new(s, t));
        }
    }
    // eliminate ξ1: (a + c ξ2) × (b + d ξ2) = 0
    for t in quadratic_roots(vcross(&c, &d), vcross(&a, &d) + vcross(&c, &b), vcross(&a, &b)) {
        let col = b + d * t;
        let n2 = col.norm_squared();
        if n2 > 1e-20 {
            let s = -(a + c * t).dot(&col) / n2;
            candidates.push(ParamPoint::new(s, t));
        }
    }

    let mut out: Vec<Preimage> = Vec::new();
    for mut p in candidates {
        if !p.xi1.is_finite() || !p.xi2.is_finite() || !p.in_box(1e-3) {
            continue;
        }
        for _ in 0..3 {
            let r = a + b * p.xi1 + c * p.xi2 + d * (p.xi1 * p.xi2);
            if r.norm() < 1e-15 {
                break;
            }
            let j = Matrix2::from_columns(&[b + d * p.xi2, c + d * p.xi1]);
            let Some(inv) = j.try_inverse() else { break };
            let step = inv * r;
            p = ParamPoint::new(p.xi1 - step.x, p.xi2 - step.y);
        }
        if !p.in_box(EPS_XI) {
            continue;
        }
        let p = p.clamped();
        let r = a + b * p.xi1 + c * p.xi2 + d * (p.xi1 * p.xi2);
        if r.norm() > 1e-10 {
            continue;
        }
        let dj = detc.eval(&p);
        if dj.abs() < 1e-12 * detc.scale() {
            continue;
        }
        let dup = out.iter().any(|q| {
            (q.point.xi1 - p.xi1).abs() < 1e-7 && (q.point.xi2 - p.xi2).abs() < 1e-7
        });
        if !dup {
            out.push(Preimage {
                point: p,
                det_j: dj * scale * scale,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoPreimage { x: x.x, y: x.y });
    }
    out.sort_by(|p, q| q.det_j.total_cmp(&p.det_j));
    Ok(out)
}

/// The preimage of `x` on the orientation-preserving branch.
pub fn positive_preimage(coords: &[Point2; 4], x: &Point2) -> Result<ParamPoint> {
    inverse_bilinear(coords, x)?
        .into_iter()
        .find(Preimage::is_positive)
        .map(|p| p.point)
        .ok_or(Error::NoPreimage { x: x.x, y: x.y })
}

/// Symmetric 4-point triangle rule (degree 3): barycentric points and weights
/// relative to the triangle area.
pub const TRIANGLE_RULE: [([f64; 3], f64); 4] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], -27.0 / 48.0),
    ([0.6, 0.2, 0.2], 25.0 / 48.0),
    ([0.2, 0.6, 0.2], 25.0 / 48.0),
    ([0.2, 0.2, 0.6], 25.0 / 48.0),
];

/// Quadrature over the simple polygon of a concave element, in physical
/// reference coordinates. Points are stored four per triangle, in triangle order.
#[derive(Debug, Clone, PartialEq)]
pub struct TriQuadrature {
    pub triangles: Vec<[Point2; 3]>,
    pub points: Vec<(Point2, f64)>,
}

impl TriQuadrature {
    pub fn points_of(&self, tri: usize) -> &[(Point2, f64)] {
        &self.points[4 * tri..4 * tri + 4]
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|(_, w)| w).sum()
    }

    pub fn integrate(&self, f: impl Fn(&Point2) -> f64) -> f64 {
        self.points.iter().map(|(x, w)| w * f(x)).sum()
    }
}

fn refine_triangles(tris: Vec<[Point2; 3]>) -> Vec<[Point2; 3]> {
    let mut out = Vec::with_capacity(4 * tris.len());
    for [a, b, c] in tris {
        let ab = nalgebra::center(&a, &b);
        let bc = nalgebra::center(&b, &c);
        let ca = nalgebra::center(&c, &a);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    out
}

/// Splits the concave polygon along the diagonal from its re-entrant vertex,
/// refines each half `refine` times and attaches [`TRIANGLE_RULE`].
pub fn triangulate_concave(coords: &[Point2; 4], refine: u32) -> Result<TriQuadrature> {
    let ElementClass::Concave { reentrant: r } =
        classify_quad(coords).map_err(|_| Error::NotConcave)?
    else {
        return Err(Error::NotConcave);
    };
    let p = |k: usize| coords[(r + k) % 4];
    let mut triangles = vec![[p(0), p(1), p(2)], [p(0), p(2), p(3)]];
    for _ in 0..refine {
        triangles = refine_triangles(triangles);
    }
    let mut points = Vec::with_capacity(4 * triangles.len());
    for t in &triangles {
        let area = 0.5 * cross(&Point2::from(t[1] - t[0]), &Point2::from(t[2] - t[0]));
        for (bary, w) in TRIANGLE_RULE {
            let mut x = Point2::origin();
            for k in 0..3 {
                x.coords += t[k].coords * bary[k];
            }
            points.push((x, w * area));
        }
    }
    Ok(TriQuadrature { triangles, points })
}

/// Boundary piece of the fully invertible parametric region of a concave
/// element: either a straight segment or an arc of the conic that is the
/// preimage of a straight physical edge.
#[derive(Debug, Clone, Copy)]
enum Arc {
    Segment(ParamPoint, ParamPoint),
    /// Points with `a + b ξ1 + c ξ2 + d ξ1 ξ2 = 0` between two endpoints.
    Conic {
        from: ParamPoint,
        to: ParamPoint,
        coef: [f64; 4],
    },
}

impl Arc {
    /// Point and tangent at `τ ∈ [0, 1]`.
    fn eval(&self, tau: f64) -> ([f64; 2], [f64; 2]) {
        match *self {
            Arc::Segment(p, q) => (
                [p.xi1 + tau * (q.xi1 - p.xi1), p.xi2 + tau * (q.xi2 - p.xi2)],
                [q.xi1 - p.xi1, q.xi2 - p.xi2],
            ),
            Arc::Conic { from, to, coef: [a, b, c, d] } => {
                // graph over the coordinate with the larger span
                let (s0, s1, swap) = if (to.xi1 - from.xi1).abs() >= (to.xi2 - from.xi2).abs() {
                    (from.xi1, to.xi1, false)
                } else {
                    (from.xi2, to.xi2, true)
                };
                let (b, c) = if swap { (c, b) } else { (b, c) };
                let s = s0 + tau * (s1 - s0);
                let den = c + d * s;
                let t = -(a + b * s) / den;
                let dt = -(b * c - a * d) / (den * den);
                let ds = s1 - s0;
                if swap {
                    ([t, s], [dt * ds, ds])
                } else {
                    ([s, t], [ds, dt * ds])
                }
            }
        }
    }
}

/// Quadrature over the fully invertible parametric subset `Ê` of a concave
/// element: the part of the positive-Jacobian region whose image is the
/// element's simple polygon. Returns parametric points with parametric
/// weights; physical weights follow by multiplying with `det J`.
///
/// `Ê` is bounded by parametric edges and by two conic arcs, the preimages
/// of the polygon edges that meet at the re-entrant vertex. It is split into
/// curved triangles fanned from the corner opposite the re-entrant one; each
/// is refined `refine` times in its reference coordinates and integrated
/// with [`TRIANGLE_RULE`].
pub fn concave_param_quadrature(
    coords: &[Point2; 4],
    reentrant: usize,
    refine: u32,
) -> Result<Vec<(ParamPoint, f64)>> {
    let r = reentrant;
    let k = |i: usize| (r + i) % 4;
    let dc = detj_coeffs(coords);
    let corner_det = |i: usize| dc.eval(&ParamPoint::corner(k(i)));
    if corner_det(0) >= 0.0 || (1..4).any(|i| corner_det(i) <= 0.0) {
        return Err(Error::NotConcave);
    }
    // points where det J vanishes on the two parametric edges at the re-entrant corner
    let fold_point = |i: usize| {
        let (c0, c1) = (ParamPoint::corner(k(0)), ParamPoint::corner(k(i)));
        let s = -corner_det(0) / (corner_det(i) - corner_det(0));
        ParamPoint::new(c0.xi1 + s * (c1.xi1 - c0.xi1), c0.xi2 + s * (c1.xi2 - c0.xi2))
    };
    let fa = fold_point(1);
    let fb = fold_point(3);
    let star = positive_preimage(coords, &coords[r]).map_err(|_| Error::PreimageNotFound)?;
    if star == ParamPoint::corner(r) {
        return Err(Error::PreimageNotFound);
    }
    let [e0, e1, e2, e3] = bilinear_coeffs(coords);
    let conic = |dir: Vector2<f64>| {
        let a = e0 - coords[r].coords;
        [vcross(&a, &dir), vcross(&e1, &dir), vcross(&e2, &dir), vcross(&e3, &dir)]
    };
    let pieces = [
        Arc::Segment(ParamPoint::corner(k(3)), fb),
        Arc::Conic {
            from: fb,
            to: star,
            coef: conic(coords[r] - coords[k(3)]),
        },
        Arc::Conic {
            from: star,
            to: fa,
            coef: conic(coords[k(1)] - coords[r]),
        },
        Arc::Segment(fa, ParamPoint::corner(k(1))),
    ];
    let apex = ParamPoint::corner(k(2));

    let mut sub: Vec<[[f64; 2]; 3]> = vec![[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]];
    for _ in 0..refine {
        let mut next = Vec::with_capacity(4 * sub.len());
        for [a, b, c] in sub {
            let mid = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        sub = next;
    }

    let mut out = Vec::with_capacity(pieces.len() * sub.len() * TRIANGLE_RULE.len());
    for piece in &pieces {
        for tri in &sub {
            let area = 0.5
                * ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
                    - (tri[1][1] - tri[0][1]) * (tri[2][0] - tri[0][0]));
            for (bary, w) in TRIANGLE_RULE {
                let u = bary[0] * tri[0][0] + bary[1] * tri[1][0] + bary[2] * tri[2][0];
                let v = bary[0] * tri[0][1] + bary[1] * tri[1][1] + bary[2] * tri[2][1];
                // collapsed map (u, v) ↦ apex + (u + v)(γ(v / (u + v)) − apex)
                let s = u + v;
                let (g, dg) = piece.eval(v / s);
                let rel = [g[0] - apex.xi1, g[1] - apex.xi2];
                let jac = rel[0] * dg[1] - rel[1] * dg[0];
                if jac <= 0.0 {
                    return Err(Error::PreimageNotFound);
                }
                let p = ParamPoint::new(apex.xi1 + s * rel[0], apex.xi2 + s * rel[1]);
                out.push((p, w * area * jac));
            }
        }
    }
    Ok(out)
}

/// 2×2 Gauss-Legendre rule on the parametric square.
pub fn gauss_2x2() -> [(ParamPoint, f64); 4] {
    let g = 1.0 / 3f64.sqrt();
    CORNERS.map(|[s, t]| (ParamPoint::new(s * g, t * g), 1.0))
}

/// `⟦N(p)⟧ = N(ξ₊*) − N(ξ_D)` at the re-entrant vertex `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub coeffs: [f64; 4],
    /// Positive-branch preimage of the re-entrant vertex.
    pub positive_point: ParamPoint,
}

impl ConstraintRow {
    /// `Σ_a coeffs[a] · values[a]`.
    pub fn apply(&self, values: &[f64; 4]) -> f64 {
        self.coeffs.iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

pub fn constraint_row(coords: &[Point2; 4], reentrant: usize) -> Result<ConstraintRow> {
    let corner = ParamPoint::corner(reentrant);
    let positive = match inverse_bilinear(coords, &coords[reentrant]) {
        Ok(pre) => pre
            .into_iter()
            .filter(|p| {
                p.is_positive()
                    && ((p.point.xi1 - corner.xi1).abs() > 1e-9
                        || (p.point.xi2 - corner.xi2).abs() > 1e-9)
            })
            .map(|p| p.point)
            .next(),
        Err(_) => None,
    };
    let positive_point = positive.ok_or(Error::PreimageNotFound)?;
    let mut coeffs = shape_q4(&positive_point);
    coeffs[reentrant] -= 1.0;
    Ok(ConstraintRow {
        coeffs,
        positive_point,
    })
}

/// Area centroid of a polygon.
pub fn polygon_centroid(poly: &[Point2]) -> Point2 {
    let n = poly.len();
    let area = shoelace(poly);
    let mut c = Vector2::zeros();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        c += (p.coords + q.coords) * cross(&p, &q);
    }
    Point2::from(c / (6.0 * area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn quad(c: [(f64, f64); 4]) -> [Point2; 4] {
        c.map(|(x, y)| Point2::new(x, y))
    }

    fn unit_square() -> [Point2; 4] {
        quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    fn concave() -> [Point2; 4] {
        quad([(0.0, 0.0), (1.0, 0.0), (0.3, 0.3), (0.0, 1.0)])
    }

    /// Dense parametric scan for points mapping near `x`, each refined by Newton.
    fn grid_scan_preimages(coords: &[Point2; 4], x: &Point2, n: usize) -> Vec<(ParamPoint, f64)> {
        let mut found: Vec<(ParamPoint, f64)> = Vec::new();
        let h = 2.0 / (n - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                let mut p = ParamPoint::new(-1.0 + h * i as f64, -1.0 + h * j as f64);
                if (map_point(coords, &p) - x).norm() > 2e-3 {
                    continue;
                }
                for _ in 0..40 {
                    let r = map_point(coords, &p) - x;
                    let (jm, _) = jacobian(coords, &p);
                    let Some(inv) = jm.try_inverse() else { break };
                    let s = inv * r;
                    p = ParamPoint::new(p.xi1 - s.x, p.xi2 - s.y);
                }
                let p = p.clamped();
                if (map_point(coords, &p) - x).norm() > 1e-12 {
                    continue;
                }
                if found
                    .iter()
                    .all(|(q, _)| (q.xi1 - p.xi1).abs() + (q.xi2 - p.xi2).abs() > 1e-8)
                {
                    found.push((p, jacobian(coords, &p).1));
                }
            }
        }
        found
    }

    #[test]
    fn shape_functions_corners_and_centre() {
        for a in 0..4 {
            let n = shape_q4(&ParamPoint::corner(a));
            for b in 0..4 {
                assert_eq!(n[b], if a == b { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(shape_q4(&ParamPoint::new(0.0, 0.0)), [0.25; 4]);
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let p = ParamPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = shape_q4(&p);
            assert_relative_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
            let g = grad_shape_q4(&p);
            for al in 0..2 {
                assert!(g.iter().map(|r| r[al]).sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_of_squares() {
        let (j, det) = jacobian(&unit_square(), &ParamPoint::new(0.3, -0.2));
        assert_relative_eq!(j, Matrix2::identity() * 0.5, epsilon = 1e-15);
        assert_relative_eq!(det, 0.25, epsilon = 1e-15);
        let big = unit_square().map(|p| Point2::from(p.coords * 2.0));
        assert_relative_eq!(jacobian(&big, &ParamPoint::new(0.7, 0.1)).1, 1.0, epsilon = 1e-15);
        // oracle: -0.1 at the re-entrant corner
        let (_, det) = jacobian(&concave(), &ParamPoint::corner(2));
        assert_relative_eq!(det, -0.1, epsilon = 1e-14);
    }

    #[test]
    fn detj_coefficients() {
        let c = detj_coeffs(&unit_square());
        assert_relative_eq!(c.a0, 0.25, epsilon = 1e-15);
        assert!(c.a1.abs() < 1e-16 && c.a2.abs() < 1e-16);

        // affine image of the square: constant Jacobian det(A)/4
        let a = Matrix2::new(1.3, 0.4, -0.2, 0.9);
        let img = quad([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
            .map(|p| Point2::from(a * p.coords + Vector2::new(3.0, -2.0)));
        let c = detj_coeffs(&img);
        assert_relative_eq!(c.a0, a.determinant(), epsilon = 1e-14);
        let sq = unit_square().map(|p| Point2::from(a * p.coords));
        let c = detj_coeffs(&sq);
        assert_relative_eq!(c.a0, a.determinant() / 4.0, epsilon = 1e-15);
        assert!(c.a1.abs() < 1e-15 && c.a2.abs() < 1e-15);

        let c = detj_coeffs(&concave());
        assert!(c.a0 + c.a1 + c.a2 < 0.0);
        assert!(c.a0 - c.a1 - c.a2 > 0.0);
        // oracle: (0.075, -0.0875, -0.0875)
        assert_relative_eq!(c.a0, 0.075, epsilon = 1e-15);
        assert_relative_eq!(c.a1, -0.0875, epsilon = 1e-15);
    }

    #[test]
    fn detj_linear_representation_is_exact() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let q: [Point2; 4] = std::array::from_fn(|a| {
                let [s, t] = CORNERS[a];
                Point2::new(s + rng.gen_range(-0.6..0.6), t + rng.gen_range(-0.6..0.6))
            });
            let c = detj_coeffs(&q);
            let mut worst: f64 = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    let p = ParamPoint::new(-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64);
                    worst = worst.max((jacobian(&q, &p).1 - c.eval(&p)).abs());
                }
            }
            assert!(worst <= 1e-13 * c.a0.abs().max(1e-300), "{worst}");
        }
    }

    #[test]
    fn inverse_of_square_centre() {
        let pre = inverse_bilinear(&unit_square(), &Point2::new(0.5, 0.5)).unwrap();
        assert_eq!(pre.len(), 1);
        assert!(pre[0].point.xi1.abs() < 1e-15 && pre[0].point.xi2.abs() < 1e-15);
        assert!(pre[0].is_positive());
    }

    #[test]
    fn inverse_at_reentrant_vertex_matches_grid_scan() {
        let q = concave();
        let x = Point2::new(0.3, 0.3);
        let oracle = grid_scan_preimages(&q, &x, 2001);
        assert_eq!(oracle.len(), 2);
        let pre = inverse_bilinear(&q, &x).unwrap();
        assert_eq!(pre.len(), 2);
        let pos = pre.iter().find(|p| p.is_positive()).unwrap();
        let neg = pre.iter().find(|p| !p.is_positive()).unwrap();
        assert_relative_eq!(neg.point.xi1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(neg.point.xi2, 1.0, epsilon = 1e-12);
        // frozen oracle value: ξ* = (−1/7, −1/7)
        assert_relative_eq!(pos.point.xi1, -1.0 / 7.0, epsilon = 1e-12);
        assert_relative_eq!(pos.point.xi2, -1.0 / 7.0, epsilon = 1e-12);
        let (o, _) = oracle.iter().find(|(_, d)| *d > 0.0).unwrap();
        assert_relative_eq!(pos.point.xi1, o.xi1, epsilon = 1e-10);
        assert_relative_eq!(pos.point.xi2, o.xi2, epsilon = 1e-10);
    }

    #[test]
    fn outside_point_has_no_preimage() {
        let q = concave();
        assert!(grid_scan_preimages(&q, &Point2::new(0.9, 0.9), 401).is_empty());
        assert!(matches!(
            inverse_bilinear(&q, &Point2::new(0.9, 0.9)),
            Err(Error::NoPreimage { .. })
        ));
    }

    #[test]
    fn fold_points_have_two_preimages_polygon_points_one() {
        let q = concave();
        // inside the notch, close to the re-entrant vertex
        let pre = inverse_bilinear(&q, &Point2::new(0.33, 0.33)).unwrap();
        assert_eq!(pre.len(), 2);
        assert!(pre[0].is_positive() && !pre[1].is_positive());
        // inside the polygon
        let pre = inverse_bilinear(&q, &Point2::new(0.1, 0.2)).unwrap();
        assert_eq!(pre.len(), 1);
        assert!(pre[0].is_positive());
    }

    #[test]
    fn triangulation_counts_and_weights() {
        let q = concave();
        let area = shoelace(&q);
        for (r, tris) in [(0, 2), (1, 8), (2, 32), (3, 128)] {
            let tq = triangulate_concave(&q, r).unwrap();
            assert_eq!(tq.triangles.len(), tris);
            assert_eq!(tq.points.len(), 4 * tris);
            assert_relative_eq!(tq.total_weight(), area, max_relative = 1e-12);
            assert_relative_eq!(tq.integrate(|_| 1.0), area, max_relative = 1e-12);
        }
        assert!(matches!(
            triangulate_concave(&unit_square(), 2),
            Err(Error::NotConcave)
        ));
    }

    #[test]
    fn quadrature_points_are_inside_and_positive() {
        let q = concave();
        let tq = triangulate_concave(&q, 2).unwrap();
        for (x, _) in &tq.points {
            let pre = inverse_bilinear(&q, x).unwrap();
            assert_eq!(pre.len(), 1, "point {x:?}");
            assert!(pre[0].is_positive());
            let back = map_point(&q, &pre[0].point);
            assert!((back - x).norm() < 1e-12);
        }
    }

    #[test]
    fn refinement_consistency() {
        let q = concave();
        // quadratic integrand: the degree-3 rule is exact at every level
        let quad_f = |p: &Point2| p.x * p.x + 2.0 * p.x * p.y - p.y;
        let exact = triangulate_concave(&q, 0).unwrap().integrate(quad_f);
        for r in 1..=3 {
            let v = triangulate_concave(&q, r).unwrap().integrate(quad_f);
            assert_relative_eq!(v, exact, max_relative = 1e-12);
        }
        // smooth non-polynomial integrand: successive differences shrink by ≥ 4
        let f = |p: &Point2| (3.0 * p.x).exp() * (4.0 * p.y).sin();
        let vals: Vec<f64> = (0..=4)
            .map(|r| triangulate_concave(&q, r).unwrap().integrate(f))
            .collect();
        for r in 1..=3 {
            let ratio = (vals[r] - vals[r - 1]).abs() / (vals[r + 1] - vals[r]).abs();
            assert!(ratio > 3.5, "r={r} ratio={ratio}");
        }
    }

    #[test]
    fn parametric_concave_quadrature_area_and_positivity() {
        let q = concave();
        let dc = detj_coeffs(&q);
        for r in 0..4 {
            let pts = concave_param_quadrature(&q, 2, r).unwrap();
            assert_eq!(pts.len(), 4 * 4 * 4usize.pow(r));
            let area: f64 = pts.iter().map(|(p, w)| w * dc.eval(p)).sum();
            assert_relative_eq!(area, 0.3, max_relative = 1e-12);
            for (p, w) in &pts {
                assert!(w.is_finite() && dc.eval(p) > 0.0 && p.in_box(0.0));
                // every point is the positive preimage of its own image
                let back = positive_preimage(&q, &map_point(&q, p)).unwrap();
                assert!((back.xi1 - p.xi1).abs() < 1e-9 && (back.xi2 - p.xi2).abs() < 1e-9);
            }
        }
        assert!(matches!(
            concave_param_quadrature(&unit_square(), 2, 1),
            Err(Error::NotConcave)
        ));
    }

    #[test]
    fn parametric_quadrature_integrates_gradients_exactly() {
        // ∫ ∂N_a/∂X dX over the polygon equals ∮ N_a n dS; both sides are
        // polynomial in the parametric coordinates, so the fan rule converges fast
        let q = concave();
        let value = |r: u32| {
            let mut acc = [[0.0; 2]; 4];
            for (p, w) in concave_param_quadrature(&q, 2, r).unwrap() {
                let (g, det) = physical_gradients(&q, &p);
                for a in 0..4 {
                    for j in 0..2 {
                        acc[a][j] += w * det * g[a][j];
                    }
                }
            }
            acc
        };
        let (v3, v5) = (value(3), value(5));
        for a in 0..4 {
            for j in 0..2 {
                assert!((v3[a][j] - v5[a][j]).abs() < 1e-10, "{a} {j}");
            }
        }
        // sums over nodes vanish (partition of unity)
        for j in 0..2 {
            assert!((0..4).map(|a| v5[a][j]).sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_rule() {
        let g = gauss_2x2();
        let integ = |f: &dyn Fn(&ParamPoint) -> f64| g.iter().map(|(p, w)| w * f(p)).sum::<f64>();
        assert_relative_eq!(integ(&|_| 1.0), 4.0, epsilon = 1e-15);
        assert!(integ(&|p| p.xi1).abs() < 1e-15);
        assert_relative_eq!(integ(&|p| p.xi1.powi(2) * p.xi2.powi(2)), 4.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn constraint_row_of_concave_quad() {
        let row = constraint_row(&concave(), 2).unwrap();
        // oracle: N(ξ*) = (16, 12, 9, 12)/49
        let expected = [16.0 / 49.0, 12.0 / 49.0, 9.0 / 49.0 - 1.0, 12.0 / 49.0];
        for a in 0..4 {
            assert_relative_eq!(row.coeffs[a], expected[a], epsilon = 1e-10);
        }
        assert!(row.coeffs.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn constraint_row_vanishes_continuously_at_incipient_tangling() {
        // re-entrant vertex moved along the diagonal towards the line x + y = 1
        let mut last = f64::INFINITY;
        for k in 1..=12 {
            let delta = 0.4 * 0.1f64.powi(k - 1);
            let s = 0.5 - delta / 2.0;
            let q = quad([(0.0, 0.0), (1.0, 0.0), (s, s), (0.0, 1.0)]);
            match constraint_row(&q, 2) {
                Ok(row) => {
                    let norm = row.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
                    // the two preimages merge into a double root, which is only
                    // resolvable to about sqrt(machine epsilon)
                    if delta > 1e-6 {
                        assert!(norm < last, "k={k}: {norm} !< {last}");
                    }
                    assert!(norm <= 10.0 * delta + 1e-7, "k={k}: {norm}");
                    last = norm;
                }
                Err(e) => assert!(matches!(e, Error::PreimageNotFound)),
            }
        }
        // cross product at the re-entrant corner ≈ −1e-14 of the scale
        let s = 0.5 - 0.25e-14;
        let q = quad([(0.0, 0.0), (1.0, 0.0), (s, s), (0.0, 1.0)]);
        match constraint_row(&q, 2) {
            Ok(row) => assert!(row.coeffs.iter().all(|c| c.abs() < 1e-6)),
            Err(e) => assert!(matches!(e, Error::PreimageNotFound)),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn convex_quad() -> impl Strategy<Value = [Point2; 4]> {
            proptest::array::uniform4((-0.3f64..0.3, -0.3f64..0.3)).prop_map(|d| {
                std::array::from_fn(|a| {
                    let [s, t] = CORNERS[a];
                    Point2::new(s + d[a].0, t + d[a].1)
                })
            })
        }

        fn concave_quad() -> impl Strategy<Value = [Point2; 4]> {
            (0.05f64..0.35, 0.05f64..0.35, 0.5f64..2.0, 0.5f64..2.0)
                .prop_map(|(u, v, a, b)| quad([(0.0, 0.0), (a, 0.0), (u * a, v * b), (0.0, b)]))
        }

        proptest! {
            #[test]
            fn convex_interior_points_have_one_positive_preimage(
                q in convex_quad(), s in -0.95f64..0.95, t in -0.95f64..0.95
            ) {
                let x = map_point(&q, &ParamPoint::new(s, t));
                let pre = inverse_bilinear(&q, &x).unwrap();
                prop_assert_eq!(pre.len(), 1);
                prop_assert!(pre[0].is_positive());
                prop_assert!((pre[0].point.xi1 - s).abs() < 1e-10);
                prop_assert!((pre[0].point.xi2 - t).abs() < 1e-10);
            }

            #[test]
            fn preimages_map_back(q in concave_quad(), s in -1.0f64..1.0, t in -1.0f64..1.0) {
                let x = map_point(&q, &ParamPoint::new(s, t));
                let (lo, hi) = bbox(&q);
                let diag = (hi - lo).norm();
                if let Ok(pre) = inverse_bilinear(&q, &x) {
                    for p in pre {
                        prop_assert!((map_point(&q, &p.point) - x).norm() <= 1e-12 * diag);
                    }
                }
            }

            #[test]
            fn concave_constraint_row_sums_to_zero(q in concave_quad()) {
                let row = constraint_row(&q, 2).unwrap();
                prop_assert!(row.coeffs.iter().sum::<f64>().abs() < 1e-13);
                // annihilates affine fields
                let vals = q.map(|p| 0.7 * p.x - 1.3 * p.y + 0.4);
                prop_assert!(row.apply(&vals).abs() < 1e-10);
            }

            #[test]
            fn shoelace_equals_detj_integral(q in concave_quad()) {
                let c = detj_coeffs(&q);
                prop_assert!((shoelace(&q) - 4.0 * c.a0).abs() <= 1e-12 * shoelace(&q));
            }
        }
    }
}
