//! Benchmark geometries: Cook's membrane, the punch block and the thin beam,
//! each with regular and tangled variants.
//!
//! Two tangling constructions are used:
//! - node displacement on a regular grid (`single`, `block_center`): one
//!   interior node is pushed across the diagonal of an adjacent cell;
//! - cell splitting (`checkerboard`, `pairwise`, `split_pair`): a cell
//!   `(P1, P2, P3, P4)` becomes the concave quad `(P1, P2, R, P4)` and the
//!   convex quad `(P2, P3, P4, R)`, where the private node `R` sits inside the
//!   triangle `(P1, P2, P4)`. The fold of the concave element lies inside its
//!   convex partner.

use crate::error::{Error, Result};

use super::{Point2, QuadMesh};

/// Cook's membrane corners, counter-clockwise from the lower clamped corner.
pub const COOK_CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (48.0, 44.0), (48.0, 60.0), (0.0, 44.0)];

pub const PUNCH_HEIGHT: f64 = 1.0;
pub const BEAM_LENGTH: f64 = 100.0;
pub const BEAM_HEIGHT: f64 = 1.0;

/// Fold depth of the thin-beam split: `R = 0.2 P1 + 0.4 P2 + 0.4 P4`.
const BEAM_FOLD_DEPTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CookTangle {
    None,
    /// Moves one interior node `D` to `B + (0.5 − d)(C − B)` inside the cell nearest the centroid.
    Single { d: f64 },
    /// Splits a `2^(N−1) × 2^N` grid so that every other element is concave.
    Checkerboard { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PunchTangle {
    None,
    Pairwise { t: f64 },
    /// Moves the centre node of every 2×2 block by `t·(h, h)`.
    BlockCenter { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThinBeamTangle {
    None,
    SplitPair,
}

struct Grid {
    nx: usize,
    ny: usize,
    nodes: Vec<Point2>,
}

impl Grid {
    fn new(nx: usize, ny: usize, map: impl Fn(f64, f64) -> Point2) -> Self {
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(map(i as f64 / nx as f64, j as f64 / ny as f64));
            }
        }
        Grid { nx, ny, nodes }
    }

    fn id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    fn cell(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.id(i, j),
            self.id(i + 1, j),
            self.id(i + 1, j + 1),
            self.id(i, j + 1),
        ]
    }

    fn quads(self) -> (Vec<Point2>, Vec<[usize; 4]>) {
        let mut elems = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                elems.push(self.cell(i, j));
            }
        }
        (self.nodes, elems)
    }

    /// Splits every cell into a concave/convex pair. `depth` ∈ (0, 1) places the
    /// private node at `M + depth (P1 − M)`, `M` being the midpoint of `P2 P4`.
    fn split(self, depth: f64) -> (Vec<Point2>, Vec<[usize; 4]>) {
        let mut elems = Vec::with_capacity(2 * self.nx * self.ny);
        let mut nodes = self.nodes.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let [p1, p2, p3, p4] = self.cell(i, j);
                let m = nalgebra::center(&nodes[p2], &nodes[p4]);
                let r = m + (nodes[p1] - m) * depth;
                let rid = nodes.len();
                nodes.push(r);
                elems.push([p1, p2, rid, p4]);
                elems.push([p2, p3, p4, rid]);
            }
        }
        (nodes, elems)
    }
}

fn check_index(n: u32, min: u32) -> Result<usize> {
    if n < min || n > 12 {
        return Err(Error::Config(format!(
            "mesh index {n} outside the supported range {min}..=12"
        )));
    }
    Ok(1usize << n)
}

fn check_param(name: &str, v: f64, hi: f64) -> Result<()> {
    if !(0.0..hi).contains(&v) {
        return Err(Error::Config(format!("{name} = {v} outside [0, {hi})")));
    }
    Ok(())
}

fn cook_map(s: f64, t: f64) -> Point2 {
    let c = COOK_CORNERS.map(|(x, y)| Point2::new(x, y));
    let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
    let mut p = Point2::origin();
    for a in 0..4 {
        p.coords += c[a].coords * w[a];
    }
    p
}

fn polygon_centroid(poly: &[Point2]) -> Point2 {
    let n = poly.len();
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.x * q.y - q.x * p.y;
        a2 += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Cook's membrane on a `2^N × 2^N` transfinite grid.
///
/// Node sets `left` (clamped edge), `right`; edge sets `left`, `right`
/// (loaded edge), `top`, `bottom`.
pub fn gen_cooks(n: u32, tangle: CookTangle) -> Result<QuadMesh> {
    let (nodes, elems) = match tangle {
        CookTangle::None => {
            let k = check_index(n, 1)?;
            Grid::new(k, k, cook_map).quads()
        }
        CookTangle::Single { d } => {
            let k = check_index(n, 1)?;
            check_param("d", d, 0.5)?;
            let mut grid = Grid::new(k, k, cook_map);
            let corners = COOK_CORNERS.map(|(x, y)| Point2::new(x, y));
            let centroid = polygon_centroid(&corners);
            // the moved node is corner 2 of the host cell, so it must be interior
            let mut best = (f64::INFINITY, 0, 0);
            for j in 0..k - 1 {
                for i in 0..k - 1 {
                    let c = grid.cell(i, j).map(|id| grid.nodes[id]);
                    let mid = polygon_centroid(&c);
                    let dist = (mid - centroid).norm();
                    if dist < best.0 {
                        best = (dist, i, j);
                    }
                }
            }
            let [p0, p1, p2, p3] = grid.cell(best.1, best.2);
            let b = grid.nodes[p0];
            let c = grid.nodes[p1] + (grid.nodes[p3] - b);
            grid.nodes[p2] = b + (c - b) * (0.5 - d);
            grid.quads()
        }
        CookTangle::Checkerboard { t } => {
            let k = check_index(n, 1)?;
            check_param("t", t, 1.0)?;
            Grid::new(k / 2, k, cook_map).split(0.5 * t)
        }
    };
    let mut mesh = QuadMesh::new(nodes, elems)?;
    let tol = 1e-9 * 48.0;
    let on_left = move |p: &Point2| p.x.abs() < tol;
    let on_right = move |p: &Point2| (p.x - 48.0).abs() < tol;
    let on_bottom = move |p: &Point2| (p.y - 44.0 / 48.0 * p.x).abs() < tol;
    let on_top = move |p: &Point2| (p.y - (44.0 + 16.0 / 48.0 * p.x)).abs() < tol;
    mesh.add_boundary_node_set("left", on_left);
    mesh.add_boundary_node_set("right", on_right);
    mesh.add_boundary_edge_set("left", on_left);
    mesh.add_boundary_edge_set("right", on_right);
    mesh.add_boundary_edge_set("top", on_top);
    mesh.add_boundary_edge_set("bottom", on_bottom);
    mesh.domain_area = 1440.0;
    Ok(mesh)
}

/// Punch block `[0, 2H] × [0, H]` on a `2^(N+1) × 2^N` grid.
///
/// Node sets `left`, `top`, `bottom`; edge sets `top`, `top_left` (loaded
/// half), `right`.
pub fn gen_punch(n: u32, tangle: PunchTangle) -> Result<QuadMesh> {
    let h = PUNCH_HEIGHT;
    let k = check_index(n, 1)?;
    let map = |s: f64, t: f64| Point2::new(2.0 * h * s, h * t);
    let (nodes, elems) = match tangle {
        PunchTangle::None => Grid::new(2 * k, k, map).quads(),
        PunchTangle::Pairwise { t } => {
            check_param("t", t, 1.0)?;
            Grid::new(k, k, map).split(0.5 * t)
        }
        PunchTangle::BlockCenter { t } => {
            check_param("t", t, 1.0)?;
            let mut grid = Grid::new(2 * k, k, map);
            let step = h / k as f64;
            for b in 0..k / 2 {
                for a in 0..k {
                    let id = grid.id(2 * a + 1, 2 * b + 1);
                    grid.nodes[id].x += t * step;
                    grid.nodes[id].y += t * step;
                }
            }
            grid.quads()
        }
    };
    let mut mesh = QuadMesh::new(nodes, elems)?;
    let tol = 1e-9 * h;
    let on_left = move |p: &Point2| p.x.abs() < tol;
    let on_top = move |p: &Point2| (p.y - h).abs() < tol;
    let on_bottom = move |p: &Point2| p.y.abs() < tol;
    let on_right = move |p: &Point2| (p.x - 2.0 * h).abs() < tol;
    mesh.add_boundary_node_set("left", on_left);
    mesh.add_boundary_node_set("top", on_top);
    mesh.add_boundary_node_set("bottom", on_bottom);
    mesh.add_boundary_edge_set("top", on_top);
    mesh.add_boundary_edge_set("top_left", move |p| on_top(p) && p.x <= h + tol);
    mesh.add_boundary_edge_set("right", on_right);
    mesh.domain_area = 2.0 * h * h;
    Ok(mesh)
}

/// Thin beam `[0, 100] × [0, 1]` on a `(10·2^N) × 2^N` grid.
///
/// Node sets `left` (clamped end), `right`; edge set `right` (loaded end).
pub fn gen_thin_beam(n: u32, tangle: ThinBeamTangle) -> Result<QuadMesh> {
    let k = check_index(n, 0)?;
    let map = |s: f64, t: f64| Point2::new(BEAM_LENGTH * s, BEAM_HEIGHT * t);
    let grid = Grid::new(10 * k, k, map);
    let (nodes, elems) = match tangle {
        ThinBeamTangle::None => grid.quads(),
        ThinBeamTangle::SplitPair => grid.split(BEAM_FOLD_DEPTH),
    };
    let mut mesh = QuadMesh::new(nodes, elems)?;
    let tol = 1e-9 * BEAM_LENGTH;
    let on_left = move |p: &Point2| p.x.abs() < tol;
    let on_right = move |p: &Point2| (p.x - BEAM_LENGTH).abs() < tol;
    mesh.add_boundary_node_set("left", on_left);
    mesh.add_boundary_node_set("right", on_right);
    mesh.add_boundary_edge_set("right", on_right);
    mesh.domain_area = BEAM_LENGTH * BEAM_HEIGHT;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_mesh, corner_crosses, ElementClass};
    use crate::param::{gauss_2x2, jacobian};

    fn assert_covered(mesh: &QuadMesh) {
        assert!(
            mesh.coverage_defect() <= 1e-10 * mesh.domain_area,
            "coverage defect {}",
            mesh.coverage_defect()
        );
        assert!((mesh.boundary_area() - mesh.domain_area).abs() <= 1e-10 * mesh.domain_area);
    }

    /// Independent concavity count from raw cross-product signs.
    fn count_negative_corner_elements(mesh: &QuadMesh) -> usize {
        (0..mesh.num_elems())
            .filter(|&e| {
                corner_crosses(&mesh.elem_coords(e))
                    .iter()
                    .filter(|c| **c < 0.0)
                    .count()
                    == 1
            })
            .count()
    }

    #[test]
    fn cooks_regular() {
        let m = gen_cooks(3, CookTangle::None).unwrap();
        assert_eq!(m.num_elems(), 64);
        assert_eq!(classify_mesh(&m).unwrap().concave_count, 0);
        assert_covered(&m);
        assert_eq!(m.node_set("left").unwrap().len(), 9);
        assert_eq!(m.edge_set("right").unwrap().len(), 8);
        assert!(m.find_node(&Point2::new(48.0, 60.0), 1e-9).is_some());
    }

    #[test]
    fn cooks_checkerboard_half_concave() {
        for n in 1..=5 {
            let m = gen_cooks(n, CookTangle::Checkerboard { t: 0.75 }).unwrap();
            let r = classify_mesh(&m).unwrap();
            assert_eq!(m.num_elems(), 1 << (2 * n));
            assert_eq!(r.concave_count, m.num_elems() / 2);
            assert_eq!(count_negative_corner_elements(&m), m.num_elems() / 2);
            // alternating along each row of elements
            for e in 0..m.num_elems() {
                assert_eq!(r.classes[e].is_concave(), e % 2 == 0);
            }
            assert_covered(&m);
        }
        let m = gen_cooks(3, CookTangle::Checkerboard { t: 0.75 }).unwrap();
        assert_eq!(classify_mesh(&m).unwrap().concave_count, 32);
        assert_eq!(m.edge_set("right").unwrap().len(), 8);
    }

    #[test]
    fn cooks_single() {
        let m0 = gen_cooks(3, CookTangle::Single { d: 0.0 }).unwrap();
        let r0 = classify_mesh(&m0).unwrap();
        assert_eq!(r0.concave_count, 0);
        assert_eq!(r0.degenerate_count(), 1);

        let m = gen_cooks(3, CookTangle::Single { d: 0.3 }).unwrap();
        let r = classify_mesh(&m).unwrap();
        assert_eq!(r.concave_count, 1);
        assert_covered(&m);
        let (e, _) = r.concave_elements().next().unwrap();
        let coords = m.elem_coords(e);
        let negative = gauss_2x2()
            .iter()
            .filter(|(xi, _)| jacobian(&coords, xi).1 < 0.0)
            .count();
        assert!(negative >= 1);

        // mildly tangled: concave but every Gauss point still positive
        let m = gen_cooks(3, CookTangle::Single { d: 0.05 }).unwrap();
        let r = classify_mesh(&m).unwrap();
        let (e, _) = r.concave_elements().next().unwrap();
        let coords = m.elem_coords(e);
        assert!(gauss_2x2().iter().all(|(xi, _)| jacobian(&coords, xi).1 > 0.0));
    }

    #[test]
    fn punch_variants() {
        let m = gen_punch(2, PunchTangle::None).unwrap();
        assert_eq!(m.num_elems(), 32);
        assert_covered(&m);
        let loaded: f64 = m
            .edge_set("top_left")
            .unwrap()
            .iter()
            .map(|&(e, k)| {
                let (a, b) = m.edge_nodes(e, k);
                (m.nodes[a] - m.nodes[b]).norm()
            })
            .sum();
        assert!((loaded - 1.0).abs() < 1e-12);

        let m = gen_punch(2, PunchTangle::BlockCenter { t: 0.75 }).unwrap();
        let r = classify_mesh(&m).unwrap();
        assert_eq!(r.concave_count, 8);
        assert_eq!(count_negative_corner_elements(&m), 8);
        assert_covered(&m);

        let m = gen_punch(2, PunchTangle::Pairwise { t: 0.75 }).unwrap();
        assert_eq!(m.num_elems(), 32);
        assert_eq!(classify_mesh(&m).unwrap().concave_count, 16);
        assert_covered(&m);

        let a = gen_punch(1, PunchTangle::BlockCenter { t: 0.0 }).unwrap();
        let b = gen_punch(1, PunchTangle::None).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.elems, b.elems);
    }

    #[test]
    fn block_center_fold_overlaps_three_neighbours() {
        let m = gen_punch(1, PunchTangle::BlockCenter { t: 0.75 }).unwrap();
        let r = classify_mesh(&m).unwrap();
        let concave: Vec<_> = r.concave_elements().collect();
        assert_eq!(concave.len(), 2);
        for (e, re) in concave {
            assert_eq!(re, 0);
            let p = m.nodes[m.elems[e][re]];
            let sharing = m.elems.iter().filter(|c| c.contains(&m.elems[e][re])).count();
            assert_eq!(sharing, 4);
            assert!(p.x > 0.0 && p.y > 0.0);
        }
    }

    #[test]
    fn thin_beam_variants() {
        let m = gen_thin_beam(0, ThinBeamTangle::None).unwrap();
        assert_eq!(m.num_elems(), 10);
        let m = gen_thin_beam(0, ThinBeamTangle::SplitPair).unwrap();
        assert_eq!(m.num_elems(), 20);
        let r = classify_mesh(&m).unwrap();
        assert_eq!(r.concave_count, 10);
        for (e, c) in r.classes.iter().enumerate() {
            if e % 2 == 0 {
                assert_eq!(*c, ElementClass::Concave { reentrant: 2 });
            } else {
                assert_eq!(*c, ElementClass::Convex);
            }
        }
        let m = gen_thin_beam(1, ThinBeamTangle::SplitPair).unwrap();
        assert_eq!(m.num_elems(), 2 * 20 * 2);
        assert_covered(&m);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_cooks(0, CookTangle::None).is_err());
        assert!(gen_cooks(2, CookTangle::Single { d: 0.5 }).is_err());
        assert!(gen_punch(2, PunchTangle::Pairwise { t: 1.0 }).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn covered(mesh: &QuadMesh) -> bool {
            mesh.coverage_defect() <= 1e-10 * mesh.domain_area
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn every_family_covers_its_domain(n in 1u32..4, t in 0.01f64..0.99, d in 0.01f64..0.49) {
                let meshes = [
                    gen_cooks(n, CookTangle::None),
                    gen_cooks(n, CookTangle::Single { d }),
                    gen_cooks(n, CookTangle::Checkerboard { t }),
                    gen_punch(n, PunchTangle::None),
                    gen_punch(n, PunchTangle::Pairwise { t }),
                    gen_punch(n, PunchTangle::BlockCenter { t }),
                    gen_thin_beam(n - 1, ThinBeamTangle::None),
                    gen_thin_beam(n - 1, ThinBeamTangle::SplitPair),
                ];
                for m in meshes {
                    let m = m.unwrap();
                    prop_assert!(covered(&m), "defect {}", m.coverage_defect());
                }
            }

            #[test]
            fn split_families_are_half_concave(n in 1u32..4, t in 0.01f64..0.99) {
                for m in [
                    gen_cooks(n, CookTangle::Checkerboard { t }).unwrap(),
                    gen_punch(n, PunchTangle::Pairwise { t }).unwrap(),
                ] {
                    prop_assert_eq!(count_negative_corner_elements(&m), m.num_elems() / 2);
                }
            }

            #[test]
            fn zero_block_shift_is_identity(n in 1u32..5) {
                let a = gen_punch(n, PunchTangle::BlockCenter { t: 0.0 }).unwrap();
                let b = gen_punch(n, PunchTangle::None).unwrap();
                prop_assert_eq!(a.nodes, b.nodes);
                prop_assert_eq!(a.elems, b.elems);
            }
        }
    }
}
