//! Q4 mesh data model and element classification.
//!
//! Elements list their four corners counter-clockwise. A concave element has
//! exactly one re-entrant corner; its signed (shoelace) area is still positive
//! and the notch it leaves is covered by its convex neighbours, so the sum of
//! element shoelace areas equals the domain area for tangled meshes as well.

mod generators;
mod io;

use std::collections::BTreeMap;

pub use generators::{
    gen_cooks, gen_punch, gen_thin_beam, CookTangle, PunchTangle, ThinBeamTangle, COOK_CORNERS,
};
pub use io::{mesh_to_string, parse_mesh, read_mesh, write_mesh, MESH_HEADER};

use crate::error::{Error, Result};

pub type Point2 = nalgebra::Point2<f64>;

/// Relative tolerance of the geometric predicates (scaled by the squared
/// bounding-box diagonal of the element).
pub const EPS_GEOM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    pub nodes: Vec<Point2>,
    pub elems: Vec<[usize; 4]>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// `(element, local edge)` pairs; local edge `i` joins corner `i` to `i + 1 mod 4`.
    pub edge_sets: BTreeMap<String, Vec<(usize, usize)>>,
    pub domain_area: f64,
}

impl QuadMesh {
    /// Builds a mesh and checks connectivity. The domain area is taken from the
    /// boundary edge loop.
    pub fn new(nodes: Vec<Point2>, elems: Vec<[usize; 4]>) -> Result<Self> {
        check_connectivity(nodes.len(), &elems)?;
        let mut mesh = QuadMesh {
            nodes,
            elems,
            node_sets: BTreeMap::new(),
            edge_sets: BTreeMap::new(),
            domain_area: 0.0,
        };
        mesh.domain_area = mesh.boundary_area();
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn elem_coords(&self, e: usize) -> [Point2; 4] {
        self.elems[e].map(|n| self.nodes[n])
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSet(name.to_string()))
    }

    pub fn edge_set(&self, name: &str) -> Result<&[(usize, usize)]> {
        self.edge_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSet(name.to_string()))
    }

    pub fn edge_nodes(&self, e: usize, local_edge: usize) -> (usize, usize) {
        let c = self.elems[e];
        (c[local_edge], c[(local_edge + 1) % 4])
    }

    /// Edges used by exactly one element, as `(element, local edge)`.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in 0..self.num_elems() {
            for k in 0..4 {
                let (a, b) = self.edge_nodes(e, k);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for e in 0..self.num_elems() {
            for k in 0..4 {
                let (a, b) = self.edge_nodes(e, k);
                if count[&(a.min(b), a.max(b))] == 1 {
                    out.push((e, k));
                }
            }
        }
        out
    }

    /// Area enclosed by the boundary edges (Green's theorem on the edge loop).
    pub fn boundary_area(&self) -> f64 {
        self.boundary_edges()
            .into_iter()
            .map(|(e, k)| {
                let (a, b) = self.edge_nodes(e, k);
                cross(&self.nodes[a], &self.nodes[b])
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn shoelace_area(&self, e: usize) -> f64 {
        shoelace(&self.elem_coords(e))
    }

    /// `|Σ shoelace − domain_area|`; zero up to round-off for every valid mesh.
    pub fn coverage_defect(&self) -> f64 {
        let total: f64 = (0..self.num_elems()).map(|e| self.shoelace_area(e)).sum();
        (total - self.domain_area).abs()
    }

    /// Adds a node set holding every boundary node that satisfies `pred`.
    pub fn add_boundary_node_set(&mut self, name: &str, pred: impl Fn(&Point2) -> bool) {
        let mut ids: Vec<usize> = self
            .boundary_edges()
            .into_iter()
            .flat_map(|(e, k)| {
                let (a, b) = self.edge_nodes(e, k);
                [a, b]
            })
            .filter(|&n| pred(&self.nodes[n]))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        self.node_sets.insert(name.to_string(), ids);
    }

    /// Adds an edge set holding every boundary edge whose two end points satisfy `pred`.
    pub fn add_boundary_edge_set(&mut self, name: &str, pred: impl Fn(&Point2) -> bool) {
        let edges = self
            .boundary_edges()
            .into_iter()
            .filter(|&(e, k)| {
                let (a, b) = self.edge_nodes(e, k);
                pred(&self.nodes[a]) && pred(&self.nodes[b])
            })
            .collect();
        self.edge_sets.insert(name.to_string(), edges);
    }

    /// Index of the node closest to `p`, if it lies within `tol`.
    pub fn find_node(&self, p: &Point2, tol: f64) -> Option<usize> {
        let (i, d) = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= tol).then_some(i)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        bbox(&self.nodes)
    }
}

pub(crate) fn check_connectivity(num_nodes: usize, elems: &[[usize; 4]]) -> Result<()> {
    for (e, c) in elems.iter().enumerate() {
        for &n in c {
            if n >= num_nodes {
                return Err(Error::IndexOutOfRange {
                    elem: e,
                    node: n,
                    count: num_nodes,
                });
            }
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if c[i] == c[j] {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} repeats node {}",
                        c[i]
                    )));
                }
            }
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub(crate) fn bbox(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Signed area of a polygon (positive when counter-clockwise).
pub fn shoelace(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(&poly[i], &poly[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// Corner cross products `(x[a+1] − x[a]) × (x[a−1] − x[a])`; positive at a
/// convex corner of a counter-clockwise quadrilateral.
pub fn corner_crosses(q: &[Point2; 4]) -> [f64; 4] {
    std::array::from_fn(|a| {
        let next = q[(a + 1) % 4] - q[a];
        let prev = q[(a + 3) % 4] - q[a];
        next.x * prev.y - next.y * prev.x
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementClass {
    Convex,
    /// `reentrant` is the local index (0..4) of the corner whose interior angle exceeds 180°.
    Concave { reentrant: usize },
    Degenerate,
}

impl ElementClass {
    pub fn is_concave(&self) -> bool {
        matches!(self, ElementClass::Concave { .. })
    }

    /// Integer code used in output files.
    pub fn code(&self) -> i32 {
        match self {
            ElementClass::Convex => 0,
            ElementClass::Concave { .. } => 1,
            ElementClass::Degenerate => 2,
        }
    }
}

/// Classifies a quadrilateral from the signs of its corner cross products.
pub fn classify_quad(q: &[Point2; 4]) -> std::result::Result<ElementClass, ()> {
    let (lo, hi) = bbox(q);
    let diag2 = (hi - lo).norm_squared();
    let crosses = corner_crosses(q);
    if crosses.iter().any(|c| c.abs() <= EPS_GEOM * diag2) {
        return Ok(ElementClass::Degenerate);
    }
    let negative: Vec<usize> = (0..4).filter(|&a| crosses[a] < 0.0).collect();
    match negative.as_slice() {
        [] => Ok(ElementClass::Convex),
        [r] => Ok(ElementClass::Concave { reentrant: *r }),
        _ => Err(()),
    }
}

pub fn classify_element(mesh: &QuadMesh, e: usize) -> Result<ElementClass> {
    classify_quad(&mesh.elem_coords(e)).map_err(|_| Error::SelfIntersecting { elem: e })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangleReport {
    pub classes: Vec<ElementClass>,
    pub concave_count: usize,
    /// Smallest corner value of det J over all elements.
    pub min_corner_jacobian: f64,
}

impl TangleReport {
    pub fn concave_elements(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.classes.iter().enumerate().filter_map(|(e, c)| match c {
            ElementClass::Concave { reentrant } => Some((e, *reentrant)),
            _ => None,
        })
    }

    pub fn degenerate_count(&self) -> usize {
        self.classes
            .iter()
            .filter(|c| **c == ElementClass::Degenerate)
            .count()
    }

    pub fn is_tangle_free(&self) -> bool {
        self.concave_count == 0
    }
}

pub fn classify_mesh(mesh: &QuadMesh) -> Result<TangleReport> {
    let mut classes = Vec::with_capacity(mesh.num_elems());
    let mut min_corner_jacobian = f64::INFINITY;
    for e in 0..mesh.num_elems() {
        classes.push(classify_element(mesh, e)?);
        // det J at a corner is a quarter of the corner cross product
        let c = corner_crosses(&mesh.elem_coords(e));
        for v in c {
            min_corner_jacobian = min_corner_jacobian.min(0.25 * v);
        }
    }
    let concave_count = classes.iter().filter(|c| c.is_concave()).count();
    Ok(TangleReport {
        classes,
        concave_count,
        min_corner_jacobian,
    })
}
