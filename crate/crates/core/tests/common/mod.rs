use tfem::assembly::{DirichletSpec, DirichletValue, LoadCase};
use tfem::mesh::{classify_mesh, ElementClass};
use tfem::{Point2, QuadMesh};

/// A 2×2 block of the unit square whose centre node is pushed by `t·(h, h)`
/// into the upper-right cell, which becomes concave. Node 4 is the centre.
pub fn four_element_patch(t: f64) -> QuadMesh {
    let mut nodes = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            nodes.push(Point2::new(0.5 * i as f64, 0.5 * j as f64));
        }
    }
    nodes[4].x += 0.5 * t;
    nodes[4].y += 0.5 * t;
    let elems = vec![[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]];
    let mut mesh = QuadMesh::new(nodes, elems).unwrap();
    mesh.add_boundary_node_set("boundary", |_| true);
    mesh.domain_area = 1.0;
    let report = classify_mesh(&mesh).unwrap();
    assert_eq!(report.classes[3], ElementClass::Concave { reentrant: 0 });
    assert_eq!(report.concave_count, 1);
    mesh
}

/// Dirichlet data `u = G X + c` on every boundary node.
pub fn affine_boundary(g: [[f64; 2]; 2], c: [f64; 2]) -> LoadCase {
    LoadCase {
        dirichlet: (0..2)
            .map(|i| DirichletSpec {
                set: "boundary".into(),
                component: i,
                value: DirichletValue::Affine { grad: g[i], offset: c[i] },
            })
            .collect(),
        ..Default::default()
    }
}

pub fn affine_image(g: [[f64; 2]; 2], c: [f64; 2], p: &Point2) -> [f64; 2] {
    [0, 1].map(|i| g[i][0] * p.x + g[i][1] * p.y + c[i])
}
