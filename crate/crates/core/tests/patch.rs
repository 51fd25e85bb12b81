mod common;

use proptest::prelude::*;
use tfem::material::MaterialModel;
use tfem::solver::{run, Problem, SolverConfig, StepCut};

use common::{affine_boundary, affine_image, four_element_patch};

fn solve_patch(t: f64, g: [[f64; 2]; 2], c: [f64; 2], fbar: bool) -> (Vec<f64>, f64) {
    let mesh = four_element_patch(t);
    let loads = affine_boundary(g, c);
    let problem = Problem {
        mesh: &mesh,
        material: MaterialModel::gnh(500.0, 1700.0).unwrap(),
        loads: &loads,
    };
    // the interior node starts each step at its previous position while the
    // boundary jumps ahead; cutting keeps the first iterate uninverted
    let cfg = SolverConfig {
        load_steps: 2,
        fbar,
        step_cut: StepCut {
            enabled: true,
            max_halvings: 6,
        },
        ..Default::default()
    };
    let r = run(&problem, &cfg).unwrap();
    assert_eq!(r.num_constraints, 2);
    (r.final_u().to_vec(), r.max_constraint_residual())
}

#[test]
fn uniform_stretch_is_reproduced() {
    let g = [[0.1, 0.0], [0.0, -0.05]];
    let (u, res) = solve_patch(0.75, g, [0.0, 0.0], false);
    let mesh = four_element_patch(0.75);
    let expect = affine_image(g, [0.0, 0.0], &mesh.nodes[4]);
    assert!((u[8] - expect[0]).abs() < 1e-9 && (u[9] - expect[1]).abs() < 1e-9);
    assert!(res <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_boundary_data_gives_affine_interior(
        t in 0.55f64..0.9,
        g in proptest::array::uniform4(-0.25f64..0.25),
        c in proptest::array::uniform2(-1.0f64..1.0),
        fbar in any::<bool>(),
    ) {
        let g = [[g[0], g[1]], [g[2], g[3]]];
        // det F > 0 holds for |G| ≤ 0.25 entrywise
        let (u, res) = solve_patch(t, g, c, fbar);
        let mesh = four_element_patch(t);
        let expect = affine_image(g, c, &mesh.nodes[4]);
        prop_assert!((u[8] - expect[0]).abs() < 1e-9, "{} vs {}", u[8], expect[0]);
        prop_assert!((u[9] - expect[1]).abs() < 1e-9, "{} vs {}", u[9], expect[1]);
        prop_assert!(res <= 1e-10, "constraint residual {res:e}");
    }
}
