use kuhnfem::density::{Density, DensitySpec};
use kuhnfem::forms::{assemble, AssemblyOptions};
use kuhnfem::pl_space::TentCoefficients;
use kuhnfem::tent::eval_tent;
use kuhnfem::triangulation::{incident_vertices, locate, membership, perm_from_path, GridSpec};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

fn scale() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![1.0, 0.5, 0.25, 0.125, 0.1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn located_cell_contains_the_point(d in 1usize..=4, x in point(4), r in scale()) {
        let x = &x[..d];
        let t = locate(x, r);
        prop_assert!(membership(x, &t));
        prop_assert_eq!(perm_from_path(&t.vertices()).unwrap(), t.perm.clone());
    }

    #[test]
    fn cell_tents_sum_to_one(d in 1usize..=4, x in point(4), r in scale()) {
        let x = &x[..d];
        let t = locate(x, r);
        let s: f64 = t.vertices().iter().map(|a| eval_tent(a, r, x)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12, "sum {}", s);
    }

    #[test]
    fn tent_vanishes_off_its_star(d in 1usize..=3, x in point(3), r in scale()) {
        let x = &x[..d];
        let t = locate(x, r);
        // a node one step beyond the cell's far corner is never a vertex of the cell
        let far: Vec<i64> = t.vertex(d).iter().map(|a| a + 1).collect();
        prop_assert_eq!(eval_tent(&far, r, x), 0.0);
    }

    #[test]
    fn every_incident_cell_has_the_node_as_vertex(d in 1usize..=3, a in prop::collection::vec(-5i64..5, 3), r in scale()) {
        let a = &a[..d];
        let inc = incident_vertices(a, r);
        let expected: usize = (1..=d + 1).product();
        prop_assert_eq!(inc.len(), expected);
        for (t, i) in inc {
            prop_assert_eq!(t.vertex(i), a.to_vec());
        }
    }

    #[test]
    fn affine_functions_are_reproduced(
        d in 1usize..=3,
        x in prop::collection::vec(-1.9..1.9f64, 3),
        c in prop::collection::vec(-2.0..2.0f64, 4),
        r in scale(),
    ) {
        let x = &x[..d];
        let grid = GridSpec::covering(r, &vec![-2.0; d], &vec![2.0; d]).unwrap();
        let affine = |y: &[f64]| c[3] + y.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let u = TentCoefficients::from_fn(grid.clone(), |a| affine(&grid.coords(a)));
        prop_assert!((u.eval_sum(x) - affine(x)).abs() < 1e-12);
        let g = u.gradient_on_cell(&locate(x, r));
        for k in 0..d {
            prop_assert!((g[k] - c[k]).abs() < 1e-11);
        }
    }

    #[test]
    fn clipping_is_a_contraction_on_every_cell(w in prop::collection::vec(-2.0..2.0f64, 25)) {
        let grid = GridSpec::new(0.5, vec![0, 0], vec![4, 4]).unwrap();
        let u = TentCoefficients::from_fn(grid.clone(), |a| w[(a[0] * 5 + a[1]) as usize]);
        let v = u.clip();
        for t in grid.cells() {
            prop_assert!(v.grad_sq_norm(&t) <= u.grad_sq_norm(&t) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_tables_give_m_matrices(values in prop::collection::vec(0.05..3.0f64, 16)) {
        let rho = DensitySpec::tabulated(vec![-1.0, -1.0], vec![1.0, 1.0], vec![4, 4], values.clone()).unwrap();
        let (lo, hi) = rho.support_box();
        let grid = GridSpec::covering(0.25, &lo, &hi).unwrap();
        let forms = assemble(&grid, &rho, &AssemblyOptions::default()).unwrap();
        prop_assert!(forms.stiffness.max_offdiagonal() <= 1e-14);
        prop_assert!(forms.stiffness.max_asymmetry() <= 1e-12);
        // constants carry no energy
        for s in forms.stiffness.row_sums() {
            prop_assert!(s.abs() < 1e-9);
        }
        let mass: f64 = values.iter().sum::<f64>() * 0.25;
        prop_assert!((forms.total_mass() - mass).abs() < 1e-8 * mass);
        prop_assert!(forms.markov_check(2.0, 20, 3).unwrap().passed());
    }
}
