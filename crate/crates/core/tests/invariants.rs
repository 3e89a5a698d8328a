mod common;

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use fracext::assembly::{assemble_stiffness, eval_interaction, CoefficientField, FemFunction};
use fracext::control::{optimize, project, Bounds, ControlProblem, OptimizeOptions, Variant};
use fracext::kernel::{FractionalOrder, TailPolicy};
use fracext::mesh::{generate, read_field, write_field, GeometrySpec, Mesh};

fn cuts(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.95, 0..max)
}

fn scaled(mesh: &Mesh, factor: f64) -> Mesh {
    let coords = mesh.coords().iter().map(|x| x * factor).collect();
    let cells = mesh.cells().flatten().copied().collect();
    Mesh::new(mesh.dim(), coords, cells, mesh.regions().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stiffness_is_symmetric_and_semidefinite(
        left in cuts(3), inner in cuts(5), right in cuts(3), s in 0.05f64..0.95, tail in any::<bool>()
    ) {
        let mesh = common::interval_with_cuts(&left, &inner, &right);
        let policy = if tail { TailPolicy::Analytic } else { TailPolicy::None };
        let a = assemble_stiffness(&mesh, FractionalOrder::new(s, 1).unwrap(), policy).unwrap();
        prop_assert!(a.is_symmetric());
        let dense = a.to_dense();
        let scale = a.max_abs();
        let eig = SymmetricEigen::new(dense).eigenvalues;
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-10 * scale, "min eigenvalue {min:e}, |A| = {scale:e}");
    }

    #[test]
    fn constants_are_in_the_kernel_without_tail(inner in cuts(6), s in 0.05f64..0.95) {
        let mesh = common::interval_with_cuts(&[0.5], &inner, &[0.5]);
        let a = assemble_stiffness(&mesh, FractionalOrder::new(s, 1).unwrap(), TailPolicy::None).unwrap();
        let ones = vec![1.0; a.dim()];
        let r = a.mul(&ones);
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(worst <= 1e-10 * a.max_abs(), "|A 1| = {worst:e}");
    }

    #[test]
    fn stiffness_scales_with_the_mesh(inner in cuts(4), s in 0.05f64..0.95, factor in 0.3f64..3.0) {
        // x -> c x multiplies every entry by c^{1 - 2s} in 1D, far field included
        let mesh = common::interval_with_cuts(&[0.4], &inner, &[0.6]);
        let order = FractionalOrder::new(s, 1).unwrap();
        let a = assemble_stiffness(&mesh, order, TailPolicy::Analytic).unwrap();
        let b = assemble_stiffness(&scaled(&mesh, factor), order, TailPolicy::Analytic).unwrap();
        let k = factor.powf(1.0 - 2.0 * s);
        let scale = a.max_abs();
        for (i, j, v) in a.iter() {
            prop_assert!((b.get(i, j) - k * v).abs() <= 1e-9 * k * scale, "entry ({i}, {j})");
        }
    }

    #[test]
    fn stiffness_is_continuous_in_s(inner in cuts(4), s in 0.1f64..0.9) {
        let mesh = common::interval_with_cuts(&[0.5], &inner, &[0.5]);
        let at = |t: f64| assemble_stiffness(&mesh, FractionalOrder::new(t, 1).unwrap(), TailPolicy::Analytic).unwrap();
        let (a, b) = (at(s), at(s + 1e-7));
        let scale = a.max_abs();
        for (i, j, v) in a.iter() {
            prop_assert!((b.get(i, j) - v).abs() <= 1e-4 * scale, "entry ({i}, {j})");
        }
    }

    #[test]
    fn interaction_of_constants_vanishes(c in -5.0f64..5.0, s in 0.05f64..0.95, x in 1.05f64..1.45) {
        let mesh = common::interval_with_cuts(&[0.5], &[0.3, 0.7], &[0.2, 0.6]);
        let u = FemFunction::new(&mesh, vec![c; mesh.num_nodes()]).unwrap();
        let order = FractionalOrder::new(s, 1).unwrap();
        let v = eval_interaction(&mesh, &u, order, &[[x, 0.0], [-x, 0.0]]).unwrap();
        prop_assert!(v.iter().all(|w| w.abs() < 1e-12 * (1.0 + c.abs())), "{v:?}");
    }

    #[test]
    fn projection_is_idempotent_and_feasible(
        z in prop::collection::vec(-10.0f64..10.0, 1..20), lo in -2.0f64..0.0, width in 0.0f64..3.0
    ) {
        let bounds = Bounds { lower: vec![lo; z.len()], upper: vec![lo + width; z.len()] };
        let p = project(&z, &bounds);
        prop_assert_eq!(&project(&p, &bounds), &p);
        prop_assert!(p.iter().all(|&v| v >= lo && v <= lo + width));
        for (a, b) in z.iter().zip(&p) {
            if *a >= lo && *a <= lo + width {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn field_files_round_trip_exactly(pool in prop::collection::vec(-1e6f64..1e6, 16)) {
        let mesh = common::interval_with_cuts(&[0.5], &[0.2, 0.4, 0.6, 0.8], &[0.3, 0.6]);
        let values: Vec<f64> = pool[..mesh.num_nodes()].to_vec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.field");
        write_field(&path, &mesh, &values).unwrap();
        let (again, read) = read_field(&path).unwrap();
        prop_assert_eq!(read, values);
        prop_assert_eq!(again.coords(), mesh.coords());
    }
}

fn control_instance() -> (Arc<Mesh>, ControlProblem) {
    let mesh = generate(&GeometrySpec::interval_control(), 0.125).unwrap();
    let order = FractionalOrder::new(0.4, 1).unwrap();
    let kappa = CoefficientField::control(&mesh);
    let target = FemFunction::new(&mesh, vec![1.0; mesh.num_nodes()]).unwrap();
    let problem = ControlProblem::new(mesh.clone(), order, Variant::Robin, 1.0, &kappa, 1e-3, target).unwrap();
    (Arc::new(mesh), problem)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn armijo_steps_never_increase_the_objective(
        z0 in prop::collection::vec(0.0f64..4.0, 8), lower in prop::option::of(-1.0f64..0.5)
    ) {
        let (_, problem) = control_instance();
        let m = problem.control_dofs().len();
        let problem = match lower {
            Some(lo) => problem.with_bounds(Bounds { lower: vec![lo; m], upper: vec![f64::INFINITY; m] }).unwrap(),
            None => problem.with_bounds(Bounds::unbounded(m)).unwrap(),
        };
        let z0: Vec<f64> = z0.iter().cycle().take(m).copied().collect();
        let res = optimize(&problem, &z0, &OptimizeOptions::default()).unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective, "{} then {}", w[0].objective, w[1].objective);
        }
        prop_assert!(res.objective <= problem.objective(&project(&z0, problem.bounds())).unwrap());
    }
}
