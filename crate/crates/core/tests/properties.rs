use hessmc_core::estimators::*;
use hessmc_core::geometry::{theta_h, Drift, ManifoldModel, Potential, ScalarFieldBundle, Vec3};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-2.0..2.0f64).prop_map(Vec3::from)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn sphere_problem(x: Vec3) -> Option<Problem> {
    let m = ManifoldModel::sphere(1.0).unwrap();
    let x = x.try_normalize(1e-3)?;
    let fields = ScalarFieldBundle::new(&m, Drift::Height, Potential::Zero).unwrap();
    Problem::new(m, fields, x, 0.2).ok()
}

fn cfg() -> McConfig {
    McConfig::new(200, 0.05, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_h_is_bilinear(x in vec3(), a in vec3(), b in vec3(), c in vec3(), s in -3.0..3.0f64) {
        let Some(p) = sphere_problem(x) else { return Ok(()) };
        let (m, x) = (p.model, p.x0);
        let [a, b, c] = [a, b, c].map(|v| m.project_tangent(&x, &v));
        let th = |v2: &Vec3, v1: &Vec3| theta_h(&m, &p.fields, &x, v2, v1).unwrap();
        let lhs = th(&(a * s + b), &c);
        prop_assert!((lhs - (th(&a, &c) * s + th(&b, &c))).norm() < 1e-9 * (1.0 + lhs.norm()));
        let lhs = th(&c, &(a * s + b));
        prop_assert!((lhs - (th(&c, &a) * s + th(&c, &b))).norm() < 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn gradients_are_linear_path_by_path(x in vec3(), a in vec3(), b in vec3()) {
        let Some(p) = sphere_problem(x) else { return Ok(()) };
        let [a, b] = [a, b].map(|v| p.model.project_tangent(&p.x0, &v));
        let f = TestFunction::Coord(0);
        let g = |v: &Vec3| gradient_pathwise(&p, f, v, &cfg()).unwrap().value();
        prop_assert!(close(g(&(a + b)), g(&a) + g(&b)));
    }

    #[test]
    fn elementary_hessian_is_bilinear_path_by_path(x in vec3(), a in vec3(), b in vec3(), s in -3.0..3.0f64) {
        let Some(p) = sphere_problem(x) else { return Ok(()) };
        let [a, b] = [a, b].map(|v| p.model.project_tangent(&p.x0, &v));
        let f = TestFunction::Coord(2);
        let h = |v1: &Vec3, v2: &Vec3| hessian_elementary(&p, f, v1, v2, &cfg()).unwrap().value();
        prop_assert!(close(h(&a, &(b * s)), s * h(&a, &b)));
        prop_assert!(close(h(&(a + b), &b), h(&a, &b) + h(&b, &b)));
    }

    #[test]
    fn constant_functions_are_reproduced_exactly(c in -5.0..5.0f64, x in vec3()) {
        let Some(p) = sphere_problem(x) else { return Ok(()) };
        let r = feynman_kac(&p, TestFunction::Const(c), &cfg()).unwrap();
        prop_assert!(close(r.value(), c));
        prop_assert_eq!(r.error(), 0.0);
    }
}
