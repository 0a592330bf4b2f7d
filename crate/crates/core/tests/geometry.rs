use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shield_core::builder::design;
use shield_core::formation::{Edge, FormationSpec};
use shield_core::QuadricSurface;
use shield_core::geometry::*;

fn lifted(xy: [(f64, f64); 5]) -> Vec<Vector3<f64>> {
    xy.iter().map(|&(x, y)| Vector3::new(x, y, 1.0)).collect()
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const E: usize = 4;

fn pentagon() -> Vec<Vector3<f64>> {
    lifted([(1.1, 3.9), (-2.5, 3.0), (-2.0, -0.8), (0.6, -3.6), (2.5, -2.3)])
}

fn fan(center: usize, order: [usize; 4]) -> FormationSpec {
    let p = pentagon();
    let mut pairs = vec![(A, B), (B, C), (C, D), (D, E), (E, A)];
    pairs.extend(order.iter().filter(|&&v| v != center).map(|&v| (center, v)));
    let mut edges: Vec<Edge> = pairs.iter().map(|&(i, j)| Edge::new(i, j, (p[i] - p[j]).norm())).collect();
    edges.sort_by_key(|e| (e.i, e.j));
    edges.dedup_by_key(|e| (e.i, e.j));
    FormationSpec { positions: p, edges, rings: vec![], d_global: 1.0, surface: None }
}

#[test]
fn pentagon_fan_from_c_is_delaunay() {
    let spec = fan(C, [A, B, D, E]);
    let report = check_delaunay(&spec).unwrap();
    assert_eq!(report.triangles.len(), 3);
    assert!(report.is_delaunay(), "{:?}", report.violations);
}

#[test]
fn pentagon_fan_from_b_has_c_in_bea() {
    let report = check_delaunay(&fan(B, [A, C, D, E])).unwrap();
    assert!(!report.is_delaunay());
    assert!(report.violations.contains(&Violation { triangle: [A, B, E], node: C }));
}

#[test]
fn pentagon_fan_from_a_has_b_and_c_in_ade() {
    let report = check_delaunay(&fan(A, [B, C, D, E])).unwrap();
    assert!(report.violations.contains(&Violation { triangle: [A, D, E], node: B }));
    assert!(report.violations.contains(&Violation { triangle: [A, D, E], node: C }));
}

#[test]
fn local_check_agrees_on_small_graph() {
    for spec in [fan(A, [B, C, D, E]), fan(B, [A, C, D, E]), fan(C, [A, B, D, E])] {
        assert_eq!(check_delaunay(&spec).unwrap(), check_delaunay_local(&spec).unwrap());
    }
}

#[test]
fn local_check_agrees_on_builder_outputs() {
    let surfaces = [
        QuadricSurface::semi_sphere(15.0).unwrap(),
        QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(),
        QuadricSurface::semi_ellipsoid(14.0, 6.0, 8.0).unwrap(),
        QuadricSurface::cylinder(5.0, 10.0).unwrap(),
        QuadricSurface::cone(5.0, 10.0).unwrap(),
    ];
    for s in &surfaces {
        for n in [12, 30, 61] {
            let spec = design(s, n, None).unwrap();
            assert_eq!(check_delaunay(&spec).unwrap(), check_delaunay_local(&spec).unwrap(), "{:?} N = {n}", s.kind);
        }
    }
}

#[test]
fn random_quadruples_match_distance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut decided = 0;
    for _ in 0..2000 {
        let mut pt = || Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let (a, b, c, d) = (pt(), pt(), pt(), pt());
        let Ok(cc) = circumcenter(&a, &b, &c) else { continue };
        let dist = (d - cc.m).norm();
        let class = in_cap_test(&a, &b, &c, &d).unwrap();
        if (dist - cc.r).abs() > 1e-6 * cc.r.max(1.0) {
            let expected = if dist < cc.r { CapClass::Inside } else { CapClass::Outside };
            assert_eq!(class, expected, "d = {d:?}, dist {dist}, r {}", cc.r);
            decided += 1;
        }
    }
    assert!(decided > 1900);
}

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn triangle() -> impl Strategy<Value = (Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    (point(), point(), point()).prop_filter("non-degenerate", |(a, b, c)| (b - a).cross(&(c - a)).norm() > 1e-2)
}

proptest! {
    #[test]
    fn lambda_is_minus_squared_normal((a, b, c) in triangle()) {
        let n2 = plane(&a, &b, &c).normal().norm_squared();
        let lam = lambda_det(&a, &b, &c);
        prop_assert!((lam + n2).abs() <= 1e-9 * n2);
    }

    #[test]
    fn circumcenter_is_equidistant_and_coplanar((a, b, c) in triangle()) {
        let cc = circumcenter(&a, &b, &c).unwrap();
        let pl = plane(&a, &b, &c);
        let tol = 1e-7 * cc.r.max(1.0);
        for p in [a, b, c] {
            prop_assert!(((p - cc.m).norm() - cc.r).abs() <= tol);
        }
        let off = (pl.normal().dot(&cc.m) + pl.d).abs() / pl.normal().norm();
        prop_assert!(off <= tol);
    }

    #[test]
    fn cap_class_ignores_vertex_order((a, b, c) in triangle(), d in point()) {
        let base = in_cap_test(&a, &b, &c, &d).unwrap();
        prop_assume!(base != CapClass::OnBoundary);
        for (x, y, z) in [(b, c, a), (c, a, b), (b, a, c), (a, c, b), (c, b, a)] {
            prop_assert_eq!(in_cap_test(&x, &y, &z, &d).unwrap(), base);
        }
    }

    #[test]
    fn cap_class_is_scale_invariant((a, b, c) in triangle(), d in point(), s in 0.1..10.0f64) {
        let base = in_cap_test(&a, &b, &c, &d).unwrap();
        prop_assume!(base != CapClass::OnBoundary);
        prop_assert_eq!(in_cap_test(&(a * s), &(b * s), &(c * s), &(d * s)).unwrap(), base);
    }
}
