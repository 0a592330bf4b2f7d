use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use shield_core::builder::design;
use shield_core::rigidity::*;
use shield_core::QuadricSurface;

fn built(surface: QuadricSurface, n: usize) -> Framework {
    Framework::from_spec(&design(&surface, n, None).unwrap()).unwrap()
}

fn max_abs(m: &DVector<f64>) -> f64 {
    m.amax()
}

fn rotation_field(positions: &[Vector3<f64>], w: Vector3<f64>) -> DVector<f64> {
    stack(&positions.iter().map(|p| w.cross(p)).collect::<Vec<_>>())
}

#[test]
fn builder_ranks_follow_symmetry() {
    let cases = [
        (QuadricSurface::semi_sphere(15.0).unwrap(), 12, 33),
        (QuadricSurface::semi_sphere(15.0).unwrap(), 50, 147),
        (QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(), 50, 150),
        (QuadricSurface::cone(5.0, 10.0).unwrap(), 40, 119),
    ];
    for (surface, n, rank) in cases {
        let fw = built(surface, n);
        let report = verify_rank_prediction(&fw, 0.1, 1000.0);
        assert!(report.n_e >= 2 * n, "{report:?}");
        assert_eq!(report.predicted_rank, Some(rank));
        assert_eq!(report.measured_rank, rank, "{report:?}");
        assert_eq!(report.agrees, Some(true));
    }
}

#[test]
fn cylinder_loses_axial_translation_too() {
    for n in [24, 30, 40] {
        let fw = built(QuadricSurface::cylinder(5.0, 10.0).unwrap(), n);
        let axial = stack(&vec![Vector3::z(); n]);
        assert!(max_abs(&(augmented_jacobian(&fw, 0.1, 1000.0).matrix * axial)) < 1e-12);
        let report = verify_rank_prediction(&fw, 0.1, 1000.0);
        assert_eq!(report.predicted_rank, Some(3 * n - 1));
        assert_eq!(report.measured_rank, 3 * n - 2);
        assert_eq!(report.agrees, Some(false));
    }
}

#[test]
fn ellipsoid_augmented_shape() {
    let fw = built(QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(), 50);
    let j = augmented_jacobian(&fw, 0.1, 1000.0);
    assert_eq!(j.matrix.shape(), (fw.edge_count() + 50, 150));
    assert_eq!(fw.edge_count(), 131);
}

#[test]
fn zero_surface_gain_leaves_rigidity_rank() {
    let fw = built(QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(), 30);
    let aug = numerical_rank(&augmented_jacobian(&fw, 1.0, 0.0).matrix, DEFAULT_RANK_TOL);
    assert_eq!(aug, numerical_rank(&rigidity_matrix(&fw), DEFAULT_RANK_TOL));
}

#[test]
fn builder_outputs_are_connected_with_full_surface_rank() {
    for (surface, n) in [
        (QuadricSurface::semi_sphere(15.0).unwrap(), 20),
        (QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(), 50),
        (QuadricSurface::cone(5.0, 10.0).unwrap(), 40),
    ] {
        let fw = built(surface, n);
        let eig = laplacian(&fw).symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-9 && ev[1] > 1e-6, "{:?}", &ev[..2]);
        assert_eq!(numerical_rank(&surface_jacobian(&fw), DEFAULT_RANK_TOL), n);
        let ne = fw.edge_count();
        assert!((2 * n - 2..=3 * n - 6).contains(&ne));
    }
}

#[test]
fn sphere_jacobian_annihilates_rotations() {
    let fw = built(QuadricSurface::semi_sphere(15.0).unwrap(), 20);
    let js = surface_jacobian(&fw);
    for w in [Vector3::x(), Vector3::y(), Vector3::z(), Vector3::new(0.3, -1.2, 0.7)] {
        assert!(max_abs(&(&js * rotation_field(&fw.positions, w))) < 1e-10);
    }
}

fn framework_strategy() -> impl Strategy<Value = Framework> {
    (4usize..9)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, 0.1..5.0f64), n),
                proptest::collection::vec((0..n, 0..n), 1..3 * n),
            )
        })
        .prop_map(|(pts, pairs)| {
            let positions: Vec<Vector3<f64>> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let mut edges: Vec<(usize, usize)> =
                pairs.into_iter().filter(|(i, j)| i != j).map(|(i, j)| (i.min(j), i.max(j))).collect();
            edges.sort();
            edges.dedup();
            if edges.is_empty() {
                edges.push((0, 1));
            }
            Framework::new(positions, edges, QuadricSurface::semi_ellipsoid(4.0, 5.0, 6.0).unwrap()).unwrap()
        })
}

fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * a.amax().max(b.amax()).max(1.0)
}

proptest! {
    #[test]
    fn laplacian_is_incidence_product(fw in framework_strategy()) {
        let h = incidence_matrix(&fw);
        prop_assert_eq!(laplacian(&fw), &h * h.transpose());
        let deg: Vec<f64> = adjacency(&fw).row_iter().map(|r| r.sum()).collect();
        let l = laplacian(&fw);
        for (i, d) in deg.iter().enumerate() {
            prop_assert_eq!(l[(i, i)], *d);
        }
    }

    #[test]
    fn rigidity_transpose_is_kronecker_laplacian(fw in framework_strategy(), seed in 0u64..1000) {
        let e = DVector::from_fn(fw.edge_count(), |k, _| ((k as u64 * 31 + seed) % 17) as f64 - 8.0);
        let lhs = rigidity_matrix(&fw).transpose() * &e;
        let lw = weighted_laplacian(&fw, &e);
        let rhs = lw.kronecker(&DMatrix::<f64>::identity(3, 3)) * fw.stacked();
        prop_assert!(rel_close(&DMatrix::from_column_slice(lhs.len(), 1, lhs.as_slice()), &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), 1e-12));
    }

    #[test]
    fn surface_transpose_is_kronecker(fw in framework_strategy()) {
        let f = DVector::from_iterator(fw.node_count(), fw.positions.iter().map(|p| fw.surface.residual(p)));
        let lhs = surface_jacobian(&fw).transpose() * &f;
        let q = DMatrix::from_diagonal(&DVector::from_row_slice(&fw.surface.q));
        let rhs = DMatrix::from_diagonal(&f).kronecker(&q) * fw.stacked();
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * lhs.amax().max(1.0));
    }

    #[test]
    fn rigid_motions_in_kernel(fw in framework_strategy(), v in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)) {
        let r = rigidity_matrix(&fw);
        let v = Vector3::new(v.0, v.1, v.2);
        let translation = stack(&vec![v; fw.node_count()]);
        let scale = r.amax().max(1.0) * v.norm().max(1.0);
        prop_assert!((&r * translation).amax() <= 1e-12 * scale);
        let rot = rotation_field(&fw.positions, v);
        prop_assert!((&r * rot).amax() <= 1e-12 * scale * r.amax().max(1.0));
    }

    #[test]
    fn rigidity_is_half_distance_jacobian(fw in framework_strategy()) {
        let r = rigidity_matrix(&fw);
        let x0 = fw.stacked();
        let h = 1e-6;
        let sq = |x: &DVector<f64>| {
            DVector::from_iterator(fw.edge_count(), fw.edges.iter().map(|&(i, j)| {
                (x.fixed_rows::<3>(3 * i) - x.fixed_rows::<3>(3 * j)).norm_squared()
            }))
        };
        for c in 0..x0.len() {
            let mut plus = x0.clone();
            let mut minus = x0.clone();
            plus[c] += h;
            minus[c] -= h;
            let fd = (sq(&plus) - sq(&minus)) / (2.0 * h);
            for k in 0..fw.edge_count() {
                let exact = 2.0 * r[(k, c)];
                prop_assert!((fd[k] - exact).abs() <= 1e-6 * exact.abs().max(1.0));
            }
        }
    }
}
