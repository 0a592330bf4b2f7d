//! Graph matrices, rigidity matrix, surface Jacobian and rank analysis.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShieldError};
use crate::formation::FormationSpec;
use crate::quadric::QuadricSurface;

#[derive(Debug, Clone)]
pub struct Framework {
    pub positions: Vec<Vector3<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub surface: QuadricSurface,
}

impl Framework {
    pub fn new(positions: Vec<Vector3<f64>>, edges: Vec<(usize, usize)>, surface: QuadricSurface) -> Result<Self> {
        let n = positions.len();
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &edges {
            if i >= n || j >= n || i == j {
                return Err(ShieldError::InvalidInput(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ShieldError::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self { positions, edges, surface })
    }

    pub fn from_spec(spec: &FormationSpec) -> Result<Self> {
        Self::new(spec.positions.clone(), spec.edges.iter().map(|e| (e.i, e.j)).collect(), spec.surface()?.clone())
    }

    pub fn with_positions(&self, positions: Vec<Vector3<f64>>) -> Self {
        Self { positions, ..self.clone() }
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Positions stacked into a `3N` vector.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.positions)
    }
}

pub fn stack(positions: &[Vector3<f64>]) -> DVector<f64> {
    DVector::from_iterator(3 * positions.len(), positions.iter().flat_map(|p| p.iter().copied()))
}

/// `N x N_e` incidence matrix, `+1` at the lower-index end of each edge.
pub fn incidence_matrix(fw: &Framework) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(fw.node_count(), fw.edge_count());
    for (k, &(i, j)) in fw.edges.iter().enumerate() {
        let (tail, head) = (i.min(j), i.max(j));
        h[(tail, k)] = 1.0;
        h[(head, k)] = -1.0;
    }
    h
}

pub fn laplacian(fw: &Framework) -> DMatrix<f64> {
    let h = incidence_matrix(fw);
    &h * h.transpose()
}

/// `H diag(w) Hᵀ`.
pub fn weighted_laplacian(fw: &Framework, weights: &DVector<f64>) -> DMatrix<f64> {
    let h = incidence_matrix(fw);
    &h * DMatrix::from_diagonal(weights) * h.transpose()
}

pub fn adjacency(fw: &Framework) -> DMatrix<f64> {
    let n = fw.node_count();
    let mut a = DMatrix::zeros(n, n);
    for &(i, j) in &fw.edges {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    a
}

/// `N_e x 3N` rigidity matrix with rows `(p_i - p_j)ᵀ` and `(p_j - p_i)ᵀ` in blocks `i` and `j`.
pub fn rigidity_matrix(fw: &Framework) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(fw.edge_count(), 3 * fw.node_count());
    for (k, &(i, j)) in fw.edges.iter().enumerate() {
        let z = fw.positions[i] - fw.positions[j];
        for c in 0..3 {
            r[(k, 3 * i + c)] = z[c];
            r[(k, 3 * j + c)] = -z[c];
        }
    }
    r
}

/// `N x 3N` block-diagonal matrix with rows `(p_i - center)ᵀ Q1`.
pub fn surface_jacobian(fw: &Framework) -> DMatrix<f64> {
    let n = fw.node_count();
    let mut j = DMatrix::zeros(n, 3 * n);
    let q = fw.surface.q;
    for (i, p) in fw.positions.iter().enumerate() {
        let r = p - fw.surface.center;
        for c in 0..3 {
            j[(i, 3 * i + c)] = r[c] * q[c];
        }
    }
    j
}

#[derive(Debug, Clone)]
pub struct AugmentedJacobian {
    pub matrix: DMatrix<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
}

/// `[κ1 R; κ2 J_S]`, shape `(N_e + N) x 3N`.
pub fn augmented_jacobian(fw: &Framework, kappa1: f64, kappa2: f64) -> AugmentedJacobian {
    let r = rigidity_matrix(fw) * kappa1;
    let js = surface_jacobian(fw) * kappa2;
    let (ne, n) = (r.nrows(), js.nrows());
    let mut m = DMatrix::zeros(ne + n, 3 * fw.node_count());
    m.rows_mut(0, ne).copy_from(&r);
    m.rows_mut(ne, n).copy_from(&js);
    AugmentedJacobian { matrix: m, kappa1, kappa2 }
}

/// Number of rotations preserved by the quadric: 3 if all diagonal entries
/// of `Q1` coincide, 1 if exactly two do, 0 otherwise.
pub fn symmetry_count(q: [f64; 3]) -> usize {
    let eq = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    match (eq(q[0], q[1]), eq(q[1], q[2]), eq(q[0], q[2])) {
        (true, true, _) => 3,
        (false, false, false) => 0,
        _ => 1,
    }
}

/// Singular values above `rel_tol * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub n: usize,
    pub n_e: usize,
    pub s: usize,
    /// `3N - s`; only stated when `N_e >= 2N`.
    pub predicted_rank: Option<usize>,
    pub measured_rank: usize,
    pub agrees: Option<bool>,
}

pub fn verify_rank_prediction(fw: &Framework, kappa1: f64, kappa2: f64) -> RankReport {
    let n = fw.node_count();
    let n_e = fw.edge_count();
    let s = symmetry_count(fw.surface.q);
    let measured = numerical_rank(&augmented_jacobian(fw, kappa1, kappa2).matrix, DEFAULT_RANK_TOL);
    let predicted = (n_e >= 2 * n).then(|| 3 * n - s);
    RankReport {
        n,
        n_e,
        s,
        predicted_rank: predicted,
        measured_rank: measured,
        agrees: predicted.map(|p| p == measured),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> Framework {
        Framework::new(
            vec![Vector3::new(0., 0., 1.), Vector3::new(1., 0., 1.), Vector3::new(2., 0.5, 1.)],
            vec![(0, 1), (1, 2)],
            QuadricSurface::semi_sphere(3.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn path_laplacian() {
        let l = laplacian(&path());
        let expected = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l, expected);
        assert_eq!(adjacency(&path()).sum(), 4.0);
    }

    #[test]
    fn single_edge_row() {
        let fw = Framework::new(
            vec![Vector3::zeros(), Vector3::new(1., 0., 0.)],
            vec![(0, 1)],
            QuadricSurface::semi_sphere(1.0).unwrap(),
        )
        .unwrap();
        let r = rigidity_matrix(&fw);
        assert_eq!(r.row(0).iter().copied().collect::<Vec<_>>(), vec![-1., 0., 0., 1., 0., 0.]);
        assert_eq!(augmented_jacobian(&fw, 1.0, 1.0).matrix.shape(), (3, 6));
    }

    #[test]
    fn unit_q_surface_row() {
        let mut s = QuadricSurface::semi_sphere(1.0).unwrap();
        s.q = [1.0; 3];
        let fw = Framework::new(vec![Vector3::new(1., 2., 3.)], vec![], s).unwrap();
        assert_eq!(surface_jacobian(&fw).row(0).iter().copied().collect::<Vec<_>>(), vec![1., 2., 3.]);
    }

    #[test]
    fn symmetry_cases() {
        assert_eq!(symmetry_count(QuadricSurface::semi_sphere(2.0).unwrap().q), 3);
        assert_eq!(symmetry_count(QuadricSurface::cylinder(2.0, 4.0).unwrap().q), 1);
        assert_eq!(symmetry_count(QuadricSurface::semi_ellipsoid(10., 15., 12.).unwrap().q), 0);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::identity(5, 5), DEFAULT_RANK_TOL), 5);
        let u = DVector::from_vec(vec![1., 2., 3.]);
        let v = DVector::from_vec(vec![4., 5.]);
        assert_eq!(numerical_rank(&(&u * v.transpose()), DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn bad_edges_rejected() {
        let s = QuadricSurface::semi_sphere(1.0).unwrap();
        assert!(Framework::new(vec![Vector3::zeros(); 2], vec![(0, 2)], s.clone()).is_err());
        assert!(Framework::new(vec![Vector3::zeros(); 2], vec![(0, 1), (1, 0)], s).is_err());
    }
}
