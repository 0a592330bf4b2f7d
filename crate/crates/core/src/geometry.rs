//! Empty-circumcircle predicates for triangles embedded in 3D.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{Matrix3, Matrix4, Matrix5, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShieldError};
use crate::formation::FormationSpec;

/// Plane `a x + b y + c z + d = 0` through three points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrianglePlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub o_det: f64,
}

impl TrianglePlane {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circumcircle {
    pub m: Vector3<f64>,
    pub gamma: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapClass {
    Inside,
    OnBoundary,
    Outside,
}

fn scale(points: &[&Vector3<f64>]) -> f64 {
    points.iter().fold(0.0_f64, |m, p| m.max(p.amax())).max(f64::MIN_POSITIVE)
}

/// `|O_ABC|`, the determinant of the matrix with the three points as columns.
pub fn orientation_det(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>) -> f64 {
    Matrix3::from_columns(&[*pa, *pb, *pc]).determinant()
}

pub fn plane(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>) -> TrianglePlane {
    let ba = pb - pa;
    let ca = pc - pa;
    let o_det = orientation_det(pa, pb, pc);
    TrianglePlane {
        a: ba.y * ca.z - ca.y * ba.z,
        b: -(ba.x * ca.z - ca.x * ba.z),
        c: ba.x * ca.y - ca.x * ba.y,
        d: -o_det,
        o_det,
    }
}

fn lambda_matrix(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>, pl: &TrianglePlane) -> Matrix4<f64> {
    Matrix4::new(
        pa.x, pa.y, pa.z, 1.0, //
        pb.x, pb.y, pb.z, 1.0, //
        pc.x, pc.y, pc.z, 1.0, //
        pl.a, pl.b, pl.c, 0.0,
    )
}

/// `|Λ|`; equals `-(a² + b² + c²)` for the triangle's plane.
pub fn lambda_det(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>) -> f64 {
    lambda_matrix(pa, pb, pc, &plane(pa, pb, pc)).determinant()
}

fn check_nondegenerate(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>, lambda: f64) -> Result<()> {
    let s = scale(&[pa, pb, pc]);
    if !(lambda.abs() >= 1e-12 * s.powi(4)) {
        return Err(ShieldError::Degenerate(format!(
            "triangle {pa:?} {pb:?} {pc:?} is (nearly) collinear, |Λ| = {lambda:e}"
        )));
    }
    Ok(())
}

fn rhs(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>, o_det: f64) -> Vector4<f64> {
    Vector4::new(pa.norm_squared(), pb.norm_squared(), pc.norm_squared(), 2.0 * o_det)
}

/// Circumcenter in the triangle's plane, `γ` and the circumradius.
pub fn circumcenter(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>) -> Result<Circumcircle> {
    let pl = plane(pa, pb, pc);
    let lam = lambda_matrix(pa, pb, pc, &pl);
    check_nondegenerate(pa, pb, pc, -pl.normal().norm_squared())?;
    let sol = lam
        .lu()
        .solve(&(0.5 * rhs(pa, pb, pc, pl.o_det)))
        .ok_or_else(|| ShieldError::Degenerate("singular circumcenter system".to_string()))?;
    let m = Vector3::new(sol[0], sol[1], sol[2]);
    let gamma = sol[3];
    let r2 = 2.0 * gamma + m.norm_squared();
    Ok(Circumcircle { m, gamma, r: r2.max(0.0).sqrt() })
}

/// `|M_ABCD|`: positive iff `pd` is strictly inside the circumscribed ball of the triangle.
pub fn cap_determinant(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>, pd: &Vector3<f64>) -> Result<f64> {
    let pl = plane(pa, pb, pc);
    check_nondegenerate(pa, pb, pc, -pl.normal().norm_squared())?;
    let vp = rhs(pa, pb, pc, pl.o_det);
    let lam = lambda_matrix(pa, pb, pc, &pl);
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&lam);
    m.fixed_view_mut::<4, 1>(0, 4).copy_from(&vp);
    m[(4, 0)] = pd.x;
    m[(4, 1)] = pd.y;
    m[(4, 2)] = pd.z;
    m[(4, 3)] = 1.0;
    m[(4, 4)] = pd.norm_squared();
    Ok(m.determinant())
}

/// Classifies `pd` against the circumcircle of `pa pb pc` by the sign of `|M_ABCD|`.
pub fn in_cap_test(pa: &Vector3<f64>, pb: &Vector3<f64>, pc: &Vector3<f64>, pd: &Vector3<f64>) -> Result<CapClass> {
    let det = cap_determinant(pa, pb, pc, pd)?;
    let tol = 1e-9 * scale(&[pa, pb, pc, pd]).powi(6);
    Ok(if det > tol {
        CapClass::Inside
    } else if det < -tol {
        CapClass::Outside
    } else {
        CapClass::OnBoundary
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub triangle: [usize; 3],
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaunayReport {
    pub triangles: Vec<[usize; 3]>,
    pub violations: Vec<Violation>,
}

impl DelaunayReport {
    pub fn is_delaunay(&self) -> bool {
        self.violations.is_empty()
    }
}

/// All 3-cliques `i < j < k` of the edge graph.
pub fn triangles(spec: &FormationSpec) -> Vec<[usize; 3]> {
    let n = spec.node_count();
    let mut adj = vec![BTreeSet::new(); n];
    for e in &spec.edges {
        adj[e.i].insert(e.j);
        adj[e.j].insert(e.i);
    }
    let mut out = Vec::new();
    for i in 0..n {
        for &j in adj[i].range(i + 1..) {
            for &k in adj[j].range(j + 1..) {
                if adj[i].contains(&k) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn within_two_hops(spec: &FormationSpec, tri: &[usize; 3]) -> Vec<usize> {
    let adj = spec.neighbors();
    let mut dist = vec![usize::MAX; spec.node_count()];
    let mut queue = VecDeque::new();
    for &v in tri {
        dist[v] = 0;
        queue.push_back(v);
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] == 2 {
            continue;
        }
        for &(w, _) in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    (0..spec.node_count()).filter(|&v| dist[v] != usize::MAX && dist[v] > 0).collect()
}

fn check_with<F: Fn(&[usize; 3]) -> Vec<usize>>(spec: &FormationSpec, candidates: F) -> Result<DelaunayReport> {
    let tris = triangles(spec);
    let p = &spec.positions;
    let mut violations = Vec::new();
    for t in &tris {
        for d in candidates(t) {
            if t.contains(&d) {
                continue;
            }
            if in_cap_test(&p[t[0]], &p[t[1]], &p[t[2]], &p[d])? == CapClass::Inside {
                violations.push(Violation { triangle: *t, node: d });
            }
        }
    }
    Ok(DelaunayReport { triangles: tris, violations })
}

/// Tests every face against every other node.
pub fn check_delaunay(spec: &FormationSpec) -> Result<DelaunayReport> {
    let all: Vec<usize> = (0..spec.node_count()).collect();
    check_with(spec, |_| all.clone())
}

/// Tests every face only against nodes within two hops of its vertices.
pub fn check_delaunay_local(spec: &FormationSpec) -> Result<DelaunayReport> {
    check_with(spec, |t| within_two_hops(spec, t))
}
