//! Gradient formation control: distance and surface terms plus a repulsive
//! barrier keeping agents above `z = 0` (and optionally below `z_upper`).

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShieldError};
use crate::formation::FormationSpec;
use crate::quadric::QuadricSurface;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub kappa1: f64,
    pub kappa2: f64,
    #[serde(default)]
    pub kappa3: f64,
    /// Barrier activation distance; `None` means `0.05 * h_max` of the surface.
    #[serde(default)]
    pub barrier_eps: Option<f64>,
    #[serde(default)]
    pub z_upper: Option<f64>,
}

impl ControlGains {
    pub fn new(kappa1: f64, kappa2: f64, kappa3: f64) -> Self {
        Self { kappa1, kappa2, kappa3, barrier_eps: None, z_upper: None }
    }

    pub fn with_barrier_eps(mut self, eps: f64) -> Self {
        self.barrier_eps = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa1 > 0.0 && self.kappa2 > 0.0) {
            return Err(ShieldError::InvalidInput(format!(
                "kappa1 and kappa2 must be positive (got {}, {})",
                self.kappa1, self.kappa2
            )));
        }
        if !(self.kappa3 >= 0.0) {
            return Err(ShieldError::InvalidInput(format!("kappa3 must be non-negative (got {})", self.kappa3)));
        }
        if let Some(eps) = self.barrier_eps {
            if !(eps > 0.0) {
                return Err(ShieldError::InvalidInput(format!("barrier_eps must be positive (got {eps})")));
            }
        }
        Ok(())
    }

    pub fn eps_for(&self, surface: &QuadricSurface) -> f64 {
        self.barrier_eps.unwrap_or(0.05 * surface.h_max())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeError {
    pub i: usize,
    pub j: usize,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub w: f64,
    pub w1: f64,
    pub w2: f64,
    pub ur_total: f64,
}

impl Potential {
    /// `W + U_r`, the quantity the closed loop descends.
    pub fn total(&self) -> f64 {
        self.w + self.ur_total
    }
}

/// Precomputed neighbour lists and gains for evaluating the control law.
#[derive(Debug, Clone)]
pub struct Controller {
    pub surface: QuadricSurface,
    pub gains: ControlGains,
    pub eps: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
    edges: Vec<(usize, usize, f64)>,
}

fn barrier_value(s: f64, kappa3: f64, eps: f64) -> f64 {
    if s > eps {
        0.0
    } else {
        0.5 * kappa3 * (1.0 / s - 1.0 / eps).powi(2)
    }
}

fn barrier_force(s: f64, kappa3: f64, eps: f64) -> f64 {
    if s > eps {
        0.0
    } else {
        kappa3 * (1.0 / s - 1.0 / eps) / (s * s)
    }
}

/// z-component of the repulsive control term at height `p_z`
/// (directed away from the `z = 0` plane).
pub fn repulsive_term(p_z: f64, gains: &ControlGains, eps: f64) -> Result<f64> {
    if !(p_z > 0.0) {
        return Err(ShieldError::BarrierDomain { agent: usize::MAX, coordinate: p_z });
    }
    Ok(barrier_force(p_z, gains.kappa3, eps))
}

impl Controller {
    pub fn new(spec: &FormationSpec, gains: ControlGains) -> Result<Self> {
        gains.validate()?;
        let surface = spec.surface()?.clone();
        let eps = gains.eps_for(&surface);
        Ok(Self {
            surface,
            gains,
            eps,
            neighbors: spec.neighbors(),
            edges: spec.edges.iter().map(|e| (e.i, e.j, e.target)).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    fn barrier_active(&self) -> bool {
        self.gains.kappa3 > 0.0
    }

    fn check_domain(&self, i: usize, p: &Vector3<f64>) -> Result<()> {
        if !self.barrier_active() {
            return Ok(());
        }
        if !(p.z > 0.0) {
            return Err(ShieldError::BarrierDomain { agent: i, coordinate: p.z });
        }
        if let Some(h) = self.gains.z_upper {
            if !(h - p.z > 0.0) {
                return Err(ShieldError::BarrierDomain { agent: i, coordinate: h - p.z });
            }
        }
        Ok(())
    }

    pub fn edge_errors(&self, positions: &[Vector3<f64>]) -> Vec<EdgeError> {
        self.edges
            .iter()
            .map(|&(i, j, t)| EdgeError { i, j, e: (positions[i] - positions[j]).norm_squared() - t * t })
            .collect()
    }

    pub fn edge_error_vector(&self, positions: &[Vector3<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.edges.len(), self.edge_errors(positions).into_iter().map(|e| e.e))
    }

    pub fn surface_residuals(&self, positions: &[Vector3<f64>]) -> DVector<f64> {
        DVector::from_iterator(positions.len(), positions.iter().map(|p| self.surface.residual(p)))
    }

    pub fn potential(&self, positions: &[Vector3<f64>]) -> Result<Potential> {
        let e = self.edge_error_vector(positions);
        let f = self.surface_residuals(positions);
        let w1 = 0.25 * self.gains.kappa1 * e.norm_squared();
        let w2 = 0.25 * self.gains.kappa2 * f.norm_squared();
        let mut ur = 0.0;
        if self.barrier_active() {
            for (i, p) in positions.iter().enumerate() {
                self.check_domain(i, p)?;
                ur += barrier_value(p.z, self.gains.kappa3, self.eps);
                if let Some(h) = self.gains.z_upper {
                    ur += barrier_value(h - p.z, self.gains.kappa3, self.eps);
                }
            }
        }
        Ok(Potential { w: w1 + w2, w1, w2, ur_total: ur })
    }

    /// Control of agent `i`; reads only its own position, its neighbours'
    /// relative positions and the corresponding target distances.
    pub fn control_input(&self, i: usize, positions: &[Vector3<f64>]) -> Result<Vector3<f64>> {
        let mut u = self.smooth_input(i, positions);
        if self.barrier_active() {
            let p = positions[i];
            self.check_domain(i, &p)?;
            u.z += barrier_force(p.z, self.gains.kappa3, self.eps);
            if let Some(h) = self.gains.z_upper {
                u.z -= barrier_force(h - p.z, self.gains.kappa3, self.eps);
            }
        }
        Ok(u)
    }

    fn smooth_input(&self, i: usize, positions: &[Vector3<f64>]) -> Vector3<f64> {
        let p = positions[i];
        let mut u = Vector3::zeros();
        for &(j, target) in &self.neighbors[i] {
            let z = p - positions[j];
            u -= self.gains.kappa1 * (z.norm_squared() - target * target) * z;
        }
        let f = self.surface.residual(&p);
        u -= 0.5 * self.gains.kappa2 * f * self.surface.gradient(&p);
        u
    }

    pub fn control_all(&self, positions: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        (0..positions.len()).map(|i| self.control_input(i, positions)).collect()
    }

    /// Distance and surface terms only.
    pub fn smooth_control_all(&self, positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..positions.len()).map(|i| self.smooth_input(i, positions)).collect()
    }

    /// z-component of the barrier term at height `z` (both planes).
    pub fn barrier_z(&self, z: f64) -> f64 {
        if !self.barrier_active() {
            return 0.0;
        }
        let mut b = if z > 0.0 { barrier_force(z, self.gains.kappa3, self.eps) } else { f64::INFINITY };
        if let Some(h) = self.gains.z_upper {
            b -= if h - z > 0.0 { barrier_force(h - z, self.gains.kappa3, self.eps) } else { f64::INFINITY };
        }
        b
    }

    /// Backward-Euler step `z' = z + dt * barrier_z(z')` of the barrier flow.
    pub fn implicit_barrier_step(&self, z: f64, dt: f64) -> f64 {
        if !self.barrier_active() {
            return z;
        }
        let g = |x: f64| x - dt * self.barrier_z(x) - z;
        let (mut lo, mut hi) = match self.gains.z_upper {
            Some(h) => (0.0, h),
            None => (0.0, z.max(self.eps) + 1.0),
        };
        if g(z) == 0.0 {
            return z;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn potential(spec: &FormationSpec, positions: &[Vector3<f64>], gains: &ControlGains) -> Result<Potential> {
    Controller::new(spec, *gains)?.potential(positions)
}

pub fn control_input(i: usize, positions: &[Vector3<f64>], spec: &FormationSpec, gains: &ControlGains) -> Result<Vector3<f64>> {
    if i >= positions.len() {
        return Err(ShieldError::InvalidInput(format!("agent {i} out of range")));
    }
    Controller::new(spec, *gains)?.control_input(i, positions)
}

/// Heuristic surface gain `avg_degree * d² / ‖Q1‖₂ * κ1`.
pub fn suggest_kappa2(spec: &FormationSpec, kappa1: f64) -> Result<f64> {
    let surface = spec.surface()?;
    Ok(spec.average_degree() * spec.d_global.powi(2) / surface.q1_norm() * kappa1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::Edge;
    use approx::assert_relative_eq;

    fn pair(target: f64) -> FormationSpec {
        FormationSpec {
            positions: vec![Vector3::new(0., 0., 1.), Vector3::new(1., 0., 1.)],
            edges: vec![Edge::new(0, 1, target)],
            rings: vec![],
            d_global: 1.0,
            surface: Some(QuadricSurface::semi_sphere(10.0).unwrap()),
        }
    }

    #[test]
    fn single_edge_w1() {
        let spec = pair(1.0);
        let p = [Vector3::new(0., 0., 1.), Vector3::new(2., 0., 1.)];
        let pot = potential(&spec, &p, &ControlGains::new(4.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(pot.w1, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn two_agent_control() {
        let spec = pair(1.0);
        let p = [Vector3::new(0., 0., 1.), Vector3::new(2., 0., 1.)];
        let mut gains = ControlGains::new(1.0, 1.0, 0.0);
        gains.kappa2 = f64::MIN_POSITIVE;
        let u = control_input(0, &p, &spec, &gains).unwrap();
        assert_relative_eq!(u, Vector3::new(6.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn repulsive_values() {
        let g = ControlGains::new(1.0, 1.0, 1.0);
        let eps = 0.2;
        assert_eq!(repulsive_term(eps, &g, eps).unwrap(), 0.0);
        assert_relative_eq!(repulsive_term(eps / 2.0, &g, eps).unwrap(), 4.0 / eps.powi(3), max_relative = 1e-12);
        let a = repulsive_term(eps / 4.0, &g, eps).unwrap();
        let b = repulsive_term(eps / 8.0, &g, eps).unwrap();
        assert!(4.0 / eps.powi(3) < a && a < b);
        assert!(matches!(repulsive_term(0.0, &g, eps), Err(ShieldError::BarrierDomain { .. })));
    }

    #[test]
    fn invalid_gains() {
        assert!(ControlGains::new(0.0, 1.0, 0.0).validate().is_err());
        assert!(ControlGains::new(1.0, 1.0, -1.0).validate().is_err());
        assert!(ControlGains::new(1.0, 1.0, 0.0).with_barrier_eps(0.0).validate().is_err());
    }

    #[test]
    fn barrier_off_allows_negative_z() {
        let spec = pair(1.0);
        let p = [Vector3::new(0., 0., -1.), Vector3::new(1., 0., -1.)];
        assert!(control_input(0, &p, &spec, &ControlGains::new(1.0, 1.0, 0.0)).is_ok());
        assert!(control_input(0, &p, &spec, &ControlGains::new(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn kappa2_heuristic_plugin() {
        let mut spec = pair(1.0);
        // octahedron graph: every node has degree 4
        spec.positions = vec![Vector3::zeros(); 6];
        spec.edges = (0..6)
            .flat_map(|i| (i + 1..6).map(move |j| (i, j)))
            .filter(|&(i, j)| !(i % 2 == 0 && j == i + 1))
            .map(|(i, j)| Edge::new(i, j, 1.0))
            .collect();
        let mut s = QuadricSurface::semi_sphere(1.0).unwrap();
        s.q = [1.0; 3];
        spec.surface = Some(s);
        assert_eq!(spec.average_degree(), 4.0);
        assert_relative_eq!(suggest_kappa2(&spec, 1.0).unwrap(), 4.0, epsilon = 1e-12);
    }
}
