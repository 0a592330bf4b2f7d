//! Quadric shield surfaces in normal form, `(p - c)^T Q1 (p - c) + Q2 = 0`
//! with diagonal `Q1`, together with the areas and section perimeters used
//! for ring design.
//!
//! Heights (`h`, `z_min`, `z_max`) are measured in surface-local
//! coordinates, i.e. relative to `center.z`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShieldError};
use crate::quadrature;

const AREA_REL_TOL: f64 = 1e-10;
const THOMSEN_EXPONENT: f64 = 1.6075;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    SemiEllipsoid,
    SemiSphere,
    Cylinder,
    /// "Cone": `Q1 = diag(1/a², 1/b², -1/c²)`, `Q2 = -1`, a
    /// one-sheet hyperboloid whose waist sits at `z = 0`.
    Cone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceConfig", into = "SurfaceConfig")]
pub struct QuadricSurface {
    pub kind: SurfaceKind,
    /// Diagonal of `Q1`.
    pub q: [f64; 3],
    pub q2: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub center: Vector3<f64>,
}

/// On-disk description of a surface, e.g.
/// `{"kind":"semi_ellipsoid","a":10,"b":15,"c":12,"center":[0,0,0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub kind: SurfaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub center: [f64; 3],
}

impl TryFrom<SurfaceConfig> for QuadricSurface {
    type Error = ShieldError;

    fn try_from(cfg: SurfaceConfig) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| ShieldError::InvalidInput(format!("surface {:?} needs `{name}`", cfg.kind)))
        };
        let surface = match cfg.kind {
            SurfaceKind::SemiSphere => {
                let r = cfg.r.or(cfg.a).ok_or_else(|| {
                    ShieldError::InvalidInput("semi_sphere needs `r`".to_string())
                })?;
                QuadricSurface::semi_sphere(r)?
            }
            SurfaceKind::SemiEllipsoid => {
                QuadricSurface::semi_ellipsoid(need(cfg.a, "a")?, need(cfg.b, "b")?, need(cfg.c, "c")?)?
            }
            SurfaceKind::Cylinder => {
                let a = need(cfg.a, "a")?;
                QuadricSurface::elliptic_cylinder(a, cfg.b.unwrap_or(a), need(cfg.c, "c")?)?
            }
            SurfaceKind::Cone => {
                let a = need(cfg.a, "a")?;
                QuadricSurface::elliptic_cone(a, cfg.b.unwrap_or(a), need(cfg.c, "c")?)?
            }
        };
        Ok(surface.with_center(Vector3::from(cfg.center)))
    }
}

impl From<QuadricSurface> for SurfaceConfig {
    fn from(s: QuadricSurface) -> Self {
        let [a, b, c] = s.semi_axes();
        let (r, a, b, c) = match s.kind {
            SurfaceKind::SemiSphere => (Some(a), None, None, None),
            SurfaceKind::SemiEllipsoid => (None, Some(a), Some(b), Some(c)),
            SurfaceKind::Cylinder => (None, Some(a), Some(b), Some(s.z_max)),
            SurfaceKind::Cone => (None, Some(a), Some(b), Some(c)),
        };
        SurfaceConfig {
            kind: s.kind,
            r,
            a,
            b,
            c,
            center: s.center.into(),
        }
    }
}

fn positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ShieldError::InvalidInput(format!("{name} must be positive and finite, got {value}")))
    }
}

impl QuadricSurface {
    pub fn semi_sphere(r: f64) -> Result<Self> {
        let r = positive(r, "radius")?;
        let q = 1.0 / (r * r);
        Ok(Self {
            kind: SurfaceKind::SemiSphere,
            q: [q, q, q],
            q2: -1.0,
            z_min: 0.0,
            z_max: r,
            center: Vector3::zeros(),
        })
    }

    pub fn semi_ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        let (a, b, c) = (positive(a, "a")?, positive(b, "b")?, positive(c, "c")?);
        Ok(Self {
            kind: SurfaceKind::SemiEllipsoid,
            q: [1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c)],
            q2: -1.0,
            z_min: 0.0,
            z_max: c,
            center: Vector3::zeros(),
        })
    }

    /// Circular cylinder of radius `a` truncated to `0 <= z <= height`.
    pub fn cylinder(a: f64, height: f64) -> Result<Self> {
        Self::elliptic_cylinder(a, a, height)
    }

    pub fn elliptic_cylinder(a: f64, b: f64, height: f64) -> Result<Self> {
        let (a, b, height) = (positive(a, "a")?, positive(b, "b")?, positive(height, "height")?);
        Ok(Self {
            kind: SurfaceKind::Cylinder,
            q: [1.0 / (a * a), 1.0 / (b * b), 0.0],
            q2: -1.0,
            z_min: 0.0,
            z_max: height,
            center: Vector3::zeros(),
        })
    }

    /// Circular "cone" of height `c`: the one-sheet hyperboloid `x²/a² + y²/a² - z²/c² = 1`.
    pub fn cone(a: f64, c: f64) -> Result<Self> {
        Self::elliptic_cone(a, a, c)
    }

    pub fn elliptic_cone(a: f64, b: f64, c: f64) -> Result<Self> {
        let (a, b, c) = (positive(a, "a")?, positive(b, "b")?, positive(c, "c")?);
        Ok(Self {
            kind: SurfaceKind::Cone,
            q: [1.0 / (a * a), 1.0 / (b * b), -1.0 / (c * c)],
            q2: -1.0,
            z_min: 0.0,
            z_max: c,
            center: Vector3::zeros(),
        })
    }

    pub fn with_center(mut self, center: Vector3<f64>) -> Self {
        self.center = center;
        self
    }

    /// Semi-axes `(a, b, c)`; `c` is infinite for a cylinder.
    pub fn semi_axes(&self) -> [f64; 3] {
        self.q.map(|q| if q == 0.0 { f64::INFINITY } else { 1.0 / q.abs().sqrt() })
    }

    /// Spectral norm of the diagonal `Q1`.
    pub fn q1_norm(&self) -> f64 {
        self.q.iter().fold(0.0_f64, |m, q| m.max(q.abs()))
    }

    /// Whether the surface closes at an apex (`z_max` is a single point).
    pub fn has_apex(&self) -> bool {
        matches!(self.kind, SurfaceKind::SemiSphere | SurfaceKind::SemiEllipsoid)
    }

    pub fn residual(&self, p: &Vector3<f64>) -> f64 {
        let r = p - self.center;
        self.q[0] * r.x * r.x + self.q[1] * r.y * r.y + self.q[2] * r.z * r.z + self.q2
    }

    pub fn gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let r = p - self.center;
        Vector3::new(2.0 * self.q[0] * r.x, 2.0 * self.q[1] * r.y, 2.0 * self.q[2] * r.z)
    }

    pub fn h_max(&self) -> f64 {
        self.z_max
    }

    pub fn total_area(&self) -> f64 {
        self.area_above(self.z_min).expect("z_min is in range")
    }

    pub fn boundary_length(&self) -> f64 {
        self.section_perimeter(self.z_min).expect("z_min is in range")
    }

    fn check_height(&self, h: f64) -> Result<f64> {
        let slack = 1e-12 * (1.0 + self.z_max.abs());
        if !(h >= self.z_min - slack && h <= self.z_max + slack) {
            return Err(ShieldError::OutOfRange {
                what: "height",
                value: h,
                min: self.z_min,
                max: self.z_max,
            });
        }
        Ok(h.clamp(self.z_min, self.z_max))
    }

    /// Semi-axes of the elliptic section at local height `h`.
    pub fn section_axes(&self, h: f64) -> Result<(f64, f64)> {
        let h = self.check_height(h)?;
        let [a, b, _] = self.semi_axes();
        let scale = match self.kind {
            SurfaceKind::SemiSphere | SurfaceKind::SemiEllipsoid => {
                (1.0 - self.q[2] * h * h).max(0.0).sqrt()
            }
            SurfaceKind::Cylinder => 1.0,
            SurfaceKind::Cone => (1.0 - self.q[2] * h * h).sqrt(),
        };
        Ok((a * scale, b * scale))
    }

    pub fn section_perimeter(&self, h: f64) -> Result<f64> {
        let (sa, sb) = self.section_axes(h)?;
        Ok(ellipse_perimeter(sa, sb))
    }

    /// Point of the section at local height `h` with ellipse parameter `theta`.
    pub fn point_at(&self, h: f64, theta: f64) -> Result<Vector3<f64>> {
        let (sa, sb) = self.section_axes(h)?;
        Ok(self.center + Vector3::new(sa * theta.cos(), sb * theta.sin(), h))
    }

    /// Lateral area of the part of the surface above the plane `z = h`.
    pub fn area_above(&self, h: f64) -> Result<f64> {
        let h = self.check_height(h)?;
        let [a, b, c] = self.semi_axes();
        Ok(match self.kind {
            SurfaceKind::SemiSphere => 2.0 * PI * a * (a - h),
            SurfaceKind::SemiEllipsoid => ellipsoid_area_above(a, b, c, h),
            SurfaceKind::Cylinder => ellipse_perimeter(a, b) * (self.z_max - h),
            SurfaceKind::Cone => hyperboloid_area_between(a, b, c, h, self.z_max),
        })
    }

    /// Area attributed to the part of the shield above a candidate ring at
    /// height `h` when solving for ring heights.
    ///
    /// Closed surfaces use the half ellipsoid spanned by the section ellipse
    /// and the remaining height `z_max - h` (Thomsen's area formula); open
    /// surfaces use the exact lateral area above `h`.
    pub fn ring_cap_area(&self, h: f64) -> Result<f64> {
        if self.has_apex() {
            let h = self.check_height(h)?;
            let (sa, sb) = self.section_axes(h)?;
            Ok(0.5 * thomsen_ellipsoid_area(sa, sb, self.z_max - h))
        } else {
            self.area_above(h)
        }
    }
}

/// Ramanujan's second approximation of the perimeter of an ellipse.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let sum = a + b;
    if sum <= 0.0 {
        return 0.0;
    }
    let h = ((a - b) / sum).powi(2);
    PI * sum * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// Arc length of the ellipse `(a cos t, b sin t)` for `t` in `[0, theta]`.
pub fn ellipse_arc_length(a: f64, b: f64, theta: f64) -> f64 {
    quadrature::integrate(
        |t| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt(),
        0.0,
        theta,
        1e-13,
        1e-300,
    )
}

/// Ellipse perimeter by direct quadrature of the arc-length integrand.
pub fn ellipse_perimeter_quadrature(a: f64, b: f64) -> f64 {
    quadrature::periodic(
        |t| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt(),
        2.0 * PI,
        1e-14,
    )
}

/// Knud Thomsen's approximation of the full ellipsoid surface area.
pub fn thomsen_ellipsoid_area(a: f64, b: f64, c: f64) -> f64 {
    let p = THOMSEN_EXPONENT;
    let mean = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
    4.0 * PI * mean.powf(1.0 / p)
}

fn ellipsoid_area_above(a: f64, b: f64, c: f64, h: f64) -> f64 {
    if a == b && b == c {
        return 2.0 * PI * a * (a - h);
    }
    let phi_max = (h / c).clamp(-1.0, 1.0).acos();
    let (bc2, ac2, ab2) = ((b * c).powi(2), (a * c).powi(2), (a * b).powi(2));
    quadrature::integrate(
        |phi| {
            let (s, co) = phi.sin_cos();
            let ring = quadrature::periodic(
                |t| {
                    let (st, ct) = t.sin_cos();
                    (bc2 * s * s * ct * ct + ac2 * s * s * st * st + ab2 * co * co).sqrt()
                },
                2.0 * PI,
                1e-13,
            );
            s * ring
        },
        0.0,
        phi_max,
        AREA_REL_TOL,
        1e-300,
    )
}

fn hyperboloid_area_between(a: f64, b: f64, c: f64, z0: f64, z1: f64) -> f64 {
    quadrature::integrate(
        |z| {
            let t = (1.0 + z * z / (c * c)).sqrt();
            let dt = z / (c * c * t);
            let (sa, sb, dsa, dsb) = (a * t, b * t, a * dt, b * dt);
            quadrature::periodic(
                |th| {
                    let (st, ct) = th.sin_cos();
                    let nz = sa * dsb * st * st + sb * dsa * ct * ct;
                    ((sb * ct).powi(2) + (sa * st).powi(2) + nz * nz).sqrt()
                },
                2.0 * PI,
                1e-13,
            )
        },
        z0,
        z1,
        AREA_REL_TOL,
        1e-300,
    )
}
