//! Shield formations on quadric surfaces: ring design, Delaunay checks,
//! rigidity rank analysis and simulation of the gradient control law.

pub mod builder;
pub mod config;
pub mod controller;
pub mod error;
pub mod formation;
pub mod geometry;
pub mod quadrature;
pub mod quadric;
pub mod rigidity;
pub mod simulator;

pub use builder::design;
pub use config::RunConfig;
pub use controller::{ControlGains, Controller};
pub use error::{Result, ShieldError};
pub use formation::{Edge, FormationSpec, RingSpec};
pub use quadric::{QuadricSurface, SurfaceConfig, SurfaceKind};
pub use rigidity::Framework;
pub use simulator::{Method, Trajectory};
