//! Target formation description and its JSON form:
//! `{"positions":[[x,y,z],…],"edges":[[i,j,dstar],…],"rings":[{"h":…,"n":…,"d":…}],"d_global":…}`.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShieldError};
use crate::quadric::QuadricSurface;

/// One ring of nodes at a common local height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    #[serde(rename = "h")]
    pub height: f64,
    #[serde(rename = "n")]
    pub count: usize,
    /// Adjusted in-ring spacing `L_k / n_k`.
    #[serde(rename = "d")]
    pub spacing: f64,
}

/// Undirected edge `i < j` with its target distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, target: f64) -> Self {
        Self { i: a.min(b), j: a.max(b), target }
    }
}

impl From<(usize, usize, f64)> for Edge {
    fn from((i, j, target): (usize, usize, f64)) -> Self {
        Edge::new(i, j, target)
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.i, e.j, e.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub positions: Vec<Vector3<f64>>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub rings: Vec<RingSpec>,
    pub d_global: f64,
    /// Surface the formation was designed on; needed by the surface
    /// Jacobian and the controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<QuadricSurface>,
}

impl FormationSpec {
    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Bounds on the edge count of a triangulated shield, `2N - 2 <= N_e <= 3N - 6`.
    pub fn edge_bounds(&self) -> (usize, usize) {
        let n = self.node_count();
        (2 * n.saturating_sub(1), (3 * n).saturating_sub(6))
    }

    pub fn edge_bounds_ok(&self) -> bool {
        let (lo, hi) = self.edge_bounds();
        (lo..=hi).contains(&self.edge_count())
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            adj[e.i].push((e.j, e.target));
            adj[e.j].push((e.i, e.target));
        }
        adj
    }

    pub fn average_degree(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    pub fn surface(&self) -> Result<&QuadricSurface> {
        self.surface
            .as_ref()
            .ok_or_else(|| ShieldError::InvalidInput("formation carries no surface".to_string()))
    }

    /// Structural checks: indices in range, no self loops or duplicates,
    /// finite coordinates and targets.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if self.positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(ShieldError::InvalidInput("non-finite position".to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            if e.i >= n || e.j >= n || e.i == e.j {
                return Err(ShieldError::InvalidInput(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(ShieldError::InvalidInput(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
            if !(e.target.is_finite() && e.target >= 0.0) {
                return Err(ShieldError::InvalidInput(format!("bad target distance on ({}, {})", e.i, e.j)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("formation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FormationSpec = serde_json::from_str(text).map_err(|e| {
            ShieldError::InvalidInput(format!("formation JSON, line {} column {}: {e}", e.line(), e.column()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ShieldError::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
