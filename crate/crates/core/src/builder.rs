//! Shield design: inter-distance bound, ring heights and node counts, node
//! placement on the ring sections and the ring-to-ring edge procedure.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Vector2, Vector3};

use crate::error::{Result, ShieldError};
use crate::formation::{Edge, FormationSpec, RingSpec};
use crate::geometry::{in_cap_test, CapClass};
use crate::quadric::{ellipse_arc_length, ellipse_perimeter_quadrature, QuadricSurface};

const EQUILATERAL_AREA: f64 = 0.433_012_701_892_219_3; // sqrt(3) / 4

const SCAN_INTERVALS: usize = 256;
const BISECTION_TOL: f64 = 1e-10;
const BISECTION_MAX_ITER: usize = 200;

/// Largest node spacing `d` for which `N` equilateral triangles of side `d`
/// fit in area `area` given a boundary of length `boundary`.
pub fn max_interdistance(n: usize, area: f64, boundary: f64) -> Result<f64> {
    if n < 4 {
        return Err(ShieldError::InvalidInput(format!("at least 4 nodes are required, got {n}")));
    }
    if !(area > 0.0 && boundary >= 0.0) {
        return Err(ShieldError::InvalidInput(format!("area {area} and boundary {boundary} must be positive")));
    }
    let m = (n - 1) as f64;
    let disc = boundary * boundary + 32.0 / 3f64.sqrt() * area * m;
    Ok((boundary + disc.sqrt()) / (4.0 * m))
}

/// Nodes (and edges) on a closed boundary of length `boundary` at spacing `d`.
pub fn boundary_count(boundary: f64, d: f64) -> usize {
    // guard against 10/5 = 2.0000000000000004 style round-up
    let ratio = boundary / d;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-12 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Number of triangles of a triangulated disk with `n` nodes and `boundary_edges` boundary edges.
pub fn triangle_count_estimate(n: usize, boundary_edges: usize) -> usize {
    (2 * n).saturating_sub(2 + boundary_edges)
}

/// Area of `faces` equilateral triangles of side `d`.
pub fn area_estimate(faces: usize, d: f64) -> f64 {
    faces as f64 * EQUILATERAL_AREA * d * d
}

/// `(A_S - f A_f) / A_S` for a surface of area `area`.
pub fn relative_area_error(area: f64, faces: usize, d: f64) -> f64 {
    (area - area_estimate(faces, d)) / area
}

fn ring_balance(surface: &QuadricSurface, remaining: usize, d: f64, h: f64) -> Result<f64> {
    let cap = surface.ring_cap_area(h)?;
    let perimeter = surface.section_perimeter(h)?;
    let faces = 2.0 * remaining as f64 - 2.0 - perimeter / d;
    Ok(cap - faces * EQUILATERAL_AREA * d * d)
}

/// Smallest height above `h_lower` at which the area left above the ring
/// matches the triangle budget of the `remaining` nodes. `None` when the
/// balance has no root up to `z_max`.
pub fn solve_ring_height(surface: &QuadricSurface, remaining: usize, d: f64, h_lower: f64) -> Result<Option<f64>> {
    if remaining < 1 {
        return Err(ShieldError::InvalidInput("no nodes left to place".to_string()));
    }
    let lo = h_lower + 1e-9;
    let hi = surface.z_max;
    if lo > hi {
        return Ok(None);
    }
    let g = |h: f64| ring_balance(surface, remaining, d, h);
    let mut a = lo;
    let mut ga = g(a)?;
    if ga <= 0.0 {
        return Ok(Some(a));
    }
    let step = (hi - lo) / SCAN_INTERVALS as f64;
    for k in 1..=SCAN_INTERVALS {
        let b = if k == SCAN_INTERVALS { hi } else { lo + step * k as f64 };
        let gb = g(b)?;
        if gb <= 0.0 {
            return bisect(&g, a, b, ga).map(Some);
        }
        a = b;
        ga = gb;
    }
    Ok(None)
}

fn bisect<G: Fn(f64) -> Result<f64>>(g: &G, mut a: f64, mut b: f64, ga: f64) -> Result<f64> {
    let positive_at_a = ga > 0.0;
    for _ in 0..BISECTION_MAX_ITER {
        if b - a <= BISECTION_TOL {
            return Ok(0.5 * (a + b));
        }
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if gm == 0.0 {
            return Ok(m);
        }
        if (gm > 0.0) == positive_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    Err(ShieldError::Numeric(format!(
        "ring height bisection did not converge in {BISECTION_MAX_ITER} iterations (bracket [{a}, {b}])"
    )))
}

/// Ring heights, node counts and spacings for `n` nodes on `surface`.
pub fn build_shield(surface: &QuadricSurface, n: usize) -> Result<Vec<RingSpec>> {
    let boundary = surface.boundary_length();
    let d = max_interdistance(n, surface.total_area(), boundary)?;
    let base_count = boundary_count(boundary, d).clamp(1, n);
    let mut rings = vec![RingSpec {
        height: surface.z_min,
        count: base_count,
        spacing: boundary / base_count as f64,
    }];

    let mut remaining = n - base_count;
    let mut next = if remaining > 0 { solve_ring_height(surface, remaining, d, surface.z_min)? } else { None };
    while let Some(h) = next.filter(|&h| remaining > 0 && h <= surface.z_max) {
        let perimeter = surface.section_perimeter(h)?;
        let count = boundary_count(perimeter, d).clamp(1, remaining);
        rings.push(RingSpec { height: h, count, spacing: perimeter / count as f64 });
        remaining -= count;
        next = if remaining > 0 { solve_ring_height(surface, remaining, d, h)? } else { None };
    }

    if remaining > 0 && !surface.has_apex() && rings.len() > 1 {
        // Open top: spread the leftover nodes over the last ring.
        let last = rings.last_mut().expect("base ring");
        last.count += remaining;
        last.spacing = surface.section_perimeter(last.height)? / last.count as f64;
        remaining = 0;
    }
    if remaining > 0 {
        // No admissible height was found for the leftover nodes: close the
        // shield with one more ring between the last ring and the top.
        let last = rings.last().expect("base ring").height;
        let h = if surface.has_apex() && remaining == 1 { surface.z_max } else { 0.5 * (last + surface.z_max) };
        if h - last <= 1e-9 {
            return Err(ShieldError::Construction(format!("no room above h = {last} for {remaining} nodes")));
        }
        let perimeter = surface.section_perimeter(h)?;
        rings.push(RingSpec { height: h, count: remaining, spacing: perimeter / remaining as f64 });
    }
    Ok(rings)
}

/// Ellipse parameter at which the arc length from `t = 0` equals `fraction` of the perimeter.
fn arc_length_parameter(a: f64, b: f64, fraction: f64, perimeter: f64) -> f64 {
    let target = fraction * perimeter;
    let (mut lo, mut hi) = (0.0, 2.0 * PI);
    let mut t = 2.0 * PI * fraction;
    for _ in 0..100 {
        let s = ellipse_arc_length(a, b, t) - target;
        if s.abs() <= 1e-12 * perimeter {
            break;
        }
        if s > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let speed = (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
        let newton = t - s / speed;
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    t
}

/// Places each ring's nodes equally spaced in arc length along its section,
/// odd rings shifted by half a spacing. Node order follows ring order.
pub fn place_nodes(surface: &QuadricSurface, rings: &[RingSpec]) -> Result<Vec<Vector3<f64>>> {
    let mut positions = Vec::with_capacity(rings.iter().map(|r| r.count).sum());
    for (k, ring) in rings.iter().enumerate() {
        let (sa, sb) = surface.section_axes(ring.height)?;
        let phase = if k % 2 == 1 { 0.5 } else { 0.0 };
        let circular = (sa - sb).abs() <= 1e-14 * sa.max(sb);
        let perimeter = if circular { 0.0 } else { ellipse_perimeter_quadrature(sa, sb) };
        for j in 0..ring.count {
            let fraction = (j as f64 + phase) / ring.count as f64;
            let theta = if circular {
                2.0 * PI * fraction
            } else {
                arc_length_parameter(sa, sb, fraction, perimeter)
            };
            positions.push(surface.point_at(ring.height, theta)?);
        }
    }
    Ok(positions)
}

fn orient(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Proper crossing of two 2D segments: the interiors intersect in a single point.
pub fn segments_cross(p1: &Vector2<f64>, p2: &Vector2<f64>, q1: &Vector2<f64>, q2: &Vector2<f64>) -> bool {
    let scale = [p1, p2, q1, q2].iter().fold(1.0_f64, |m, v| m.max(v.abs().max()));
    let tol = 1e-12 * scale * scale;
    let d1 = orient(p1, p2, q1);
    let d2 = orient(p1, p2, q2);
    let d3 = orient(q1, q2, p1);
    let d4 = orient(q1, q2, p2);
    ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol)) && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
}

fn ring_offsets(rings: &[RingSpec]) -> Vec<usize> {
    let mut offsets = vec![0];
    for r in rings {
        offsets.push(offsets.last().unwrap() + r.count);
    }
    offsets
}

/// Planar coordinates for the nodes of one band: the `z = 0` projection when
/// the two rings project onto distinct curves, otherwise the conformal
/// annulus map `(x, y) exp(-z / r)` of a cylinder of mean radius `r`.
fn band_chart(
    positions: &[Vector3<f64>],
    lower: std::ops::Range<usize>,
    upper: std::ops::Range<usize>,
) -> Vec<Vector2<f64>> {
    let flat: Vec<Vector2<f64>> = positions.iter().map(|p| Vector2::new(p.x, p.y)).collect();
    let radius = |r: std::ops::Range<usize>| {
        let len = r.len() as f64;
        r.map(|i| flat[i].norm()).sum::<f64>() / len
    };
    let (r_lo, r_hi) = (radius(lower.clone()), radius(upper));
    if (r_lo - r_hi).abs() > 1e-9 * r_lo.max(r_hi) {
        return flat;
    }
    let z0 = positions[lower.start].z;
    positions.iter().zip(&flat).map(|(p, q)| q * (-(p.z - z0) / r_lo).exp()).collect()
}

/// Whether `p` lies strictly between `a` and `b` on the segment joining them.
fn on_segment(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return false;
    }
    let t = (p - a).dot(&ab) / len2;
    let scale = a.amax().max(b.amax()).max(p.amax()).max(1.0);
    t > 0.0 && t < 1.0 && ab.perp(&(p - a)).abs() <= 1e-12 * scale * scale
}

fn in_triangle(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> bool {
    let cross = |u: &Vector2<f64>, v: &Vector2<f64>, w: &Vector2<f64>| (v - u).perp(&(w - u));
    let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
    (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0)
}

fn has_edge(edges: &[(usize, usize)], a: usize, b: usize) -> bool {
    edges.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
}

/// Replaces inter-ring links whose two adjacent band triangles fail the
/// empty-circumcircle test by the opposite diagonal of their quadrilateral,
/// when that diagonal is within reach and the quadrilateral is convex in the
/// `z = 0` projection.
fn flip_band<L: Fn(usize) -> bool>(
    links: &mut Vec<(usize, usize)>,
    ring_edges: &[(usize, usize)],
    positions: &[Vector3<f64>],
    chart: &[Vector2<f64>],
    in_lower: L,
    reach: f64,
) {
    let project = |i: usize| chart[i];
    let max_flips = 10 * (links.len() + 1);
    for _ in 0..max_flips {
        let all: Vec<(usize, usize)> = links.iter().chain(ring_edges).copied().collect();
        let nodes: BTreeSet<usize> = all.iter().flat_map(|&(a, b)| [a, b]).collect();
        let mut flipped = false;
        for idx in 0..links.len() {
            let (a, b) = links[idx];
            let apexes: Vec<usize> = nodes
                .iter()
                .copied()
                .filter(|&c| c != a && c != b && has_edge(&all, a, c) && has_edge(&all, b, c))
                .collect();
            let (pa, pb) = (project(a), project(b));
            let side = |v: usize| {
                let (u, w) = (pb - pa, project(v) - pa);
                u.x * w.y - u.y * w.x
            };
            let face = |left: bool| {
                let group: Vec<usize> = apexes.iter().copied().filter(|&v| (side(v) > 0.0) == left).collect();
                group.iter().copied().find(|&c| {
                    group.iter().all(|&v| v == c || !in_triangle(&project(v), &pa, &pb, &project(c)))
                })
            };
            let (Some(c), Some(d)) = (face(true), face(false)) else {
                continue;
            };
            if in_lower(c) == in_lower(d) || has_edge(&all, c, d) {
                continue;
            }
            if (positions[c] - positions[d]).norm() > reach {
                continue;
            }
            if !segments_cross(&project(a), &project(b), &project(c), &project(d)) {
                continue;
            }
            let inside = |t: [usize; 3], v: usize| {
                matches!(
                    in_cap_test(&positions[t[0]], &positions[t[1]], &positions[t[2]], &positions[v]),
                    Ok(CapClass::Inside)
                )
            };
            if inside([a, b, c], d) || inside([a, b, d], c) {
                links[idx] = if in_lower(c) { (c, d) } else { (d, c) };
                flipped = true;
                break;
            }
        }
        if !flipped {
            return;
        }
    }
}

/// Triangulates a convex planar polygon (vertices in cyclic order) by
/// recursively choosing, for each chord, the apex with the largest angle.
fn close_polygon(ids: &[usize], positions: &[Vector3<f64>], out: &mut Vec<(usize, usize)>) {
    fn recurse(ids: &[usize], positions: &[Vector3<f64>], i: usize, j: usize, out: &mut Vec<(usize, usize)>) {
        if j - i < 2 {
            return;
        }
        let (pi, pj) = (positions[ids[i]], positions[ids[j]]);
        let mut best = i + 1;
        let mut best_angle = f64::NEG_INFINITY;
        for k in i + 1..j {
            let pk = positions[ids[k]];
            let angle = (pi - pk).angle(&(pj - pk));
            if angle > best_angle + 1e-12 {
                best_angle = angle;
                best = k;
            }
        }
        if best - i >= 2 {
            out.push((ids[i], ids[best]));
        }
        if j - best >= 2 {
            out.push((ids[best], ids[j]));
        }
        recurse(ids, positions, i, best, out);
        recurse(ids, positions, best, j, out);
    }
    if ids.len() >= 4 {
        recurse(ids, positions, 0, ids.len() - 1, out);
    }
}

/// Default inter-ring slack `(sqrt(2) - 1) d`.
pub fn default_edge_slack(d: f64) -> f64 {
    (SQRT_2 - 1.0) * d
}

/// Builds the edge set: in-ring neighbours, inter-ring links no longer than
/// `d + edge_slack` whose `z = 0` projections do not cross an already kept
/// link of the same band (shorter links first), and, when `close_top` is
/// set, diagonals closing the top ring's polygon. Targets are the realised
/// distances.
pub fn generate_edges(
    positions: &[Vector3<f64>],
    rings: &[RingSpec],
    d: f64,
    edge_slack: f64,
    close_top: bool,
) -> Result<Vec<Edge>> {
    let offsets = ring_offsets(rings);
    if *offsets.last().unwrap() != positions.len() {
        return Err(ShieldError::InvalidInput(format!(
            "rings hold {} nodes but {} positions were given",
            offsets.last().unwrap(),
            positions.len()
        )));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    for (k, ring) in rings.iter().enumerate() {
        let base = offsets[k];
        match ring.count {
            0 | 1 => {}
            2 => pairs.push((base, base + 1)),
            n => pairs.extend((0..n).map(|j| (base + j, base + (j + 1) % n))),
        }
    }

    let reach = d + edge_slack;
    for k in 0..rings.len().saturating_sub(1) {
        let band = offsets[k]..offsets[k + 2];
        let lower = offsets[k]..offsets[k + 1];
        let chart = band_chart(positions, lower.clone(), offsets[k + 1]..offsets[k + 2]);
        let mut candidates: Vec<(f64, usize, usize)> = lower
            .clone()
            .flat_map(|i| (offsets[k + 1]..offsets[k + 2]).map(move |j| (i, j)))
            .map(|(i, j)| ((positions[i] - positions[j]).norm(), i, j))
            .filter(|(dist, _, _)| *dist <= reach)
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let ring_edges: Vec<(usize, usize)> =
            pairs.iter().copied().filter(|&(a, b)| band.contains(&a) && band.contains(&b)).collect();
        let upper = offsets[k + 1]..offsets[k + 2];
        let mean_radius = |r: &std::ops::Range<usize>| r.clone().map(|i| chart[i].norm()).sum::<f64>() / r.len() as f64;
        let inner = if mean_radius(&upper) < mean_radius(&lower) { upper } else { lower.clone() };
        let inner_edges: Vec<(usize, usize)> =
            ring_edges.iter().copied().filter(|&(a, b)| inner.contains(&a) && inner.contains(&b)).collect();
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (_, i, j) in candidates {
            let crosses = kept.iter().chain(&inner_edges).any(|&(a, b)| {
                ![a, b].contains(&i) && ![a, b].contains(&j) && segments_cross(&chart[i], &chart[j], &chart[a], &chart[b])
            });
            let through = band.clone().any(|v| v != i && v != j && on_segment(&chart[v], &chart[i], &chart[j]));
            if !crosses && !through {
                kept.push((i, j));
            }
        }
        flip_band(&mut kept, &ring_edges, positions, &chart, |v| lower.contains(&v), reach);
        pairs.extend(kept);
    }

    if close_top {
        if let Some(top) = rings.len().checked_sub(1) {
            let ids: Vec<usize> = (offsets[top]..offsets[top + 1]).collect();
            close_polygon(&ids, positions, &mut pairs);
        }
    }

    let mut edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(i, j)| Edge::new(i, j, (positions[i] - positions[j]).norm()))
        .collect();
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    edges.dedup_by(|a, b| a.i == b.i && a.j == b.j);
    Ok(edges)
}

/// Full design pipeline: rings, node placement and edges.
pub fn design(surface: &QuadricSurface, n: usize, edge_slack: Option<f64>) -> Result<FormationSpec> {
    let d = max_interdistance(n, surface.total_area(), surface.boundary_length())?;
    let rings = build_shield(surface, n)?;
    let positions = place_nodes(surface, &rings)?;
    let slack = edge_slack.unwrap_or_else(|| default_edge_slack(d));
    let edges = generate_edges(&positions, &rings, d, slack, surface.has_apex())?;
    let spec = FormationSpec { positions, edges, rings, d_global: d, surface: Some(surface.clone()) };
    if !spec.is_connected() {
        return Err(ShieldError::Construction(format!(
            "edge graph is disconnected with slack {slack:.4}; increase the edge slack"
        )));
    }
    Ok(spec)
}
