//! Closed-loop single-integrator simulation, bounded random initial
//! conditions, convergence metrics and the multi-seed statistical study.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlGains, Controller};
use crate::error::{Result, ShieldError};
use crate::formation::FormationSpec;

pub const DEFAULT_DT: f64 = 0.005;
pub const SAMPLE_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
    /// RK4 on the distance and surface terms, backward Euler on the barrier.
    #[default]
    #[serde(rename = "rk4-imex", alias = "rk4_imex")]
    Rk4Imex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Vector3<f64>>>,
    pub controls: Vec<Vec<Vector3<f64>>>,
    pub edge_error_norm: Vec<f64>,
    pub surface_residual_norm: Vec<f64>,
    pub control_norms: Vec<Vec<f64>>,
    /// `W + U_r` at each sample.
    pub potential: Vec<f64>,
    /// Largest increase of `W + U_r` over a single integration step.
    pub max_potential_rise: f64,
    pub min_z: f64,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[Vector3<f64>] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Per-step monotonicity of `W + U_r` with slack `rel_tol * W(0)`.
    pub fn potential_monotone(&self, rel_tol: f64) -> bool {
        let w0 = self.potential.first().copied().unwrap_or(0.0);
        self.max_potential_rise <= rel_tol * w0
    }

    fn interpolate(&self, series: &[f64], t: f64) -> Result<f64> {
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(ShieldError::InvalidInput("empty trajectory".to_string())),
        };
        if t < first - 1e-9 || t > last + 1e-9 {
            return Err(ShieldError::OutOfRange { what: "t", value: t, min: first, max: last });
        }
        let k = self.times.partition_point(|&s| s < t - 1e-9);
        if k >= self.times.len() {
            return Ok(*series.last().unwrap());
        }
        if (self.times[k] - t).abs() <= 1e-9 || k == 0 {
            return Ok(series[k]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok(series[k - 1] * (1.0 - w) + series[k] * w)
    }

    pub fn e_at(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.edge_error_norm, t)
    }

    pub fn fs_at(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.surface_residual_norm, t)
    }
}

fn check_finite(state: &[Vector3<f64>], time: f64) -> Result<()> {
    if state.iter().all(|p| p.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(ShieldError::Divergence { time })
    }
}

fn axpy(p: &[Vector3<f64>], k: &[Vector3<f64>], h: f64) -> Vec<Vector3<f64>> {
    p.iter().zip(k).map(|(a, b)| a + b * h).collect()
}

fn rk4<F: Fn(&[Vector3<f64>]) -> Result<Vec<Vector3<f64>>>>(f: F, p: &[Vector3<f64>], dt: f64) -> Result<Vec<Vector3<f64>>> {
    let k1 = f(p)?;
    let k2 = f(&axpy(p, &k1, 0.5 * dt))?;
    let k3 = f(&axpy(p, &k2, 0.5 * dt))?;
    let k4 = f(&axpy(p, &k3, dt))?;
    Ok(p.iter()
        .enumerate()
        .map(|(i, x)| x + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0))
        .collect())
}

fn step(ctrl: &Controller, p: &[Vector3<f64>], dt: f64, method: Method) -> Result<Vec<Vector3<f64>>> {
    match method {
        Method::Euler => Ok(axpy(p, &ctrl.control_all(p)?, dt)),
        Method::Rk4 => rk4(|x| ctrl.control_all(x), p, dt),
        Method::Rk4Imex => {
            let mut next = rk4(|x| Ok(ctrl.smooth_control_all(x)), p, dt)?;
            for x in next.iter_mut() {
                x.z = ctrl.implicit_barrier_step(x.z, dt);
            }
            Ok(next)
        }
    }
}

/// Integrates `ṗ = u(p)` with a fixed step, sampling metrics every
/// [`SAMPLE_INTERVAL`] (or every step if `dt` is coarser).
pub fn integrate(
    spec: &FormationSpec,
    gains: &ControlGains,
    p0: &[Vector3<f64>],
    dt: f64,
    t_end: f64,
    method: Method,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ShieldError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) {
        return Err(ShieldError::InvalidInput(format!("t_end must be non-negative, got {t_end}")));
    }
    if p0.len() != spec.node_count() {
        return Err(ShieldError::InvalidInput(format!(
            "initial state has {} agents, formation has {}",
            p0.len(),
            spec.node_count()
        )));
    }
    let ctrl = Controller::new(spec, *gains)?;
    let steps = (t_end / dt).round() as usize;
    let every = ((SAMPLE_INTERVAL / dt).round() as usize).max(1);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        edge_error_norm: Vec::new(),
        surface_residual_norm: Vec::new(),
        control_norms: Vec::new(),
        potential: Vec::new(),
        max_potential_rise: f64::NEG_INFINITY,
        min_z: f64::INFINITY,
        seed: None,
    };
    let record = |traj: &mut Trajectory, t: f64, p: &[Vector3<f64>], w: f64| -> Result<()> {
        let u = ctrl.control_all(p)?;
        traj.times.push(t);
        traj.edge_error_norm.push(ctrl.edge_error_vector(p).norm());
        traj.surface_residual_norm.push(ctrl.surface_residuals(p).norm());
        traj.control_norms.push(u.iter().map(|v| v.norm()).collect());
        traj.controls.push(u);
        traj.states.push(p.to_vec());
        traj.potential.push(w);
        Ok(())
    };

    check_finite(p0, 0.0)?;
    let mut p = p0.to_vec();
    let mut w = ctrl.potential(&p)?.total();
    traj.min_z = p.iter().map(|x| x.z).fold(f64::INFINITY, f64::min);
    record(&mut traj, 0.0, &p, w)?;
    for k in 1..=steps {
        let t = k as f64 * dt;
        p = step(&ctrl, &p, dt, method).map_err(|e| match e {
            ShieldError::Numeric(_) => ShieldError::Divergence { time: t },
            other => other,
        })?;
        check_finite(&p, t)?;
        let w_next = ctrl.potential(&p)?.total();
        traj.max_potential_rise = traj.max_potential_rise.max(w_next - w);
        w = w_next;
        traj.min_z = p.iter().map(|x| x.z).fold(traj.min_z, f64::min);
        if k % every == 0 || k == steps {
            record(&mut traj, t, &p, w)?;
        }
    }
    if steps == 0 {
        traj.max_potential_rise = 0.0;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcOptions {
    /// Lowest admissible initial height; `None` means `min(0.05 * h_max, delta / 2)`.
    pub z_floor: Option<f64>,
    pub z_upper: Option<f64>,
    pub max_attempts: usize,
    /// Upper end of the perturbation radius search, as a multiple of delta.
    pub radius_scale: f64,
}

impl Default for IcOptions {
    fn default() -> Self {
        Self { z_floor: None, z_upper: None, max_attempts: 10_000, radius_scale: 1.0 }
    }
}

fn sample_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

fn perturb(
    spec: &FormationSpec,
    rng: &mut ChaCha8Rng,
    rho: f64,
    f_bound: f64,
    floor: f64,
    upper: Option<f64>,
    max_attempts: usize,
) -> Result<Vec<Vector3<f64>>> {
    let surface = spec.surface()?;
    spec.positions
        .iter()
        .enumerate()
        .map(|(i, target)| {
            for _ in 0..max_attempts {
                let mut p = target + sample_ball(rng, rho);
                if p.z < floor {
                    p.z = 2.0 * floor - p.z;
                }
                let z_ok = upper.map_or(true, |h| p.z < h);
                if z_ok && surface.residual(&p).abs() <= f_bound {
                    return Ok(p);
                }
            }
            Err(ShieldError::Sampling(format!("agent {i}: no admissible position within radius {rho} after {max_attempts} draws")))
        })
        .collect()
}

fn edges_within(spec: &FormationSpec, p: &[Vector3<f64>], delta: f64) -> bool {
    spec.edges.iter().all(|e| ((p[e.i] - p[e.j]).norm() - e.target).abs() <= delta)
}

pub fn random_initial_conditions(spec: &FormationSpec, delta: f64, seed: u64) -> Result<Vec<Vector3<f64>>> {
    random_initial_conditions_with(spec, delta, seed, &IcOptions::default())
}

/// Perturbs the target formation so that `|d_ij - d*_ij| <= delta` on every
/// edge and `|f_S(p_i)| <= ‖Q1‖₂ delta` for every agent. The perturbation
/// radius is the largest one (found by bisection on `[0, delta]`) for which a
/// draw satisfying the edge bounds is obtained.
pub fn random_initial_conditions_with(
    spec: &FormationSpec,
    delta: f64,
    seed: u64,
    opts: &IcOptions,
) -> Result<Vec<Vector3<f64>>> {
    if !(delta > 0.0) {
        return Err(ShieldError::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let surface = spec.surface()?;
    let f_bound = surface.q1_norm() * delta;
    let floor = opts.z_floor.unwrap_or((0.05 * surface.h_max()).min(0.5 * delta));
    if spec.positions.iter().any(|p| opts.z_upper.is_some_and(|h| p.z >= h)) {
        return Err(ShieldError::InvalidInput("target formation reaches z_upper".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws_per_radius = 200;
    let mut attempts = 0usize;

    let try_radius = |rho: f64, rng: &mut ChaCha8Rng, attempts: &mut usize| -> Result<Option<Vec<Vector3<f64>>>> {
        for _ in 0..draws_per_radius {
            if *attempts >= opts.max_attempts {
                return Err(ShieldError::Sampling(format!(
                    "no admissible initial condition for delta = {delta} after {} attempts",
                    opts.max_attempts
                )));
            }
            *attempts += 1;
            let p = perturb(spec, rng, rho, f_bound, floor, opts.z_upper, opts.max_attempts)?;
            if edges_within(spec, &p, delta) {
                return Ok(Some(p));
            }
        }
        Ok(None)
    };

    let rho_max = opts.radius_scale * delta;
    if let Some(p) = try_radius(rho_max, &mut rng, &mut attempts)? {
        return Ok(p);
    }
    let (mut lo, mut hi) = (0.0, rho_max);
    let mut best = None;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        match try_radius(mid, &mut rng, &mut attempts)? {
            Some(p) => {
                best = Some(p);
                lo = mid;
            }
            None => hi = mid,
        }
    }
    best.ok_or_else(|| ShieldError::Sampling(format!("no admissible initial condition for delta = {delta}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub initial_e: f64,
    pub initial_fs: f64,
    pub final_e: f64,
    pub final_fs: f64,
    /// Set when `‖e(0)‖` or `‖f_S(0)‖` is zero; the matching reduction is reported as 1.
    pub zero_initial: bool,
}

#[derive(Debug, Clone)]
pub struct Convergence<'a> {
    traj: &'a Trajectory,
    pub metrics: ConvergenceMetrics,
}

fn reduction(initial: f64, now: f64) -> f64 {
    if initial == 0.0 {
        1.0
    } else {
        1.0 - now / initial
    }
}

impl Convergence<'_> {
    /// `(1 - ‖e(t)‖/‖e(0)‖, 1 - ‖f_S(t)‖/‖f_S(0)‖)`.
    pub fn reduction_at(&self, t: f64) -> Result<(f64, f64)> {
        Ok((
            reduction(self.metrics.initial_e, self.traj.e_at(t)?),
            reduction(self.metrics.initial_fs, self.traj.fs_at(t)?),
        ))
    }
}

pub fn convergence_metrics(traj: &Trajectory) -> Result<Convergence<'_>> {
    if traj.is_empty() {
        return Err(ShieldError::InvalidInput("empty trajectory".to_string()));
    }
    let initial_e = traj.edge_error_norm[0];
    let initial_fs = traj.surface_residual_norm[0];
    Ok(Convergence {
        traj,
        metrics: ConvergenceMetrics {
            initial_e,
            initial_fs,
            final_e: *traj.edge_error_norm.last().unwrap(),
            final_fs: *traj.surface_residual_norm.last().unwrap(),
            zero_initial: initial_e == 0.0 || initial_fs == 0.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub delta: f64,
    pub t: f64,
    pub mean_e: f64,
    pub sd_e: f64,
    pub mean_fs: f64,
    pub sd_fs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub deltas: Vec<f64>,
    pub runs_per_delta: usize,
    pub sample_times: Vec<f64>,
    pub base_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
}

/// Seed of run `run` for the `delta_index`-th delta.
pub fn run_seed(base_seed: u64, delta_index: usize, runs_per_delta: usize, run: usize) -> u64 {
    base_seed.wrapping_add((delta_index * runs_per_delta + run) as u64)
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `runs_per_delta` seeded simulations per delta (in parallel, merged in
/// seed order) and reports mean/SD of `‖e‖` and `‖f_S‖` at `t = 0` and at
/// each sample time.
pub fn statistical_study(spec: &FormationSpec, gains: &ControlGains, cfg: &StudyConfig) -> Result<Vec<StatRow>> {
    if cfg.runs_per_delta < 2 {
        return Err(ShieldError::InvalidInput(format!(
            "runs_per_delta must be at least 2 for a standard deviation, got {}",
            cfg.runs_per_delta
        )));
    }
    let mut times = vec![0.0];
    times.extend(cfg.sample_times.iter().copied().filter(|&t| t > 0.0));
    if let Some(&t) = times.iter().find(|&&t| t > cfg.t_end + 1e-9) {
        return Err(ShieldError::OutOfRange { what: "sample time", value: t, min: 0.0, max: cfg.t_end });
    }

    let jobs: Vec<(usize, usize)> =
        (0..cfg.deltas.len()).flat_map(|d| (0..cfg.runs_per_delta).map(move |r| (d, r))).collect();
    let results: Vec<Result<Vec<(f64, f64)>>> = jobs
        .par_iter()
        .map(|&(di, r)| {
            let delta = cfg.deltas[di];
            let seed = run_seed(cfg.base_seed, di, cfg.runs_per_delta, r);
            let context = |e: ShieldError| match e {
                ShieldError::Sampling(m) => ShieldError::Sampling(format!("delta {delta}, seed {seed}: {m}")),
                other => other,
            };
            let p0 = random_initial_conditions(spec, delta, seed).map_err(context)?;
            let traj = integrate(spec, gains, &p0, cfg.dt, cfg.t_end, cfg.method)?;
            times.iter().map(|&t| Ok((traj.e_at(t)?, traj.fs_at(t)?))).collect()
        })
        .collect();

    let mut rows = Vec::new();
    for (di, &delta) in cfg.deltas.iter().enumerate() {
        let runs: Vec<&Vec<(f64, f64)>> = results[di * cfg.runs_per_delta..(di + 1) * cfg.runs_per_delta]
            .iter()
            .map(|r| r.as_ref().map_err(Clone::clone))
            .collect::<Result<_>>()?;
        for (k, &t) in times.iter().enumerate() {
            let e: Vec<f64> = runs.iter().map(|r| r[k].0).collect();
            let f: Vec<f64> = runs.iter().map(|r| r[k].1).collect();
            let (mean_e, sd_e) = mean_sd(&e);
            let (mean_fs, sd_fs) = mean_sd(&f);
            rows.push(StatRow { delta, t, mean_e, sd_e, mean_fs, sd_fs });
        }
    }
    Ok(rows)
}

fn csv_err(e: impl std::fmt::Display) -> ShieldError {
    ShieldError::InvalidInput(format!("writing CSV: {e}"))
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "agent", "x", "y", "z", "ux", "uy", "uz"]).map_err(csv_err)?;
    for (k, &t) in traj.times.iter().enumerate() {
        for (i, (p, u)) in traj.states[k].iter().zip(&traj.controls[k]).enumerate() {
            w.serialize((t, i, p.x, p.y, p.z, u.x, u.y, u.z)).map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn write_metrics_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "e_norm", "fs_norm", "W"]).map_err(csv_err)?;
    for k in 0..traj.len() {
        w.serialize((traj.times[k], traj.edge_error_norm[k], traj.surface_residual_norm[k], traj.potential[k]))
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_stats_csv<W: Write>(rows: &[StatRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_to_file<F: FnOnce(std::fs::File) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| ShieldError::InvalidInput(format!("{}: {e}", path.display())))?;
    f(file)
}
