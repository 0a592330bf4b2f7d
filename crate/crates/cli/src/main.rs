use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::Serialize;
use shield_core::geometry::check_delaunay;
use shield_core::rigidity::{symmetry_count, verify_rank_prediction, Framework, RankReport};
use shield_core::simulator::{
    convergence_metrics, integrate, random_initial_conditions, statistical_study, write_metrics_csv, write_stats_csv,
    write_to_file, write_trajectory_csv,
};
use shield_core::{design, FormationSpec, RunConfig};

#[derive(Parser)]
#[command(name = "shield", version, about = "Design, check and simulate shield formations on quadric surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the formation for a config and write `formation.json` and `rings.txt`.
    Design(ConfigArgs),
    /// Delaunay and rank report for a formation file, printed as JSON.
    #[command(name = "check-delaunay", alias = "check")]
    Check(SpecArgs),
    /// Rank of the augmented Jacobian at the target positions, printed as JSON.
    Rank(SpecArgs),
    /// Simulate one run from random initial conditions.
    Simulate(SimulateArgs),
    /// Seeded runs over several deltas; writes `stats.csv`.
    Experiment(ConfigArgs),
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SpecArgs {
    /// Formation file (JSON) as written by `design`.
    spec: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    kappa1: f64,
    #[arg(long, default_value_t = 1000.0)]
    kappa2: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Use this formation instead of designing one from the config.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Initial positions as a JSON array of `[x, y, z]`; replaces the random draw.
    #[arg(long)]
    initial: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::read(&args.config).context("reading config")?;
    let o = &args.overrides;
    if let Some(n) = o.n {
        cfg.n = n;
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = o.dt {
        cfg.dt = dt;
    }
    if let Some(t) = o.t_end {
        cfg.t_end = t;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    cfg.validate().context("validating config")?;
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn ring_table(spec: &FormationSpec) -> String {
    let mut text = format!("d = {:.3}\n{:>3} {:>9} {:>5} {:>9}\n", spec.d_global, "k", "h_k", "n_k", "d_k");
    for (k, r) in spec.rings.iter().enumerate() {
        text.push_str(&format!("{k:>3} {:>9.3} {:>5} {:>9.3}\n", r.height, r.count, r.spacing));
    }
    text
}

fn cmd_design(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let spec = design(&cfg.surface, cfg.n, cfg.edge_slack).context("designing formation")?;
    let dir = output_dir(&cfg)?;
    fs::write(dir.join("formation.json"), spec.to_json()).context("writing formation.json")?;
    let table = ring_table(&spec);
    fs::write(dir.join("rings.txt"), &table).context("writing rings.txt")?;
    print!("{table}");
    println!("N_e = {}", spec.edge_count());
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    delaunay_violations: usize,
    #[serde(rename = "N_e")]
    n_e: usize,
    bounds_ok: bool,
    s: Option<usize>,
    predicted_rank: Option<usize>,
    measured_rank: Option<usize>,
}

fn rank_report(spec: &FormationSpec, args: &SpecArgs) -> Result<Option<RankReport>> {
    if spec.surface.is_none() {
        return Ok(None);
    }
    let fw = Framework::from_spec(spec).context("building framework")?;
    Ok(Some(verify_rank_prediction(&fw, args.kappa1, args.kappa2)))
}

fn cmd_check(args: &SpecArgs) -> Result<()> {
    let spec = FormationSpec::read(&args.spec).context("reading formation")?;
    let delaunay = check_delaunay(&spec).context("checking Delaunay property")?;
    let rank = rank_report(&spec, args)?;
    let report = CheckReport {
        delaunay_violations: delaunay.violations.len(),
        n_e: spec.edge_count(),
        bounds_ok: spec.edge_bounds_ok(),
        s: spec.surface.as_ref().map(|s| symmetry_count(s.q)),
        predicted_rank: rank.as_ref().and_then(|r| r.predicted_rank),
        measured_rank: rank.as_ref().map(|r| r.measured_rank),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_rank(args: &SpecArgs) -> Result<()> {
    let spec = FormationSpec::read(&args.spec).context("reading formation")?;
    let Some(report) = rank_report(&spec, args)? else {
        bail!("formation has no surface; the rank needs the surface Jacobian");
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn read_initial(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let points: Vec<[f64; 3]> = serde_json::from_str(&text).context("parsing initial positions")?;
    Ok(points.into_iter().map(Vector3::from).collect())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let spec = match &args.spec {
        Some(path) => FormationSpec::read(path).context("reading formation")?,
        None => design(&cfg.surface, cfg.n, cfg.edge_slack).context("designing formation")?,
    };
    if spec.surface.is_none() {
        bail!("formation has no surface");
    }
    let p0 = match &args.initial {
        Some(path) => read_initial(path)?,
        None => {
            let Some(delta) = args.delta.or(cfg.delta) else {
                bail!("simulate needs `delta` (config or --delta) or --initial");
            };
            random_initial_conditions(&spec, delta, cfg.seed).context("sampling initial conditions")?
        }
    };
    let mut traj = integrate(&spec, &cfg.gains, &p0, cfg.dt, cfg.t_end, cfg.method).context("integrating")?;
    traj.seed = Some(cfg.seed);
    let dir = output_dir(&cfg)?;
    write_to_file(&dir.join("trajectory.csv"), |f| write_trajectory_csv(&traj, f)).context("writing trajectory.csv")?;
    write_to_file(&dir.join("metrics.csv"), |f| write_metrics_csv(&traj, f)).context("writing metrics.csv")?;

    let conv = convergence_metrics(&traj)?;
    let m = conv.metrics;
    let t8 = if cfg.t_end >= 8.0 { conv.reduction_at(8.0).ok() } else { None };
    let reduction = t8.map_or("n/a".to_string(), |(e, f)| format!("e {:.4} f {:.4}", e, f));
    println!(
        "e(0) = {:.4e}  f(0) = {:.4e}  e(end) = {:.4e}  f(end) = {:.4e}  reduction at t=8: {reduction}",
        m.initial_e, m.initial_fs, m.final_e, m.final_fs
    );
    Ok(())
}

fn cmd_experiment(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    if cfg.deltas.is_empty() {
        bail!("experiment needs a non-empty `deltas` list");
    }
    let spec = design(&cfg.surface, cfg.n, cfg.edge_slack).context("designing formation")?;
    let rows = statistical_study(&spec, &cfg.gains, &cfg.study()).context("running study")?;
    let dir = output_dir(&cfg)?;
    write_to_file(&dir.join("stats.csv"), |f| write_stats_csv(&rows, f)).context("writing stats.csv")?;
    for r in rows.iter().filter(|r| r.t == 0.0) {
        println!(
            "delta {:>5}: e(0) {:.2} ± {:.2}  f(0) {:.4} ± {:.4}",
            r.delta, r.mean_e, r.sd_e, r.mean_fs, r.sd_fs
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Check(a) => cmd_check(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
