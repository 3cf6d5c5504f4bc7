//! `graphflow`: distances, geodesics, ray fans and dual certificates for
//! unbalanced transport on reversible Markov chains.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use graphflow_core::io::{
    certificate_to_csv, parse_measure, ray_to_csv, to_json, trajectory_from_csv, trajectory_to_csv, GapSummary,
    RayEntry, RayManifest, SolveSummary, SCHEMA_VERSION,
};
use graphflow_core::{
    distance_d, distance_me, distance_w, duality_gap, load_chain, ray_fan, shoot, suite, total_mass, MarkovChain,
    Metric, RayOptions, ShootOptions, SolveOptions, SolveReport, StopReason,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "graphflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a chain file and optionally a trajectory CSV against it.
    Validate {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Squared distance and minimizing path for one metric.
    Distance {
        #[command(flatten)]
        pair: Endpoints,
        #[arg(long, default_value = "W")]
        metric: Metric,
        #[command(flatten)]
        solver: Solver,
        /// Report path; the JSON summary and trajectory CSV share its stem.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geodesic between two interior measures by shooting.
    Geodesic {
        #[command(flatten)]
        pair: Endpoints,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = 1e-9)]
        bvp_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fan of geodesic rays from one start measure.
    Rays {
        #[arg(long)]
        chain: PathBuf,
        /// Start measure: file or inline "v1,v2,…".
        #[arg(long)]
        start: String,
        #[arg(long, default_value_t = 72)]
        n_rays: usize,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps_bd: f64,
        #[arg(long, default_value_t = 5e-4)]
        dt_min: f64,
        #[arg(long, default_value_t = 1e-7)]
        rtol: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the per-ray CSVs and the manifest.
        #[arg(long, default_value = "rays")]
        out: PathBuf,
    },
    /// Duality gap of the certificate built from the primal minimizer.
    Dual {
        #[command(flatten)]
        pair: Endpoints,
        #[command(flatten)]
        solver: Solver,
        /// Gap report JSON; the certificate CSV shares its stem.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// W, ME (for equal masses) and D on the same endpoints.
    Compare {
        #[command(flatten)]
        pair: Endpoints,
        #[command(flatten)]
        solver: Solver,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and print a JSON summary.
    Suite {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Endpoints {
    #[arg(long)]
    chain: PathBuf,
    /// Initial measure: file or inline "v1,v2,…".
    #[arg(long)]
    mu0: String,
    /// Final measure: file or inline "v1,v2,…".
    #[arg(long)]
    mu1: String,
}

#[derive(Args)]
struct Solver {
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Mobility smoothing levels, e.g. "1e-2,1e-3,1e-4,1e-6".
    #[arg(long, value_delimiter = ',')]
    delta_schedule: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-7)]
    opt_tol: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Start from a seeded random interior path.
    #[arg(long)]
    random_init: bool,
}

/// Bad arguments, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn seed(explicit: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var("GRAPHFLOW_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("GRAPHFLOW_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn chain(path: &Path) -> anyhow::Result<MarkovChain<f64>> {
    load_chain(&read(path)?).with_context(|| format!("loading chain {}", path.display()))
}

/// A measure given as a file path or inline.
fn measure(arg: &str, chain: &MarkovChain<f64>) -> anyhow::Result<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        parse_measure(&read(path)?, chain).with_context(|| format!("parsing measure {arg}"))
    } else {
        parse_measure(arg, chain).map_err(|e| usage(format!("measure {arg:?}: {e}")))
    }
}

fn endpoints(pair: &Endpoints) -> anyhow::Result<(MarkovChain<f64>, Vec<f64>, Vec<f64>)> {
    let c = chain(&pair.chain)?;
    let mu0 = measure(&pair.mu0, &c)?;
    let mu1 = measure(&pair.mu1, &c)?;
    Ok((c, mu0, mu1))
}

fn solve_options(s: &Solver) -> anyhow::Result<SolveOptions<f64>> {
    if s.steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    if !(s.opt_tol > 0.0) {
        return Err(usage("--opt-tol must be positive"));
    }
    let mut opts = SolveOptions { opt_tol: s.opt_tol, seed: seed(s.seed)?, random_init: s.random_init, ..Default::default() };
    if let Some(d) = &s.delta_schedule {
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(usage("--delta-schedule entries must be positive"));
        }
        opts.delta_schedule = d.clone();
    }
    Ok(opts)
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn emit_solve(report: &SolveReport<f64>, c: &MarkovChain<f64>, out: Option<&Path>) -> anyhow::Result<()> {
    let summary = to_json(&SolveSummary::new(report))?;
    print!("{summary}");
    if let Some(out) = out {
        write(&sibling(out, "", "json"), &summary)?;
        write(&sibling(out, "", "csv"), &trajectory_to_csv(&report.trajectory, c)?)?;
    }
    Ok(())
}

fn solve(metric: Metric, mu0: &[f64], mu1: &[f64], c: &MarkovChain<f64>, steps: usize, opts: &SolveOptions<f64>) -> graphflow_core::Result<SolveReport<f64>> {
    match metric {
        Metric::W => distance_w(mu0, mu1, c, steps, opts),
        Metric::ME => distance_me(mu0, mu1, c, steps, opts),
        Metric::D => distance_d(mu0, mu1, c, steps, opts),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate { chain: path, trajectory } => {
            let c = chain(&path)?;
            println!("chain {}: {} states, pi = {:?}, a = {}, b = {}", path.display(), c.len(), c.pi(), c.a(), c.b());
            if let Some(t) = trajectory {
                let traj = trajectory_from_csv(&read(&t)?, &c).with_context(|| format!("validating {}", t.display()))?;
                println!("trajectory {}: {} intervals, continuity holds", t.display(), traj.intervals());
            }
        }
        Command::Distance { pair, metric, solver, out } => {
            let opts = solve_options(&solver)?;
            let (c, mu0, mu1) = endpoints(&pair)?;
            let report = solve(metric, &mu0, &mu1, &c, solver.steps, &opts)?;
            emit_solve(&report, &c, out.as_deref())?;
        }
        Command::Geodesic { pair, steps, bvp_tol, out } => {
            if steps == 0 || !(bvp_tol > 0.0) {
                return Err(usage("--steps and --bvp-tol must be positive"));
            }
            let (c, mu0, mu1) = endpoints(&pair)?;
            let report = shoot(&mu0, &mu1, &c, &ShootOptions { steps, bvp_tol, ..Default::default() })?;
            emit_solve(&report, &c, out.as_deref())?;
        }
        Command::Rays { chain: path, start, n_rays, t_max, eps_bd, dt_min, rtol, seed: s, out } => {
            if n_rays == 0 || !(t_max > 0.0) || !(eps_bd > 0.0) || !(dt_min > 0.0) || !(rtol > 0.0) {
                return Err(usage("--n-rays, --t-max, --eps-bd, --dt-min and --rtol must be positive"));
            }
            let c = chain(&path)?;
            let start = measure(&start, &c)?;
            let opts = RayOptions { t_max, eps_bd, dt_min, rtol, seed: seed(s)?, ..Default::default() };
            let rays = ray_fan(&start, &c, n_rays, &opts)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let width = (n_rays - 1).to_string().len().max(3);
            let mut entries = Vec::with_capacity(n_rays);
            for (i, ray) in rays.iter().enumerate() {
                let file = format!("ray_{i:0width$}.csv");
                write(&out.join(&file), &ray_to_csv(ray, &c)?)?;
                entries.push(RayEntry {
                    index: i,
                    file,
                    stop_reason: ray.stop_reason.to_string(),
                    stop_time: ray.stop_time,
                    speed_drift: ray.speed_drift,
                    samples: ray.samples.len(),
                });
            }
            let manifest = RayManifest { schema_version: SCHEMA_VERSION, start, n_rays, t_max, eps_bd, dt_min, rtol, rays: entries };
            write(&out.join("manifest.json"), &to_json(&manifest)?)?;
            for reason in [StopReason::ReachedTmax, StopReason::BoundaryTouch, StopReason::StepUnderflow] {
                let count = rays.iter().filter(|r| r.stop_reason == reason).count();
                println!("{reason}: {count}");
            }
            let drift = manifest.rays.iter().map(|r| r.speed_drift).fold(0.0, f64::max);
            println!("max speed drift: {drift:e}");
            println!("wrote {} rays to {}", n_rays, out.display());
        }
        Command::Dual { pair, solver, out } => {
            let opts = solve_options(&solver)?;
            let (c, mu0, mu1) = endpoints(&pair)?;
            let (gap, cert, _) = duality_gap(&mu0, &mu1, &c, solver.steps, &opts)?;
            let summary = to_json(&GapSummary::new(&gap, &cert))?;
            print!("{summary}");
            if let Some(out) = out {
                write(&sibling(&out, "", "json"), &summary)?;
                write(&sibling(&out, "_certificate", "csv"), &certificate_to_csv(&cert, &c)?)?;
            }
        }
        Command::Compare { pair, solver, out } => {
            let opts = solve_options(&solver)?;
            let (c, mu0, mu1) = endpoints(&pair)?;
            let (m0, m1) = (total_mass(&mu0, &c), total_mass(&mu1, &c));
            let equal_mass = (m0 - m1).abs() <= 1e-10 * m0.abs().max(m1.abs()).max(1.0);
            let mut metrics = vec![Metric::D, Metric::W];
            if equal_mass {
                metrics.push(Metric::ME);
            }
            let mut rows = Vec::new();
            for m in metrics {
                let r = solve(m, &mu0, &mu1, &c, solver.steps, &opts)?;
                rows.push((m, SolveSummary::new(&r)));
            }
            let mut order = rows.iter().map(|(m, s)| (format!("{m:?}"), s.distance)).collect::<Vec<_>>();
            order.sort_by(|a, b| a.1.total_cmp(&b.1));
            let line = order
                .windows(2)
                .fold(format!("{} = {:.6}", order[0].0, order[0].1), |acc, w| {
                    let rel = if w[1].1 - w[0].1 > 1e-9 { "<" } else { "=" };
                    format!("{acc} {rel} {} = {:.6}", w[1].0, w[1].1)
                });
            println!("{line}");
            if !equal_mass {
                println!("ME skipped: masses differ ({m0} vs {m1})");
            }
            if let Some(out) = out {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "ordering": line,
                    "reports": rows.iter().map(|(_, s)| s).collect::<Vec<_>>(),
                });
                write(&out, &to_json(&doc)?)?;
            }
        }
        Command::Suite { criteria, out } => {
            let ids = if criteria.is_empty() { (1..=suite::CRITERIA.len()).collect() } else { criteria };
            if let Some(&bad) = ids.iter().find(|&&i| i == 0 || i > suite::CRITERIA.len()) {
                return Err(usage(format!("no criterion {bad}; valid range is 1..={}", suite::CRITERIA.len())));
            }
            let results: Vec<_> = ids.into_iter().map(suite::run_criterion).collect();
            for r in &results {
                eprintln!("{r}");
            }
            let passed = results.iter().all(|r| r.passed);
            let doc = to_json(&json!({ "schema_version": SCHEMA_VERSION, "passed": passed, "criteria": results }))?;
            match out {
                Some(out) => write(&out, &doc)?,
                None => print!("{doc}"),
            }
            if !passed {
                bail!("{} of {} criteria failed", results.iter().filter(|r| !r.passed).count(), results.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 2 } else { 1 })
        }
    }
}
