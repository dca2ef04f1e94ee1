use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use horizon_core::endpoint::{differential, integrate, regularity, IntegratorOptions, DEFAULT_RANK_TOL};
use horizon_core::geodesic::{multistart, MultistartOptions, SolverOptions};
use horizon_core::lifting::{continuity_report, lift_path, LiftOptions, TargetPath};
use horizon_core::steering::{bracket_step, check_admissible, critical_exponent, cross_section, cross_section_drift, SteeringOptions};
use horizon_core::system::{catalog_load, CATALOG_NAMES};
use horizon_core::{ControlSignal, ControlSystem, EnergyKind, EnergyParams, Error};

#[derive(Parser, Debug)]
#[command(name = "horizon", version, about = "Endpoint maps, steering, lifting and p-energy geodesics")]
struct Cli {
    /// Energy exponent.
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Reparametrization exponent for steering segments.
    #[arg(long, global = true, default_value_t = 1.0)]
    beta: f64,
    /// RK4 steps per control segment.
    #[arg(long, global = true, default_value_t = 64)]
    substeps: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, env = "HORIZON_WORKERS")]
    workers: Option<usize>,
    /// Output directory; without it the main result is printed as JSON.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SystemArgs {
    /// Catalog name (see `catalog`) or path to a JSON system description.
    #[arg(long)]
    system: String,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    x: Option<Point>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List catalog systems, or describe one.
    Catalog {
        name: Option<String>,
    },
    /// Integrate a control and report the trajectory and endpoint.
    Endpoint {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        control: PathBuf,
    },
    /// Endpoint differential on the control's segment basis.
    Jacobian {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        control: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
    },
    /// Steering control from x to y.
    Steer {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
        y: Point,
        /// Use the drift construction with this alpha.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        steer_tol: f64,
    },
    /// Lift a sampled target path starting from an anchor control.
    Lift {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        anchor_control: PathBuf,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        lift_tol: f64,
    },
    /// Multistart search for critical points of the energy on a fiber.
    Geodesics {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
        y: Point,
        #[arg(long, default_value_t = 32)]
        n_seeds: usize,
        #[arg(long, default_value_t = 32)]
        segments: usize,
        #[arg(long, value_enum, default_value_t = Energy::Componentwise)]
        energy: Energy,
        #[arg(long, default_value_t = 1e-6)]
        stat_tol: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Energy {
    Componentwise,
    Euclidean,
}

#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad coordinate `{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Point)
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Core(e) => match e {
                Error::DomainEscape { .. } => 3,
                Error::NonConvergence(_)
                | Error::ChartRadiusExceeded { .. }
                | Error::LiftFailed { .. }
                | Error::SingularFiber { .. }
                | Error::Indeterminate(_) => 4,
                Error::Inadmissible { .. } | Error::UnsupportedStep { .. } => 5,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Config(format!("cannot parse {}: {e}", path.display())))
}

fn load_system(arg: &str) -> CliResult<ControlSystem> {
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        return Ok(ControlSystem::from_json_str(&read(path)?)?);
    }
    Ok(catalog_load(arg)?)
}

fn start_point(sys: &SystemArgs, system: &ControlSystem) -> CliResult<Vec<f64>> {
    let x = sys.x.clone().map(|p| p.0).unwrap_or_else(|| vec![0.0; system.n()]);
    if x.len() != system.n() {
        return Err(Failure::Config(format!("x has {} coordinates, system has {}", x.len(), system.n())));
    }
    Ok(x)
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Failure::Config(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Output { dir })
    }

    fn file(&self, name: &str, contents: &str) -> CliResult<()> {
        if let Some(d) = &self.dir {
            let p = d.join(name);
            fs::write(&p, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display())))?;
        }
        Ok(())
    }

    /// Written to `name` under the output directory, or printed.
    fn main<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("results serialize");
        match &self.dir {
            Some(_) => self.file(name, &(text + "\n")),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.substeps == 0 {
        return Err(Failure::Config("--substeps must be at least 1".into()));
    }
    if cli.workers == Some(0) {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let integrator = IntegratorOptions::with_substeps(cli.substeps);
    let out = Output::new(cli.out.clone())?;
    match &cli.command {
        Command::Catalog { name: None } => out.main("catalog.json", &CATALOG_NAMES),
        Command::Catalog { name: Some(name) } => {
            let system = load_system(name)?;
            let origin = vec![0.0; system.n()];
            let step = bracket_step(&system, &origin).ok();
            let pc = critical_exponent(&system, &origin).ok();
            out.main(
                "system.json",
                &serde_json::json!({
                    "name": system.name(),
                    "n": system.n(),
                    "d": system.d(),
                    "driftless": system.is_driftless(),
                    "step_at_origin": step,
                    "p_c_lower_bound": pc.map(|v| if v.is_finite() { serde_json::json!(v) } else { serde_json::json!("inf") }),
                }),
            )
        }
        Command::Endpoint { sys, control } => {
            let system = load_system(&sys.system)?;
            let x = start_point(sys, &system)?;
            let u: ControlSignal = parse_json(control)?;
            let traj = integrate(&system, &x, &u, &integrator)?;
            out.file("trajectory.csv", &traj.to_csv())?;
            out.main("endpoint.json", &serde_json::json!({ "endpoint": traj.final_state().as_slice() }))
        }
        Command::Jacobian { sys, control, rank_tol } => {
            let system = load_system(&sys.system)?;
            let x = start_point(sys, &system)?;
            let u: ControlSignal = parse_json(control)?;
            let diff = differential(&system, &x, &u, &integrator)?;
            let reg = regularity(&diff, *rank_tol);
            let rows: Vec<Vec<f64>> = diff.matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
            out.main(
                "jacobian.json",
                &serde_json::json!({
                    "endpoint": diff.endpoint.as_slice(),
                    "matrix": rows,
                    "rank": reg.rank,
                    "singular_values": diff.singular_values,
                    "regular": reg.regular,
                    "rows_w": diff.rows_w(),
                }),
            )
        }
        Command::Steer { sys, y, alpha, steer_tol } => {
            let system = load_system(&sys.system)?;
            let x = start_point(sys, &system)?;
            let opts = SteeringOptions { steer_tol: *steer_tol, integrator, ..Default::default() };
            check_admissible(&system, &x, cli.p)?;
            let plan = match alpha {
                Some(a) => cross_section_drift(&system, &x, &y.0, *a, cli.p, &opts)?,
                None => {
                    let params = EnergyParams::new(cli.p, cli.beta)?;
                    cross_section(&system, &x, &y.0, &params, &opts)?
                }
            };
            out.file("sigma.csv", &plan.sigma.to_csv())?;
            out.main("plan.json", &plan)
        }
        Command::Lift { sys, anchor_control, path, lift_tol } => {
            let system = load_system(&sys.system)?;
            let x = start_point(sys, &system)?;
            let u0: ControlSignal = parse_json(anchor_control)?;
            let path: TargetPath = parse_json(path)?;
            let params = EnergyParams::new(cli.p, cli.beta)?;
            let opts = LiftOptions {
                lift_tol: *lift_tol,
                integrator,
                steering: SteeringOptions { integrator, ..Default::default() },
                ..Default::default()
            };
            let lift = lift_path(&system, &x, &u0, &path, &params, &opts)?;
            let report = continuity_report(&lift, cli.p)?;
            for (k, u) in lift.controls.iter().enumerate() {
                out.file(&format!("control_{k:04}.json"), &serde_json::to_string(u).expect("signal serializes"))?;
            }
            out.file("moduli.csv", &report.to_csv())?;
            out.main(
                "lift.json",
                &serde_json::json!({
                    "params": lift.params,
                    "endpoint_residuals": lift.endpoint_residuals,
                    "lp_modulus": lift.lp_modulus,
                    "anchors": lift.anchors,
                    "max_ratio": report.max_ratio,
                }),
            )
        }
        Command::Geodesics { sys, y, n_seeds, segments, energy, stat_tol } => {
            let system = load_system(&sys.system)?;
            let x = start_point(sys, &system)?;
            check_admissible(&system, &x, cli.p)?;
            if !(cli.p > 1.0) {
                return Err(Failure::Config(format!("--p must exceed 1, got {}", cli.p)));
            }
            let kind = match energy {
                Energy::Componentwise => EnergyKind::Componentwise,
                Energy::Euclidean => EnergyKind::Euclidean,
            };
            let opts = MultistartOptions {
                n_seeds: *n_seeds,
                rng_seed: cli.seed,
                segments: *segments,
                workers: cli.workers,
                solver: SolverOptions { kind, integrator, stat_tol: *stat_tol, ..Default::default() },
                ..Default::default()
            };
            let report = multistart(&system, &x, &y.0, cli.p, &opts)?;
            out.file("ladder.csv", &report.to_csv())?;
            out.main("report.json", &report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
