//! Command-line front end. Exit codes: 0 success, 1 I/O or configuration
//! failure, 2 invalid input, 3 solver failure, 4 remote backend failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use topoforge::problem::render_mask_layer;
use topoforge::{render_problem, DesignProblem, Grid, Palette};

use crate::config::{from_env, parse_config_file, Settings};
use crate::run::{self, EvaluateInput, ProblemSource, SolveError, SolveInput};
use crate::server::{self, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "topoforge",
    version,
    about = "Sketch-driven 2D topology optimization"
)]
struct Cli {
    /// `key = value` config file; also read from TOPOFORGE_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a sketch, generate structures and write a run directory.
    Solve(SolveArgs),
    /// Print the evaluation report of a structure image as JSON.
    Evaluate(EvaluateArgs),
    /// Draw a problem JSON as a sketch PNG.
    Render(RenderArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Default)]
struct ProblemFlags {
    /// Target volume fraction in (0, 1].
    #[arg(long)]
    vf: Option<String>,
    /// Load direction, degrees counterclockwise from +x.
    #[arg(long = "load-angle", allow_hyphen_values = true)]
    load_angle: Option<String>,
    /// Element grid, NxM.
    #[arg(long)]
    grid: Option<String>,
    /// Solid when density ≥ threshold.
    #[arg(long)]
    threshold: Option<String>,
}

#[derive(Debug, Args, Default)]
struct GenerationFlags {
    /// Weight of the target volume over the prior in the starting field.
    #[arg(long)]
    strength: Option<String>,
    /// Number of generations.
    #[arg(long)]
    batch: Option<String>,
    /// Base seed; run k uses seed + k.
    #[arg(long)]
    seed: Option<String>,
    /// simp or remote.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long = "remote-url")]
    remote_url: Option<String>,
    #[arg(long = "remote-timeout-ms")]
    remote_timeout_ms: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    /// Density filter radius in elements.
    #[arg(long)]
    rmin: Option<String>,
    /// direct or cg.
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// Separate mask layer.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Grayscale structure (dark = solid) to start from and keep outside the mask.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    generation: GenerationFlags,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Grayscale structure image, dark = solid.
    #[arg(long)]
    structure: PathBuf,
    #[arg(
        long,
        required_unless_present = "problem_json",
        conflicts_with = "problem_json"
    )]
    sketch: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Problem JSON, e.g. a run directory's problem.json.
    #[arg(long = "problem")]
    problem_json: Option<PathBuf>,
    /// Treat light pixels as solid.
    #[arg(long)]
    invert: bool,
    /// Analyse gray densities without thresholding.
    #[arg(long)]
    gray: bool,
    #[command(flatten)]
    problem: ProblemFlags,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Canvas size WxH; 8 pixels per element by default.
    #[arg(long)]
    size: Option<Grid>,
    /// Also write the mask as a separate layer.
    #[arg(long = "mask-out")]
    mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<String>,
    #[arg(long)]
    host: Option<String>,
    /// Output root for job run directories.
    #[arg(long)]
    out: Option<String>,
    /// Directory of static files served at `/`.
    #[arg(long = "static-dir")]
    static_dir: Option<String>,
    /// Jobs executing at once.
    #[arg(long)]
    workers: Option<String>,
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    generation: GenerationFlags,
}

fn put(layer: &mut BTreeMap<String, String>, key: &str, value: &Option<String>) {
    if let Some(v) = value {
        layer.insert(key.to_string(), v.clone());
    }
}

impl ProblemFlags {
    fn layer(&self, l: &mut BTreeMap<String, String>) {
        put(l, "vf", &self.vf);
        put(l, "load_angle", &self.load_angle);
        put(l, "grid", &self.grid);
        put(l, "threshold", &self.threshold);
    }
}

impl GenerationFlags {
    fn layer(&self, l: &mut BTreeMap<String, String>) {
        put(l, "strength", &self.strength);
        put(l, "batch", &self.batch);
        put(l, "seed", &self.seed);
        put(l, "backend", &self.backend);
        put(l, "remote_url", &self.remote_url);
        put(l, "remote_timeout_ms", &self.remote_timeout_ms);
        put(l, "max_iters", &self.max_iters);
        put(l, "rmin", &self.rmin);
        put(l, "solver", &self.solver);
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

/// Inputs that cannot be read are invalid input.
fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn settings(
    config: Option<&Path>,
    env: &[(String, String)],
    flags: BTreeMap<String, String>,
) -> Result<Settings, Failure> {
    let config_path = config.map(Path::to_path_buf).or_else(|| {
        env.iter()
            .find(|(k, _)| k == "TOPOFORGE_CONFIG")
            .map(|(_, v)| PathBuf::from(v))
    });
    let file = match config_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
            parse_config_file(&text).map_err(|e| Failure {
                code: 1,
                message: format!("{}: {e}", p.display()),
            })?
        }
        None => BTreeMap::new(),
    };
    let env_layer = from_env(env.iter().filter(|(k, _)| k != "TOPOFORGE_CONFIG").cloned());
    Settings::resolve(&[file, env_layer, flags]).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })
}

/// Run the command line `args` (including the program name) against the
/// environment `env`. Returns the process exit code.
pub fn run(args: Vec<OsString>, env: Vec<(String, String)>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(cli.config.as_deref(), &env, a),
        Command::Evaluate(a) => evaluate(cli.config.as_deref(), &env, a),
        Command::Render(a) => render(a),
        Command::Serve(a) => serve(cli.config.as_deref(), &env, a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn solve(config: Option<&Path>, env: &[(String, String)], a: SolveArgs) -> Result<(), Failure> {
    let mut flags = BTreeMap::new();
    a.problem.layer(&mut flags);
    a.generation.layer(&mut flags);
    put(&mut flags, "out", &a.out);
    let s = settings(config, env, flags)?;
    let params = s.generation_params().map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    let input = SolveInput {
        sketch_png: read_input(&a.sketch)?,
        mask_png: a.mask.as_deref().map(read_input).transpose()?,
        prior_png: a.prior.as_deref().map(read_input).transpose()?,
        grid: s.grid.unwrap_or(Grid::CANONICAL),
        params,
        threshold: s.threshold,
    };
    let prepared = run::prepare(&input)?;
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    let outcome = run::execute(&prepared, &input)?;
    let dir = s
        .out
        .clone()
        .unwrap_or_else(|| run::fresh_run_dir(Path::new("runs")));
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    run::write_run_dir(&dir, &input, &outcome)?;
    print!("{}", run::summary_table(&outcome));
    println!("run directory: {}", dir.display());
    match outcome.failure() {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn evaluate(
    config: Option<&Path>,
    env: &[(String, String)],
    a: EvaluateArgs,
) -> Result<(), Failure> {
    let mut flags = BTreeMap::new();
    a.problem.layer(&mut flags);
    let s = settings(config, env, flags)?;
    let problem = match (&a.problem_json, &a.sketch) {
        (Some(p), _) => ProblemSource::Json(String::from_utf8_lossy(&read_input(p)?).into_owned()),
        (None, Some(sketch)) => ProblemSource::Sketch {
            png: read_input(sketch)?,
            mask: a.mask.as_deref().map(read_input).transpose()?,
            vf: s.vf,
            load_angle: s.load_angle,
            grid: s.grid,
        },
        (None, None) => unreachable!("clap requires --sketch or --problem"),
    };
    let report = run::evaluate(&EvaluateInput {
        structure_png: read_input(&a.structure)?,
        problem,
        threshold: s.threshold,
        invert: a.invert,
        gray: a.gray,
    })
    .map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    let invalid = |m: String| Failure {
        code: 2,
        message: m,
    };
    let text = String::from_utf8_lossy(&read_input(&a.problem)?).into_owned();
    let problem = DesignProblem::from_json(&text).map_err(|e| invalid(e.to_string()))?;
    problem.check().map_err(|e| invalid(e.to_string()))?;
    let size = a
        .size
        .unwrap_or(Grid::new(problem.grid.nelx * 8, problem.grid.nely * 8));
    let palette = Palette::default();
    let write = |path: &Path, sketch: topoforge::RasterSketch| -> Result<(), Failure> {
        let png = sketch.to_png().map_err(|e| invalid(e.to_string()))?;
        fs::write(path, png).map_err(|e| io_failure(path, e))
    };
    match &a.mask_out {
        Some(mask_path) => {
            let stripped = DesignProblem {
                mask: None,
                ..problem.clone()
            };
            write(
                &a.out,
                render_problem(&stripped, &palette, size.nelx, size.nely),
            )?;
            if let Some(layer) = render_mask_layer(&problem, &palette, size.nelx, size.nely) {
                write(mask_path, layer)?;
            }
        }
        None => write(
            &a.out,
            render_problem(&problem, &palette, size.nelx, size.nely),
        )?,
    }
    Ok(())
}

fn serve(config: Option<&Path>, env: &[(String, String)], a: ServeArgs) -> Result<(), Failure> {
    let mut flags = BTreeMap::new();
    a.problem.layer(&mut flags);
    a.generation.layer(&mut flags);
    put(&mut flags, "port", &a.port);
    put(&mut flags, "host", &a.host);
    put(&mut flags, "out", &a.out);
    put(&mut flags, "static_dir", &a.static_dir);
    put(&mut flags, "workers", &a.workers);
    let s = settings(config, env, flags)?;
    if let Some(dir) = &s.static_dir {
        if !dir.is_dir() {
            return Err(Failure {
                code: 1,
                message: format!("static directory {} does not exist", dir.display()),
            });
        }
    }
    let addr = format!("{}:{}", s.host, s.port);
    let state = AppState::new(ServiceConfig::from_settings(s));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure {
                code: 1,
                message: format!("bind {addr}: {e}"),
            })?;
        eprintln!(
            "listening on http://{}",
            listener.local_addr().map_or(addr, |a| a.to_string())
        );
        server::serve(listener, state).await.map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        })
    })
}
