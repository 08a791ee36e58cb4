//! `cheeger`: solve, check and oracle commands.

mod output;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cheeger_core::checks::{Check, Suite, SIGNED_MAX_ITER};
use cheeger_core::{
    analytic_disc, analytic_square, eigen_bounds, extract_cluster, load_mask, rasterize_polygon, solve_lambda_n,
    solve_m2, split_signed, Error, GridDomain, OracleFixture, PolygonSpec, Shape, SolverConfig, ThresholdStrategy,
    CERTIFICATE_TOL,
};

use output::Staging;
use report::{DomainInfo, Report};

const DEFAULT_FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

#[derive(Parser)]
#[command(name = "cheeger", version, about = "Cheeger constants and clusters of planar domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy on a domain and extract the chambers.
    Solve(SolveArgs),
    /// Run the invariant suite (or, without --quick, the full acceptance suite).
    Check(CheckArgs),
    /// Print an analytic Cheeger constant or a brute-force optimum.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// `disc:r`, `square:s`, `barbell:a,eps,delta`, a grayscale PNG mask or a
    /// polygon JSON file.
    #[arg(long)]
    domain: String,
    /// Pixel size. Optional for polygon files, which carry their own.
    #[arg(long)]
    h: Option<f64>,
    /// Number of chambers.
    #[arg(long)]
    n: usize,
    /// Minimize over signed fields (N = 2 only).
    #[arg(long)]
    signed: bool,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per level.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory, replaced as a whole.
    #[arg(long, default_value = "cheeger-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Coarse-grid invariants only.
    #[arg(long)]
    quick: bool,
    /// Directory of oracle fixture files.
    #[arg(long, default_value = DEFAULT_FIXTURES)]
    fixtures: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// `disc:r` or `square:s`.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    shape: Option<String>,
    /// Fixture file; its mask is searched exhaustively.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Number of sets (defaults to the fixture's).
    #[arg(long)]
    n: Option<usize>,
    /// Store the recomputed optimum in the fixture file.
    #[arg(long, requires = "fixture")]
    write: bool,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Image { .. } | Error::Json { .. } => 3,
            Error::ZeroField
            | Error::EmptySet
            | Error::CollapsedChamber(_)
            | Error::NoSignChange
            | Error::OverlappingSupports
            | Error::NoFeasibleMinimizer
            | Error::DomainTooSmall(_)
            | Error::EmptyLevelRange(_)
            | Error::DegenerateComponent(_)
            | Error::FieldMismatch(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => solve(args),
        Command::Check(args) => check(args),
        Command::Oracle(args) => oracle(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_domain(spec: &str, h: Option<f64>) -> Result<GridDomain, Failure> {
    let need_h = || h.ok_or_else(|| Failure::usage(format!("--h is required for domain {spec}")));
    if let Ok(shape) = spec.parse::<Shape>() {
        return Ok(shape.domain(need_h()?)?);
    }
    let path = Path::new(spec);
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(load_mask(path, need_h()?)?),
        Some("json") => {
            let mut poly = PolygonSpec::from_path(path)?;
            if let Some(h) = h {
                poly.h = h;
            }
            Ok(rasterize_polygon(&poly)?)
        }
        _ => match spec.split_once(':') {
            Some(_) => Err(Failure::usage(format!("bad domain {spec}: {}", spec.parse::<Shape>().unwrap_err()))),
            None => Err(Failure::usage(format!("unrecognized domain {spec}: expected a shape, .png or .json"))),
        },
    }
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    if args.signed && args.n != 2 {
        return Err(Failure::usage("signed requires N=2"));
    }
    if args.n == 0 {
        return Err(Failure::usage("--n must be positive"));
    }
    let dom = load_domain(&args.domain, args.h)?.shared();
    let mut cfg = SolverConfig::for_domain(&dom);
    if args.signed {
        cfg.max_iter = SIGNED_MAX_ITER;
    }
    cfg.max_iter = args.max_iter.unwrap_or(cfg.max_iter);
    cfg.restarts = args.restarts.unwrap_or(cfg.restarts);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.tol = args.tol.unwrap_or(cfg.tol);
    cfg.validate(dom.h())?;

    eprintln!("{} pixels, h = {}, N = {}{}", dom.pixel_count(), dom.h(), args.n, if args.signed { ", signed" } else { "" });
    let (u, solver) = if args.signed {
        let (v, rep) = solve_m2(&dom, &cfg)?;
        (split_signed(&v)?, rep)
    } else {
        solve_lambda_n(&dom, args.n, &cfg)?
    };
    let cluster = extract_cluster(&u, &ThresholdStrategy::BestRatio)?;
    let bounds = if cluster.n() == 2 { Some(eigen_bounds(solver.energy, &cluster, CERTIFICATE_TOL)?) } else { None };
    let report = Report::new(DomainInfo::new(&args.domain, &dom), args.signed, &cluster, bounds, cfg, solver);

    let staging = Staging::new(&args.out)?;
    let dir = staging.path();
    output::write_text(&dir.join("report.json"), &report.to_json())?;
    output::write_text(&dir.join("convergence.csv"), &output::convergence_csv(&report.solver))?;
    for (i, c) in cluster.chambers.iter().enumerate() {
        output::write_mask_png(&dir.join(format!("chamber_{i}.png")), &dom, &c.mask)?;
    }
    output::write_text(&dir.join("contours.svg"), &output::contours_svg(&cluster)?)?;
    staging.commit()?;

    println!("energy {:.6}  H_N estimate {:.6}  converged {}", report.energy, report.h_n_estimate, report.solver.converged);
    for (i, c) in report.chambers.iter().enumerate() {
        println!("chamber {i}: perimeter {:.6}  volume {:.6}  ratio {:.6}", c.perimeter, c.volume, c.ratio);
    }
    if let Some(b) = &report.eigen_bounds {
        println!(
            "second eigenvalue: lower bound {:.6}, h2 upper {:.6}, equal-ratio certificate {} (numerical)",
            b.lower, b.h2_upper, b.certificate
        );
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn check(args: CheckArgs) -> Result<u8, Failure> {
    let mut suite = Suite::new(&args.fixtures, |line| eprintln!("{line}"));
    let checks: Vec<Check> = if args.quick { suite.quick()? } else { suite.acceptance()? };
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} passed, {failed} failed", checks.len() - failed);
    Ok(if failed == 0 { 0 } else { 4 })
}

fn oracle(args: OracleArgs) -> Result<u8, Failure> {
    if let Some(spec) = &args.shape {
        if args.n.is_some_and(|n| n != 1) {
            return Err(Failure::usage("analytic values exist for N = 1 only"));
        }
        match spec.parse::<Shape>()? {
            Shape::Disc { radius } => println!("{}", analytic_disc(radius)),
            Shape::Square { side } => {
                let (h1, r) = analytic_square(side);
                println!("{h1}");
                eprintln!("corner radius {r}");
            }
            Shape::Barbell { .. } => return Err(Failure::usage("no analytic value for barbells")),
        }
        return Ok(0);
    }
    let path = args.fixture.expect("clap requires --shape or --fixture");
    let stored = OracleFixture::load(&path)?;
    let fresh = OracleFixture::compute(stored.mask.clone(), stored.h, args.n.unwrap_or(stored.n))?;
    println!("{}", fresh.value);
    if args.write {
        fresh.save(&path)?;
        eprintln!("wrote {}", path.display());
    } else if fresh.n == stored.n && !stored.masks.is_empty() {
        eprintln!("{}", if fresh == stored { "matches the stored optimum" } else { "differs from the stored optimum" });
    }
    Ok(0)
}
