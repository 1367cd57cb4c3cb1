//! Command-line front end: run experiments, dump phase functions, print
//! oracle values.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasekit::par::Execution;
use phasekit::problems::{
    oracle_values, sweep, write_csv_file, write_json_file, ProblemKind, ProblemSpec, RunOptions,
};

#[derive(Parser)]
#[command(name = "phasekit", version, about = "Phase function solver for oscillatory scalar ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a gallery problem for each parameter and write run records.
    Solve(SolveArgs),
    /// Phase function utilities.
    Phase {
        #[command(subcommand)]
        command: PhaseCommand,
    },
    /// Print the oracle values used for error measurement.
    Reference(ReferenceArgs),
}

#[derive(Subcommand)]
enum PhaseCommand {
    /// Write the phase functions of one problem instance as JSON.
    Dump(DumpArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum)]
    problem: ProblemKind,
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Levin window `a0,b0`.
    #[arg(long, value_parser = parse_window, default_value = "0,0.1", allow_hyphen_values = true)]
    window: (f64, f64),
    /// Point of the Levin window where the branches are handed on; defaults
    /// to the window midpoint.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
}

impl SolverArgs {
    fn spec(&self, param: f64) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.problem, param);
        spec.eps = self.eps;
        spec.k = self.k;
        spec.window = self.window;
        spec.sigma = self.sigma.unwrap_or(0.5 * (self.window.0 + self.window.1));
        spec
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated parameter values (`ν` or `ω`); may be empty.
    #[arg(long, value_parser = parse_params, default_value = "", allow_hyphen_values = true)]
    param: Params,
    #[arg(long, default_value = "runs.csv")]
    out: PathBuf,
    #[arg(long, default_value = "runs.json")]
    json: PathBuf,
    #[arg(long, default_value_t = 25)]
    repeats: usize,
    /// Skip the reference comparison.
    #[arg(long)]
    no_check: bool,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, allow_hyphen_values = true)]
    param: f64,
    #[arg(long, default_value = "phases.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, allow_hyphen_values = true)]
    param: f64,
    /// Number of equispaced points; the Legendre oracle is printed at the
    /// right endpoint when this is 1.
    #[arg(long, default_value_t = 11)]
    points: usize,
}

#[derive(Clone)]
struct Params(Vec<f64>);

fn parse_params(s: &str) -> Result<Params, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|e| format!("bad parameter '{p}': {e}")))
        .collect::<Result<_, _>>()
        .map(Params)
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a0,b0, got '{s}'"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("bad window start: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("bad window end: {e}"))?;
    Ok((a, b))
}

fn run_solve(args: SolveArgs) -> ExitCode {
    let template = args.solver.spec(args.param.0.first().copied().unwrap_or(0.0));
    let opts = RunOptions { repeats: args.repeats, check_error: !args.no_check, ..Default::default() };
    let records = match sweep(&template, &args.param.0, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for r in &records {
        let status = if r.passed { "ok" } else { "FAIL" };
        print!(
            "{} {:>10} time={:.3e}s err={:.3e} ncoefs={} omega={:.4e} {status}",
            r.problem, r.param, r.time_s, r.max_abs_err, r.ncoefs, r.omega_freq
        );
        match &r.diagnostic {
            Some(d) => println!(" ({d})"),
            None => println!(),
        }
    }
    if let Err(e) = write_csv_file(&args.out, &records).and_then(|_| write_json_file(&args.json, &records)) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if records.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_dump(args: DumpArgs) -> ExitCode {
    let spec = args.solver.spec(args.param);
    let ps = match spec.validate().and_then(|_| spec.phase_set(Execution::default())) {
        Ok(ps) => ps,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = std::fs::File::create(&args.out)
        .map_err(phasekit::Error::from)
        .and_then(|f| serde_json::to_writer(f, &ps).map_err(phasekit::Error::from));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    println!("wrote {} ({} coefficients)", args.out.display(), ps.ncoeffs());
    ExitCode::SUCCESS
}

fn run_reference(args: ReferenceArgs) -> ExitCode {
    let mut spec = args.solver.spec(args.param);
    let points = if args.points <= 1 {
        vec![spec.interval().1]
    } else {
        spec.eval_points = args.points;
        spec.eval_grid()
    };
    let result = spec.validate().and_then(|_| oracle_values(&spec, &points, Execution::default()));
    match result {
        Ok(v) => match serde_json::to_string_pretty(&v) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Phase { command: PhaseCommand::Dump(args) } => run_dump(args),
        Command::Reference(args) => run_reference(args),
    }
}
