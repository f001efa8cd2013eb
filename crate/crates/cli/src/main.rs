use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ncupper::format_rational;
use ncupper_cli::bundled::BUNDLED;
use ncupper_cli::problem::Selector;
use ncupper_cli::{parse_problem, run_eval_state, run_mc_check, run_solve, weingarten_table, CliError, SolveOptions};

#[derive(Parser)]
#[command(name = "ncupper", version, about = "Upper bounds on the minimal eigenvalue of noncommutative polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the λ and/or η hierarchy on a problem file.
    Solve(SolveArgs),
    /// Evaluate the order-d state of a problem on a word.
    EvalState(EvalArgs),
    /// Print the Weingarten function on all cycle types of S_n.
    Weingarten(WeingartenArgs),
    /// Compare an exact Haar moment with a Monte Carlo estimate.
    McCheck(McArgs),
    /// List the bundled problems, or print one.
    Examples { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum HierarchyArg {
    Lambda,
    Eta,
    Both,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Table,
    Machine,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Weingarten term budget per trace moment.
    #[arg(long, env = "NCUPPER_BUDGET", default_value_t = 100_000_000)]
    budget: u64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, env = "NCUPPER_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Problem file, or the name of a bundled problem.
    problem: String,
    /// Run orders 1..=N instead of the orders listed in the problem.
    #[arg(long, env = "NCUPPER_ORDER")]
    order: Option<usize>,
    #[arg(long, value_enum, env = "NCUPPER_HIERARCHY")]
    hierarchy: Option<HierarchyArg>,
    /// Replace the Haar dimension list of the state declaration.
    #[arg(long, env = "NCUPPER_DIMS", value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Pair every order with this state index.
    #[arg(long, env = "NCUPPER_STATE_INDEX")]
    state_index: Option<usize>,
    #[arg(long, env = "NCUPPER_TOL", default_value_t = ncupper::hierarchy::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Cap on the number of distinct words in f^k for the η hierarchy.
    #[arg(long, env = "NCUPPER_SUPPORT_CAP", default_value_t = ncupper::hierarchy::DEFAULT_SUPPORT_CAP)]
    support_cap: usize,
    /// Monte Carlo samples for checking ψ_d(f) and ψ_d(f²); 0 skips the check.
    #[arg(long, env = "NCUPPER_SAMPLES", default_value_t = 0)]
    samples: usize,
    #[arg(long, env = "NCUPPER_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the machine-readable record here.
    #[arg(long, env = "NCUPPER_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, env = "NCUPPER_FORMAT", default_value = "table")]
    format: Format,
    /// Include wall-clock timings in the output.
    #[arg(long, env = "NCUPPER_TIMINGS")]
    timings: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct EvalArgs {
    problem: String,
    /// Word in the problem's generators, e.g. "b1 c2 b1" or "u1 u2*".
    word: String,
    #[arg(long, env = "NCUPPER_ORDER", default_value_t = 1)]
    order: usize,
    #[arg(long, env = "NCUPPER_DIMS", value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct WeingartenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum, env = "NCUPPER_FORMAT", default_value = "table")]
    format: Format,
}

#[derive(clap::Args)]
struct McArgs {
    problem: String,
    word: String,
    #[arg(long, env = "NCUPPER_DIM")]
    dim: usize,
    #[arg(long, env = "NCUPPER_SAMPLES", default_value_t = 100_000)]
    samples: usize,
    #[arg(long, env = "NCUPPER_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: CommonArgs,
}

fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    let problem = parse_problem(&args.problem)?;
    let options = SolveOptions {
        max_order: args.order,
        hierarchy: args.hierarchy.map(|h| match h {
            HierarchyArg::Lambda => Selector::Lambda,
            HierarchyArg::Eta => Selector::Eta,
            HierarchyArg::Both => Selector::Both,
        }),
        dims: args.dims,
        state_index: args.state_index,
        tol: args.tol,
        budget: args.common.budget,
        support_cap: args.support_cap,
        samples: args.samples,
        seed: args.seed,
        timings: args.timings,
    };
    let record = with_threads(args.common.threads, || run_solve(&problem, &options))??;
    if let Some(path) = &args.out {
        std::fs::write(path, record.to_machine())
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }
    match args.format {
        Format::Table => print!("{}", record.to_table()),
        Format::Machine => print!("{}", record.to_machine()),
    }
    Ok(())
}

fn eval_state(args: EvalArgs) -> Result<(), CliError> {
    let problem = parse_problem(&args.problem)?;
    let value = with_threads(args.common.threads, || {
        run_eval_state(&problem, &args.word, args.order, args.dims.as_deref(), args.common.budget)
    })??;
    print!("{}", value.render());
    Ok(())
}

fn weingarten(args: WeingartenArgs) -> Result<(), CliError> {
    let table = weingarten_table(args.n, args.d)?;
    match args.format {
        Format::Table => {
            println!("Wg(mu, {}) for S_{}", args.d, args.n);
            for (mu, value) in &table {
                println!("{mu:<16} {}", format_rational(value));
            }
        }
        Format::Machine => {
            let map: serde_json::Map<String, serde_json::Value> = table
                .iter()
                .map(|(mu, v)| (mu.clone(), serde_json::Value::String(format_rational(v))))
                .collect();
            println!("{}", serde_json::to_string_pretty(&map).expect("map serializes"));
        }
    }
    Ok(())
}

fn mc_check(args: McArgs) -> Result<(), CliError> {
    let problem = parse_problem(&args.problem)?;
    let check = with_threads(args.common.threads, || {
        run_mc_check(&problem.algebra, &args.word, args.dim, args.samples, args.seed, args.common.budget)
    })??;
    print!("{}", check.render());
    if check.agrees {
        Ok(())
    } else {
        Err(CliError::Numerical("Monte Carlo estimate disagrees with the exact value".into()))
    }
}

fn examples(name: Option<String>) -> Result<(), CliError> {
    match name {
        None => {
            for (name, text) in BUNDLED {
                let description = ncupper_cli::parse_problem_str(text)?.file.description.unwrap_or_default();
                println!("{name:<20} {description}");
            }
            Ok(())
        }
        Some(name) => match ncupper_cli::bundled::find(&name) {
            Some(text) => {
                print!("{text}");
                Ok(())
            }
            None => Err(CliError::input(format!("no bundled problem named `{name}`"))),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve(args),
        Command::EvalState(args) => eval_state(args),
        Command::Weingarten(args) => weingarten(args),
        Command::McCheck(args) => mc_check(args),
        Command::Examples { name } => examples(name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
