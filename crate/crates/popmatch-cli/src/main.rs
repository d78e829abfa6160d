//! `popmatch`: verify, construct and explore popular and minimal-envy
//! matchings for house allocation instances.
//!
//! Verdict lines go to stdout in a machine-readable form; human commentary
//! and traces go to stderr. Exit codes: 0 success, 2 usage or validation
//! error, 3 for a negative mathematical verdict (not popular, no popular
//! matching, and so on).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use popmatch::exchange::{self, ExchangeResult};
use popmatch::instances::{self, Instance};
use popmatch::mem;
use popmatch::oracle;
use popmatch::popularity::{self, PopularityViolation};
use popmatch::problem::{AgentId, Matching};
use popmatch::sim::{self, SimConfig, SimOutcome};

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 2;
const EXIT_NEGATIVE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "popmatch",
    about = "Popular and minimal-envy matchings for house allocation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a matching: popularity, local popularity, minimal envy, Pareto
    /// efficiency, or popularity among a subset of agents.
    Check(CheckArgs),
    /// Construct a matching with the exchange walk or the minimal-envy
    /// algorithm.
    Find(FindArgs),
    /// Enumerate ground truth for a small instance.
    Oracle(OracleArgs),
    /// Run the decentralized random-exchange market.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Problem file.
    problem: PathBuf,
    /// Matching file.
    matching: PathBuf,
    /// popular | local | minimal-envy | pareto | among=<agents,comma-separated>
    #[arg(long, default_value = "popular")]
    mode: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Exchange,
    Mem,
}

#[derive(Args)]
struct FindArgs {
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Exchange)]
    algo: Algo,
    /// Starting matching file, or `empty` for the all-unmatched matching
    /// (exchange algorithm only).
    #[arg(long, default_value = "empty")]
    start: String,
    /// Print the step log to stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct OracleArgs {
    problem: PathBuf,
    /// Also search for the largest agent subset some matching is popular
    /// among.
    #[arg(long)]
    most_popular: bool,
}

#[derive(Args)]
struct SimulateArgs {
    problem: PathBuf,
    /// Number of independent runs, seeded 0, 1, ...
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Proposal budget per run.
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
    /// Largest group meeting at once.
    #[arg(long, default_value_t = 3)]
    group: usize,
    /// Write one CSV row per run to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Starting matching file, or `empty`.
    #[arg(long, default_value = "empty")]
    start: String,
}

struct Failure {
    message: String,
}

impl Failure {
    fn new(message: impl Into<String>) -> Self {
        Failure {
            message: message.into(),
        }
    }
}

macro_rules! failure_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure { message: e.to_string() }
            }
        }
    )*};
}

failure_from!(
    instances::ParseError,
    popularity::PopularityError,
    oracle::OracleError
);

fn main() -> ExitCode {
    // Die quietly when the reader of a pipe goes away (e.g. `... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Find(args) => cmd_find(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(format!("cannot read {}: {e}", path.display())))?;
    Ok(instances::parse_problem(&text)?)
}

fn read_matching(path: &Path, instance: &Instance) -> Result<Matching, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(format!("cannot read {}: {e}", path.display())))?;
    Ok(instances::parse_matching(&text, instance)?)
}

fn read_start(start: &str, instance: &Instance) -> Result<Matching, Failure> {
    if start == "empty" {
        Ok(Matching::empty(&instance.problem))
    } else {
        read_matching(Path::new(start), instance)
    }
}

fn oracle_limits() -> (usize, usize) {
    match std::env::var("POPMATCH_ORACLE_LIMIT")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(limit) => (limit, limit),
        None => (oracle::DEFAULT_LIMIT, oracle::DEFAULT_SUBSET_LIMIT),
    }
}

enum CheckMode {
    Popular,
    Local,
    MinimalEnvy,
    Pareto,
    Among(Vec<String>),
}

fn parse_mode(mode: &str) -> Result<CheckMode, Failure> {
    match mode {
        "popular" => Ok(CheckMode::Popular),
        "local" => Ok(CheckMode::Local),
        "minimal-envy" => Ok(CheckMode::MinimalEnvy),
        "pareto" => Ok(CheckMode::Pareto),
        _ => match mode.strip_prefix("among=") {
            Some(list) if !list.is_empty() => {
                Ok(CheckMode::Among(list.split(',').map(str::to_string).collect()))
            }
            _ => Err(Failure::new(format!(
                "unknown mode `{mode}` (expected popular, local, minimal-envy, pareto or among=...)"
            ))),
        },
    }
}

fn cmd_check(args: CheckArgs) -> Result<u8, Failure> {
    let instance = read_instance(&args.problem)?;
    let p = &instance.problem;
    let mu = read_matching(&args.matching, &instance)?;
    match parse_mode(&args.mode)? {
        CheckMode::Popular => {
            let verdict = popularity::characterize(p, &mu);
            match verdict.violation {
                None => {
                    println!("popular");
                    Ok(EXIT_OK)
                }
                Some(PopularityViolation::AgentHoldsBadHouse { agent, house }) => {
                    let house_text = house
                        .map(|h| instance.house_label(h).to_string())
                        .unwrap_or_else(|| "-".into());
                    println!(
                        "not-popular reason=bad-house agent={} house={house_text}",
                        instance.agent_label(agent)
                    );
                    if house.is_some() {
                        eprintln!(
                            "agent {} holds bad house {house_text}",
                            instance.agent_label(agent)
                        );
                    } else {
                        eprintln!(
                            "agent {} is unmatched although a second house exists",
                            instance.agent_label(agent)
                        );
                    }
                    Ok(EXIT_NEGATIVE)
                }
                Some(PopularityViolation::FirstHouseMisallocated { house, holder }) => {
                    let holder_text = holder
                        .map(|a| instance.agent_label(a).to_string())
                        .unwrap_or_else(|| "-".into());
                    println!(
                        "not-popular reason=first-house-misallocated house={} holder={holder_text}",
                        instance.house_label(house)
                    );
                    eprintln!(
                        "first house {} is not matched to one of its first agents",
                        instance.house_label(house)
                    );
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        CheckMode::Local => match popularity::local_blocking_triple(p, &mu) {
            None => {
                println!("locally-popular");
                Ok(EXIT_OK)
            }
            Some(triple) => {
                let agents = triple
                    .agents
                    .iter()
                    .map(|&a| instance.agent_label(a).to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                println!("not-locally-popular agents={agents}");
                println!("deviation {}", instance.format_matching(&triple.deviation));
                Ok(EXIT_NEGATIVE)
            }
        },
        CheckMode::MinimalEnvy => {
            if mem::is_minimal_envy(p, &mu) {
                println!("minimal-envy");
                Ok(EXIT_OK)
            } else {
                println!("not-minimal-envy");
                Ok(EXIT_NEGATIVE)
            }
        }
        CheckMode::Pareto => match mem::pareto_improvement(p, &mu) {
            None => {
                println!("pareto-efficient");
                Ok(EXIT_OK)
            }
            Some(improvement) => {
                let agents = improvement
                    .agents
                    .iter()
                    .map(|&a| instance.agent_label(a).to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                println!("not-pareto-efficient agents={agents}");
                println!("improvement {}", instance.format_matching(&improvement.improved));
                Ok(EXIT_NEGATIVE)
            }
        },
        CheckMode::Among(labels) => {
            let mut subset: Vec<AgentId> = Vec::with_capacity(labels.len());
            for label in &labels {
                subset.push(
                    instance
                        .agent_by_label(label)
                        .ok_or_else(|| Failure::new(format!("unknown agent `{label}`")))?,
                );
            }
            let (limit, _) = oracle_limits();
            let joined = labels.join(",");
            if popularity::is_popular_among(p, &mu, &subset, limit)? {
                println!("popular-among {joined}");
                Ok(EXIT_OK)
            } else {
                println!("not-popular-among {joined}");
                Ok(EXIT_NEGATIVE)
            }
        }
    }
}

fn cmd_find(args: FindArgs) -> Result<u8, Failure> {
    let instance = read_instance(&args.problem)?;
    let p = &instance.problem;
    match args.algo {
        Algo::Exchange => {
            let start = read_start(&args.start, &instance)?;
            let outcome = exchange::find_popular_via_exchanges(p, &start);
            if args.trace {
                for line in instance.format_exchange_trace(&outcome.trace) {
                    eprintln!("{line}");
                }
            }
            match outcome.result {
                ExchangeResult::Popular => {
                    println!("{}", instance.format_matching(&outcome.final_matching));
                    Ok(EXIT_OK)
                }
                ExchangeResult::NoPopularMatching => {
                    println!("no-popular-matching");
                    eprintln!("no popular matching exists for this instance");
                    if let Some(revisited) = &outcome.loop_evidence {
                        eprintln!(
                            "loop evidence: revisited {}",
                            instance.format_matching(revisited)
                        );
                    }
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Algo::Mem => {
            if args.start != "empty" {
                return Err(Failure::new("--start applies only to --algo exchange"));
            }
            let trace = mem::run(p);
            if args.trace {
                for line in instance.format_mem_trace(&trace) {
                    eprintln!("{line}");
                }
            }
            println!("{}", instance.format_matching(&trace.final_matching));
            Ok(EXIT_OK)
        }
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<u8, Failure> {
    let instance = read_instance(&args.problem)?;
    let p = &instance.problem;
    let (limit, subset_limit) = oracle_limits();
    let opts = oracle::ReportOptions {
        limit,
        subset_limit,
        with_most_popular: args.most_popular,
    };
    let report = oracle::report(p, &opts)?;
    println!("n-matchings {}", report.n_matchings);
    let mut popular = report.popular.clone();
    popular.sort();
    println!("popular-count {}", popular.len());
    for m in &popular {
        println!("popular {}", instance.format_matching(m));
    }
    let mut minimal = report.minimal_envy.clone();
    minimal.sort();
    println!("minimal-envy-count {}", minimal.len());
    for m in &minimal {
        println!("minimal-envy {}", instance.format_matching(m));
    }
    if let Some(most) = &report.most_popular {
        println!("max-popular-subset {}", most.max_subset_size);
        let mut lines: Vec<String> = most
            .witnesses
            .iter()
            .map(|(m, subset)| {
                let agents = subset
                    .iter()
                    .map(|&a| instance.agent_label(a).to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                format!("most-popular {{{agents}}} {}", instance.format_matching(m))
            })
            .collect();
        lines.sort();
        lines.dedup();
        for line in lines {
            println!("{line}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Failure> {
    if args.group < 2 {
        return Err(Failure::new("--group must be at least 2"));
    }
    if args.max_steps == 0 {
        return Err(Failure::new("--max-steps must be positive"));
    }
    let instance = read_instance(&args.problem)?;
    let p = &instance.problem;
    let start = read_start(&args.start, &instance)?;
    let cfg = SimConfig {
        max_group_size: args.group,
        max_steps: args.max_steps,
        seed: 0,
        record_trace: false,
    };
    let summary = sim::batch_stats(p, &start, &cfg, args.seeds);
    if let Some(path) = &args.csv {
        let mut csv = String::from("seed,outcome,steps,accepted\n");
        for run in &summary.runs {
            let outcome = match run.outcome {
                SimOutcome::Converged => "converged",
                SimOutcome::StepBudgetExhausted => "exhausted",
            };
            csv.push_str(&format!("{},{},{},{}\n", run.seed, outcome, run.steps, run.accepted));
        }
        std::fs::write(path, csv)
            .map_err(|e| Failure::new(format!("cannot write {}: {e}", path.display())))?;
    }
    if summary.runs.is_empty() {
        println!("seeds 0 converged 0");
    } else {
        println!(
            "seeds {} converged {} rate {:.3} mean-steps {:.1} max-steps {}",
            summary.runs.len(),
            summary.converged(),
            summary.convergence_rate(),
            summary.mean_steps(),
            summary.max_steps()
        );
    }
    Ok(EXIT_OK)
}
