use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::BigRational;
use symnet::abstraction::{Convention, DEFAULT_TRANSITION_CAP};
use symnet::design::SelectionRule;

mod commands;
mod report;

use commands::{parse_positive, BuildArgs, VerifyArgs};
use report::Report;

#[derive(Parser)]
#[command(
    name = "symnet",
    version,
    about = "Compositional symbolic models of control networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetworkArg {
    /// Network description (TOML); the bundled six-subsystem network if omitted.
    #[arg(long, short = 'n')]
    network: Option<PathBuf>,
}

#[derive(Args)]
struct EpsilonArg {
    /// Required precision.
    #[arg(long, short = 'e', default_value = "0.01", value_parser = parse_positive)]
    epsilon: BigRational,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    EqualValue,
    BudgetShare,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Restricted,
    Full,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Restricted => Convention::Restricted,
            ConventionArg::Full => Convention::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dependency graph, components, condensation and gains.
    Analyze {
        #[command(flatten)]
        network: NetworkArg,
    },
    /// Quantization parameters for a precision.
    Design {
        #[command(flatten)]
        network: NetworkArg,
        #[command(flatten)]
        epsilon: EpsilonArg,
        #[arg(long, value_enum, default_value = "equal-value")]
        rule: Rule,
    },
    /// Symbolic models of the subsystems.
    Build {
        #[command(flatten)]
        network: NetworkArg,
        #[command(flatten)]
        epsilon: EpsilonArg,
        /// Materialize transition tables.
        #[arg(long)]
        explicit: bool,
        #[arg(long)]
        subsystem: Option<usize>,
        /// Directory for tables and sidecars; needs --explicit.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "restricted")]
        convention: ConventionArg,
        #[arg(long, default_value_t = DEFAULT_TRANSITION_CAP)]
        cap: u64,
    },
    /// Composes member models per component.
    Compose {
        #[command(flatten)]
        network: NetworkArg,
        #[command(flatten)]
        epsilon: EpsilonArg,
        #[arg(long)]
        component: Option<usize>,
        /// Largest joint state count compared against the direct model.
        #[arg(long, default_value_t = 10_000)]
        identity_limit: u64,
    },
    /// Approximate bisimulation checks.
    Verify {
        /// Bundled one- and two-subsystem networks.
        #[arg(long, conflicts_with = "network", required_unless_present = "network")]
        toy: bool,
        #[arg(long, short = 'n')]
        network: Option<PathBuf>,
        #[arg(long, short = 'e', value_parser = parse_positive)]
        epsilon: Option<BigRational>,
        /// Reference refinement factor.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        refine: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_TRANSITION_CAP)]
        cap: u64,
        #[arg(long, default_value_t = 1_000_000)]
        greatest_cap: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// State and transition counts.
    Complexity {
        #[command(flatten)]
        network: NetworkArg,
        #[command(flatten)]
        epsilon: EpsilonArg,
        #[arg(long, value_enum, default_value = "restricted")]
        convention: ConventionArg,
        /// Parameter for the monolithic counts; the designed one if omitted.
        #[arg(long, value_parser = parse_positive)]
        monolithic_eta: Option<BigRational>,
    },
    /// Writes the bundled network.
    Example {
        #[arg(long)]
        out: PathBuf,
    },
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Analyze { .. } => "analyze",
        Command::Design { .. } => "design",
        Command::Build { .. } => "build",
        Command::Compose { .. } => "compose",
        Command::Verify { .. } => "verify",
        Command::Complexity { .. } => "complexity",
        Command::Example { .. } => "example",
    }
}

fn num_arg(r: &mut Report, key: &str, x: &BigRational) {
    r.arg(key, symnet::rational::Num::from(x));
}

fn run(command: Command, r: &mut Report) -> commands::Outcome {
    match command {
        Command::Analyze { network } => {
            r.arg("network", &network.network);
            commands::analyze(r, network.network.as_deref())
        }
        Command::Design {
            network,
            epsilon,
            rule,
        } => {
            r.arg("network", &network.network);
            num_arg(r, "epsilon", &epsilon.epsilon);
            let rule = match rule {
                Rule::EqualValue => SelectionRule::EqualValue,
                Rule::BudgetShare => SelectionRule::BudgetShare,
            };
            r.arg("rule", rule);
            commands::design_cmd(r, network.network.as_deref(), &epsilon.epsilon, rule)
        }
        Command::Build {
            network,
            epsilon,
            explicit,
            subsystem,
            out,
            convention,
            cap,
        } => {
            let convention = Convention::from(convention);
            r.arg("network", &network.network);
            num_arg(r, "epsilon", &epsilon.epsilon);
            r.arg("explicit", explicit);
            r.arg("subsystem", subsystem);
            r.arg("out", &out);
            r.arg("convention", convention.to_string());
            r.arg("cap", cap);
            let a = BuildArgs {
                eps: &epsilon.epsilon,
                explicit,
                subsystem,
                out: out.as_deref(),
                convention,
                cap,
            };
            commands::build(r, network.network.as_deref(), &a)
        }
        Command::Compose {
            network,
            epsilon,
            component,
            identity_limit,
        } => {
            r.arg("network", &network.network);
            num_arg(r, "epsilon", &epsilon.epsilon);
            r.arg("component", component);
            r.arg("identity_limit", identity_limit);
            commands::compose_cmd(
                r,
                network.network.as_deref(),
                &epsilon.epsilon,
                component,
                identity_limit,
            )
        }
        Command::Verify {
            toy,
            network,
            epsilon,
            refine,
            cap,
            greatest_cap,
            samples,
            seed,
        } => {
            r.arg("toy", toy);
            r.arg("network", &network);
            r.arg("epsilon", epsilon.as_ref().map(symnet::rational::Num::from));
            r.arg("refine", refine);
            r.arg("cap", cap);
            r.arg("greatest_cap", greatest_cap);
            r.arg("samples", samples);
            r.arg("seed", seed);
            let a = VerifyArgs {
                toy,
                eps: epsilon.as_ref(),
                refine,
                cap,
                greatest_cap,
                samples,
                seed,
            };
            commands::verify(r, network.as_deref(), &a)
        }
        Command::Complexity {
            network,
            epsilon,
            convention,
            monolithic_eta,
        } => {
            let convention = Convention::from(convention);
            r.arg("network", &network.network);
            num_arg(r, "epsilon", &epsilon.epsilon);
            r.arg("convention", convention.to_string());
            r.arg(
                "monolithic_eta",
                monolithic_eta.as_ref().map(symnet::rational::Num::from),
            );
            commands::complexity(
                r,
                network.network.as_deref(),
                &epsilon.epsilon,
                convention,
                monolithic_eta.as_ref(),
            )
        }
        Command::Example { out } => {
            r.arg("out", &out);
            commands::example(r, &out)
        }
    }
}

fn emit(r: &Report) {
    println!(
        "{}",
        serde_json::to_string_pretty(&r.to_json()).expect("report serializes")
    );
}

fn configure_threads(r: &mut Report) -> Result<(), String> {
    let Ok(v) = std::env::var("SYMNET_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SYMNET_THREADS={v} is not a positive integer"))?;
    r.arg("threads", n);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let mut r = Report::new(None);
            r.fail(
                "arguments",
                serde_json::Value::Null,
                e.render().to_string().trim_end().to_string(),
            );
            emit(&r);
            return ExitCode::from(2);
        }
    };
    let mut r = Report::new(Some(name(&cli.command)));
    if let Err(message) = configure_threads(&mut r) {
        r.fail("threads", serde_json::Value::Null, message);
        emit(&r);
        return ExitCode::from(2);
    }
    let _ = run(cli.command, &mut r);
    emit(&r);
    if r.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
