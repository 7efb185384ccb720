use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use modcredit::config::RunConfig;
use modcredit::selfcheck::{self, Fault};
use modcredit::suite::{run_dir, run_suite, SuiteOptions};
use modcredit::verdict::{analyze, parse_class, parse_sharing, TracePattern};
use modcredit_core::env::task_by_id;

#[derive(Parser)]
#[command(name = "modcredit", version, about = "Modularity analysis and transfer experiments for credit-assignment schemes")]
struct Cli {
    /// Base seed; offsets every configured seed of a run
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide the modularity criterion for an algorithm class on a trace.
    /// Exit status 0 when dynamically modular, 2 when not.
    Analyze {
        /// cvs, ppo, ppof, q-learning, sarsa, dqn, policy-gradient, td0,
        /// td0-off-policy, td<n>, td-mc or td-lambda
        #[arg(long)]
        class: String,
        /// monolithic, factorized or tabular
        #[arg(long)]
        sharing: Option<String>,
        /// Number of steps
        #[arg(long = "T", default_value_t = 3)]
        steps: usize,
        /// Number of decisions
        #[arg(long = "N", default_value_t = 4)]
        decisions: usize,
        /// acyclic or cycle-at:<t>
        #[arg(long, default_value = "acyclic")]
        trace: TracePattern,
        /// Write the credit-assignment graph as DOT
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Also print a plain-text factorization report to stderr
        #[arg(long)]
        report: bool,
    },
    /// Run an experiment suite from a TOML config.
    Run {
        config: PathBuf,
        /// Output root; the run directory is <out>/<name>
        #[arg(long, env = "MODCREDIT_OUT", default_value = "runs")]
        out: PathBuf,
        /// Use the 1e7-sample budget
        #[arg(long)]
        full: bool,
        /// Print per-unit progress to stderr
        #[arg(long)]
        progress: bool,
    },
    /// Print a task as JSON, including its optimal door sequences.
    EnvDump { task: String },
    /// Run the self-test suite; nonzero exit on any failure.
    Check {
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            class,
            sharing,
            steps,
            decisions,
            trace,
            dot,
            report,
        } => {
            let sharing = sharing.as_deref().map(parse_sharing).transpose()?;
            let algo = parse_class(&class, sharing)?;
            let a = analyze(&algo, steps, decisions, trace)?;
            println!("{}", serde_json::to_string_pretty(&a.verdict)?);
            if let Some(path) = dot {
                std::fs::write(&path, a.acml.graph.export_dot()).with_context(|| format!("cannot write {}", path.display()))?;
            }
            if report {
                let skeleton = trace.skeleton(steps, decisions)?;
                eprint!("{}", modcredit_core::analysis::factorization_report(&algo, &skeleton));
            }
            Ok(if a.verdict.dynamic { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Run {
            config,
            out,
            full,
            progress,
        } => {
            let (mut cfg, text) = RunConfig::load(&config)?;
            cfg.full |= full;
            cfg.seeds.iter_mut().for_each(|s| *s += cli.seed);
            let opts = SuiteOptions {
                jobs: cli.jobs.unwrap_or(SuiteOptions::default().jobs),
                progress,
            };
            let dir = run_dir(&out, &cfg, &config);
            let output = run_suite(&cfg, &opts)?;
            output.write(&dir, &cfg, &text)?;
            println!("{}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::EnvDump { task } => {
            let spec = task_by_id(&task)?;
            println!("{}", serde_json::to_string_pretty(&spec.summary())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { inject_fault } => {
            let results = vec![
                selfcheck::check_dsep_from(cli.seed, 200, 8),
                selfcheck::check_gradients(10, inject_fault),
                selfcheck::check_gae(),
            ];
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
