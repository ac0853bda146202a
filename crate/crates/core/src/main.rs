use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sftkey::experiment::{Experiment, ExperimentConfig, ExperimentError, MatcherKind, Progress};
use sftkey::judge::{FixtureTransport, Judge, Transport};
use sftkey::training::{StepRecord, Strategy};

#[derive(Parser)]
#[command(name = "sftkey", version, about = "Answer-focused two-stage fine-tuning lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restricts to these strategies (repeatable).
    #[arg(long = "strategy", value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    /// Restricts to these seeds (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and eval splits.
    GenData(Common),
    /// Train the configured strategies.
    Train(Common),
    /// Evaluate trained checkpoints.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_parser = ["local", "judge"])]
        matcher: Option<String>,
        /// Canned judge replies instead of the network.
        #[arg(long)]
        judge_fixture: Option<PathBuf>,
    },
    /// Build the comparison table and loss curves.
    Report(Common),
    /// Send one judge request and print the verdict.
    JudgeTest {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long)]
        question: String,
        #[arg(long)]
        answer1: String,
        #[arg(long)]
        answer2: String,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        format!("unknown strategy {s:?}; expected one of {}", names.join(", "))
    })
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, ExperimentError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply(common: &Common, mut config: ExperimentConfig) -> ExperimentConfig {
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config
}

fn selection(common: &Common, config: &ExperimentConfig) -> Result<(Vec<Strategy>, Vec<u64>), ExperimentError> {
    let strategies = if common.strategies.is_empty() {
        config.strategies.clone()
    } else {
        common.strategies.clone()
    };
    let seeds = if common.seeds.is_empty() {
        config.seeds.clone()
    } else {
        common.seeds.clone()
    };
    for s in &strategies {
        if !config.strategies.contains(s) {
            return Err(ExperimentError::Usage(format!("{s} is not in the config's strategies")));
        }
    }
    for s in &seeds {
        if !config.seeds.contains(s) {
            return Err(ExperimentError::Usage(format!("seed {s} is not in the config's seeds")));
        }
    }
    Ok((strategies, seeds))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::GenData(common) => {
            let exp = Experiment::new(apply(&common, load_config(&common.config)?))?;
            let s = exp.gen_data()?;
            println!(
                "wrote {} train and {} eval examples to {} ({} overlapping prompts)",
                s.train_count,
                s.eval_count,
                s.train_path.parent().unwrap_or(exp.root()).display(),
                s.collisions
            );
        }
        Command::Train(common) => {
            let exp = Experiment::new(apply(&common, load_config(&common.config)?))?;
            let (strategies, seeds) = selection(&common, &exp.config)?;
            let print = |s: Strategy, seed: u64, r: &StepRecord| {
                if r.step % 25 == 0 {
                    eprintln!(
                        "[{s} seed {seed}] stage {} epoch {} step {} lr {:.2e} loss {:.4} answer {:.4}",
                        r.stage, r.epoch, r.step, r.lr, r.loss_total, r.loss_answer
                    );
                }
            };
            let progress = Progress {
                on_step: (!common.quiet).then_some(&print as &dyn Fn(Strategy, u64, &StepRecord)),
                on_judgment: None,
            };
            for m in exp.train(&strategies, &seeds, &progress)? {
                println!(
                    "{} seed {}: {} in {:.1}s",
                    m.strategy,
                    m.seed,
                    m.checkpoints.join(", "),
                    m.train_seconds.unwrap_or(0.0)
                );
            }
            println!("runs under {}", exp.root().display());
        }
        Command::Eval {
            common,
            alpha,
            matcher,
            judge_fixture,
        } => {
            let mut config = apply(&common, load_config(&common.config)?);
            if let Some(a) = alpha {
                config.eval.alpha = a;
            }
            match matcher.as_deref() {
                Some("judge") => config.eval.matcher = MatcherKind::Judge,
                Some(_) => config.eval.matcher = MatcherKind::Local,
                None => {}
            }
            if judge_fixture.is_some() {
                config.eval.judge_fixture = judge_fixture;
            }
            let exp = Experiment::new(config)?;
            let (strategies, seeds) = selection(&common, &exp.config)?;
            for (m, r) in exp.evaluate(&strategies, &seeds, &Progress::default())? {
                println!(
                    "{} seed {}: Acc {:.4} Fmt {:.4} Score {:.4} answer NLL {:.4}",
                    m.strategy, m.seed, r.acc, r.fmt, r.score, r.answer_nll
                );
            }
        }
        Command::Report(common) => {
            let exp = Experiment::new(apply(&common, load_config(&common.config)?))?;
            let report = exp.report()?;
            print!("{}", report.table_markdown());
            println!("written to {}", exp.root().join("report").display());
        }
        Command::JudgeTest {
            config,
            question,
            answer1,
            answer2,
            fixture,
        } => {
            let config = load_config(&config)?;
            let transport: Box<dyn Transport> = match fixture.or(config.eval.judge_fixture.clone()) {
                Some(p) => Box::new(FixtureTransport::load(&p)?),
                None => http_transport(&config)?,
            };
            let judge = Judge::new(config.judge.clone(), transport)?;
            let v = judge.judge(0, &question, &answer1, &answer2)?;
            println!(
                "{} ({} attempt(s), {:.0} ms): {}",
                if v.same { "same" } else { "different" },
                v.attempts,
                v.latency_ms,
                v.reply.trim()
            );
        }
    }
    Ok(())
}

#[cfg(feature = "http")]
fn http_transport(config: &ExperimentConfig) -> Result<Box<dyn Transport>, ExperimentError> {
    Ok(Box::new(sftkey::judge::HttpTransport::new(&config.judge)?))
}

#[cfg(not(feature = "http"))]
fn http_transport(_: &ExperimentConfig) -> Result<Box<dyn Transport>, ExperimentError> {
    Err(ExperimentError::Judge("built without the http feature; pass --fixture".into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
