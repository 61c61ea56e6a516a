//! Command-line front end: train, eval, chat, simulate, and inspect-prior.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dialoplan_core::config::RunConfig;
use dialoplan_core::model::TaskId;
use dialoplan_core::runner::{self, ChatIo, RunArtifacts, RunMode};
use dialoplan_core::selfplay::PriorMode;

#[derive(Parser)]
#[command(name = "dialoplan", version, about = "Proactive dialogue planning engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Config file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Task to run: esconv, cima, cb, p4g, extes.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Candidate set size.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for transcripts, metrics, and checkpoints.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Exploration rate used outside training schedules.
    #[arg(long, global = true)]
    epsilon_eval: Option<f64>,
    /// Use the scripted mock backend instead of a live endpoint.
    #[arg(long, global = true)]
    mock: bool,
    /// Scripted-backend rules file (JSON); defaults to the bundled script.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Cases file (JSON array); defaults to the bundled cases.
    #[arg(long, global = true)]
    cases: Option<PathBuf>,
    /// Value-head checkpoint to load.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Use the beam-marginal prior instead of list-mode parsing.
    #[arg(long, global = true)]
    beam: bool,
    /// Skip value-head updates (prior + untrained head).
    #[arg(long, global = true)]
    no_rl: bool,
    /// Candidates become the full catalog (no policy prior).
    #[arg(long, global = true)]
    no_prior: bool,
    /// Strip every emotion segment from prompts and state.
    #[arg(long, global = true)]
    no_emotion: bool,
    /// Count failed episodes at the turn cap in AT (on by default; pass
    /// `--at-count-failures=false` to use actual lengths).
    #[arg(long, global = true, default_missing_value = "true", num_args = 0..=1)]
    at_count_failures: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Online self-play training of the value head.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluation run with a fixed exploration rate and no updates.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Evaluation episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Interactive session: you play the user role in the terminal.
    Chat {
        #[command(flatten)]
        common: CommonOpts,
        /// Case index within the case set.
        #[arg(long, default_value_t = 0)]
        case: usize,
    },
    /// Fully scripted end-to-end run (mock backend forced), deterministic
    /// under a fixed seed.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Episodes to simulate.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Print the candidate set (and prior, in beam mode) for a case.
    InspectPrior {
        #[command(flatten)]
        common: CommonOpts,
        /// Case index within the case set.
        #[arg(long, default_value_t = 0)]
        case: usize,
    },
}

fn build_config(common: &CommonOpts, episodes: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply_env();
            cfg
        }
    };
    if let Some(task) = &common.task {
        cfg.task = TaskId::parse(task).map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(k) = common.k {
        if k == 0 {
            bail!("k must be at least 1");
        }
        cfg.k = k;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if let Some(eps) = common.epsilon_eval {
        if !(0.0..=1.0).contains(&eps) {
            bail!("epsilon must lie in [0, 1]");
        }
        cfg.epsilon_eval = eps;
    }
    if common.mock {
        cfg.mock = true;
    }
    if let Some(script) = &common.script {
        cfg.mock_script = Some(script.clone());
        cfg.mock = true;
    }
    if let Some(cases) = &common.cases {
        cfg.cases_file = Some(cases.clone());
    }
    if let Some(ckpt) = &common.checkpoint {
        cfg.checkpoint = Some(ckpt.clone());
    }
    if common.beam {
        cfg.prior_mode = PriorMode::Beam;
        cfg.llm.supports_logprobs = true;
    }
    if common.no_rl {
        cfg.use_rl = false;
    }
    if common.no_prior {
        cfg.use_prior = false;
    }
    if common.no_emotion {
        cfg.use_emotion = false;
    }
    if let Some(flag) = common.at_count_failures {
        cfg.at_count_failures = flag;
    }
    if let Some(n) = episodes {
        if n == 0 {
            bail!("episodes must be at least 1");
        }
        cfg.train.episodes = n;
        cfg.eval_episodes = n;
    }
    Ok(cfg)
}

fn report(artifacts: &RunArtifacts) {
    print!("{}", artifacts.metrics.render_table());
    println!("LLM calls   {}", artifacts.total_llm_calls);
    if artifacts.updates > 0 {
        println!("updates     {}", artifacts.updates);
        if let Some(loss) = artifacts.final_loss {
            println!("final loss  {loss:.6}");
        }
    }
    if let Some(p) = &artifacts.transcript_path {
        println!("transcripts {}", p.display());
    }
    if let Some(p) = &artifacts.metrics_path {
        println!("metrics     {}", p.display());
    }
    if let Some(p) = &artifacts.checkpoint_path {
        println!("checkpoint  {}", p.display());
    }
}

struct TerminalChat {
    stdin: std::io::StdinLock<'static>,
}

impl ChatIo for TerminalChat {
    fn on_system_turn(&mut self, action_name: &str, system_text: &str) {
        println!("[{action_name}]");
        println!("system> {system_text}");
        print!("you> ");
        std::io::stdout().flush().ok();
    }

    fn read_user_line(&mut self) -> Option<String> {
        let mut line = String::new();
        match self.stdin.read_line(&mut line) {
            Ok(0) => None,
            Ok(_) => Some(line.trim_end().to_string()),
            Err(_) => None,
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, episodes } => {
            let cfg = build_config(&common, episodes)?;
            let artifacts = runner::run(&cfg, RunMode::Train)?;
            report(&artifacts);
        }
        Command::Eval { common, episodes } => {
            let cfg = build_config(&common, episodes)?;
            let artifacts = runner::run(&cfg, RunMode::Eval)?;
            report(&artifacts);
        }
        Command::Simulate { common, episodes } => {
            let cfg = build_config(&common, episodes)?;
            let artifacts = runner::run(&cfg, RunMode::Simulate)?;
            report(&artifacts);
        }
        Command::Chat { common, case } => {
            let cfg = build_config(&common, None)?;
            let mut io = TerminalChat {
                stdin: std::io::stdin().lock(),
            };
            let artifacts = runner::run_chat(&cfg, case, &mut io)?;
            let result = &artifacts.results[0];
            println!(
                "episode over: {:?} after {} turn(s)",
                result.outcome, result.turns
            );
            report(&artifacts);
        }
        Command::InspectPrior { common, case } => {
            let cfg = build_config(&common, None)?;
            let report = runner::inspect_prior(&cfg, case)?;
            print!("{report}");
        }
    }
    Ok(())
}
