use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use labelprob::estimators::Estimator;
use labelprob::harness::{
    configured_estimators, load_dataset, load_scores, oracle_compare, parse_grid, parse_methods,
    run_evaluation, RunConfig,
};
use labelprob::metrics::threshold_sweep;
use labelprob::model::{tokenize_prompt, KEY_SEPARATOR};
use labelprob::{Error, MatchMode, Result};

#[derive(Debug, Parser)]
#[command(name = "labelprob", version, about = "Label confidence from generative classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score one prompt with every selected method.
    Score {
        /// Prompt token texts; split on U+001F or on --sep.
        prompt: String,
        #[arg(long)]
        sep: Option<String>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Evaluate a dataset and write a report.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Compare search-based marginals with exact enumeration.
    OracleCompare {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Sweep decision thresholds over an existing score file or report.
    Sweep {
        #[arg(long)]
        scores: PathBuf,
        /// Method column to read when `--scores` is an evaluation report.
        #[arg(long)]
        method: Option<String>,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Debug, Args)]
struct RunOpts {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Table-model document or http(s) server root.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    prune: Option<f64>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    eos_break: Option<f64>,
    #[arg(long)]
    no_third_token_break: bool,
    /// `literal` or `boundary`.
    #[arg(long)]
    match_mode: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node budget for the marginal search.
    #[arg(long)]
    budget: Option<usize>,
    /// Explore root branches of the marginal search in parallel.
    #[arg(long)]
    parallel: bool,
}

impl RunOpts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        if let Some(t) = &self.taxonomy {
            cfg.taxonomy = Some(t.clone());
        }
        if let Some(m) = &self.methods {
            cfg.methods = parse_methods(m)?;
        }
        if let Some(p) = self.top_p {
            cfg.marginal.top_p = p;
        }
        if let Some(p) = self.prune {
            cfg.marginal.prune_threshold = p;
        }
        if let Some(n) = self.max_new_tokens {
            cfg.marginal.max_new_tokens = n;
            cfg.decode.max_new_tokens = n;
        }
        if let Some(e) = self.eos_break {
            cfg.marginal.eos_break_prob = e;
        }
        if self.no_third_token_break {
            cfg.marginal.third_token_eos_break = false;
        }
        if let Some(mode) = &self.match_mode {
            let mode: MatchMode = mode.parse()?;
            cfg.marginal.match_mode = mode;
            cfg.decode.match_mode = mode;
        }
        if let Some(g) = &self.grid {
            cfg.grid = parse_grid(g)?;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(b) = self.budget {
            cfg.marginal.node_budget = b;
        }
        if self.parallel {
            cfg.marginal.parallel = true;
        }
        Ok(cfg)
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Score { prompt, sep, opts } => {
            let cfg = opts.resolve()?;
            cfg.validate()?;
            let taxonomy = cfg.load_taxonomy()?;
            let model = cfg.open_model()?;
            let prompt = match sep {
                Some(sep) => prompt.replace(&sep, &KEY_SEPARATOR.to_string()),
                None => prompt,
            };
            let tokens = tokenize_prompt(&prompt)?;
            for estimator in configured_estimators(&cfg) {
                let estimate = estimator.estimate(model.as_ref(), &tokens, &taxonomy)?;
                println!("{:<20} {}", estimator.name(), estimate.scores);
                if let Some(s) = estimate.stats {
                    println!(
                        "{:<20} nodes={} calls={} terminated={} pruned_mass={:.3e}",
                        "", s.nodes_expanded, s.model_calls, s.paths_terminated, s.mass_pruned
                    );
                }
                if estimate.malformed_output {
                    println!("{:<20} warning: output outside the verdict grammar", "");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { dataset, opts } => {
            let cfg = opts.resolve()?;
            cfg.validate()?;
            let taxonomy = cfg.load_taxonomy()?;
            let model = cfg.open_model()?;
            let records = load_dataset(&dataset, &taxonomy)?;
            let report = run_evaluation(&cfg, model.as_ref(), &taxonomy, &records)?;
            print!("{}", report.render_table());
            if let Some(out) = &cfg.out {
                write_output(out, &report.to_json())?;
            }
            Ok(if report.partial { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::OracleCompare { dataset, opts } => {
            let cfg = opts.resolve()?;
            cfg.validate()?;
            let taxonomy = cfg.load_taxonomy()?;
            let model = cfg.open_model()?;
            let records = load_dataset(&dataset, &taxonomy)?;
            let table = oracle_compare(&cfg, model.as_ref(), &taxonomy, &records)?;
            print!("{}", table.render());
            if let Some(out) = &cfg.out {
                let mut json = serde_json::to_string_pretty(&table).expect("serializable");
                json.push('\n');
                write_output(out, &json)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { scores, method, opts } => {
            let cfg = opts.resolve()?;
            let taxonomy = cfg.load_taxonomy()?;
            let (matrix, gold) = load_scores(&scores, &taxonomy, method.as_deref())?;
            let sweep = threshold_sweep(&matrix, &gold, &cfg.grid)?;
            println!("{:>10} {:>10}", "threshold", "micro-F1");
            for p in &sweep.points {
                println!("{:>10.4} {:>10.4}", p.threshold, p.micro_f1);
            }
            println!("best: threshold {:.4} micro-F1 {:.4}", sweep.best.threshold, sweep.best.micro_f1);
            if let Some(out) = &cfg.out {
                let mut json = serde_json::to_string_pretty(&sweep).expect("serializable");
                json.push('\n');
                write_output(out, &json)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
