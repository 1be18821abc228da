//! Command-line front end: `synth`, `train`, `bench` and `report`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_settings, ExperimentConfig, DEFAULT_ROWS};
use crate::data::{load_dataset_dir, write_dataset_dir, Dataset, DEFAULT_THRESHOLD};
use crate::error::{BenchError, Result};
use crate::experiment::{prepare, PreparedData, Runner};
use crate::modelfile::save_model;
use crate::report::{emit_report, parse_csv, render_tradeoff_csv, Format, ReportRow};
use crate::split::split_leave_one_out;
use crate::synth::{generate_synthetic, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "hybridrec", version, about = "Hybrid graph + text recommender benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted synthetic dataset to a directory.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        users: usize,
        #[arg(long, default_value_t = 2000)]
        items: usize,
    },
    /// Train one configuration, print its report row and save the model.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a set of configuration rows and emit the report.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Report path; `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Re-render a CSV report.
    Report {
        /// CSV written by `bench`.
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
        /// Emit `config,latency_mean_ms,ndcg_at_10` for plotting instead.
        #[arg(long)]
        tradeoff: bool,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file. Alone it defines the single row to run; with `--rows`
    /// its settings apply to every row.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (ratings.csv, items.jsonl, users.jsonl). Without it
    /// a synthetic dataset is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated presets.
    #[arg(long)]
    pub rows: Option<String>,
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Synthetic dataset size when `--data` is absent.
    #[arg(long, default_value_t = 5000)]
    pub users: usize,
    #[arg(long, default_value_t = 2000)]
    pub items: usize,
}

fn parse_format(s: &str) -> Result<Format> {
    Format::parse(s).ok_or_else(|| BenchError::Usage(format!("--format must be csv or table, got {s:?}")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| BenchError::io(path, e))
}

/// The configurations selected by `--config`, `--rows` and `--seed`.
pub fn select_configs(config_text: Option<&str>, rows: Option<&str>, seed: Option<u64>) -> Result<Vec<ExperimentConfig>> {
    let mut configs = match (config_text, rows) {
        (Some(text), None) => vec![ExperimentConfig::parse(text)?],
        (text, rows) => {
            let names: Vec<&str> = match rows {
                Some(r) => r.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
                None => DEFAULT_ROWS.to_vec(),
            };
            if names.is_empty() {
                return Err(BenchError::Usage("--rows is empty".into()));
            }
            let shared = text.map(parse_settings).transpose()?.unwrap_or_default();
            names
                .iter()
                .map(|n| {
                    let mut c = ExperimentConfig::preset(n)?;
                    c.apply_shared(&shared)?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if let Some(s) = seed {
        configs.iter_mut().for_each(|c| c.seed = s);
    }
    let first = &configs[0];
    for c in &configs[1..] {
        if c.seed != first.seed
            || c.eval.candidates_per_user != first.eval.candidates_per_user
            || c.training.supervision_edges != first.training.supervision_edges
        {
            return Err(BenchError::Usage(
                "rows must share seed, eval.candidates_per_user and training.supervision_edges".into(),
            ));
        }
    }
    Ok(configs)
}

fn load_data(args: &RunArgs, seed: u64) -> Result<Dataset> {
    match &args.data {
        Some(dir) => load_dataset_dir(dir, DEFAULT_THRESHOLD),
        None => {
            if args.users < 10 || args.items < 10 {
                return Err(BenchError::Usage("--users and --items must be at least 10".into()));
            }
            let d = generate_synthetic(&SynthConfig::new(args.users, args.items, seed));
            Ok(Dataset { interactions: d.interactions, corpus: d.corpus })
        }
    }
}

fn prepared(args: &RunArgs, configs: &[ExperimentConfig]) -> Result<PreparedData> {
    let c = &configs[0];
    let data = load_data(args, c.seed)?;
    let split = split_leave_one_out(&data.interactions, data.corpus, c.seed);
    log::info!("{} train interactions, {} test users", split.train.len(), split.test.len());
    prepare(&split, c.eval.candidates_per_user, c.training.supervision_edges, c.seed)
}

fn run_rows(runner: &mut Runner, configs: &[ExperimentConfig]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        log::info!("running {:?}", c.label);
        let row = runner.run(c)?.row;
        log::info!("{:?}: P@10 {:.4}, NDCG@10 {:.4}", row.config, row.precision_at_10, row.ndcg_at_10);
        rows.push(row);
    }
    Ok(rows)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed, users, items } => {
            if users < 10 || items < 10 {
                return Err(BenchError::Usage("--users and --items must be at least 10".into()));
            }
            let d = generate_synthetic(&SynthConfig::new(users, items, seed));
            write_dataset_dir(&out, &Dataset { interactions: d.interactions, corpus: d.corpus })
        }
        Command::Train { run, out } => {
            let format = parse_format(&run.format)?;
            let text = run.config.as_deref().map(read).transpose()?;
            let rows = run.rows.clone().or_else(|| text.is_none().then(|| "hybrid".to_owned()));
            let configs = select_configs(text.as_deref(), rows.as_deref(), run.seed)?;
            if configs.len() != 1 {
                return Err(BenchError::Usage("train takes exactly one row".into()));
            }
            let data = prepared(&run, &configs)?;
            let outcome = Runner::new(&data).run(&configs[0])?;
            save_model(&out, &outcome.params, Some(&data.graph), configs[0].flags.quantize)?;
            emit_report(&[outcome.row], format, Path::new("-"))
        }
        Command::Bench { run, out } => {
            let format = parse_format(&run.format)?;
            let text = run.config.as_deref().map(read).transpose()?;
            let configs = select_configs(text.as_deref(), run.rows.as_deref(), run.seed)?;
            let data = prepared(&run, &configs)?;
            let rows = run_rows(&mut Runner::new(&data), &configs)?;
            emit_report(&rows, format, &out)
        }
        Command::Report { input, format, tradeoff, out } => {
            let rows = parse_csv(&read(&input)?).map_err(|e| match e {
                BenchError::Data { line, msg, .. } => BenchError::Data { path: input.display().to_string(), line, msg },
                e => e,
            })?;
            if tradeoff {
                let text = render_tradeoff_csv(&rows);
                if out.as_os_str() == "-" {
                    print!("{text}");
                    return Ok(());
                }
                return fs::write(&out, text).map_err(|e| BenchError::io(&out, e));
            }
            emit_report(&rows, parse_format(&format)?, &out)
        }
    }
}
