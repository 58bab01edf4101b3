use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use midlstm_core::pipeline::{
    evaluate, load_data, predict_all, run_backtest, train_all, DataSource, RunConfig, StockPredictions, SynthKind,
};
use midlstm_core::synth::{generate_factor_market, sine_price_table};
use midlstm_core::SynthConfig;

mod artifacts;
mod config;

use artifacts::*;
use config::{resolve, Overrides};

#[derive(Debug, Parser)]
#[command(name = "midlstm", version, about = "Midterm stock prediction and portfolio backtest")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for model initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-stock jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Sine,
    FactorMarket,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic price table as long CSV.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        stocks: Option<usize>,
        /// Seed of the generator, separate from the model seed.
        #[arg(long)]
        data_seed: Option<u64>,
    },
    /// Train per-stock models and write checkpoints.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict every test window from saved checkpoints.
    Predict,
    /// Score saved predictions.
    Evaluate,
    /// Compute portfolio weights from saved predictions.
    Allocate,
    /// Allocate and score on realized prices.
    Backtest,
    /// Summarize metrics and backtest files as markdown.
    Report,
    /// Run every step in order.
    All {
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn synth_config(config: &RunConfig) -> (SynthKind, SynthConfig) {
    match &config.data {
        DataSource::Synth { kind, config } => (*kind, config.clone()),
        DataSource::Csv { .. } => (SynthKind::Sine, SynthConfig::default()),
    }
}

fn run_synth(
    config: &RunConfig,
    kind: Option<KindArg>,
    days: Option<usize>,
    stocks: Option<usize>,
    data_seed: Option<u64>,
) -> Result<()> {
    let (mut synth_kind, mut synth) = synth_config(config);
    match kind {
        Some(KindArg::Sine) => synth_kind = SynthKind::Sine,
        Some(KindArg::FactorMarket) => synth_kind = SynthKind::FactorMarket,
        None => {}
    }
    if let Some(days) = days {
        synth.days = days;
    }
    if let Some(n) = stocks {
        synth.n_stocks = n;
    }
    if let Some(seed) = data_seed {
        synth.seed = seed;
    }
    let table = match synth_kind {
        SynthKind::Sine => sine_price_table(&synth, "SINE")?,
        SynthKind::FactorMarket => generate_factor_market(&synth)?,
    };
    let path = config.output_dir.join(DATA_CSV);
    fs::create_dir_all(&config.output_dir)?;
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    table.write_long_csv(std::io::BufWriter::new(file), "MARKET")?;
    log::info!("wrote {} days x {} tickers to {}", table.n_days(), table.n_tickers(), path.display());
    Ok(())
}

fn run_train(config: &RunConfig) -> Result<()> {
    let table = load_data(config)?;
    if !table.dropped.is_empty() {
        log::warn!("dropped tickers with incomplete history: {}", table.dropped.join(", "));
    }
    let checkpoints = train_all(&table, config)?;
    write_checkpoints(&config.output_dir, &checkpoints)?;
    write_json(&config.output_dir.join(RESOLVED_CONFIG), config)?;
    log::info!("trained {} stocks", checkpoints.len());
    Ok(())
}

fn run_predict(config: &RunConfig) -> Result<()> {
    let table = load_data(config)?;
    let checkpoints = read_checkpoints(&config.output_dir, &table)?;
    let predictions = predict_all(&table, &checkpoints, config)?;
    write_json(&config.output_dir.join(PREDICTIONS_JSON), &predictions)?;
    write_predictions_csv(&config.output_dir.join(PREDICTIONS_CSV), &table, &predictions)?;
    Ok(())
}

fn read_predictions(out: &Path) -> Result<Vec<StockPredictions>> {
    let predictions: Vec<StockPredictions> = read_json(&out.join(PREDICTIONS_JSON))?;
    if predictions.is_empty() {
        bail!("{} holds no stocks", out.join(PREDICTIONS_JSON).display());
    }
    Ok(predictions)
}

fn run_evaluate(config: &RunConfig) -> Result<()> {
    let predictions = read_predictions(&config.output_dir)?;
    let metrics = evaluate(&predictions, config)?;
    write_json(&config.output_dir.join(METRICS_JSON), &metrics)?;
    write_mpa_csv(&config.output_dir.join(MPA_CSV), &metrics)?;
    Ok(())
}

fn run_allocate(config: &RunConfig) -> Result<()> {
    let predictions = read_predictions(&config.output_dir)?;
    let report = run_backtest(&predictions, config)?;
    write_allocations_csv(&config.output_dir.join(ALLOCATIONS_CSV), &report)?;
    Ok(())
}

fn run_backtest_step(config: &RunConfig) -> Result<()> {
    let predictions = read_predictions(&config.output_dir)?;
    let report = run_backtest(&predictions, config)?;
    write_allocations_csv(&config.output_dir.join(ALLOCATIONS_CSV), &report)?;
    write_backtest(&config.output_dir, &report)?;
    Ok(())
}

fn run_report(config: &RunConfig) -> Result<()> {
    let metrics: serde_json::Value = read_json(&config.output_dir.join(METRICS_JSON))?;
    let backtest: serde_json::Value = read_json(&config.output_dir.join(BACKTEST_JSON))?;
    let text = render_report(&metrics, &backtest);
    fs::write(config.output_dir.join(REPORT_MD), &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let epochs = match &cli.command {
        Command::Train { epochs } | Command::All { epochs } => *epochs,
        _ => None,
    };
    let overrides = Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out.clone(),
        epochs,
    };
    let config = resolve(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Synth {
            kind,
            days,
            stocks,
            data_seed,
        } => run_synth(&config, kind, days, stocks, data_seed),
        Command::Train { .. } => run_train(&config),
        Command::Predict => run_predict(&config),
        Command::Evaluate => run_evaluate(&config),
        Command::Allocate => run_allocate(&config),
        Command::Backtest => run_backtest_step(&config),
        Command::Report => run_report(&config),
        Command::All { .. } => {
            run_train(&config)?;
            run_predict(&config)?;
            run_evaluate(&config)?;
            run_backtest_step(&config)?;
            run_report(&config)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
