//! Files exchanged between subcommands, all under the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use midlstm_core::pipeline::{Method, MetricsReport, StockCheckpoint, StockPredictions, CHECKPOINT_VERSION};
use midlstm_core::portfolio::{AllocationMethod, BacktestReport};
use midlstm_core::PriceTable;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const DATA_CSV: &str = "data.csv";
pub const RESOLVED_CONFIG: &str = "config.json";
pub const PREDICTIONS_JSON: &str = "predictions.json";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const MPA_CSV: &str = "mpa.csv";
pub const ALLOCATIONS_CSV: &str = "allocations.csv";
pub const BACKTEST_JSON: &str = "backtest.json";
pub const RETURNS_CSV: &str = "backtest_returns.csv";
pub const SHARPE_CSV: &str = "backtest_sharpe.csv";
pub const FRONTIER_CSV: &str = "frontier.csv";
pub const REPORT_MD: &str = "report.md";
pub const MODEL_JSON: &str = "model.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}; run the earlier step first", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Directory name for a ticker; path separators are replaced.
pub fn ticker_dir(out: &Path, ticker: &str) -> PathBuf {
    let safe: String = ticker
        .chars()
        .map(|c| if c == '/' || c == '\\' || c == '.' && ticker.chars().all(|d| d == '.') { '_' } else { c })
        .collect();
    out.join(safe)
}

pub fn write_checkpoints(out: &Path, checkpoints: &[StockCheckpoint]) -> Result<()> {
    for ck in checkpoints {
        write_json(&ticker_dir(out, &ck.ticker).join(MODEL_JSON), ck)?;
    }
    Ok(())
}

pub fn read_checkpoints(out: &Path, table: &PriceTable) -> Result<Vec<StockCheckpoint>> {
    table
        .tickers
        .iter()
        .map(|ticker| {
            let ck: StockCheckpoint = read_json(&ticker_dir(out, ticker).join(MODEL_JSON))?;
            if ck.format_version != CHECKPOINT_VERSION {
                bail!(
                    "checkpoint for {ticker} has format {} but this build reads {CHECKPOINT_VERSION}",
                    ck.format_version
                );
            }
            Ok(ck)
        })
        .collect()
}

pub fn write_predictions_csv(path: &Path, table: &PriceTable, predictions: &[StockPredictions]) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(["date", "ticker", "method", "window", "day", "predicted", "real", "state"])?;
    for stock in predictions {
        for win in &stock.windows {
            for method in Method::ALL {
                let path = &win.paths[&method];
                for d in 0..win.real.len() {
                    out.write_record([
                        table.dates[win.start_day + d].as_str(),
                        stock.ticker.as_str(),
                        method.as_str(),
                        &win.window.to_string(),
                        &d.to_string(),
                        &path[d].to_string(),
                        &win.real[d].to_string(),
                        &win.states[d].to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_mpa_csv(path: &Path, metrics: &MetricsReport) -> Result<()> {
    let mut out = csv_writer(path)?;
    let mut header = vec!["window".to_string(), "day".to_string()];
    header.extend(Method::ALL.iter().map(|m| m.as_str().to_string()));
    out.write_record(&header)?;
    let days = metrics.mpa_by_day.values().next().map_or(0, Vec::len);
    for t in 0..days {
        let mut row = vec![(t / metrics.window_length + 1).to_string(), (t % metrics.window_length).to_string()];
        row.extend(Method::ALL.iter().map(|m| metrics.mpa_by_day[m][t].to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn method_name(method: AllocationMethod) -> &'static str {
    match method {
        AllocationMethod::MeanVariance => "mean_variance",
        AllocationMethod::MinimumVariance => "minimum_variance",
    }
}

pub fn write_allocations_csv(path: &Path, report: &BacktestReport) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(["window", "method", "ticker", "weight"])?;
    for win in &report.windows {
        for alloc in &win.allocations {
            for (ticker, w) in win.selected.iter().zip(&alloc.weights) {
                out.write_record([
                    &win.window.to_string(),
                    method_name(alloc.method),
                    ticker,
                    &w.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per method, one column per window, plus average and best; the
/// `field` picks window return or realized Sharpe.
fn write_window_table(path: &Path, report: &BacktestReport, sharpe: bool) -> Result<()> {
    let mut out = csv_writer(path)?;
    let mut header = vec!["method".to_string()];
    header.extend(report.windows.iter().map(|w| format!("R-{}", w.window)));
    header.push("average".into());
    if !sharpe {
        header.push("best".into());
    }
    out.write_record(&header)?;
    for summary in &report.summary {
        let mut row = vec![method_name(summary.method).to_string()];
        for win in &report.windows {
            let value = win
                .allocations
                .iter()
                .find(|a| a.method == summary.method)
                .map_or(0.0, |a| if sharpe { a.realized_sharpe } else { a.window_return });
            row.push(value.to_string());
        }
        if sharpe {
            row.push(summary.average_sharpe.to_string());
        } else {
            row.push(summary.average_return.to_string());
            row.push(summary.best_return.to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_backtest(out_dir: &Path, report: &BacktestReport) -> Result<()> {
    write_json(&out_dir.join(BACKTEST_JSON), report)?;
    write_window_table(&out_dir.join(RETURNS_CSV), report, false)?;
    write_window_table(&out_dir.join(SHARPE_CSV), report, true)?;
    let mut out = csv_writer(&out_dir.join(FRONTIER_CSV))?;
    out.write_record(["window", "volatility", "expected_return", "sharpe"])?;
    for p in &report.frontier {
        out.write_record([
            p.window.to_string(),
            p.volatility.to_string(),
            p.expected_return.to_string(),
            p.sharpe.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Markdown summary of the metrics and backtest files.
pub fn render_report(metrics: &serde_json::Value, backtest: &serde_json::Value) -> String {
    let mut s = String::from("# Pipeline report\n\n## Prediction\n\n");
    s.push_str("| method | midterm MPA | TA | HC midterm MPA | HC TA |\n|---|---|---|---|---|\n");
    if let Some(methods) = metrics["methods"].as_object() {
        for (name, m) in methods {
            s.push_str(&format!(
                "| {name} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
                m["midterm_mean_mpa"].as_f64().unwrap_or(f64::NAN),
                m["trend_accuracy"].as_f64().unwrap_or(f64::NAN),
                m["hc_midterm_mean_mpa"].as_f64().unwrap_or(f64::NAN),
                m["hc_trend_accuracy"].as_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    s.push_str("\n## Allocation\n\n| method | average return | best return | average Sharpe |\n|---|---|---|---|\n");
    if let Some(summary) = backtest["summary"].as_array() {
        for m in summary {
            s.push_str(&format!(
                "| {} | {:.2}% | {:.2}% | {:.3} |\n",
                m["method"].as_str().unwrap_or("?"),
                100.0 * m["average_return"].as_f64().unwrap_or(f64::NAN),
                100.0 * m["best_return"].as_f64().unwrap_or(f64::NAN),
                m["average_sharpe"].as_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    s
}
