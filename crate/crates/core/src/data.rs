//! Price/volume ingestion, min-max scaling and rolling-window construction.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW_LENGTH: usize = 60;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.85;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("dates are not increasing at row {row}: {date} follows {previous}")]
    NonMonotoneDates {
        row: usize,
        previous: String,
        date: String,
    },
    #[error("price table is empty")]
    EmptyTable,
    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },
    #[error("negative volume {value} for {ticker} on {date}")]
    NegativeVolume {
        ticker: String,
        date: String,
        value: f64,
    },
    #[error("duplicate row for {ticker} on {date}")]
    DuplicateRow { ticker: String, date: String },
    #[error("market ticker `{0}` not present in input")]
    MissingMarket(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("degenerate range: min == max == {0}")]
    DegenerateRange(f64),
    #[error("series too short: {len} points, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("split fraction {0} outside (0, 1)")]
    InvalidSplit(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Aligned daily close/volume panel plus the market index.
///
/// `close` and `volume` are stored day-major: `close[day][ticker]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    pub dates: Vec<String>,
    pub close: Vec<Vec<f64>>,
    pub volume: Vec<Vec<f64>>,
    pub market: Vec<f64>,
    /// Tickers removed at load because they lacked a complete history.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl PriceTable {
    /// Assemble a table from per-ticker columns, checking every invariant.
    pub fn from_columns(
        dates: Vec<String>,
        market: Vec<f64>,
        series: Vec<(String, Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        if dates.is_empty() || series.is_empty() {
            return Err(DataError::EmptyTable);
        }
        check_increasing(&dates)?;
        for (day, &level) in market.iter().enumerate() {
            if !(level > 0.0) {
                return Err(DataError::NonPositivePrice {
                    ticker: "<market>".into(),
                    date: dates[day].clone(),
                    value: level,
                });
            }
        }
        let n_days = dates.len();
        let mut close = vec![Vec::with_capacity(series.len()); n_days];
        let mut volume = vec![Vec::with_capacity(series.len()); n_days];
        let mut tickers = Vec::with_capacity(series.len());
        for (ticker, prices, vols) in series {
            if prices.len() != n_days || vols.len() != n_days || market.len() != n_days {
                return Err(DataError::Parse {
                    row: 0,
                    message: format!("column length mismatch for {ticker}"),
                });
            }
            for day in 0..n_days {
                validate_cell(&ticker, &dates[day], prices[day], vols[day])?;
                close[day].push(prices[day]);
                volume[day].push(vols[day]);
            }
            tickers.push(ticker);
        }
        Ok(Self {
            tickers,
            dates,
            close,
            volume,
            market,
            dropped: Vec::new(),
        })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn close_series(&self, ticker: usize) -> Vec<f64> {
        self.close.iter().map(|row| row[ticker]).collect()
    }

    pub fn volume_series(&self, ticker: usize) -> Vec<f64> {
        self.volume.iter().map(|row| row[ticker]).collect()
    }

    /// Write the table in the long `date,ticker,close,volume` layout, with the
    /// market index emitted as ticker `market_ticker` (volume 0).
    pub fn write_long_csv<W: std::io::Write>(&self, writer: W, market_ticker: &str) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["date", "ticker", "close", "volume"])?;
        for (day, date) in self.dates.iter().enumerate() {
            out.write_record([
                date.as_str(),
                market_ticker,
                &self.market[day].to_string(),
                "0",
            ])?;
            for (k, ticker) in self.tickers.iter().enumerate() {
                out.write_record([
                    date.as_str(),
                    ticker.as_str(),
                    &self.close[day][k].to_string(),
                    &self.volume[day][k].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn validate_cell(ticker: &str, date: &str, close: f64, volume: f64) -> Result<()> {
    if !(close > 0.0) || !close.is_finite() {
        return Err(DataError::NonPositivePrice {
            ticker: ticker.into(),
            date: date.into(),
            value: close,
        });
    }
    if !(volume >= 0.0) || !volume.is_finite() {
        return Err(DataError::NegativeVolume {
            ticker: ticker.into(),
            date: date.into(),
            value: volume,
        });
    }
    Ok(())
}

fn check_increasing(dates: &[String]) -> Result<()> {
    let parsed = dates
        .iter()
        .enumerate()
        .map(|(row, d)| parse_date(d, row))
        .collect::<Result<Vec<_>>>()?;
    for (row, pair) in parsed.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(DataError::NonMonotoneDates {
                row: row + 1,
                previous: dates[row].clone(),
                date: dates[row + 1].clone(),
            });
        }
    }
    Ok(())
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| DataError::Parse {
        row,
        message: format!("bad date `{s}`: {e}"),
    })
}

/// Input layout of a price file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// `date,ticker,close,volume`, one row per (date, ticker).
    #[default]
    Long,
    /// `date,<TICKER>,<TICKER>_volume,...`: one close column per ticker and an
    /// optional `_volume` companion column (absent volume reads as 0).
    Wide,
}

/// Column mapping for [`load_price_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub layout: CsvLayout,
    pub date_column: String,
    pub ticker_column: String,
    pub close_column: String,
    pub volume_column: String,
    /// Ticker (long layout) or column (wide layout) holding the market index.
    pub market_ticker: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            layout: CsvLayout::Long,
            date_column: "date".into(),
            ticker_column: "ticker".into(),
            close_column: "close".into(),
            volume_column: "volume".into(),
            market_ticker: "MARKET".into(),
        }
    }
}

pub fn load_price_table(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PriceTable> {
    let file = std::fs::File::open(path)?;
    read_price_table(file, schema)
}

/// Parse a price table from any reader; see [`CsvLayout`] for the formats.
///
/// The calendar is the set of days on which the market index is quoted.
/// Tickers missing any calendar day are dropped and listed in
/// [`PriceTable::dropped`]; rows on non-calendar days are ignored.
pub fn read_price_table<R: Read>(reader: R, schema: &CsvSchema) -> Result<PriceTable> {
    match schema.layout {
        CsvLayout::Long => read_long(reader, schema),
        CsvLayout::Wide => read_wide(reader, schema),
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn parse_f64(field: &str, row: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| DataError::Parse {
        row,
        message: format!("bad {what} `{field}`: {e}"),
    })
}

type Cells = HashMap<String, BTreeMap<NaiveDate, (f64, f64)>>;

fn read_long<R: Read>(reader: R, schema: &CsvSchema) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_col = column(&headers, &schema.date_column)?;
    let ticker_col = column(&headers, &schema.ticker_column)?;
    let close_col = column(&headers, &schema.close_column)?;
    let volume_col = column(&headers, &schema.volume_column)?;

    let mut cells: Cells = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut previous: Option<(NaiveDate, String)> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let date_str = &record[date_col];
        let date = parse_date(date_str, row)?;
        if let Some((prev, prev_str)) = &previous {
            if date < *prev {
                return Err(DataError::NonMonotoneDates {
                    row,
                    previous: prev_str.clone(),
                    date: date_str.to_string(),
                });
            }
        }
        previous = Some((date, date_str.to_string()));
        let ticker = record[ticker_col].to_string();
        let close = parse_f64(&record[close_col], row, "close")?;
        let volume = parse_f64(&record[volume_col], row, "volume")?;
        if ticker == schema.market_ticker {
            if !(close > 0.0) || !close.is_finite() {
                return Err(DataError::NonPositivePrice {
                    ticker,
                    date: date_str.to_string(),
                    value: close,
                });
            }
        } else {
            validate_cell(&ticker, date_str, close, volume)?;
        }
        let series = cells.entry(ticker.clone()).or_insert_with(|| {
            order.push(ticker.clone());
            BTreeMap::new()
        });
        if series.insert(date, (close, volume)).is_some() {
            return Err(DataError::DuplicateRow {
                ticker,
                date: date_str.to_string(),
            });
        }
    }
    assemble(cells, order, schema)
}

fn read_wide<R: Read>(reader: R, schema: &CsvSchema) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_col = column(&headers, &schema.date_column)?;
    column(&headers, &schema.market_ticker)?;

    // (ticker, close column, optional volume column)
    let mut layout: Vec<(String, usize, Option<usize>)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if idx == date_col || name.ends_with("_volume") {
            continue;
        }
        let vol = headers.iter().position(|h| h == format!("{name}_volume"));
        layout.push((name.to_string(), idx, vol));
    }

    let mut cells: Cells = HashMap::new();
    let order: Vec<String> = layout.iter().map(|(t, _, _)| t.clone()).collect();
    let mut previous: Option<(NaiveDate, String)> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let date_str = &record[date_col];
        let date = parse_date(date_str, row)?;
        if let Some((prev, prev_str)) = &previous {
            if date <= *prev {
                return Err(DataError::NonMonotoneDates {
                    row,
                    previous: prev_str.clone(),
                    date: date_str.to_string(),
                });
            }
        }
        previous = Some((date, date_str.to_string()));
        for (ticker, close_col, vol_col) in &layout {
            let raw = record.get(*close_col).unwrap_or("").trim();
            if raw.is_empty() {
                continue; // gap
            }
            let close = parse_f64(raw, row, "close")?;
            let volume = match vol_col.and_then(|c| record.get(c)) {
                Some(v) if !v.trim().is_empty() => parse_f64(v, row, "volume")?,
                Some(_) => continue,
                None => 0.0,
            };
            if *ticker == schema.market_ticker {
                if !(close > 0.0) {
                    return Err(DataError::NonPositivePrice {
                        ticker: ticker.clone(),
                        date: date_str.to_string(),
                        value: close,
                    });
                }
            } else {
                validate_cell(ticker, date_str, close, volume)?;
            }
            cells
                .entry(ticker.clone())
                .or_default()
                .insert(date, (close, volume));
        }
    }
    assemble(cells, order, schema)
}

fn assemble(mut cells: Cells, order: Vec<String>, schema: &CsvSchema) -> Result<PriceTable> {
    let market = cells
        .remove(&schema.market_ticker)
        .ok_or_else(|| DataError::MissingMarket(schema.market_ticker.clone()))?;
    if market.is_empty() {
        return Err(DataError::EmptyTable);
    }
    let calendar: Vec<NaiveDate> = market.keys().copied().collect();
    let mut tickers = Vec::new();
    let mut dropped = Vec::new();
    let mut columns: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for ticker in order {
        if ticker == schema.market_ticker {
            continue;
        }
        let series = &cells[&ticker];
        let complete: Option<Vec<(f64, f64)>> =
            calendar.iter().map(|d| series.get(d).copied()).collect();
        match complete {
            Some(values) => {
                tickers.push(ticker);
                columns.push(values.into_iter().unzip());
            }
            None => dropped.push(ticker),
        }
    }
    if tickers.is_empty() {
        return Err(DataError::EmptyTable);
    }
    if !dropped.is_empty() {
        log::info!("dropped {} tickers with incomplete histories", dropped.len());
    }
    let n_days = calendar.len();
    let close = (0..n_days)
        .map(|d| columns.iter().map(|(c, _)| c[d]).collect())
        .collect();
    let volume = (0..n_days)
        .map(|d| columns.iter().map(|(_, v)| v[d]).collect())
        .collect();
    Ok(PriceTable {
        tickers,
        dates: calendar.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect(),
        close,
        volume,
        market: market.values().map(|(c, _)| *c).collect(),
        dropped,
    })
}

/// Affine map of a series onto `[0, 1]` fitted from its observed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    min_value: f64,
    max_value: f64,
}

impl NormalizationParams {
    pub fn new(min_value: f64, max_value: f64) -> Result<Self> {
        if !(max_value > min_value) || !min_value.is_finite() || !max_value.is_finite() {
            return Err(DataError::DegenerateRange(min_value));
        }
        Ok(Self {
            min_value,
            max_value,
        })
    }

    /// Fit to the observed min and max of `series`.
    pub fn fit(series: &[f64]) -> Result<Self> {
        if series.is_empty() {
            return Err(DataError::EmptyTable);
        }
        let (lo, hi) = series
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        if hi == lo {
            return Err(DataError::DegenerateRange(lo));
        }
        Self::new(lo, hi)
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn range(&self) -> f64 {
        self.max_value - self.min_value
    }

    /// Values outside the fitted range map outside `[0, 1]`; no clipping.
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min_value) / self.range()
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.range() + self.min_value
    }

    pub fn normalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }

    pub fn denormalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.denormalize(x)).collect()
    }
}

pub fn minmax_normalize(series: &[f64]) -> Result<(Vec<f64>, NormalizationParams)> {
    let params = NormalizationParams::fit(series)?;
    Ok((params.normalize_all(series), params))
}

pub fn denormalize(normalized: &[f64], params: &NormalizationParams) -> Vec<f64> {
    params.denormalize_all(normalized)
}

/// One-step training pair: `window_length - 1` inputs and the next value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair<T> {
    pub start: usize,
    pub input: Vec<T>,
    pub target: T,
}

/// A full-window evaluation segment: the `window_length` values to predict,
/// preceded by the `window_length - 1` real values that seed the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestWindow<T> {
    /// Offset of the first target day, relative to the series passed in.
    pub start: usize,
    pub input: Vec<T>,
    pub target: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingWindowSet<T> {
    pub window_length: usize,
    pub windows: Vec<TrainingPair<T>>,
    pub test_windows: Vec<TestWindow<T>>,
}

impl<T> RollingWindowSet<T> {
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty() && self.test_windows.is_empty()
    }
}

/// Index of the first test day for a series of `len` points.
pub fn split_index(len: usize, split_fraction: f64) -> Result<usize> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(DataError::InvalidSplit(split_fraction));
    }
    Ok((len as f64 * split_fraction).floor() as usize)
}

/// Sliding one-step pairs over `series`, advancing one day at a time.
///
/// Pair `i` uses days `i..i + window_length - 1` as input and day
/// `i + window_length - 1` as target, for `i < len - window_length`, giving
/// `len - window_length` pairs (2380 days at window 60 yield 2320 pairs).
pub fn training_pairs<T: Clone>(series: &[T], window_length: usize) -> Vec<TrainingPair<T>> {
    let count = series.len().saturating_sub(window_length);
    (0..count)
        .map(|i| TrainingPair {
            start: i,
            input: series[i..i + window_length - 1].to_vec(),
            target: series[i + window_length - 1].clone(),
        })
        .collect()
}

/// Disjoint consecutive full windows over `series`.
///
/// The series is cut into `len / window_length` blocks; the first block only
/// seeds the recursion, and every later block is a target window whose input
/// is the last `window_length - 1` days of the block before it.
pub fn segment_windows<T: Clone>(series: &[T], window_length: usize) -> Vec<TestWindow<T>> {
    let blocks = series.len() / window_length;
    (1..blocks)
        .map(|k| {
            let start = k * window_length;
            TestWindow {
                start,
                input: series[start + 1 - window_length..start].to_vec(),
                target: series[start..start + window_length].to_vec(),
            }
        })
        .collect()
}

/// Split `series` at `split_fraction` and build the training pairs and test
/// windows. Returns `(train, test)`.
pub fn make_windows<T: Clone>(
    series: &[T],
    window_length: usize,
    split_fraction: f64,
) -> Result<(RollingWindowSet<T>, RollingWindowSet<T>)> {
    if window_length < 2 || series.len() < 2 * window_length {
        return Err(DataError::SeriesTooShort {
            len: series.len(),
            required: 2 * window_length.max(2),
        });
    }
    let split = split_index(series.len(), split_fraction)?;
    let windows = training_pairs(&series[..split], window_length);
    if windows.is_empty() {
        return Err(DataError::SeriesTooShort {
            len: split,
            required: window_length + 1,
        });
    }
    let test_windows = segment_windows(&series[split..], window_length);
    Ok((
        RollingWindowSet {
            window_length,
            windows,
            test_windows: Vec::new(),
        },
        RollingWindowSet {
            window_length,
            windows: Vec::new(),
            test_windows,
        },
    ))
}
