//! CSV tables written by the harness.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing a
//! table back yields bit-identical values.

use std::io::Write;

use anyhow::{bail, Context, Result};
use profit_core::ProfitStepTrace;

pub const RESULTS_HEADER: [&str; 6] = ["strategy", "seed", "original_error", "new_error", "steps", "wall_time_s"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "strategy",
    "seeds",
    "original_mean",
    "original_stderr",
    "original_best",
    "new_mean",
    "new_stderr",
    "new_best",
];
pub const SWEEP_HEADER: [&str; 9] =
    ["axis", "value", "strategy", "seed", "original_error", "new_error", "steps", "batches_consumed", "wall_time_s"];
pub const TRACE_HEADER: [&str; 8] =
    ["step", "omega", "projected", "degenerate", "delta_norm", "g_norm", "update_norm", "batches_consumed"];
pub const METRICS_HEADER: [&str; 5] = ["phase", "step", "batch_loss", "original_error", "new_error"];
pub const GRID_HEADER: [&str; 4] = ["x1", "x2", "prediction", "target"];

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn to_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    w.into_inner().context("flushing csv buffer")
}

fn records(text: &[u8], header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text);
    let got = r.headers()?.clone();
    if got.iter().ne(header.iter().copied()) {
        bail!("unexpected csv header {:?}", got.iter().collect::<Vec<_>>());
    }
    Ok(r.records().collect::<Result<_, _>>()?)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let raw = rec.get(i).context("short csv row")?;
    raw.parse().with_context(|| format!("bad csv field `{raw}`"))
}

/// One trained model evaluated on both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// `baseline`, `full`, `head` or `profit`.
    pub strategy: String,
    pub seed: u64,
    pub original_error: f64,
    pub new_error: f64,
    pub steps: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// Mean, standard error and best (lowest) value over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub stderr: f64,
    pub best: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, best: values.iter().copied().fold(f64::INFINITY, f64::min) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub seeds: usize,
    pub original: Stats,
    pub new: Stats,
}

impl ResultsTable {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        to_bytes(
            &RESULTS_HEADER,
            self.rows.iter().map(|r| {
                [
                    r.strategy.clone(),
                    r.seed.to_string(),
                    float(r.original_error),
                    float(r.new_error),
                    r.steps.to_string(),
                    float(r.wall_time_s),
                ]
            }),
        )
    }

    pub fn from_csv(text: &[u8]) -> Result<Self> {
        let rows = records(text, &RESULTS_HEADER)?
            .iter()
            .map(|rec| {
                Ok(ResultRow {
                    strategy: field(rec, 0)?,
                    seed: field(rec, 1)?,
                    original_error: field(rec, 2)?,
                    new_error: field(rec, 3)?,
                    steps: field(rec, 4)?,
                    wall_time_s: field(rec, 5)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn rows_for<'a>(&'a self, strategy: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn row(&self, strategy: &str, seed: u64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.seed == seed)
    }

    /// One row per strategy, in order of first appearance.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.strategy.as_str()) {
                order.push(&r.strategy);
            }
        }
        order
            .into_iter()
            .map(|s| {
                let orig: Vec<f64> = self.rows_for(s).map(|r| r.original_error).collect();
                let new: Vec<f64> = self.rows_for(s).map(|r| r.new_error).collect();
                SummaryRow { strategy: s.to_owned(), seeds: orig.len(), original: Stats::of(&orig), new: Stats::of(&new) }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        to_bytes(
            &SUMMARY_HEADER,
            self.summary().into_iter().map(|s| {
                [
                    s.strategy,
                    s.seeds.to_string(),
                    float(s.original.mean),
                    float(s.original.stderr),
                    float(s.original.best),
                    float(s.new.mean),
                    float(s.new.stderr),
                    float(s.new.best),
                ]
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub strategy: String,
    pub seed: u64,
    pub original_error: f64,
    pub new_error: f64,
    pub steps: u64,
    pub batches_consumed: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        to_bytes(
            &SWEEP_HEADER,
            self.rows.iter().map(|r| {
                [
                    r.axis.clone(),
                    float(r.value),
                    r.strategy.clone(),
                    r.seed.to_string(),
                    float(r.original_error),
                    float(r.new_error),
                    r.steps.to_string(),
                    r.batches_consumed.to_string(),
                    float(r.wall_time_s),
                ]
            }),
        )
    }

    pub fn from_csv(text: &[u8]) -> Result<Self> {
        let rows = records(text, &SWEEP_HEADER)?
            .iter()
            .map(|rec| {
                Ok(SweepRow {
                    axis: field(rec, 0)?,
                    value: field(rec, 1)?,
                    strategy: field(rec, 2)?,
                    seed: field(rec, 3)?,
                    original_error: field(rec, 4)?,
                    new_error: field(rec, 5)?,
                    steps: field(rec, 6)?,
                    batches_consumed: field(rec, 7)?,
                    wall_time_s: field(rec, 8)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    /// Distinct swept values in table order.
    pub fn values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.value) {
                out.push(r.value);
            }
        }
        out
    }

    /// Seed-mean (original, new) error for one swept value.
    pub fn mean_errors(&self, value: f64) -> (f64, f64) {
        let cell: Vec<&SweepRow> = self.rows.iter().filter(|r| r.value == value).collect();
        let n = cell.len() as f64;
        (cell.iter().map(|r| r.original_error).sum::<f64>() / n, cell.iter().map(|r| r.new_error).sum::<f64>() / n)
    }
}

pub fn trace_csv(traces: &[ProfitStepTrace]) -> Result<Vec<u8>> {
    to_bytes(
        &TRACE_HEADER,
        traces.iter().enumerate().map(|(i, t)| {
            [
                (i + 1).to_string(),
                float(t.omega),
                t.projected.to_string(),
                t.degenerate.to_string(),
                float(t.delta_norm),
                float(t.g_norm),
                float(t.update_norm),
                t.batches_consumed.to_string(),
            ]
        }),
    )
}

/// Parsed back from [`trace_csv`].
pub fn parse_trace_csv(text: &[u8]) -> Result<Vec<ProfitStepTrace>> {
    records(text, &TRACE_HEADER)?
        .iter()
        .map(|rec| {
            Ok(ProfitStepTrace {
                omega: field(rec, 1)?,
                projected: field(rec, 2)?,
                degenerate: field(rec, 3)?,
                delta_norm: field(rec, 4)?,
                g_norm: field(rec, 5)?,
                update_norm: field(rec, 6)?,
                batches_consumed: field(rec, 7)?,
            })
        })
        .collect()
}

/// A row of the per-cadence training metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub phase: &'static str,
    pub step: usize,
    pub batch_loss: Option<f64>,
    pub original_error: f64,
    pub new_error: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    to_bytes(
        &METRICS_HEADER,
        rows.iter().map(|r| {
            [
                r.phase.to_owned(),
                r.step.to_string(),
                r.batch_loss.map(float).unwrap_or_default(),
                float(r.original_error),
                float(r.new_error),
            ]
        }),
    )
}

pub fn grid_csv(points: impl Iterator<Item = [f64; 2]>, predictions: &[f64], targets: &[f64]) -> Result<Vec<u8>> {
    to_bytes(
        &GRID_HEADER,
        points.zip(predictions).zip(targets).map(|((p, y), t)| [float(p[0]), float(p[1]), float(*y), float(*t)]),
    )
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
