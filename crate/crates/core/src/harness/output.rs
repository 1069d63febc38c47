//! Flat-file outputs.
//!
//! Trace CSV: `t, epoch, x_0..x_{d-1}, price, v, w, delta,
//! inst_regret_analytic, cum_regret_analytic, inst_regret_realized,
//! cum_regret_realized`.
//!
//! Summary CSV: `policy, T, replication, seed, final_regret_analytic,
//! final_regret_realized, runtime_ms`. Median rows carry `replication =
//! median` and the root seed. Floats use 17 significant digits; a metric
//! that was not computed is an empty field.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::rate::{fit_rate, RateFit};
use super::{RegretTrace, RunOutcome};

pub const SUMMARY_HEADER: [&str; 7] =
    ["policy", "T", "replication", "seed", "final_regret_analytic", "final_regret_realized", "runtime_ms"];

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_trace_csv<W: Write>(trace: &RegretTrace, out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "epoch".to_string()];
    header.extend((0..trace.dim).map(|i| format!("x_{i}")));
    header.extend(
        [
            "price",
            "v",
            "w",
            "delta",
            "inst_regret_analytic",
            "cum_regret_analytic",
            "inst_regret_realized",
            "cum_regret_realized",
        ]
        .map(String::from),
    );
    wr.write_record(&header).map_err(csv_err)?;
    for r in &trace.records {
        let mut row = vec![r.t.to_string(), r.epoch.to_string()];
        row.extend(r.x.iter().map(|&c| format_float(c)));
        row.extend([r.price, r.v, r.w, r.delta].map(format_float));
        row.extend(
            [r.inst_regret_analytic, r.cum_regret_analytic, r.inst_regret_realized, r.cum_regret_realized].map(opt),
        );
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub horizon: usize,
    /// `None` on the median-over-replications row.
    pub replication: Option<usize>,
    pub seed: u64,
    pub final_regret_analytic: Option<f64>,
    pub final_regret_realized: Option<f64>,
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

impl SweepSummary {
    /// Cell rows in input order, each `(horizon, policy)` block followed by
    /// its median row. `outcomes` must be grouped in blocks of
    /// `replications`.
    pub fn from_outcomes(outcomes: &[RunOutcome], replications: usize, root_seed: u64) -> Self {
        let mut rows = Vec::with_capacity(outcomes.len() + outcomes.len() / replications.max(1));
        for block in outcomes.chunks(replications.max(1)) {
            for o in block {
                rows.push(SummaryRow {
                    policy: o.policy.clone(),
                    horizon: o.horizon,
                    replication: Some(o.replication),
                    seed: o.seed,
                    final_regret_analytic: o.final_regret_analytic,
                    final_regret_realized: o.final_regret_realized,
                    runtime_ms: o.runtime_ms,
                });
            }
            let pick = |f: fn(&RunOutcome) -> Option<f64>| median(block.iter().filter_map(f).collect());
            rows.push(SummaryRow {
                policy: block[0].policy.clone(),
                horizon: block[0].horizon,
                replication: None,
                seed: root_seed,
                final_regret_analytic: pick(|o| o.final_regret_analytic),
                final_regret_realized: pick(|o| o.final_regret_realized),
                runtime_ms: pick(|o| o.runtime_ms),
            });
        }
        Self { rows }
    }

    pub fn policies(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.policy) {
                seen.push(r.policy.clone());
            }
        }
        seen
    }

    /// `(T, median analytic regret)` for one policy, in horizon order.
    pub fn medians(&self, policy: &str) -> Vec<(usize, f64)> {
        let mut pts: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.policy == policy && r.replication.is_none())
            .filter_map(|r| r.final_regret_analytic.map(|v| (r.horizon, v)))
            .collect();
        pts.sort_by_key(|p| p.0);
        pts
    }

    pub fn rate_fit(&self, policy: &str) -> Result<RateFit> {
        fit_rate(&self.medians(policy))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(SUMMARY_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record([
                r.policy.clone(),
                r.horizon.to_string(),
                r.replication.map_or_else(|| "median".to_string(), |i| i.to_string()),
                r.seed.to_string(),
                opt(r.final_regret_analytic),
                opt(r.final_regret_realized),
                opt(r.runtime_ms),
            ])
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

fn parse_opt(field: &str, what: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::Io(format!("line {line}: bad {what} {field:?}")))
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<SweepSummary> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Io(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Io(format!("line {line}: bad {what}"));
        rows.push(SummaryRow {
            policy: rec[0].to_string(),
            horizon: rec[1].parse().map_err(|_| bad("T"))?,
            replication: match &rec[2] {
                "median" => None,
                s => Some(s.parse().map_err(|_| bad("replication"))?),
            },
            seed: rec[3].parse().map_err(|_| bad("seed"))?,
            final_regret_analytic: parse_opt(&rec[4], "final_regret_analytic", line)?,
            final_regret_realized: parse_opt(&rec[5], "final_regret_realized", line)?,
            runtime_ms: parse_opt(&rec[6], "runtime_ms", line)?,
        });
    }
    Ok(SweepSummary { rows })
}
