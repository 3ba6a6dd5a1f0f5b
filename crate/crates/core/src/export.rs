//! CSV and key-value artifacts.
//!
//! Numbers use the shortest decimal that parses back to the same `f64`.
//! Agent, coordinate and realization indices are 1-based.

use std::io::Write;

use crate::error::{Error, Result};
use crate::evaluation::{Histogram, OosReport, ScenarioComparison};
use crate::game::GameSpec;
use crate::solver::{SolveReport, SweepAggregate};

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    Ok(out)
}

fn finish<W: Write>(out: csv::Writer<W>) -> Result<()> {
    out.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?
        .flush()?;
    Ok(())
}

/// `key = value` lines in the given order.
pub fn write_key_values<W: Write>(mut w: W, pairs: &[(String, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

/// `t, agent, coordinate, value` for every recorded iterate.
pub fn write_trajectory<W: Write>(w: W, spec: &GameSpec, report: &SolveReport) -> Result<()> {
    let mut out = writer(w, &["t", "agent", "coordinate", "value"])?;
    for (t, x) in report.record_times.iter().zip(&report.trajectory) {
        for i in 0..spec.num_agents() {
            for (c, v) in x[spec.block(i)].iter().enumerate() {
                out.write_record([t.to_string(), (i + 1).to_string(), (c + 1).to_string(), num(*v)])
                    .map_err(csv_err)?;
            }
        }
    }
    finish(out)
}

/// `t, residual, avg_sq_error`; the last column is empty without a reference.
pub fn write_metrics<W: Write>(w: W, report: &SolveReport) -> Result<()> {
    let mut out = writer(w, &["t", "residual", "avg_sq_error"])?;
    for (k, t) in report.record_times.iter().enumerate() {
        let avg = report.avg_sq_error.as_ref().map_or(String::new(), |a| num(a[k]));
        out.write_record([t.to_string(), num(report.residuals[k]), avg])
            .map_err(csv_err)?;
    }
    finish(out)
}

/// Pointwise statistics of a seed sweep.
pub fn write_sweep_metrics<W: Write>(w: W, agg: &SweepAggregate) -> Result<()> {
    let mut out = writer(
        w,
        &["t", "mean_residual", "median_residual", "min_residual", "max_residual", "mean_avg_sq_error"],
    )?;
    for (k, t) in agg.record_times.iter().enumerate() {
        let avg = agg.mean_avg_sq_error.as_ref().map_or(String::new(), |a| num(a[k]));
        out.write_record([
            t.to_string(),
            num(agg.mean_residual[k]),
            num(agg.median_residual[k]),
            num(agg.min_residual[k]),
            num(agg.max_residual[k]),
            avg,
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

/// `scenario, seed, realization, total_cost`
pub fn write_realizations<'a, W: Write>(w: W, reports: impl IntoIterator<Item = &'a OosReport>) -> Result<()> {
    let mut out = writer(w, &["scenario", "seed", "realization", "total_cost"])?;
    for r in reports {
        for (k, v) in r.realizations.iter().enumerate() {
            out.write_record([r.label.clone(), r.macro_seed.to_string(), (k + 1).to_string(), num(*v)])
                .map_err(csv_err)?;
        }
    }
    finish(out)
}

/// One row per report. `in_sample_check` is `PASS`/`FAIL` for unshifted
/// test laws and empty otherwise.
pub fn write_oos_summary<'a, W: Write>(
    w: W,
    reports: impl IntoIterator<Item = (&'a OosReport, bool)>,
) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "scenario",
            "seed",
            "count",
            "mean",
            "std_dev",
            "q05",
            "q50",
            "q95",
            "in_sample_expected",
            "in_sample_check",
        ],
    )?;
    for (r, unshifted) in reports {
        let s = &r.summary;
        let check = match (unshifted, r.consistent_with_training()) {
            (false, _) => "",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        out.write_record([
            r.label.clone(),
            r.macro_seed.to_string(),
            s.count.to_string(),
            num(s.mean),
            num(s.std_dev),
            num(s.q05),
            num(s.q50),
            num(s.q95),
            num(r.in_sample_expected),
            check.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

/// Per-scenario statistics over seeds, one row per scenario.
pub fn write_sweep_summary<'a, W: Write>(
    w: W,
    comparisons: impl IntoIterator<Item = &'a ScenarioComparison>,
) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "scenario",
            "seeds",
            "mean_of_means",
            "sd_of_means",
            "pooled_mean",
            "pooled_std_dev",
            "pooled_q05",
            "pooled_q50",
            "pooled_q95",
        ],
    )?;
    for s in comparisons.into_iter().flat_map(|c| &c.summaries) {
        out.write_record([
            s.label.clone(),
            s.seed_means.count.to_string(),
            num(s.seed_means.mean),
            num(s.seed_means.std_dev),
            num(s.pooled.mean),
            num(s.pooled.std_dev),
            num(s.pooled.q05),
            num(s.pooled.q50),
            num(s.pooled.q95),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

/// Paired mean differences `first - second` with standard errors.
pub fn write_differences<'a, W: Write>(
    w: W,
    comparisons: impl IntoIterator<Item = &'a ScenarioComparison>,
) -> Result<()> {
    let mut out = writer(
        w,
        &["first", "second", "mean_difference", "std_error", "first_not_greater", "seeds"],
    )?;
    for d in comparisons.into_iter().flat_map(|c| &c.differences) {
        out.write_record([
            d.first.clone(),
            d.second.clone(),
            num(d.mean_difference),
            num(d.std_error),
            d.first_not_greater.to_string(),
            d.seeds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

/// `scenario, bin_lo, bin_hi, count`
pub fn write_histograms<'a, W: Write>(
    w: W,
    histograms: impl IntoIterator<Item = (&'a str, &'a Histogram)>,
) -> Result<()> {
    let mut out = writer(w, &["scenario", "bin_lo", "bin_hi", "count"])?;
    for (label, h) in histograms {
        for (k, c) in h.counts.iter().enumerate() {
            out.write_record([label.to_string(), num(h.edges[k]), num(h.edges[k + 1]), c.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(out)
}
