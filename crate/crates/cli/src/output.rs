//! CSV tables. Numbers use Rust's shortest round-trip formatting with '.' as
//! the decimal separator; quoting follows RFC 4180.

use std::path::{Path, PathBuf};

use mlofi::evaluation::{EvaluationReport, SignificanceTable};
use mlofi::inference::RegressionFit;
use mlofi::sampling::{DaySamples, RegressionProblem};

use crate::{io_error, CliError};

fn num(v: f64) -> String {
    format!("{v}")
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(path: &Path, header: &[String]) -> Result<Table, CliError> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
        writer.write_record(header).map_err(|e| io_error(path, e))?;
        Ok(Table {
            path: path.to_path_buf(),
            writer,
        })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.writer.write_record(fields).map_err(|e| io_error(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush().map_err(|e| io_error(&self.path, e))?;
        Ok(self.path)
    }
}

fn strings<const N: usize>(names: [&str; N]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn coefficient_name(j: usize) -> String {
    if j == 0 {
        "alpha".into()
    } else {
        format!("beta_{j}")
    }
}

/// One row per kept interval. `window` and `subwindow` are 1-based.
pub fn write_samples(path: &Path, days: &[DaySamples], levels: usize, tick: i64) -> Result<(), CliError> {
    let mut header = strings(["date", "window", "subwindow", "start", "end"]);
    header.extend((1..=levels).map(|m| format!("mlofi_{m}")));
    header.extend(strings(["ofi", "buy_volume", "sell_volume", "trade_imbalance", "delta_p_half_ticks"]));
    let mut table = Table::create(path, &header)?;
    for day in days {
        for (j, sample) in day.samples.iter().enumerate() {
            let Some(s) = sample else { continue };
            let (window, sub) = day.grid.split(j);
            let mut row = vec![
                day.date.clone(),
                (window + 1).to_string(),
                (sub + 1).to_string(),
                s.start.to_string(),
                s.end.to_string(),
            ];
            row.extend(s.mlofi.iter().map(i64::to_string));
            row.push(s.ofi.to_string());
            row.push(s.buy_volume.to_string());
            row.push(s.sell_volume.to_string());
            row.push(s.trade_imbalance().to_string());
            row.push(num(s.delta_p_half_ticks(tick)));
            table.row(&row)?;
        }
    }
    table.finish().map(drop)
}

pub fn write_significance(path: &Path, table: &SignificanceTable) -> Result<(), CliError> {
    let mut out = Table::create(
        path,
        &strings(["coefficient", "mean_value", "mean_std_error", "mean_t", "mean_p", "pct_significant"]),
    )?;
    for (j, c) in table.coefficients.iter().enumerate() {
        out.row(&[
            coefficient_name(j),
            num(c.mean_coeff),
            num(c.mean_std_error),
            num(c.mean_t),
            num(c.mean_p),
            num(c.pct_significant),
        ])?;
    }
    out.finish().map(drop)
}

/// Long format: one row per (window, coefficient) with t = value / std_error.
pub fn write_window_fits(path: &Path, problems: &[RegressionProblem], fits: &[RegressionFit]) -> Result<(), CliError> {
    let mut out = Table::create(
        path,
        &strings(["date", "window", "coefficient", "value", "std_error", "t", "p", "r2", "adj_r2", "lambda"]),
    )?;
    for (p, f) in problems.iter().zip(fits) {
        for j in 0..f.coeffs.len() {
            out.row(&[
                p.date.clone(),
                (p.window + 1).to_string(),
                coefficient_name(j),
                num(f.coeffs[j]),
                num(f.std_errors[j]),
                num(f.t_stats[j]),
                num(f.p_values[j]),
                num(f.r2),
                num(f.adj_r2),
                num(f.lambda),
            ])?;
        }
    }
    out.finish().map(drop)
}

/// Writes every table of an evaluation report; returns the paths in order.
pub fn write_report_tables(dir: &Path, report: &EvaluationReport) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let m = report.max_levels;

    let mut t = Table::create(
        &dir.join("rmse_curves.csv"),
        &strings(["method", "levels", "lambda", "in_sample_rmse", "out_sample_rmse"]),
    )?;
    for curve in &report.rmse_curves {
        for p in &curve.points {
            t.row(&[
                curve.method.name().into(),
                p.levels.to_string(),
                num(p.lambda),
                num(p.in_sample_rmse),
                num(p.out_sample_rmse),
            ])?;
        }
    }
    written.push(t.finish()?);

    let mut t = Table::create(&dir.join("r2_curves.csv"), &strings(["method", "levels", "mean_r2", "mean_adj_r2"]))?;
    for curve in &report.r2_curves {
        for p in &curve.points {
            t.row(&[curve.method.name().into(), p.levels.to_string(), num(p.mean_r2), num(p.mean_adj_r2)])?;
        }
    }
    written.push(t.finish()?);

    let mut t = Table::create(
        &dir.join("improvement.csv"),
        &strings(["model", "levels", "out_sample_rmse", "improvement_pct"]),
    )?;
    for row in &report.improvement {
        t.row(&[
            row.model.clone(),
            row.levels.to_string(),
            num(row.out_sample_rmse),
            num(row.improvement_pct),
        ])?;
    }
    written.push(t.finish()?);

    let mut t = Table::create(&dir.join("lambda.csv"), &strings(["levels", "lambda_hat"]))?;
    for (i, l) in report.lambda_hat.iter().enumerate() {
        t.row(&[(i + 1).to_string(), num(*l)])?;
    }
    written.push(t.finish()?);

    for table in &report.significance {
        let path = dir.join(format!("significance_{}.csv", table.method.name()));
        write_significance(&path, table)?;
        written.push(path);
    }

    let mut header = strings(["method", "window", "fits"]);
    header.extend((0..=m).map(coefficient_name));
    let mut t = Table::create(&dir.join("seasonality.csv"), &header)?;
    for (method, rows) in &report.seasonality {
        for row in rows {
            let mut fields = vec![method.name().to_string(), (row.window + 1).to_string(), row.fits.to_string()];
            fields.extend(row.mean_coeffs.iter().map(|v| num(*v)));
            t.row(&fields)?;
        }
    }
    written.push(t.finish()?);

    let mut header = strings(["level"]);
    header.extend((1..=m).map(|j| format!("level_{j}")));
    let mut t = Table::create(&dir.join("correlation.csv"), &header)?;
    for (i, row) in report.diagnostics.corr.iter().enumerate() {
        let mut fields = vec![(i + 1).to_string()];
        fields.extend(row.iter().map(|c| c.map(num).unwrap_or_default()));
        t.row(&fields)?;
    }
    written.push(t.finish()?);

    let mut t = Table::create(&dir.join("eigenvalues.csv"), &strings(["rank", "eigenvalue"]))?;
    for (i, e) in report.diagnostics.eigenvalues.iter().enumerate() {
        t.row(&[(i + 1).to_string(), num(*e)])?;
    }
    written.push(t.finish()?);

    if let Some(summary) = &report.book_summary {
        let mut header = strings(["weighting", "mid", "spread_ticks"]);
        header.extend((1..=summary.duration_weighted.bid_depth.len()).map(|j| format!("bid_depth_{j}")));
        header.extend((1..=summary.duration_weighted.ask_depth.len()).map(|j| format!("ask_depth_{j}")));
        let mut t = Table::create(&dir.join("book_summary.csv"), &header)?;
        for (name, means) in [("duration", &summary.duration_weighted), ("event", &summary.event_sampled)] {
            let mut fields = vec![name.to_string(), num(means.mid), num(means.spread)];
            fields.extend(means.bid_depth.iter().map(|v| num(*v)));
            fields.extend(means.ask_depth.iter().map(|v| num(*v)));
            t.row(&fields)?;
        }
        written.push(t.finish()?);

        let mut t = Table::create(
            &dir.join("flow_concentration.csv"),
            &strings(["basis", "within_spread_pct", "at_best_pct", "deeper_pct"]),
        )?;
        for (name, c) in [("events", &summary.event_concentration), ("volume", &summary.volume_concentration)] {
            t.row(&[name.to_string(), num(c.within_spread), num(c.at_best), num(c.deeper)])?;
        }
        written.push(t.finish()?);
    }
    Ok(written)
}
