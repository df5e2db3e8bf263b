//! CSV reports. CSV is the canonical format (stable, diffable); the human
//! table printed alongside is derived from the same rows and never parsed.

use std::path::Path;

use lowrank_shield::defense::DefenseReport;
use lowrank_shield::{Error, Result};

/// One benchmark row: a defense config crossed with one attack.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub config: String,
    pub attack: String,
    pub eps: f64,
    pub clean_acc: f64,
    pub att_acc: f64,
    pub def_acc: f64,
    pub runtime_s: f64,
    pub recon_err: f64,
}

pub const BENCH_HEADER: [&str; 8] = [
    "config",
    "attack",
    "eps",
    "clean_acc",
    "att_acc",
    "def_acc",
    "runtime_s",
    "recon_err",
];

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::domain(format!("csv error: {other:?}")),
    }
}

/// Writes rows in the fixed column order
/// `config,attack,eps,clean_acc,att_acc,def_acc,runtime_s,recon_err`.
pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    w.write_record(BENCH_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.config.as_str(),
            r.attack.as_str(),
            &format!("{:.6}", r.eps),
            &format!("{:.6}", r.clean_acc),
            &format!("{:.6}", r.att_acc),
            &format!("{:.6}", r.def_acc),
            &format!("{:.6}", r.runtime_s),
            &format!("{:.6}", r.recon_err),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width human table over the same rows.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<7}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}  config\n",
        "attack", "eps", "clean_acc", "att_acc", "def_acc", "runtime_s"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<7}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.3}  {}\n",
            r.attack, r.eps, r.clean_acc, r.att_acc, r.def_acc, r.runtime_s, r.config
        ));
    }
    out
}

/// Per-tensor defense report CSV: one row per decomposed tensor in
/// deterministic pipeline order.
pub fn write_defense_report_csv(report: &DefenseReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    w.write_record([
        "chunk",
        "tensor",
        "tile_row",
        "tile_col",
        "shape",
        "requested_ranks",
        "used_ranks",
        "clamped",
        "relative_error",
        "seconds",
        "failure",
    ])
    .map_err(csv_error)?;
    let join = |v: &[usize]| {
        v.iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    for r in &report.records {
        let (tile_row, tile_col) = match r.tile {
            Some((tr, tc)) => (tr.to_string(), tc.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.chunk.to_string(),
            r.tensor.to_string(),
            tile_row,
            tile_col,
            r.shape
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("x"),
            join(&r.requested_ranks),
            join(&r.used_ranks),
            r.clamped.to_string(),
            format!("{:.6}", r.relative_error),
            format!("{:.6}", r.seconds),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
