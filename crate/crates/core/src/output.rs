//! Serialization of ensemble results: per-trajectory CSV/JSONL tables,
//! parameter-scan summary tables, and JSON manifests.
//!
//! Float columns use the shortest round-trip decimal form, so output for
//! bitwise-identical statistics is byte-identical regardless of worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{CurvePoint, SizeCurve};
use crate::observables::{EnsembleStats, TrajStatus, RECORD_SCALAR_NAMES};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        // Display for f64 is the shortest round-trip decimal, so this is
        // deterministic and lossless.
        format!("{v}")
    }
}

/// Write the per-trajectory scalar table as CSV.
pub fn write_records_csv<W: Write>(w: W, stats: &EnsembleStats) -> Result<(), OutputError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = vec!["index", "status", "t_divergence", "samples"];
    header.extend(RECORD_SCALAR_NAMES);
    wtr.write_record(&header)?;
    for r in &stats.records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.index.to_string());
        row.push(
            match r.status {
                TrajStatus::Ok => "ok",
                TrajStatus::Divergent => "divergent",
            }
            .to_string(),
        );
        row.push(r.t_divergence.map(fmt_f64).unwrap_or_default());
        row.push(r.samples.to_string());
        for v in r.scalars.values() {
            row.push(fmt_f64(v));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_records_csv_path(path: &Path, stats: &EnsembleStats) -> Result<(), OutputError> {
    write_records_csv(BufWriter::new(File::create(path)?), stats)
}

/// Write the per-trajectory records as JSON lines.
pub fn write_records_jsonl<W: Write>(mut w: W, stats: &EnsembleStats) -> Result<(), OutputError> {
    for r in &stats.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One row of a parameter-scan summary table: aggregate observables of an
/// ensemble at a single parameter point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub l: usize,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub gamma: f64,
    pub order: usize,
    pub eta: f64,
    pub n_traj: usize,
    pub n_divergent: usize,
    /// Site-averaged magnetization along z, with standard error.
    pub mz: f64,
    pub mz_se: f64,
    /// Zero-momentum transverse structure factor S^xx(0).
    pub sxx0: f64,
    pub sxx0_se: f64,
    /// Structure factor at the optimal in-plane angle.
    pub sphi: f64,
    pub sphi_se: f64,
    pub phi_opt: f64,
    /// Staggered structure factor at its own optimal angle.
    pub sphi_stag: f64,
    pub sphi_stag_se: f64,
    pub phi_opt_stag: f64,
    /// Quantum Fisher bound per spin, 4 F_Q / N.
    pub fq4n: f64,
    pub fq4n_se: f64,
    /// Wineland squeezing parameter inverse.
    pub xi2inv: f64,
    pub xi2inv_se: f64,
}

impl ScanRow {
    /// Summarize an ensemble into one scan row. NaNs are recorded as-is when
    /// every trajectory diverged.
    pub fn from_stats(
        params: &crate::model::ModelParams,
        order: usize,
        eta: f64,
        stats: &EnsembleStats,
    ) -> Self {
        let nan = (f64::NAN, f64::NAN);
        let (mz, mz_se) = stats.scalar_stats(|s| s.mz).unwrap_or(nan);
        let (sxx0, sxx0_se) = stats.structure_factor(0.0, false).unwrap_or(nan);
        let phi_opt = stats.optimal_phi(false).unwrap_or(f64::NAN);
        let (sphi, sphi_se) = stats.structure_factor(phi_opt, false).unwrap_or(nan);
        let phi_opt_stag = stats.optimal_phi(true).unwrap_or(f64::NAN);
        let (sphi_stag, sphi_stag_se) =
            stats.structure_factor(phi_opt_stag, true).unwrap_or(nan);
        let (fq4n, fq4n_se) = stats.fq4_over_n(phi_opt, false).unwrap_or(nan);
        let (xi2inv, xi2inv_se) = stats.squeezing_inverse(phi_opt).unwrap_or(nan);
        ScanRow {
            l: stats.lattice.lx,
            jx: params.jx,
            jy: params.jy,
            jz: params.jz,
            gamma: params.gamma,
            order,
            eta,
            n_traj: stats.n_total(),
            n_divergent: stats.n_divergent(),
            mz,
            mz_se,
            sxx0,
            sxx0_se,
            sphi,
            sphi_se,
            phi_opt,
            sphi_stag,
            sphi_stag_se,
            phi_opt_stag,
            fq4n,
            fq4n_se,
            xi2inv,
            xi2inv_se,
        }
    }
}

pub fn write_scan_csv<W: Write>(w: W, rows: &[ScanRow]) -> Result<(), OutputError> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_scan_csv_path(path: &Path, rows: &[ScanRow]) -> Result<(), OutputError> {
    write_scan_csv(BufWriter::new(File::create(path)?), rows)
}

pub fn read_scan_csv_path(path: &Path) -> Result<Vec<ScanRow>, OutputError> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Group scan rows into per-size curves of a selected observable vs `jy`,
/// sorted by size and coupling.
pub fn curves_from_rows<F>(rows: &[ScanRow], select: F) -> Vec<SizeCurve>
where
    F: Fn(&ScanRow) -> (f64, f64),
{
    let mut by_l: std::collections::BTreeMap<usize, Vec<CurvePoint>> =
        std::collections::BTreeMap::new();
    for row in rows {
        let (y, se) = select(row);
        by_l
            .entry(row.l)
            .or_default()
            .push(CurvePoint { x: row.jy, y, se });
    }
    by_l
        .into_iter()
        .map(|(l, mut points)| {
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            SizeCurve::new(l, points)
        })
        .collect()
}

/// Pretty-printed JSON to a file (used for summaries and run manifests).
pub fn write_json_path<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
