//! Output files of a run: `summary.json`, `comparison.csv`,
//! `plot_<benchmark>.csv` and `timeline.csv`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::scheduler::{ComparisonReport, Timeline};
use crate::suite::{Check, SweepPoint};
use crate::transfer::Mechanism;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything `summary.json` records about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub benchmark: String,
    pub size: usize,
    pub bits: u32,
    pub full_parallelism: bool,
    pub config: SimConfig,
    pub comparison: ComparisonReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    /// Rows written to `timeline.csv` and rows the timeline had.
    pub timeline_rows: Option<(usize, usize)>,
}

#[derive(Serialize)]
struct ComparisonLine {
    mechanism: &'static str,
    makespan_ns: f64,
    transfer_energy_uj: f64,
    speedup_pct: f64,
    energy_saving_pct: f64,
}

pub fn write_comparison<W: Write>(w: W, report: &ComparisonReport) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    for r in &report.rows {
        out.serialize(ComparisonLine {
            mechanism: r.mechanism.name(),
            makespan_ns: r.metrics.makespan_ns,
            transfer_energy_uj: r.metrics.transfer_energy_uj,
            speedup_pct: r.speedup_pct,
            energy_saving_pct: r.energy_saving_pct,
        })?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `x` then one makespan column per mechanism; blank where a mechanism
/// cannot serve the point.
pub fn write_plot<W: Write>(w: W, mechs: &[Mechanism], points: &[SweepPoint]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string()];
    header.extend(mechs.iter().map(|m| format!("{}_makespan_ns", m.name())));
    out.write_record(&header)?;
    for p in points {
        let mut rec = vec![p.x.to_string()];
        rec.extend(p.makespan_ns.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

/// Writes the run's files into `dir`, creating it if needed, and returns
/// the paths written.
pub fn write_outputs(
    dir: &Path,
    summary: &Summary,
    plot: Option<(&[Mechanism], &[SweepPoint])>,
    timeline: Option<(&Timeline, Option<usize>)>,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let mut summary = summary.clone();

    if let Some((tl, limit)) = timeline {
        let path = dir.join("timeline.csv");
        let mut w = create(&path)?;
        let rows = tl.write_csv(&mut w, limit).and_then(|n| w.flush().map(|_| n));
        let rows = rows.map_err(|source| ReportError::Io { path: path.clone(), source })?;
        summary.timeline_rows = Some((rows, tl.interval_count()));
        written.push(path);
    }

    let path = dir.join("comparison.csv");
    write_comparison(create(&path)?, &summary.comparison)?;
    written.push(path);

    if let Some((mechs, points)) = plot {
        let path = dir.join(format!("plot_{}.csv", summary.benchmark));
        write_plot(create(&path)?, mechs, points)?;
        written.push(path);
    }

    let path = dir.join("summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush().map_err(|source| ReportError::Io { path: path.clone(), source })?;
    written.push(path);
    Ok(written)
}
