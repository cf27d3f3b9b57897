use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::linear_to_db;
use crate::conic::SolveStatus;
use crate::precoding::Method;
use crate::{Error, Result};

use super::config::Schedule;

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub status: SolveStatus,
    /// Total transmit power in watts; NaN when infeasible.
    pub total_power: f64,
    /// Incident RF power on the true channel, per UE.
    pub incident: Vec<f64>,
    /// Incident RF power predicted on the estimated channel, per UE.
    pub incident_estimated: Vec<f64>,
    /// Harvested energy per block, per UE.
    pub harvested: Vec<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl TrialRecord {
    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub schedule: Schedule,
    pub trials: usize,
    pub feasible: usize,
    pub feasibility_rate: f64,
    /// Mean over feasible trials; NaN when none.
    pub mean_power_w: f64,
    pub mean_power_dbw: f64,
    pub mean_harvested_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: Method,
    pub schedule: Schedule,
    pub records: Vec<TrialRecord>,
}

impl RunReport {
    pub fn feasible(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.is_feasible())
    }

    pub fn feasibility_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.feasible().count() as f64 / self.records.len() as f64
    }

    pub fn mean_power(&self) -> f64 {
        mean(self.feasible().map(|r| r.total_power))
    }

    /// `10 log10` of the mean power in watts.
    pub fn mean_power_dbw(&self) -> f64 {
        linear_to_db(self.mean_power())
    }

    /// Harvested energy of every UE in every feasible trial, ascending.
    pub fn harvested_cdf(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.feasible().flat_map(|r| r.harvested.iter().copied()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn summary(&self) -> Summary {
        Summary {
            method: self.method,
            schedule: self.schedule,
            trials: self.records.len(),
            feasible: self.feasible().count(),
            feasibility_rate: self.feasibility_rate(),
            mean_power_w: self.mean_power(),
            mean_power_dbw: self.mean_power_dbw(),
            mean_harvested_j: mean(self.feasible().flat_map(|r| r.harvested.iter().copied())),
        }
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in it {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Files written by [`export_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub trials: PathBuf,
    pub ues: PathBuf,
    pub cdf: PathBuf,
    pub summary: PathBuf,
}

impl ReportPaths {
    /// Standard names under `dir`, prefixed with `prefix`.
    pub fn in_dir(dir: &Path, prefix: &str) -> Self {
        ReportPaths {
            trials: dir.join(format!("{prefix}trials.csv")),
            ues: dir.join(format!("{prefix}ues.csv")),
            cdf: dir.join(format!("{prefix}harvested_cdf.csv")),
            summary: dir.join(format!("{prefix}summary.toml")),
        }
    }
}

const TRIAL_HEADER: [&str; 6] = ["trial", "status", "total_power_w", "total_power_dbw", "iterations", "wall_time_s"];
const UE_HEADER: [&str; 5] = ["trial", "ue", "incident_w", "incident_estimated_w", "harvested_j"];

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

/// Write per-trial and per-UE CSVs, the harvested-energy CDF and a TOML summary.
///
/// Floats are written in shortest round-trip form so [`import_report`]
/// recovers them exactly.
pub fn export_report(report: &RunReport, paths: &ReportPaths) -> Result<()> {
    let p = &paths.trials;
    let mut w = writer(p)?;
    w.write_record(TRIAL_HEADER).map_err(|e| Error::csv(p, e))?;
    for r in &report.records {
        w.write_record([
            r.trial.to_string(),
            r.status.to_string(),
            r.total_power.to_string(),
            linear_to_db(r.total_power).to_string(),
            r.iterations.to_string(),
            r.wall_time_s.to_string(),
        ])
        .map_err(|e| Error::csv(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let p = &paths.ues;
    let mut w = writer(p)?;
    w.write_record(UE_HEADER).map_err(|e| Error::csv(p, e))?;
    for r in &report.records {
        for k in 0..r.incident.len() {
            w.write_record([
                r.trial.to_string(),
                k.to_string(),
                r.incident[k].to_string(),
                r.incident_estimated[k].to_string(),
                r.harvested[k].to_string(),
            ])
            .map_err(|e| Error::csv(p, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let p = &paths.cdf;
    let mut w = writer(p)?;
    w.write_record(["harvested_j", "cdf"]).map_err(|e| Error::csv(p, e))?;
    let cdf = report.harvested_cdf();
    let n = cdf.len();
    for (i, x) in cdf.iter().enumerate() {
        w.write_record([x.to_string(), ((i + 1) as f64 / n as f64).to_string()])
            .map_err(|e| Error::csv(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let text = toml::to_string_pretty(&report.summary()).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&paths.summary, text).map_err(|e| Error::io(&paths.summary, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("{}: missing column {i}", path.display())))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("{}: cannot parse '{raw}' in column {i}", path.display())))
}

fn check_header(rdr: &mut csv::Reader<fs::File>, want: &[&str], path: &Path) -> Result<()> {
    let got = rdr.headers().map_err(|e| Error::csv(path, e))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Parse(format!("{}: unexpected header", path.display())));
    }
    Ok(())
}

/// Read back what [`export_report`] wrote.
pub fn import_report(paths: &ReportPaths) -> Result<RunReport> {
    let text = fs::read_to_string(&paths.summary).map_err(|e| Error::io(&paths.summary, e))?;
    let summary: Summary =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", paths.summary.display())))?;

    let p = &paths.trials;
    let mut rdr = csv::Reader::from_path(p).map_err(|e| Error::csv(p, e))?;
    check_header(&mut rdr, &TRIAL_HEADER, p)?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(p, e))?;
        let status: String = field(&rec, 1, p)?;
        records.push(TrialRecord {
            trial: field(&rec, 0, p)?,
            status: status.parse()?,
            total_power: field(&rec, 2, p)?,
            incident: Vec::new(),
            incident_estimated: Vec::new(),
            harvested: Vec::new(),
            iterations: field(&rec, 4, p)?,
            wall_time_s: field(&rec, 5, p)?,
        });
    }

    let p = &paths.ues;
    let mut rdr = csv::Reader::from_path(p).map_err(|e| Error::csv(p, e))?;
    check_header(&mut rdr, &UE_HEADER, p)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(p, e))?;
        let trial: usize = field(&rec, 0, p)?;
        let r = records
            .iter_mut()
            .find(|r| r.trial == trial)
            .ok_or_else(|| Error::Parse(format!("{}: trial {trial} has no record", p.display())))?;
        r.incident.push(field(&rec, 2, p)?);
        r.incident_estimated.push(field(&rec, 3, p)?);
        r.harvested.push(field(&rec, 4, p)?);
    }
    Ok(RunReport {
        method: summary.method,
        schedule: summary.schedule,
        records,
    })
}
