//! Versioned JSON reports and CSV study tables.

use crate::config::RunConfig;
use crate::error::{FeecError, Result};
use crate::ledger::ConstantLedger;
use crate::study::{BoundednessStudy, EpsilonStudy, StudyRow};
use crate::verify::SuiteResult;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Wall-clock seconds of one stage. Only recorded on request, since
/// reports are otherwise byte-for-byte reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    pub config: RunConfig,
    pub ledger: Option<ConstantLedger>,
    pub suites: Vec<SuiteResult>,
    pub epsilon_studies: Vec<EpsilonStudy>,
    pub boundedness_studies: Vec<BoundednessStudy>,
    pub pass: bool,
    pub timings: Option<Vec<Timing>>,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Report {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            tool: ToolInfo::default(),
            command: command.into(),
            config: config.clone(),
            ledger: None,
            suites: Vec::new(),
            epsilon_studies: Vec::new(),
            boundedness_studies: Vec::new(),
            pass: true,
            timings: None,
        }
    }

    /// Recompute `pass` from the suites and studies.
    pub fn finish(&mut self) {
        self.pass = self.suites.iter().all(|s| s.pass)
            && self.epsilon_studies.iter().all(epsilon_pass)
            && self.boundedness_studies.iter().all(boundedness_pass);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Parse a report, rejecting schema versions this build does not know.
    pub fn from_json(s: &str) -> Result<Report> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == REPORT_SCHEMA_VERSION as u64 => Ok(serde_json::from_value(value)?),
            Some(v) => Err(FeecError::UnsupportedReportVersion(v.to_string())),
            None => Err(FeecError::UnsupportedReportVersion(
                value.get("schema_version").map_or("missing".into(), |v| v.to_string()),
            )),
        }
    }
}

pub fn epsilon_pass(s: &EpsilonStudy) -> bool {
    s.slope_pass && s.rows.iter().all(|r| r.pass)
}

pub fn boundedness_pass(s: &BoundednessStudy) -> bool {
    s.ratio_pass && s.halving_pass && s.rows.iter().all(|r| r.pass)
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[StudyRow], level: bool) -> Result<()> {
    for r in rows {
        let x = if level { format!("{}", r.x as usize) } else { format!("{:e}", r.x) };
        w.write_record([x, format!("{:e}", r.value), format!("{:e}", r.ceiling), r.pass.to_string()])
            .map_err(csv_error)?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> FeecError {
    FeecError::Io(e.to_string())
}

/// `epsilon,value,ceiling,pass` rows, then a `slope` row whose ceiling
/// column holds the accepted band.
pub fn write_epsilon_csv<W: Write>(study: &EpsilonStudy, band: (f64, f64), out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "value", "ceiling", "pass"]).map_err(csv_error)?;
    write_rows(&mut w, &study.rows, false)?;
    w.write_record([
        "slope".to_string(),
        format!("{}", study.slope),
        format!("[{}, {}]", band.0, band.1),
        study.slope_pass.to_string(),
    ])
    .map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

/// `level,value,ceiling,pass`, one row per level.
pub fn write_level_csv<W: Write>(study: &BoundednessStudy, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "value", "ceiling", "pass"]).map_err(csv_error)?;
    write_rows(&mut w, &study.rows, true)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: f64, value: f64) -> StudyRow {
        StudyRow {
            x,
            value,
            ceiling: 10.0,
            pass: value <= 10.0,
        }
    }

    #[test]
    fn round_trip_and_version_gate() {
        let cfg = RunConfig::default();
        let mut r = Report::new("verify calculus", &cfg);
        r.suites.push(crate::verify::run_suite(crate::verify::Suite::Calculus, &cfg, &mut None).unwrap());
        r.finish();
        assert!(r.pass);
        let s = r.to_json().unwrap();
        assert_eq!(Report::from_json(&s).unwrap(), r);
        let bumped = s.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert_eq!(Report::from_json(&bumped), Err(FeecError::UnsupportedReportVersion("2".into())));
        let stripped = s.replace("\"schema_version\": 1,", "");
        assert!(matches!(Report::from_json(&stripped), Err(FeecError::UnsupportedReportVersion(_))));
    }

    #[test]
    fn epsilon_table_has_slope_row() {
        let study = EpsilonStudy {
            k: 1,
            rows: vec![row(0.1, 1.0), row(0.01, 0.1)],
            slope: 1.0,
            slope_pass: true,
            constant_ratio: 0.0,
        };
        let mut buf = Vec::new();
        write_epsilon_csv(&study, (0.8, 1.2), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epsilon,value,ceiling,pass");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("slope,1,"));
    }

    #[test]
    fn level_table_has_one_row_per_level() {
        let study = BoundednessStudy {
            k: 1,
            eps: 1e-3,
            rows: (0..4).map(|l| row(l as f64, 1.0)).collect(),
            max_ratio: 1.0,
            ratio_pass: true,
            halving: (1.0, 1.0, 3.0),
            halving_pass: true,
        };
        let mut buf = Vec::new();
        write_level_csv(&study, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(4).unwrap().starts_with("3,"));
        assert!(boundedness_pass(&study));
    }
}
