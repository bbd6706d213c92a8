//! Metric reports as JSON (full precision) and CSV (nine significant digits).

use std::fs;
use std::path::Path;

use metriscope_core::metrics::{MetricEntry, MetricReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::numfmt::sig9;

#[derive(Serialize, Deserialize)]
struct Pair {
    real: String,
    gen: String,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    pair: Pair,
    metrics: Vec<MetricEntry>,
}

pub fn report_to_json(report: &MetricReport) -> String {
    let doc = ReportDoc {
        pair: Pair {
            real: report.real.clone(),
            gen: report.gen.clone(),
        },
        metrics: report.entries.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("report serialises") + "\n"
}

pub fn report_from_json(text: &str, path: &Path) -> Result<MetricReport> {
    let doc: ReportDoc = serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))?;
    let mut report = MetricReport::new(doc.pair.real, doc.pair.gen);
    for e in doc.metrics {
        report.push(e).map_err(|e| CliError::format(path, e.to_string()))?;
    }
    Ok(report)
}

pub fn write_report_json(report: &MetricReport, path: &Path) -> Result<()> {
    fs::write(path, report_to_json(report)).map_err(|e| CliError::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<MetricReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    report_from_json(&text, path)
}

/// One row per metric: `name,value,direction,std,flags` with flags joined by `;`.
pub fn write_report_csv(report: &MetricReport, path: &Path) -> Result<()> {
    let err = |e: csv::Error| CliError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["name", "value", "direction", "std", "flags"]).map_err(err)?;
    for e in &report.entries {
        let std = e.std.map(sig9).unwrap_or_default();
        w.write_record([e.name.as_str(), &sig9(e.value), e.direction.as_str(), &std, &e.flags.join(";")])
            .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use metriscope_core::metrics::Direction;

    fn sample() -> MetricReport {
        let mut r = MetricReport::new("reference", "base");
        r.push(MetricEntry {
            name: "fid".into(),
            value: 0.1 + 0.2,
            direction: Direction::LowerBetter,
            std: None,
            flags: vec![],
        })
        .unwrap();
        r.push(MetricEntry {
            name: "kid".into(),
            value: -1.25e-5,
            direction: Direction::LowerBetter,
            std: Some(3.0e-4),
            flags: vec!["a".into(), "b".into()],
        })
        .unwrap();
        r
    }

    #[test]
    fn json_layout_and_exact_round_trip() {
        let r = sample();
        let text = report_to_json(&r);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["pair"]["real"], "reference");
        assert_eq!(v["metrics"][0]["direction"], "lower-better");
        assert!(v["metrics"][0].get("std").is_none());
        assert_eq!(report_from_json(&text, Path::new("x")).unwrap(), r);
    }

    #[test]
    fn csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report_csv(&sample(), &p).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,value,direction,std,flags");
        assert_eq!(lines[1], "fid,0.3,lower-better,,");
        assert_eq!(lines[2], "kid,-0.0000125,lower-better,0.0003,a;b");
    }
}
