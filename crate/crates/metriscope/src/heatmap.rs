//! Sensitivity heatmaps as CSV, JSON and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use metriscope_core::analysis::SensitivityTable;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::numfmt::{sig9, SIG_DIGITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapFormat {
    Csv,
    Json,
    Svg,
}

impl HeatmapFormat {
    pub const ALL: [HeatmapFormat; 3] = [HeatmapFormat::Csv, HeatmapFormat::Json, HeatmapFormat::Svg];

    pub fn extension(self) -> &'static str {
        match self {
            HeatmapFormat::Csv => "csv",
            HeatmapFormat::Json => "json",
            HeatmapFormat::Svg => "svg",
        }
    }
}

impl FromStr for HeatmapFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(HeatmapFormat::Csv),
            "json" => Ok(HeatmapFormat::Json),
            "svg" => Ok(HeatmapFormat::Svg),
            other => Err(format!("unknown heatmap format `{other}`")),
        }
    }
}

pub const RAMP_LOW: [u8; 3] = [0x21, 0x66, 0xac];
pub const RAMP_MID: [u8; 3] = [0xf7, 0xf7, 0xf7];
pub const RAMP_HIGH: [u8; 3] = [0xb2, 0x18, 0x2b];
pub const Z_CLAMP: f64 = 3.0;

/// Diverging blue-white-red colour for a z-score, clamped to [-3, 3].
pub fn ramp_color(z: f64) -> String {
    let z = if z.is_nan() { 0.0 } else { z.clamp(-Z_CLAMP, Z_CLAMP) };
    let (from, to, t) = if z < 0.0 {
        (RAMP_MID, RAMP_LOW, -z / Z_CLAMP)
    } else {
        (RAMP_MID, RAMP_HIGH, z / Z_CLAMP)
    };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(from[0], to[0]), mix(from[1], to[1]), mix(from[2], to[2]))
}

pub fn table_to_csv(table: &SensitivityTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string(), "direction".to_string(), "baseline".to_string()];
    for c in &table.conditions {
        header.push(format!("{c}_pct"));
        header.push(format!("{c}_z"));
    }
    let err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(&header).map_err(err)?;
    for i in 0..table.n_metrics() {
        let mut rec = vec![table.metrics[i].clone(), table.directions[i].as_str().to_string(), sig9(table.baseline[i])];
        for j in 0..table.n_conditions() {
            rec.push(sig9(table.pct_change[i][j]));
            rec.push(sig9(table.zscore[i][j]));
        }
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Full table with every number at nine significant digits.
pub fn table_to_json(table: &SensitivityTable) -> String {
    serde_json::to_string_pretty(&table.rounded(SIG_DIGITS)).expect("table serialises") + "\n"
}

pub fn table_from_json(text: &str, path: &Path) -> Result<SensitivityTable> {
    serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL_W: usize = 72;
const CELL_H: usize = 26;
const CHAR_W: usize = 7;

pub fn table_to_svg(table: &SensitivityTable, title: &str) -> String {
    let label_w = 16 + CHAR_W * table.metrics.iter().map(|m| m.len()).max().unwrap_or(0);
    let header_h = 40 + (CHAR_W * table.conditions.iter().map(|c| c.len()).max().unwrap_or(0)) * 7 / 10;
    let width = label_w + CELL_W * table.n_conditions() + 16;
    let height = header_h + CELL_H * table.n_metrics() + 16;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="8" y="16" font-size="13" font-weight="bold">{}</text>"#, escape(title));
    for (j, c) in table.conditions.iter().enumerate() {
        let x = label_w + CELL_W * j + CELL_W / 2;
        let y = header_h - 6;
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" transform="rotate(-45 {x} {y})">{}</text>"#, escape(c));
    }
    for (i, m) in table.metrics.iter().enumerate() {
        let y = header_h + CELL_H * i;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6,
            y + CELL_H / 2 + 4,
            escape(m)
        );
        for j in 0..table.n_conditions() {
            let z = table.zscore[i][j];
            let x = label_w + CELL_W * j;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="#ffffff"/>"##,
                ramp_color(z)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{z:.2}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.<ext>` for each format into `dir`; returns the paths written.
pub fn emit_heatmap(table: &SensitivityTable, formats: &[HeatmapFormat], dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    if table.n_metrics() == 0 || table.n_conditions() == 0 {
        return Err(CliError::Config("cannot draw an empty sensitivity table".into()));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for &f in formats {
        let path = dir.join(format!("{stem}.{}", f.extension()));
        let body = match f {
            HeatmapFormat::Csv => table_to_csv(table)?,
            HeatmapFormat::Json => table_to_json(table),
            HeatmapFormat::Svg => table_to_svg(table, stem),
        };
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
