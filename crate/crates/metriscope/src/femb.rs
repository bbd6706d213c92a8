//! Embedding interchange: the FEMB binary format and its CSV alternative,
//! plus the class-probability CSV.
//!
//! FEMB (little-endian): `"FEMB"`, u16 version 1, u32 n, u32 d, u32 tag_len,
//! tag bytes, n*d f32 row-major, then n ids each prefixed by a u16 length.

use std::fs;
use std::path::Path;

use metriscope_core::{ClassProbMatrix, FeatureMatrix};

use crate::error::{CliError, Result};
use crate::numfmt::sig9;

pub const MAGIC: &[u8; 4] = b"FEMB";
pub const VERSION: u16 = 1;

/// Tolerance for externally produced probability rows, which are renormalised on read.
pub const PROB_ROW_TOLERANCE: f64 = 1e-6;

pub fn encode_femb(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let tag = fm.extractor_tag().as_bytes();
    let mut out = Vec::with_capacity(18 + tag.len() + fm.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [fm.n(), fm.d(), tag.len()] {
        let v = u32::try_from(v).map_err(|_| CliError::Config("matrix too large for FEMB".into()))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(tag);
    for v in fm.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in fm.ids() {
        let len = u16::try_from(id.len()).map_err(|_| CliError::Config(format!("id longer than 65535 bytes: {id}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::format(self.path, format!("truncated FEMB payload while reading {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_femb(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut c = Cursor { bytes, at: 0, path };
    if c.take(4, "magic")? != MAGIC {
        return Err(CliError::format(path, "bad magic: not a FEMB file"));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(CliError::format(path, format!("unsupported FEMB version {version}")));
    }
    let n = c.u32("n")?;
    let d = c.u32("d")?;
    let tag_len = c.u32("tag length")?;
    let tag = std::str::from_utf8(c.take(tag_len, "tag")?).map_err(|_| CliError::format(path, "tag is not UTF-8"))?;
    let count = n.checked_mul(d).and_then(|v| v.checked_mul(4)).ok_or_else(|| CliError::format(path, "n*d overflows"))?;
    let values: Vec<f32> = c
        .take(count, "values")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let len = c.u16("id length").map_err(|_| CliError::format(path, format!("id count mismatch: expected {n}, found {i}")))?;
        let raw = c.take(len as usize, "id")?;
        ids.push(String::from_utf8(raw.to_vec()).map_err(|_| CliError::format(path, "id is not UTF-8"))?);
    }
    if c.at != bytes.len() {
        return Err(CliError::format(path, format!("{} trailing bytes after {n} ids", bytes.len() - c.at)));
    }
    FeatureMatrix::new(d, values, ids, tag).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_femb(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_femb(fm)?).map_err(|e| CliError::io(path, e))
}

pub fn read_femb(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_femb(&bytes, path)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::format(path, e.to_string())
}

fn header_matches(header: &csv::StringRecord, prefix: char) -> bool {
    header.get(0) == Some("id") && header.iter().skip(1).enumerate().all(|(j, h)| h == format!("{prefix}{j}"))
}

fn write_rows(path: &Path, prefix: char, cols: usize, rows: impl Iterator<Item = (String, Vec<f64>)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = std::iter::once("id".to_string()).chain((0..cols).map(|j| format!("{prefix}{j}"))).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (id, vals) in rows {
        let rec: Vec<String> = std::iter::once(id).chain(vals.into_iter().map(sig9)).collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_rows(path: &Path, prefix: char) -> Result<(usize, Vec<String>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::MissingInput(format!("{} does not exist", path.display())),
        _ => csv_err(path, e),
    })?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 || !header_matches(&header, prefix) {
        return Err(CliError::format(path, format!("header must be id,{prefix}0,...")));
    }
    let cols = header.len() - 1;
    let (mut ids, mut values) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            values.push(field.trim().parse::<f64>().map_err(|_| CliError::format(path, format!("not a number: `{field}`")))?);
        }
    }
    Ok((cols, ids, values))
}

/// CSV with header `id,f0,...`; nine significant digits reproduce f32 values exactly.
pub fn write_femb_csv(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    write_rows(path, 'f', fm.d(), (0..fm.n()).map(|i| (fm.ids()[i].clone(), fm.row_f64(i))))
}

pub fn read_femb_csv(path: &Path, extractor_tag: &str) -> Result<FeatureMatrix> {
    let (d, ids, values) = read_rows(path, 'f')?;
    let values = values.into_iter().map(|v| v as f32).collect();
    FeatureMatrix::new(d, values, ids, extractor_tag).map_err(|e| CliError::format(path, e.to_string()))
}

/// Reads features from `.femb` or `.csv` by extension.
pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_femb_csv(path, "csv"),
        _ => read_femb(path),
    }
}

pub fn write_probs_csv(probs: &ClassProbMatrix, path: &Path) -> Result<()> {
    write_rows(path, 'p', probs.k(), (0..probs.n()).map(|i| (probs.ids()[i].clone(), probs.row(i).to_vec())))
}

/// Rows within 1e-6 of summing to one are renormalised; anything else is rejected.
pub fn read_probs_csv(path: &Path) -> Result<ClassProbMatrix> {
    let (k, ids, mut values) = read_rows(path, 'p')?;
    for (i, row) in values.chunks_mut(k).enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > PROB_ROW_TOLERANCE {
            return Err(CliError::format(path, format!("row {i} is not a probability vector (sum {s})")));
        }
        row.iter_mut().for_each(|p| *p /= s);
    }
    ClassProbMatrix::new(k, values, ids).map_err(|e| CliError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::new(3, vec![0.1, -2.5, 3.4e38, 1e-7, 0.0, -0.0], vec!["a".into(), "b#x1".into()], "global64").unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let fm = sample();
        let bytes = encode_femb(&fm).unwrap();
        // header + tag + 2*3 floats + ids
        assert_eq!(bytes.len(), 18 + 8 + 2 * 3 * 4 + (2 + 1) + (2 + 4));
        let back = decode_femb(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.ids(), fm.ids());
        assert_eq!(back.extractor_tag(), "global64");
        let bits = |m: &FeatureMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&fm));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let good = encode_femb(&sample()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_femb(&bad, Path::new("x")).unwrap_err().to_string().contains("magic"));
        assert!(decode_femb(&good[..good.len() - 3], Path::new("x")).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_femb(&extra, Path::new("x")).is_err());
        // drop the last id entirely
        assert!(decode_femb(&good[..good.len() - 6], Path::new("x")).unwrap_err().to_string().contains("id count"));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let fm = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_femb_csv(&fm, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("id,f0,f1,f2\n"));
        let back = read_femb_csv(&p, "global64").unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn probs_csv_tolerates_exporter_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "id,p0,p1\na,0.2500004,0.75\nb,1,0\n").unwrap();
        let probs = read_probs_csv(&p).unwrap();
        assert_eq!(probs.k(), 2);
        assert!((probs.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        fs::write(&p, "id,p0,p1\na,0.3,0.3\n").unwrap();
        assert!(read_probs_csv(&p).is_err());
        fs::write(&p, "id,q0\na,1\n").unwrap();
        assert!(read_probs_csv(&p).is_err());
    }
}
