//! Manifest and series file formats.
//!
//! A manifest is a UTF-8 comma-separated file with the header
//! `subject_id,site,label,relative_series_path`. Each series file starts
//! with a line `N_R T` followed by `N_R` rows of `T` whitespace-separated
//! decimal values.

use std::fs;
use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::data::{Manifest, SubjectRecord};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["subject_id", "site", "label", "relative_series_path"];

/// Parses a series file body. Non-finite values are accepted here and
/// rejected by the caller, which knows the subject.
pub fn parse_series(text: &str) -> std::result::Result<Tensor, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("missing `N_R T` header")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| format!("bad header token {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let [n_rois, time_len] = dims[..] else {
        return Err(format!("header must be `N_R T`, got {header:?}"));
    };
    if n_rois == 0 || time_len == 0 {
        return Err("header extents must be positive".into());
    }
    let mut data = Vec::with_capacity(n_rois * time_len);
    let mut rows = 0;
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format!("row {r}: cannot parse {tok:?}"))?;
            data.push(v);
        }
        let got = data.len() - before;
        if got != time_len {
            return Err(format!("ragged row {r}: {got} values, expected {time_len}"));
        }
        rows += 1;
    }
    if rows != n_rois {
        return Err(format!("{rows} rows, header declares {n_rois}"));
    }
    Tensor::new(&[n_rois, time_len], data).map_err(|e| e.to_string())
}

pub fn read_series(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    parse_series(&text).map_err(|m| Error::load(path, m))
}

/// Writes with shortest round-trip decimal formatting, so reading the file
/// back reproduces every value exactly.
pub fn write_series(path: &Path, series: &Tensor) -> Result<()> {
    let (n, t) = (series.shape()[0], series.shape()[1]);
    let mut out = format!("{n} {t}\n");
    for row in series.data().chunks(t) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn check_finite(subject: &str, series: &Tensor) -> Result<()> {
    let t = series.shape()[1];
    if let Some(pos) = series.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation {
            subject: subject.to_string(),
            message: format!("non-finite value at ROI {} time {}", pos / t, pos % t),
        });
    }
    Ok(())
}

/// Reads a manifest and every series it references, validating finiteness
/// and identifier uniqueness.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::load(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::load(path, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::load(
            path,
            format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::load(path, e.to_string()))?;
        if row.len() != 4 {
            return Err(Error::load(path, format!("record {}: expected 4 fields", line + 1)));
        }
        let label = row[2]
            .parse()
            .map_err(|m: String| Error::load(path, format!("record {}: {m}", line + 1)))?;
        let series_path: PathBuf = base.join(&row[3]);
        let series = read_series(&series_path)?;
        check_finite(&row[0], &series)?;
        records.push(SubjectRecord {
            subject_id: row[0].to_string(),
            site: row[1].to_string(),
            label,
            series,
        });
    }
    Manifest::new(records)
}

/// Writes `manifest.csv` plus one `series/<subject_id>.txt` per record
/// under `dir`, returning the manifest path.
pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("series"))?;
    let path = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::load(&path, e.to_string()))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| Error::load(&path, e.to_string()))?;
    for r in manifest.records() {
        let rel = format!("series/{}.txt", r.subject_id);
        write_series(&dir.join(&rel), &r.series)?;
        w.write_record([r.subject_id.as_str(), r.site.as_str(), r.label.as_str(), rel.as_str()])
            .map_err(|e| Error::load(&path, e.to_string()))?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_ragged() {
        let t = parse_series("2 3\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(t.shape(), [2, 3]);
        assert_eq!(t.data()[4], 5.0);
        assert!(parse_series("2 3\n1 2 3\n4 5\n").unwrap_err().contains("ragged"));
        assert!(parse_series("2 3\n1 2 3\n").is_err());
        assert!(parse_series("2\n1 2\n").is_err());
        assert!(parse_series("1 2\n1 x\n").is_err());
    }

    #[test]
    fn series_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let t = Tensor::new(&[1, 3], vec![0.1 + 0.2, -1e-300, 12345.678901234567]).unwrap();
        write_series(&p, &t).unwrap();
        assert_eq!(read_series(&p).unwrap(), t);
    }
}
