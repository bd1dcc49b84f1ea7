//! Raw 3-axis accelerometer records and their two on-disk formats:
//! CSV with a `t,x,y,z` header, or per-axis float32 binaries described
//! by a JSON sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Triaxial acceleration record in m/s² per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelRecord {
    pub sample_rate: u32,
    pub axes: [Vec<f64>; 3],
}

impl AccelRecord {
    pub fn new(sample_rate: u32, axes: [Vec<f64>; 3]) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if axes[0].len() != axes[1].len() || axes[1].len() != axes[2].len() {
            return Err(Error::LengthMismatch {
                left: axes[0].len(),
                right: axes[1].len().max(axes[2].len()),
            });
        }
        Ok(AccelRecord { sample_rate, axes })
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes[0].is_empty()
    }

    pub fn axis_waveform(&self, axis: usize) -> Result<Waveform> {
        Waveform::new(self.axes[axis].clone(), self.sample_rate)
    }
}

/// Sidecar describing the per-axis float32 binary layout.
#[derive(Debug, Serialize, Deserialize)]
struct AccelSidecar {
    sample_rate: u32,
    axis_files: [String; 3],
}

/// Writes `rec` as CSV with header `t,x,y,z` (t in seconds, axes in m/s²).
pub fn write_accel_csv(path: &Path, rec: &AccelRecord) -> Result<()> {
    let mut out = String::with_capacity(rec.len() * 40 + 16);
    out.push_str("t,x,y,z\n");
    let fs = rec.sample_rate as f64;
    for i in 0..rec.len() {
        out.push_str(&format!(
            "{:.9},{:.9},{:.9},{:.9}\n",
            i as f64 / fs,
            rec.axes[0][i],
            rec.axes[1][i],
            rec.axes[2][i]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes `rec` as three float32 little-endian files plus `<stem>.json`.
/// Returns the sidecar path; use it with [`read_accel`].
pub fn write_accel_f32(sidecar_path: &Path, rec: &AccelRecord) -> Result<PathBuf> {
    let stem = sidecar_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "accel".to_string());
    let dir = sidecar_path.parent().unwrap_or_else(|| Path::new("."));
    let mut axis_files = Vec::with_capacity(3);
    for (axis, name) in AXIS_NAMES.iter().enumerate() {
        let fname = format!("{stem}.{name}.f32");
        let fpath = dir.join(&fname);
        let mut bytes = Vec::with_capacity(rec.len() * 4);
        for &v in &rec.axes[axis] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut f =
            fs::File::create(&fpath).map_err(|e| Error::io(fpath.display().to_string(), e))?;
        f.write_all(&bytes)
            .map_err(|e| Error::io(fpath.display().to_string(), e))?;
        axis_files.push(fname);
    }
    let sidecar = AccelSidecar {
        sample_rate: rec.sample_rate,
        axis_files: [
            axis_files[0].clone(),
            axis_files[1].clone(),
            axis_files[2].clone(),
        ],
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    fs::write(sidecar_path, json).map_err(|e| Error::io(sidecar_path.display().to_string(), e))?;
    Ok(sidecar_path.to_path_buf())
}

fn read_accel_csv(path: &Path) -> Result<AccelRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let bad = |reason: String| Error::BadFileFormat {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if header.trim() != "t,x,y,z" {
        return Err(bad(format!("expected header `t,x,y,z`, got `{header}`")));
    }
    let mut t = Vec::new();
    let mut axes = [Vec::new(), Vec::new(), Vec::new()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", lineno + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))
        };
        t.push(parse(fields[0])?);
        for axis in 0..3 {
            axes[axis].push(parse(fields[axis + 1])?);
        }
    }
    if t.len() < 2 {
        return Err(bad("need at least two samples".into()));
    }
    // Infer the rate from the median timestamp increment.
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = dts[dts.len() / 2];
    if dt <= 0.0 {
        return Err(bad("non-increasing timestamps".into()));
    }
    let sample_rate = (1.0 / dt).round() as u32;
    AccelRecord::new(sample_rate, axes)
}

fn read_accel_sidecar(path: &Path) -> Result<AccelRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let sidecar: AccelSidecar = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut axes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (axis, fname) in sidecar.axis_files.iter().enumerate() {
        let fpath = dir.join(fname);
        let bytes = fs::read(&fpath).map_err(|e| Error::io(fpath.display().to_string(), e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::BadFileFormat {
                path: fpath.display().to_string(),
                reason: "length not a multiple of 4".into(),
            });
        }
        axes[axis] = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
    }
    AccelRecord::new(sidecar.sample_rate, axes)
}

/// Reads an accelerometer record; the format is chosen by extension
/// (`.csv` or a `.json` sidecar).
pub fn read_accel(path: &Path) -> Result<AccelRecord> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_accel_csv(path),
        Some("json") => read_accel_sidecar(path),
        other => Err(Error::BadFileFormat {
            path: path.display().to_string(),
            reason: format!("unsupported accel extension {other:?}; use .csv or .json"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> AccelRecord {
        let n = 800;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05).sin() * 0.01).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.02).cos() * 0.002).collect();
        let z: Vec<f64> = vec![9.81; n];
        AccelRecord::new(8000, [x, y, z]).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let rec = sample_record();
        write_accel_csv(&path, &rec).unwrap();
        let back = read_accel(&path).unwrap();
        assert_eq!(back.sample_rate, 8000);
        for axis in 0..3 {
            for (a, b) in back.axes[axis].iter().zip(rec.axes[axis].iter()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn f32_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.json");
        let rec = sample_record();
        write_accel_f32(&path, &rec).unwrap();
        let back = read_accel(&path).unwrap();
        assert_eq!(back.sample_rate, 8000);
        for axis in 0..3 {
            for (a, b) in back.axes[axis].iter().zip(rec.axes[axis].iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn csv_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time,x,y,z\n0,0,0,0\n").unwrap();
        assert!(read_accel(&path).is_err());
    }
}
