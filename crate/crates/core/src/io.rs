//! File formats: scene JSON, measurement and residual CSVs, pose pairs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{PoseRecord, PoseSE3};
use crate::error::{Error, Result};
use crate::synthetic::Measurement;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::from(e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_vec_pretty(value)?;
    s.push(b'\n');
    write_atomic(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub const MEASUREMENT_HEADER: [&str; 5] = ["view_id", "point_id", "u", "v", "pixel_count"];

pub fn measurements_to_csv(ms: &[Measurement]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MEASUREMENT_HEADER)?;
    for m in ms {
        w.write_record(&[
            m.view_id.to_string(),
            m.point_id.to_string(),
            format!("{:.17e}", m.u),
            format!("{:.17e}", m.v),
            m.pixel_count.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_measurements(path: &Path, ms: &[Measurement]) -> Result<()> {
    write_atomic(path, &measurements_to_csv(ms)?)
}

pub fn read_measurements(path: &Path) -> Result<Vec<Measurement>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(MEASUREMENT_HEADER) {
        return Err(Error::Format(format!(
            "{}: expected header {}",
            path.display(),
            MEASUREMENT_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let m: Measurement = rec?;
        if !(m.u.is_finite() && m.v.is_finite()) {
            return Err(Error::Format(format!("{}: non-finite centroid", path.display())));
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub view_id: usize,
    pub point_id: usize,
    pub du: f64,
    pub dv: f64,
}

pub fn write_residuals(path: &Path, rs: &[Residual]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rs {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// One motion-capture / camera pose pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub t_mo: PoseSE3,
    pub t_ct: PoseSE3,
}

#[derive(Serialize, Deserialize)]
struct PosePairRecord {
    #[serde(rename = "T_mo")]
    t_mo: ([f64; 3], [f64; 3]),
    #[serde(rename = "T_ct")]
    t_ct: ([f64; 3], [f64; 3]),
}

fn to_tuple(p: &PoseSE3) -> ([f64; 3], [f64; 3]) {
    let r = PoseRecord::from(p);
    (r.axis_angle, r.translation)
}

fn from_tuple(t: ([f64; 3], [f64; 3])) -> PoseSE3 {
    PoseSE3::from(&PoseRecord {
        axis_angle: t.0,
        translation: t.1,
    })
}

impl Serialize for PosePair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PosePairRecord {
            t_mo: to_tuple(&self.t_mo),
            t_ct: to_tuple(&self.t_ct),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PosePair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PosePairRecord::deserialize(d)?;
        Ok(PosePair {
            t_mo: from_tuple(r.t_mo),
            t_ct: from_tuple(r.t_ct),
        })
    }
}

pub fn read_pose_pairs(path: &Path) -> Result<Vec<PosePair>> {
    read_json(path)
}

pub fn write_pose_pairs(path: &Path, pairs: &[PosePair]) -> Result<()> {
    write_json(path, &pairs)
}
