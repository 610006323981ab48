//! `epochs.bin`: a flat binary container for epochs.
//!
//! Layout (little endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `GZEEPOCH` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8     | header length `h` (`u64`) |
//! | h     | UTF-8 JSON header ([`EpochHeader`]) |
//! | ...   | `f64` payload, each epoch channel-major (`n_channels × n_samples`) at its `offset` (in values) |

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EegError, Epoch, EpochKind};
use crate::dataset::{Label, SceneDomain};
use crate::num::Real;

pub const MAGIC: &[u8; 8] = b"GZEEPOCH";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub kind: EpochKind,
    pub participant: String,
    pub trial: Option<u32>,
    pub domain: Option<SceneDomain>,
    pub label: Option<Label>,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub fixation_duration_ms: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    /// Position of the first value in the payload, counted in `f64` values.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochHeader {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub dtype: String,
    /// Free-form provenance (config, seed, source directories).
    pub provenance: serde_json::Value,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct EpochSet<T> {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub provenance: serde_json::Value,
    pub epochs: Vec<Epoch<T>>,
}

pub fn write_epochs<T: Real, W: Write>(set: &EpochSet<T>, mut w: W) -> Result<(), EegError> {
    let mut offset = 0u64;
    let records: Vec<EpochRecord> = set
        .epochs
        .iter()
        .map(|e| {
            let r = EpochRecord {
                kind: e.kind,
                participant: e.participant_id.clone(),
                trial: e.trial_id,
                domain: e.scene_domain,
                label: e.label,
                onset_ms: e.onset_ms,
                duration_ms: e.duration_ms,
                fixation_duration_ms: e.fixation_duration_ms,
                n_channels: e.data.nrows(),
                n_samples: e.data.ncols(),
                offset,
            };
            offset += e.data.len() as u64;
            r
        })
        .collect();
    let header = EpochHeader {
        channels: set.channels.clone(),
        sample_rate_hz: set.sample_rate_hz,
        dtype: "f64le".into(),
        provenance: set.provenance.clone(),
        epochs: records,
    };
    let json = serde_json::to_vec(&header).map_err(|e| EegError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(offset as usize * 8);
    for e in &set.epochs {
        for v in e.data.iter() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_epochs<T: Real, R: Read>(mut r: R) -> Result<EpochSet<T>, EegError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EegError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(EegError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hlen = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json)?;
    let header: EpochHeader = serde_json::from_slice(&json).map_err(|e| EegError::Format(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(EegError::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let epochs = header
        .epochs
        .iter()
        .map(|rec| {
            let n = rec.n_channels * rec.n_samples;
            let lo = rec.offset as usize;
            let slice = values
                .get(lo..lo + n)
                .ok_or_else(|| EegError::Format("payload shorter than header claims".into()))?;
            let data = Array2::from_shape_vec((rec.n_channels, rec.n_samples), slice.iter().map(|&v| T::lit(v)).collect())
                .map_err(|e| EegError::Format(e.to_string()))?;
            Ok(Epoch {
                data,
                kind: rec.kind,
                onset_ms: rec.onset_ms,
                duration_ms: rec.duration_ms,
                fixation_duration_ms: rec.fixation_duration_ms,
                trial_id: rec.trial,
                participant_id: rec.participant.clone(),
                scene_domain: rec.domain,
                label: rec.label,
            })
        })
        .collect::<Result<Vec<_>, EegError>>()?;
    Ok(EpochSet {
        channels: header.channels,
        sample_rate_hz: header.sample_rate_hz,
        provenance: header.provenance,
        epochs,
    })
}

pub fn save_epochs<T: Real>(set: &EpochSet<T>, path: impl AsRef<Path>) -> Result<(), EegError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_epochs(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_epochs<T: Real>(path: impl AsRef<Path>) -> Result<EpochSet<T>, EegError> {
    let f = std::fs::File::open(path)?;
    read_epochs(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(n: usize, label: Option<Label>) -> Epoch<f64> {
        Epoch {
            data: Array2::from_shape_fn((3, n), |(c, t)| c as f64 * 0.5 - t as f64 / 7.0),
            kind: EpochKind::Frp,
            onset_ms: 1234.5,
            duration_ms: n as f64 * 2.0,
            fixation_duration_ms: n as f64 * 2.0,
            trial_id: Some(4),
            participant_id: "p01".into(),
            scene_domain: Some(SceneDomain::Desktop),
            label,
        }
    }

    #[test]
    fn round_trip() {
        let set = EpochSet {
            channels: vec!["Fz".into(), "Cz".into(), "Pz".into()],
            sample_rate_hz: 500.0,
            provenance: serde_json::json!({"seed": 3}),
            epochs: vec![epoch(30, Some(Label::Target)), epoch(125, None)],
        };
        let mut buf = Vec::new();
        write_epochs(&set, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back: EpochSet<f64> = read_epochs(buf.as_slice()).unwrap();
        assert_eq!(back.channels, set.channels);
        assert_eq!(back.provenance, set.provenance);
        assert_eq!(back.epochs, set.epochs);
    }

    #[test]
    fn truncated_payload() {
        let set = EpochSet {
            channels: vec!["Fz".into(), "Cz".into(), "Pz".into()],
            sample_rate_hz: 500.0,
            provenance: serde_json::Value::Null,
            epochs: vec![epoch(30, None)],
        };
        let mut buf = Vec::new();
        write_epochs(&set, &mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(matches!(read_epochs::<f64, _>(buf.as_slice()), Err(EegError::Format(_))));
        assert!(matches!(read_epochs::<f64, _>(&b"NOTEPOCH"[..]), Err(EegError::Format(_))));
    }
}
