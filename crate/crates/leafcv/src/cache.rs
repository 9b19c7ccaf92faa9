//! Binary feature cache. Fixed little-endian layout:
//!
//! ```text
//! magic "LFCV" | version u32 | kind u8 | dim u32 | count u64
//! | params fingerprint [u8; 32]
//! | count records of: class_id u16 | split u8 | dim f32 values
//! ```
//!
//! The fingerprint commits to the descriptor parameters that produced
//! the vectors, so a stale cache can never be silently reused.

use std::fs;
use std::path::Path;

use leafcv_core::features::FeatureKind;

use crate::dataset::Split;
use crate::error::{PipelineError, Result};

pub const CACHE_MAGIC: [u8; 4] = *b"LFCV";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub version: u32,
    pub kind: FeatureKind,
    pub dim: u32,
    pub count: u64,
    pub fingerprint: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub class_id: u16,
    pub split: Split,
    pub values: Vec<f32>,
}

fn kind_code(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::Hog => 0,
        FeatureKind::Lbp => 1,
        FeatureKind::Raw => 2,
    }
}

fn code_kind(code: u8) -> Option<FeatureKind> {
    match code {
        0 => Some(FeatureKind::Hog),
        1 => Some(FeatureKind::Lbp),
        2 => Some(FeatureKind::Raw),
        _ => None,
    }
}

fn split_code(split: Split) -> u8 {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

fn code_split(code: u8) -> Option<Split> {
    match code {
        0 => Some(Split::Train),
        1 => Some(Split::Val),
        2 => Some(Split::Test),
        _ => None,
    }
}

pub fn write_cache(
    path: &Path,
    kind: FeatureKind,
    dim: u32,
    fingerprint: [u8; 32],
    records: &[CacheRecord],
) -> Result<()> {
    let mut buf = Vec::with_capacity(53 + records.len() * (3 + 4 * dim as usize));
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(kind_code(kind));
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    buf.extend_from_slice(&fingerprint);
    for r in records {
        if r.values.len() != dim as usize {
            return Err(PipelineError::data(format!(
                "cache record has {} values, header says {dim}",
                r.values.len()
            )));
        }
        buf.extend_from_slice(&r.class_id.to_le_bytes());
        buf.push(split_code(r.split));
        for v in &r.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| PipelineError::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<(CacheHeader, Vec<CacheRecord>)> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let corrupt = |what: &str| {
        PipelineError::data(format!("corrupt feature cache {}: {what}", path.display()))
    };
    if bytes.len() < 53 {
        return Err(corrupt("truncated header"));
    }
    if bytes[..4] != CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let kind = code_kind(bytes[8]).ok_or_else(|| corrupt("unknown feature kind"))?;
    let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let fingerprint: [u8; 32] = bytes[21..53].try_into().unwrap();

    let record_len = 3 + 4 * dim as usize;
    let body = &bytes[53..];
    if body.len() != record_len.checked_mul(count as usize).ok_or_else(|| corrupt("overflow"))? {
        return Err(corrupt("record section length mismatch"));
    }
    let mut records = Vec::with_capacity(count as usize);
    for chunk in body.chunks_exact(record_len) {
        let class_id = u16::from_le_bytes(chunk[..2].try_into().unwrap());
        let split = code_split(chunk[2]).ok_or_else(|| corrupt("unknown split code"))?;
        let values = chunk[3..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push(CacheRecord { class_id, split, values });
    }
    Ok((CacheHeader { version, kind, dim, count, fingerprint }, records))
}

/// Reads the cache only if it matches the expected kind, dimension, and
/// parameter fingerprint; any mismatch or decode failure means the
/// cache must be regenerated.
pub fn read_if_valid(
    path: &Path,
    kind: FeatureKind,
    dim: u32,
    fingerprint: [u8; 32],
) -> Option<Vec<CacheRecord>> {
    match read_cache(path) {
        Ok((header, records))
            if header.kind == kind && header.dim == dim && header.fingerprint == fingerprint =>
        {
            Some(records)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<CacheRecord> {
        vec![
            CacheRecord { class_id: 0, split: Split::Train, values: vec![1.0, -2.5, 0.125] },
            CacheRecord { class_id: 3, split: Split::Test, values: vec![f32::MIN, 0.0, 1e-38] },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lfcv");
        let records = sample_records();
        write_cache(&path, FeatureKind::Hog, 3, [7u8; 32], &records).unwrap();
        let (header, back) = read_cache(&path).unwrap();
        assert_eq!(header.kind, FeatureKind::Hog);
        assert_eq!(header.dim, 3);
        assert_eq!(header.count, 2);
        assert_eq!(header.fingerprint, [7u8; 32]);
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a.class_id, b.class_id);
            assert_eq!(a.split, b.split);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn fingerprint_mismatch_invalidates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lfcv");
        write_cache(&path, FeatureKind::Lbp, 3, [1u8; 32], &sample_records()).unwrap();
        assert!(read_if_valid(&path, FeatureKind::Lbp, 3, [1u8; 32]).is_some());
        assert!(read_if_valid(&path, FeatureKind::Lbp, 3, [2u8; 32]).is_none());
        assert!(read_if_valid(&path, FeatureKind::Hog, 3, [1u8; 32]).is_none());
        assert!(read_if_valid(&path, FeatureKind::Lbp, 4, [1u8; 32]).is_none());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lfcv");
        write_cache(&path, FeatureKind::Raw, 3, [0u8; 32], &sample_records()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_cache(&path), Err(PipelineError::Data(_))));

        fs::write(&path, b"LFXWrest").unwrap();
        assert!(matches!(read_cache(&path), Err(PipelineError::Data(_))));
    }

    #[test]
    fn wrong_record_width_is_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lfcv");
        let bad = vec![CacheRecord { class_id: 0, split: Split::Val, values: vec![1.0] }];
        assert!(matches!(
            write_cache(&path, FeatureKind::Hog, 3, [0u8; 32], &bad),
            Err(PipelineError::Data(_))
        ));
    }
}
