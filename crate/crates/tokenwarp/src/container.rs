//! The TKWP tensor container: a little binary format for exchanging f32
//! tensors between runs and languages.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   magic      4 bytes  "TKWP"
//! offset 4   version    u32      1
//! offset 8   dtype      u8       1 = f32
//! offset 9   ndim       u8
//! offset 10  reserved   2 bytes  written as zero, ignored on read
//! offset 12  dims       ndim x u64
//! then       payload    4 * prod(dims) bytes, row-major f32
//! ```
//!
//! Writes go to a temporary file in the target directory and are renamed
//! into place, so failed runs never leave partial outputs behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, TokenGrid, VideoTensor};

pub const MAGIC: [u8; 4] = *b"TKWP";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;

/// An untyped tensor straight out of a container file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let expect: u64 = dims.iter().product();
        if expect as usize != data.len() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match dims product {}",
                data.len(),
                expect
            )));
        }
        Ok(Self { dims, data })
    }
}

/// Serialize a raw tensor into container bytes.
pub fn to_bytes(tensor: &RawTensor) -> Result<Vec<u8>> {
    if tensor.dims.is_empty() || tensor.dims.len() > u8::MAX as usize {
        return Err(Error::invalid(format!("unsupported rank {}", tensor.dims.len())));
    }
    let mut out = Vec::with_capacity(12 + tensor.dims.len() * 8 + tensor.data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(tensor.dims.len() as u8);
    out.extend_from_slice(&[0u8, 0u8]);
    for &d in &tensor.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in &tensor.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parse container bytes into a raw tensor.
pub fn from_bytes(bytes: &[u8]) -> Result<RawTensor> {
    let need = |offset: usize, len: usize| -> Result<&[u8]> {
        bytes.get(offset..offset + len).ok_or(Error::Format {
            offset: offset as u64,
            reason: format!("truncated: need {} bytes", offset + len),
        })
    };
    let magic = need(0, 4)?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic {:?}, expected \"TKWP\"", String::from_utf8_lossy(magic)),
        });
    }
    let version = u32::from_le_bytes(need(4, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format { offset: 4, reason: format!("unsupported version {version}") });
    }
    let dtype = need(8, 1)?[0];
    if dtype != DTYPE_F32 {
        return Err(Error::Format { offset: 8, reason: format!("unsupported dtype {dtype}") });
    }
    let ndim = need(9, 1)?[0] as usize;
    if ndim == 0 {
        return Err(Error::Format { offset: 9, reason: "rank 0 tensor".into() });
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut offset = 12;
    for _ in 0..ndim {
        dims.push(u64::from_le_bytes(need(offset, 8)?.try_into().unwrap()));
        offset += 8;
    }
    let count: u64 = dims.iter().product();
    let payload_len = count
        .checked_mul(4)
        .ok_or(Error::Format { offset: offset as u64, reason: "dims overflow".into() })? as usize;
    let payload = need(offset, payload_len)?;
    if bytes.len() != offset + payload_len {
        return Err(Error::Format {
            offset: (offset + payload_len) as u64,
            reason: format!("{} trailing bytes", bytes.len() - offset - payload_len),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    RawTensor::new(dims, data)
}

/// Write a tensor container atomically (temp file + rename).
pub fn write_tensor(path: &Path, tensor: &RawTensor) -> Result<()> {
    let bytes = to_bytes(tensor)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Read a tensor container from disk.
pub fn read_tensor(path: &Path) -> Result<RawTensor> {
    from_bytes(&fs::read(path)?)
}

fn dim(d: u64) -> usize {
    d as usize
}

/// Interpret a rank-4 tensor `(n, h, w, c)` as a video.
pub fn as_video(t: &RawTensor) -> Result<VideoTensor> {
    match t.dims.as_slice() {
        [n, h, w, c] => VideoTensor::new(dim(*n), dim(*h), dim(*w), dim(*c), t.data.clone()),
        other => Err(Error::invalid(format!("expected rank-4 video tensor, got rank {}", other.len()))),
    }
}

/// Interpret a rank-3 tensor `(h, w, d)` as a token grid; rank-2 tensors
/// become single-channel grids.
pub fn as_grid(t: &RawTensor) -> Result<TokenGrid> {
    match t.dims.as_slice() {
        [h, w, d] => TokenGrid::new(dim(*h), dim(*w), dim(*d), t.data.clone()),
        [h, w] => TokenGrid::new(dim(*h), dim(*w), 1, t.data.clone()),
        other => Err(Error::invalid(format!("expected rank-3 grid tensor, got rank {}", other.len()))),
    }
}

/// Interpret a rank-3 tensor `(h, w, 2)` as a flow field with channels
/// `(u, v)`.
pub fn as_flow(t: &RawTensor) -> Result<FlowField> {
    match t.dims.as_slice() {
        [h, w, 2] => {
            let (h, w) = (dim(*h), dim(*w));
            let mut u = Vec::with_capacity(h * w);
            let mut v = Vec::with_capacity(h * w);
            for px in t.data.chunks_exact(2) {
                u.push(px[0]);
                v.push(px[1]);
            }
            FlowField::new(h, w, u, v)
        }
        other => Err(Error::invalid(format!(
            "expected (h, w, 2) flow tensor, got dims {other:?}"
        ))),
    }
}

/// Interpret a rank-2 tensor `(h, w)` as an occlusion mask.
pub fn as_mask(t: &RawTensor) -> Result<OcclusionMask> {
    match t.dims.as_slice() {
        [h, w] => OcclusionMask::new(dim(*h), dim(*w), t.data.clone()),
        other => Err(Error::invalid(format!("expected rank-2 mask tensor, got rank {}", other.len()))),
    }
}

pub fn video_tensor(video: &VideoTensor) -> RawTensor {
    RawTensor {
        dims: vec![video.n() as u64, video.h() as u64, video.w() as u64, video.c() as u64],
        data: video.values().to_vec(),
    }
}

pub fn grid_tensor(grid: &TokenGrid) -> RawTensor {
    RawTensor {
        dims: vec![grid.h() as u64, grid.w() as u64, grid.d() as u64],
        data: grid.values().to_vec(),
    }
}

pub fn flow_tensor(flow: &FlowField) -> RawTensor {
    let mut data = Vec::with_capacity(flow.u().len() * 2);
    for (u, v) in flow.u().iter().zip(flow.v()) {
        data.push(*u);
        data.push(*v);
    }
    RawTensor { dims: vec![flow.h() as u64, flow.w() as u64, 2], data }
}

pub fn mask_tensor(mask: &OcclusionMask) -> RawTensor {
    RawTensor { dims: vec![mask.h() as u64, mask.w() as u64], data: mask.values().to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let t = RawTensor::new(
            vec![2, 3, 4, 5],
            (0..120).map(|i| (i as f32) * 0.25 - 7.0).collect(),
        )
        .unwrap();
        let back = from_bytes(&to_bytes(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bad_magic_names_the_magic() {
        let mut bytes = to_bytes(&RawTensor::new(vec![1], vec![0.0]).unwrap()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        match from_bytes(&bytes) {
            Err(Error::Format { offset: 0, reason }) => assert!(reason.contains("XXXX")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    // Hand-assembled container: 20-byte header + 8-byte payload.
    #[test]
    fn hand_assembled_one_dimensional_container() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TKWP");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(1); // dtype f32
        bytes.push(1); // ndim
        bytes.extend_from_slice(&[0, 0]); // reserved
        bytes.extend_from_slice(&2u64.to_le_bytes());
        assert_eq!(bytes.len(), 20);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let t = from_bytes(&bytes).unwrap();
        assert_eq!(t.dims, vec![2]);
        assert_eq!(t.data, vec![1.0, 2.0]);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let bytes = to_bytes(&RawTensor::new(vec![4], vec![0.0; 4]).unwrap()).unwrap();
        match from_bytes(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_and_dtype_rejected() {
        let good = to_bytes(&RawTensor::new(vec![1], vec![0.5]).unwrap()).unwrap();
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(from_bytes(&bad_version), Err(Error::Format { offset: 4, .. })));
        let mut bad_dtype = good;
        bad_dtype[8] = 2;
        assert!(matches!(from_bytes(&bad_dtype), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn file_roundtrip_and_typed_views() {
        let dir = tempfile::tempdir().unwrap();
        let flow = FlowField::constant(3, 4, 1.5, -0.5).unwrap();
        let path = dir.path().join("f.tkwp");
        write_tensor(&path, &flow_tensor(&flow)).unwrap();
        let back = as_flow(&read_tensor(&path).unwrap()).unwrap();
        assert_eq!(back, flow);

        let mask = OcclusionMask::filled(3, 4, 0.25).unwrap();
        let mpath = dir.path().join("m.tkwp");
        write_tensor(&mpath, &mask_tensor(&mask)).unwrap();
        assert_eq!(as_mask(&read_tensor(&mpath).unwrap()).unwrap(), mask);
        assert!(as_video(&read_tensor(&mpath).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_over_ranks(rank in 1usize..5, seed in 0u64..300) {
            let mut state = seed.wrapping_add(1);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as u32
            };
            let dims: Vec<u64> = (0..rank).map(|_| (next() % 4 + 1) as u64).collect();
            let count: u64 = dims.iter().product();
            let data: Vec<f32> = (0..count).map(|_| f32::from_bits(0x3f80_0000 | (next() & 0xffff))).collect();
            let t = RawTensor::new(dims, data).unwrap();
            let back = from_bytes(&to_bytes(&t).unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
