//! QNVF feature-map container.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QNVF"
//! 4       4     version (u32, currently 1)
//! 8       4     count   (u32)
//! 12      4     height  (u32)
//! 16      4     width   (u32)
//! 20      4     channels(u32)
//! 24      8     metadata (u64; cache key or attack-config hash)
//! 32      …     count × height × width × channels f32 values, row-major HWC
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::image::ImageTensor;

pub const QNVF_MAGIC: &[u8; 4] = b"QNVF";
pub const QNVF_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

pub fn write_qnvf(path: &Path, maps: &[ImageTensor], metadata: u64) -> Result<()> {
    let (h, w, c) = maps.first().map(ImageTensor::dims).unwrap_or((0, 0, 0));
    if maps.iter().any(|m| m.dims() != (h, w, c)) {
        return Err(Error::invalid("QNVF maps must share one shape"));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + maps.len() * h * w * c * 4);
    buf.extend_from_slice(QNVF_MAGIC);
    for v in [QNVF_VERSION, maps.len() as u32, h as u32, w as u32, c as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&metadata.to_le_bytes());
    for m in maps {
        for &v in m.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Returns the maps and the header's metadata field.
pub fn read_qnvf(path: &Path) -> Result<(Vec<ImageTensor>, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |kind| Error::format(path, kind);
    if bytes.len() < HEADER_LEN {
        return Err(fail(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        }));
    }
    if &bytes[..4] != QNVF_MAGIC {
        return Err(fail(FormatError::BadMagic {
            expected: u32::from_be_bytes(*QNVF_MAGIC),
            found: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
        }));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let version = word(1) as u32;
    if version != QNVF_VERSION {
        return Err(fail(FormatError::UnsupportedVersion(version)));
    }
    let (count, h, w, c) = (word(2), word(3), word(4), word(5));
    let metadata = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let per_map = h * w * c;
    let expected = HEADER_LEN + count * per_map * 4;
    if bytes.len() != expected {
        return Err(fail(FormatError::Truncated {
            expected,
            found: bytes.len(),
        }));
    }
    let floats: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let maps = floats
        .chunks(per_map.max(1))
        .take(count)
        .map(|chunk| ImageTensor::new(h, w, c, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((maps, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.qnvf");
        let maps: Vec<ImageTensor> = (0..3)
            .map(|i| ImageTensor::new(2, 3, 4, (0..24).map(|v| (v as f64 - 12.0) / (13.0 + i as f64)).collect()).unwrap())
            .collect();
        write_qnvf(&path, &maps, 0xdead_beef_0123).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"QNVF");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 32 + 3 * 24 * 4);
        let (back, meta) = read_qnvf(&path).unwrap();
        assert_eq!(meta, 0xdead_beef_0123);
        let rounded: Vec<_> = maps.into_iter().map(ImageTensor::round_to_f32).collect();
        assert_eq!(back, rounded);
    }

    #[test]
    fn empty_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.qnvf");
        write_qnvf(&path, &[], 1).unwrap();
        assert!(read_qnvf(&path).unwrap().0.is_empty());

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_qnvf(&path),
            Err(Error::Format { kind: FormatError::BadMagic { .. }, .. })
        ));

        let maps = vec![ImageTensor::zeros(2, 2, 1)];
        write_qnvf(&path, &maps, 0).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            read_qnvf(&path),
            Err(Error::Format { kind: FormatError::Truncated { .. }, .. })
        ));
    }
}
