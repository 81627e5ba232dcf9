use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dense 3-D scalar field. Extents are `(H, W, D)` along `(x, y, z)` and the
/// storage is x-fastest: `index = x + H * (y + W * z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    data: Vec<f32>,
}

pub const MVOL_MAGIC: &[u8; 4] = b"MVOL";
pub const MVOL_VERSION: u32 = 1;
/// Magic, version and three extents.
pub const MVOL_HEADER_LEN: u64 = 20;

impl Volume3D {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("volume extents must be positive, got {dims:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if n != data.len() {
            return Err(Error::invalid(format!(
                "volume {dims:?} needs {n} voxels, got {}",
                data.len()
            )));
        }
        Ok(Volume3D { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Self {
        Volume3D {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn cube(extent: usize, data: Vec<f32>) -> Result<Self> {
        Volume3D::new([extent; 3], data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn is_cube(&self, extent: usize) -> bool {
        self.dims == [extent; 3]
    }

    /// `[1, 1, D, W, H]` tensor; the innermost tensor axis is x.
    pub fn to_tensor(&self) -> Tensor {
        let [h, w, d] = self.dims;
        Tensor::new(vec![1, 1, d, w, h], self.data.iter().map(|&v| v as f64).collect())
            .expect("volume layout")
    }

    /// Inverse of [`Volume3D::to_tensor`] for a single `[D, W, H]` block.
    pub fn from_f64(dims: [usize; 3], values: &[f64]) -> Result<Self> {
        Volume3D::new(dims, values.iter().map(|&v| v as f32).collect())
    }

    /// Min-max normalization to `[0, 1]`; a constant volume maps to zeros.
    pub fn normalized_minmax(&self) -> Volume3D {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Volume3D { dims: self.dims, data }
    }
}

/// Writes the MVOL container: magic, u32 version, u32 H, W, D, then
/// little-endian f32 voxels in x-fastest order.
pub fn write_mvol(volume: &Volume3D, path: &Path) -> Result<()> {
    for &d in &volume.dims {
        if u32::try_from(d).is_err() {
            return Err(Error::invalid(format!("extent {d} does not fit in u32")));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = Vec::with_capacity(MVOL_HEADER_LEN as usize);
    header.extend_from_slice(MVOL_MAGIC);
    header.extend_from_slice(&MVOL_VERSION.to_le_bytes());
    for &d in &volume.dims {
        header.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.write_all(&header).map_err(|e| Error::io(path, e))?;
    let mut payload = Vec::with_capacity(volume.data.len() * 4);
    for v in &volume.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_mvol(path: &Path) -> Result<Volume3D> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_mvol(&bytes, path)
}

pub fn decode_mvol(bytes: &[u8], path: &Path) -> Result<Volume3D> {
    let fail = |offset: u64, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        msg,
    };
    if bytes.len() < MVOL_HEADER_LEN as usize {
        return Err(fail(bytes.len() as u64, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MVOL_MAGIC {
        return Err(fail(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != MVOL_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let dims = [word(8) as usize, word(12) as usize, word(16) as usize];
    let voxels = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail(8, format!("dimension overflow {dims:?}")))?;
    if dims.iter().any(|&d| d == 0) {
        return Err(fail(8, format!("zero extent in {dims:?}")));
    }
    let expected = MVOL_HEADER_LEN + voxels;
    if (bytes.len() as u64) < expected {
        return Err(fail(
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if (bytes.len() as u64) > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() as u64 - expected)));
    }
    let data = bytes[MVOL_HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume3D::new(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Volume3D {
        let data = (0..2 * 3 * 4).map(|i| i as f32 * 0.125 - 0.3).collect();
        Volume3D::new([2, 3, 4], data).unwrap()
    }

    #[test]
    fn roundtrip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mvol");
        let v = sample();
        write_mvol(&v, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 4 * 2 * 3 * 4);
        let back = read_mvol(&path).unwrap();
        assert_eq!(back, v);
        assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mvol");
        write_mvol(&sample(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let err = decode_mvol(&bytes, &path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mvol");
        write_mvol(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let err = decode_mvol(&bytes[..bytes.len() - 3], &path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        assert!(decode_mvol(&bytes[..10], &path).is_err());
    }

    #[test]
    fn dimension_overflow_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MVOL_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = decode_mvol(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("overflow") || err.to_string().contains("truncated"));
    }

    #[test]
    fn x_is_fastest() {
        let v = sample();
        assert_eq!(v.index(1, 0, 0), 1);
        assert_eq!(v.index(0, 1, 0), 2);
        assert_eq!(v.index(0, 0, 1), 6);
        assert_eq!(v.to_tensor().shape(), &[1, 1, 4, 3, 2]);
    }
}
