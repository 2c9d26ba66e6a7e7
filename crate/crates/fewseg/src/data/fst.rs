//! FST1 tensor container: a minimal named-tensor file.
//!
//! Layout, all integers little-endian u32:
//!
//! ```text
//! "FST1" | entry count | entries...
//! entry: name length | name (UTF-8) | rank | dims... | values (f32, row-major)
//! ```
//!
//! Values are quantized to f32 on write; model parameters survive the
//! round trip exactly at that precision and the training pipeline is
//! deterministic, so identical runs produce identical files.

use crate::error::{Error, Result};
use crate::features::ModelParams;
use crate::linalg::Matrix;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"FST1";

/// One named tensor. `values.len()` must equal the product of `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if dims.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "tensor {name:?} must have rank at least 1"
            )));
        }
        let numel: usize = dims.iter().product();
        if numel != values.len() {
            return Err(Error::DimensionMismatch {
                context: "TensorRecord::new",
                expected: (numel, 1),
                got: (values.len(), 1),
            });
        }
        Ok(TensorRecord { name, dims, values })
    }
}

fn u32_from(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

/// Writes tensors in the order given.
pub fn write_tensors(path: &Path, tensors: &[TensorRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&u32_from(tensors.len(), "tensor count")?.to_le_bytes())?;
    for t in tensors {
        let numel: usize = t.dims.iter().product();
        if numel != t.values.len() {
            return Err(Error::DimensionMismatch {
                context: "write_tensors",
                expected: (numel, 1),
                got: (t.values.len(), 1),
            });
        }
        w.write_all(&u32_from(t.name.len(), "name length")?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&u32_from(t.dims.len(), "rank")?.to_le_bytes())?;
        for &d in &t.dims {
            w.write_all(&u32_from(d, "dimension")?.to_le_bytes())?;
        }
        for &v in &t.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R: Read> {
    r: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn fail(&self, msg: &str) -> Error {
        Error::Format(format!("{}: {msg}", self.path))
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| self.fail(&format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Reads every tensor in the file, validating the magic, all lengths, and
/// that no trailing bytes remain.
pub fn read_tensors(path: &Path) -> Result<Vec<TensorRecord>> {
    let file = File::open(path)?;
    let mut r = Reader {
        r: BufReader::new(file),
        path: path.display().to_string(),
    };
    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(r.fail("bad magic, not an FST1 container"));
    }
    let count = r.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name_bytes = r.bytes(name_len, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| r.fail("tensor name is not valid UTF-8"))?;
        let rank = r.u32("rank")? as usize;
        if rank == 0 {
            return Err(r.fail(&format!("tensor {name:?} has rank 0")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = r.u32("dimension")? as usize;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| r.fail(&format!("tensor {name:?} dimensions overflow")))?;
            dims.push(d);
        }
        let raw = r.bytes(numel * 4, "tensor values")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(TensorRecord { name, dims, values });
    }
    let mut trailing = [0u8; 1];
    if r.r.read(&mut trailing)? != 0 {
        return Err(r.fail("trailing bytes after the last tensor"));
    }
    Ok(out)
}

fn matrix_to_record(name: &str, m: &Matrix) -> TensorRecord {
    TensorRecord {
        name: name.to_string(),
        dims: vec![m.rows(), m.cols()],
        values: m.data().iter().map(|&v| v as f32).collect(),
    }
}

/// Serializes model parameters: tensors `w_e`, `w_f`, `w_h`, and the
/// feature-grid `stride`, so the file alone is enough to run inference.
pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    let tensors = vec![
        matrix_to_record("w_e", &params.w_e),
        matrix_to_record("w_f", &params.w_f),
        TensorRecord {
            name: "w_h".into(),
            dims: vec![params.w_h.len()],
            values: params.w_h.iter().map(|&v| v as f32).collect(),
        },
        TensorRecord {
            name: "stride".into(),
            dims: vec![1],
            values: vec![params.stride as f32],
        },
    ];
    write_tensors(path, &tensors)
}

/// Loads parameters written by [`save_params`].
pub fn load_params(path: &Path) -> Result<ModelParams> {
    let tensors = read_tensors(path)?;
    let find = |name: &str| -> Result<&TensorRecord> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("{}: missing tensor {name:?}", path.display())))
    };
    let as_matrix = |t: &TensorRecord| -> Result<Matrix> {
        if t.dims.len() != 2 {
            return Err(Error::Format(format!(
                "{}: tensor {:?} must be rank 2",
                path.display(),
                t.name
            )));
        }
        Matrix::from_vec(
            t.dims[0],
            t.dims[1],
            t.values.iter().map(|&v| v as f64).collect(),
        )
    };
    let w_e = as_matrix(find("w_e")?)?;
    let w_f = as_matrix(find("w_f")?)?;
    let w_h_rec = find("w_h")?;
    let w_h: Vec<f64> = w_h_rec.values.iter().map(|&v| v as f64).collect();
    let stride_rec = find("stride")?;
    let stride = stride_rec.values.first().copied().unwrap_or(0.0);
    if stride < 1.0 || stride.fract() != 0.0 {
        return Err(Error::Format(format!(
            "{}: stride must be a positive integer, got {stride}",
            path.display()
        )));
    }
    ModelParams::new(stride as usize, w_e, w_f, w_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn byte_layout_of_single_entry() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.fst");
        let t = TensorRecord::new("ab", vec![2, 3], vec![0.0; 6]).unwrap();
        write_tensors(&path, &[t]).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        // magic + count + (name len + name) + rank + two dims + six f32s
        assert_eq!(len, 4 + 4 + (4 + 2) + 4 + 8 + 24);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.fst");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tensors: Vec<TensorRecord> = (0..5)
            .map(|i| {
                let dims: Vec<usize> =
                    (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=4)).collect();
                let numel = dims.iter().product();
                TensorRecord::new(
                    format!("tensor_{i}"),
                    dims,
                    (0..numel).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        write_tensors(&path, &tensors).unwrap();
        assert_eq!(read_tensors(&path).unwrap(), tensors);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.fst");
        std::fs::write(&path, b"NOPE\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.fst");
        let t = TensorRecord::new("x", vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_tensors(&path, &[t]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_trailing_garbage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.fst");
        let t = TensorRecord::new("x", vec![1], vec![1.0]).unwrap();
        write_tensors(&path, &[t]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));
    }

    #[test]
    fn params_round_trip_at_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.fst");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::init(4, 8, 8, &mut rng).unwrap();
        save_params(&path, &params).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back.stride, 4);
        assert_eq!(back.w_e.data().len(), params.w_e.data().len());
        for (a, b) in back.w_e.data().iter().zip(params.w_e.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // Saving the reloaded params is byte-identical: f32 quantization is
        // idempotent.
        let path2 = dir.path().join("p2.fst");
        save_params(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn missing_tensor_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.fst");
        let t = TensorRecord::new("w_e", vec![6, 2], vec![0.0; 12]).unwrap();
        write_tensors(&path, &[t]).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format(_))));
    }
}
