use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AdamState, ModelConfig, ModelState, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CCFCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    /// parameter tensors, then first moments, then second moments
    tensors: Vec<String>,
}

fn push_tensor(out: &mut Vec<u8>, t: &Array2<f64>) {
    out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// `CCFCKPT1 | u32 header_len | JSON header | (u32 rows | u32 cols | f64 data)*`
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let names: Vec<String> = state.config.tensor_shapes().into_iter().map(|(n, _)| n).collect();
    let tensors = names
        .iter()
        .cloned()
        .chain(names.iter().map(|n| format!("adam.m.{n}")))
        .chain(names.iter().map(|n| format!("adam.v.{n}")))
        .collect();
    let header = serde_json::to_vec(&Header {
        config: state.config,
        step: state.adam.step,
        tensors,
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in state.params.tensors.iter().chain(&state.adam.m).chain(&state.adam.v) {
        push_tensor(&mut out, t);
    }
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Load {
            file: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self, shape: (usize, usize)) -> Result<Array2<f64>> {
        let (r, c) = (self.u32()?, self.u32()?);
        if (r, c) != shape {
            return Err(self.fail(format!("tensor shape {r}x{c}, expected {}x{}", shape.0, shape.1)));
        }
        let data = self
            .take(8 * r * c)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec((r, c), data).expect("shape checked"))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(cur.fail("bad magic, expected CCFCKPT1"));
    }
    let len = cur.u32()?;
    let header: Header = serde_json::from_slice(cur.take(len)?).map_err(|e| cur.fail(e.to_string()))?;
    header.config.validate()?;
    let shapes: Vec<(usize, usize)> = header.config.tensor_shapes().into_iter().map(|(_, s)| s).collect();
    let mut read_all = || -> Result<Vec<Array2<f64>>> { shapes.iter().map(|&s| cur.tensor(s)).collect() };
    let params = Params { tensors: read_all()? };
    let m = read_all()?;
    let v = read_all()?;
    if cur.pos != bytes.len() {
        return Err(cur.fail("trailing bytes after tensors"));
    }
    Ok(ModelState {
        config: header.config,
        params,
        adam: AdamState {
            m,
            v,
            step: header.step,
        },
    })
}
