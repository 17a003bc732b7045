//! Named-tensor checkpoints: `MMCK`, version, tensor count, then per tensor
//! a name, a regularized flag, `rows`, `cols` and the row-major f32 payload.
//! All integers are u32 little-endian.

use std::path::Path;

use super::{NnError, ParameterSet, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
const VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(params: &ParameterSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.specs().len() as u32).to_le_bytes());
    for spec in params.specs() {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.push(spec.regularized as u8);
        out.extend_from_slice(&(spec.rows as u32).to_le_bytes());
        out.extend_from_slice(&(spec.cols as u32).to_le_bytes());
        for v in &params.flat_values()[spec.offset..spec.offset + spec.len()] {
            out.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ParameterSet<T>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        if params.id(&name).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate tensor {name}")));
        }
        let regularized = r.take(1)?[0] != 0;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let payload = r.take(rows * cols * 4)?;
        let id = params.add(name, rows, cols, regularized);
        let mut view = params.value_mut(id);
        for (v, chunk) in view.iter_mut().zip(payload.chunks_exact(4)) {
            *v = T::from_f32(f32::from_le_bytes(chunk.try_into().unwrap())).unwrap();
        }
    }
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, params: &ParameterSet<T>) -> std::io::Result<()> {
    std::fs::write(path, encode_checkpoint(params))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParameterSet<T>, NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
