//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "PMOD" | u16 version | u32 config length | config JSON
//! u32 parameter count
//! per parameter: u32 name length | name | u32 rank | u64 dims… | f64 values…
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::numerics::{ParamStore, Tensor};

use super::{Model, ModelConfig, ModelError};

pub const MAGIC: &[u8; 4] = b"PMOD";
pub const VERSION: u16 = 1;

impl Model {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_vec(self.config()).expect("config serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&(self.params().len() as u32).to_le_bytes());
        for (_, p) in self.params().iter() {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
            for &d in p.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::Format("not a PMOD checkpoint".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(len)?)
            .map_err(|e| ModelError::Format(format!("bad config block: {e}")))?;
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| ModelError::Format("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.array().map(f64::from_le_bytes)).collect::<Result<Vec<_>, _>>()?;
            store.register(name, Tensor::new(shape, data)?, true)?;
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Model::with_params(config, store)
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), ModelError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_checkpoint_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}
