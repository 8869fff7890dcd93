//! Binary checkpoint: magic, run config (TOML), seed, then named f64 tensors.
//!
//! ```text
//! "DWLCKPT1"
//! u64 config_len, config_len bytes of TOML
//! u64 seed
//! u32 tensor_count
//! per tensor: u32 name_len, name, u32 rows, u32 cols, rows*cols f64
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use dwl_core::dwl::Agent;
use dwl_core::nn::Tensor;
use dwl_core::profiles::RunConfig;

use crate::config;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"DWLCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_agent(config: &RunConfig, seed: u64, agent: &Agent) -> Self {
        Self { config: config.clone(), seed, tensors: agent.named_tensors() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = config::to_toml(&self.config)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| CliError::Checkpoint { path: path.to_path_buf(), reason: reason.to_string() };
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not a DWLCKPT1 file"));
        }
        let len = r.u64().ok_or_else(|| bad("truncated config length"))? as usize;
        let text = std::str::from_utf8(r.take(len).ok_or_else(|| bad("truncated config"))?)
            .map_err(|_| bad("config is not UTF-8"))?;
        let config = config::from_toml(text)?;
        let seed = r.u64().ok_or_else(|| bad("truncated seed"))?;
        let count = r.u32().ok_or_else(|| bad("truncated tensor count"))?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = r.u32().ok_or_else(|| bad("truncated tensor name"))? as usize;
            let name = String::from_utf8(r.take(n).ok_or_else(|| bad("truncated tensor name"))?.to_vec())
                .map_err(|_| bad("tensor name is not UTF-8"))?;
            let rows = r.u32().ok_or_else(|| bad("truncated shape"))? as usize;
            let cols = r.u32().ok_or_else(|| bad("truncated shape"))? as usize;
            let raw = r.take(rows * cols * 8).ok_or_else(|| bad("truncated tensor data"))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { config, seed, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Rebuilds the agent described by `config`, validating every tensor shape.
    pub fn restore(&self, config: &RunConfig) -> Result<Agent> {
        let mut agent = config.build_agent(self.seed)?;
        agent.load_named(&self.tensors)?;
        Ok(agent)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}
