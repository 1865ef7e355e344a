//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "CURL1"
//! u64 vocab_size, u64 emb_dim, u64 hidden, u64 layers, u8 tied
//! f64 tensors in ModelParams::tensors() order
//! u64 epoch, f64 tau, f64 lr, u64 seed, u128 rng_word_pos,
//! f64 best_valid, u64 n, n x f64 valid_history
//! ```

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"CURL1";

/// Training progress stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointState {
    /// Completed epochs.
    pub epoch: usize,
    pub tau: f64,
    pub lr: f64,
    pub seed: u64,
    /// Position of the training random stream.
    pub rng_word_pos: u128,
    pub best_valid: f64,
    pub valid_history: Vec<f64>,
}

impl Default for CheckpointState {
    fn default() -> Self {
        CheckpointState {
            epoch: 0,
            tau: crate::neighbors::INITIAL_TAU,
            lr: 0.0,
            seed: 0,
            rng_word_pos: 0,
            best_valid: f64::INFINITY,
            valid_history: Vec::new(),
        }
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint(params: &ModelParams, state: &CheckpointState) -> Vec<u8> {
    let cfg = &params.config;
    let mut out = Vec::with_capacity(64 + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    for v in [cfg.vocab_size, cfg.emb_dim, cfg.hidden, cfg.layers] {
        put_u64(&mut out, v);
    }
    out.push(cfg.tied as u8);
    for tensor in params.tensors() {
        for &x in tensor {
            put_f64(&mut out, x);
        }
    }
    put_u64(&mut out, state.epoch);
    put_f64(&mut out, state.tau);
    put_f64(&mut out, state.lr);
    out.extend_from_slice(&state.seed.to_le_bytes());
    out.extend_from_slice(&state.rng_word_pos.to_le_bytes());
    put_f64(&mut out, state.best_valid);
    put_u64(&mut out, state.valid_history.len());
    for &v in &state.valid_history {
        put_f64(&mut out, v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("checkpoint size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointState)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a CURL1 checkpoint".into()));
    }
    let vocab_size = r.usize()?;
    let emb_dim = r.usize()?;
    let hidden = r.usize()?;
    let layers = r.usize()?;
    let tied = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("bad tied flag {b}"))),
    };
    let config = ModelConfig {
        vocab_size,
        emb_dim,
        hidden,
        layers,
        tied,
    };
    config.validate()?;
    let n = config.num_params();
    if n.checked_mul(8).is_none_or(|b| b > bytes.len()) {
        return Err(Error::Format(
            "checkpoint shorter than its declared parameter count".into(),
        ));
    }
    let mut params = ModelParams::zeros(config)?;
    for tensor in params.tensors_mut() {
        for x in tensor.iter_mut() {
            *x = r.f64()?;
        }
    }
    let epoch = r.usize()?;
    let tau = r.f64()?;
    let lr = r.f64()?;
    let seed = r.u64()?;
    let rng_word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
    let best_valid = r.f64()?;
    let len = r.usize()?;
    let valid_history = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok((
        params,
        CheckpointState {
            epoch,
            tau,
            lr,
            seed,
            rng_word_pos,
            best_valid,
            valid_history,
        },
    ))
}

/// Writes through a temporary file and renames it into place.
pub fn save_checkpoint(path: &Path, params: &ModelParams, state: &CheckpointState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(params, state)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointState)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
