//! Binary parameter checkpoints.
//!
//! Layout, all integers `u32` and reals `f64`, little-endian:
//!
//! ```text
//! magic "ACNNCKPT" (8 bytes) | version = 1
//! n_types | n_types x u8 atomic numbers
//! max_neighbors | cutoff | fc mode (u8: 0 multiplicative, 1 exponent)
//! n_filters | r_s[n] | sigma_s[n] | beta[n] | bias[n]
//! activation (u8: 0 relu, 1 tanh) | dropout_p
//! n_layers | n_layers x (d_in, d_out)
//! per layer: weights (row-major d_in x d_out) then biases
//! ```
//!
//! A JSON sidecar next to the checkpoint carries the same hyperparameters
//! in readable form; it is informational and never read back.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{AcnnError, Result};
use crate::featurize::{AtomTypeVocabulary, FcMode, RadialFilterParams};
use crate::network::{Activation, AtomicNetParams, DenseLayerParams};
use crate::train::ModelParams;

pub const MAGIC: &[u8; 8] = b"ACNNCKPT";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, params.vocab.len() as u32);
    out.extend_from_slice(params.vocab.types());
    put_u32(&mut out, params.max_neighbors as u32);
    put_f64(&mut out, params.radial.cutoff);
    out.push(match params.radial.mode {
        FcMode::Multiplicative => 0,
        FcMode::Exponent => 1,
    });
    put_u32(&mut out, params.radial.n_filters() as u32);
    for list in [
        &params.radial.r_s,
        &params.radial.sigma_s,
        &params.radial.beta,
        &params.radial.bias,
    ] {
        list.iter().for_each(|&v| put_f64(&mut out, v));
    }
    out.push(match params.net.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    put_f64(&mut out, params.net.dropout_p);
    put_u32(&mut out, params.net.layers.len() as u32);
    for l in &params.net.layers {
        put_u32(&mut out, l.d_in as u32);
        put_u32(&mut out, l.d_out as u32);
    }
    for l in &params.net.layers {
        l.weights.iter().chain(&l.biases).for_each(|&v| put_f64(&mut out, v));
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(AcnnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AcnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_types = r.u32()? as usize;
    let vocab = AtomTypeVocabulary::new(r.take(n_types)?.to_vec())?;
    let max_neighbors = r.u32()? as usize;
    let cutoff = r.f64()?;
    let mode = match r.u8()? {
        0 => FcMode::Multiplicative,
        1 => FcMode::Exponent,
        other => return Err(AcnnError::Checkpoint(format!("unknown fc mode tag {other}"))),
    };
    let n_filters = r.u32()? as usize;
    let r_s = r.f64s(n_filters)?;
    let sigma_s = r.f64s(n_filters)?;
    let beta = r.f64s(n_filters)?;
    let bias = r.f64s(n_filters)?;
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        other => return Err(AcnnError::Checkpoint(format!("unknown activation tag {other}"))),
    };
    let dropout_p = r.f64()?;
    let n_layers = r.u32()? as usize;
    let shapes = (0..n_layers)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n_layers);
    for (d_in, d_out) in shapes {
        let weights = r.f64s(
            d_in.checked_mul(d_out)
                .ok_or_else(|| AcnnError::Checkpoint("layer too large".into()))?,
        )?;
        let biases = r.f64s(d_out)?;
        layers.push(DenseLayerParams {
            d_in,
            d_out,
            weights,
            biases,
        });
    }
    if r.pos != bytes.len() {
        return Err(AcnnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let radial = RadialFilterParams {
        r_s,
        sigma_s,
        beta,
        bias,
        cutoff,
        mode,
    };
    let net = AtomicNetParams {
        layers,
        dropout_p,
        activation,
    };
    ModelParams::new(vocab, radial, net, max_neighbors).map_err(|e| AcnnError::Checkpoint(e.to_string()))
}

/// Readable summary of the hyperparameters of `params`.
pub fn sidecar(params: &ModelParams) -> serde_json::Value {
    json!({
        "format": "acnn-checkpoint",
        "version": VERSION,
        "atom_types": params.vocab.types(),
        "n_radial": params.radial.n_filters(),
        "r_s": params.radial.r_s,
        "sigma_s": params.radial.sigma_s,
        "beta": params.radial.beta,
        "bias": params.radial.bias,
        "cutoff": params.radial.cutoff,
        "max_neighbors": params.max_neighbors,
        "fc": params.radial.mode,
        "activation": params.net.activation,
        "dropout": params.net.dropout_p,
        "layers": params.net.layers.iter().map(|l| [l.d_in, l.d_out]).collect::<Vec<_>>(),
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write the binary checkpoint and its JSON sidecar.
pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| AcnnError::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar(params)).expect("json values serialize");
    std::fs::write(&side, text + "\n").map_err(|e| AcnnError::io(&side, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    decode(&std::fs::read(path).map_err(|e| AcnnError::io(path, e))?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
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
            .ok_or_else(|| AcnnError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
