//! Binary weight container plus JSON metadata sidecars.
//!
//! Layout (all integers little-endian, all reals IEEE-754 single precision):
//!
//! ```text
//! "PVNN"  u16 version  u16 network_count
//! per network:
//!   u8 output_kind (0 softmax, 1 linear)  u8 n_dims  u32 dims[n_dims]
//!   f32 input_mean[dims[0]]   f32 input_scale[dims[0]]
//!   f32 output_mean[dims[-1]] f32 output_scale[dims[-1]]
//!   per layer l: f32 weights[dims[l+1]][dims[l]] (row-major)  f32 bias[dims[l+1]]
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::bank::{AnalyzerBank, Scheme};
use super::mlp::{Layer, MlpWeights, Normalization, OutputKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PVNN";
const VERSION: u16 = 1;

pub fn encode_networks(nets: &[MlpWeights]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(nets.len() as u16).to_le_bytes());
    let put = |out: &mut Vec<u8>, values: &mut dyn Iterator<Item = &f64>| {
        for v in values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    for net in nets {
        out.push(match net.output_kind {
            OutputKind::Softmax => 0,
            OutputKind::Linear => 1,
        });
        let dims = net.layer_dims();
        out.push(dims.len() as u8);
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        put(&mut out, &mut net.input_norm.mean.iter());
        put(&mut out, &mut net.input_norm.scale.iter());
        put(&mut out, &mut net.output_norm.mean.iter());
        put(&mut out, &mut net.output_norm.scale.iter());
        for layer in &net.layers {
            put(&mut out, &mut layer.weights.iter());
            put(&mut out, &mut layer.bias.iter());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::config("truncated weight file"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::config("weight file too large"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn decode_networks(bytes: &[u8]) -> Result<Vec<MlpWeights>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::config("not a weight file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::config(format!("unsupported weight file version {version}")));
    }
    let count = r.u16()? as usize;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let output_kind = match r.u8()? {
            0 => OutputKind::Softmax,
            1 => OutputKind::Linear,
            k => return Err(Error::config(format!("unknown output kind {k}"))),
        };
        let n_dims = r.u8()? as usize;
        if n_dims < 2 {
            return Err(Error::config("network needs at least two layer sizes"));
        }
        let dims: Vec<usize> = (0..n_dims)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_>>()?;
        let (d_in, d_out) = (dims[0], dims[n_dims - 1]);
        let input_norm = Normalization {
            mean: Array1::from(r.reals(d_in)?),
            scale: Array1::from(r.reals(d_in)?),
        };
        let output_norm = Normalization {
            mean: Array1::from(r.reals(d_out)?),
            scale: Array1::from(r.reals(d_out)?),
        };
        let layers = dims
            .windows(2)
            .map(|w| {
                let weights = Array2::from_shape_vec((w[1], w[0]), r.reals(w[0] * w[1])?)
                    .map_err(|e| Error::config(e.to_string()))?;
                let bias = Array1::from(r.reals(w[1])?);
                Ok(Layer { weights, bias })
            })
            .collect::<Result<_>>()?;
        let net = MlpWeights {
            layers,
            output_kind,
            input_norm,
            output_norm,
        };
        net.validate()?;
        nets.push(net);
    }
    if r.pos != bytes.len() {
        return Err(Error::config("trailing bytes in weight file"));
    }
    Ok(nets)
}

pub fn write_networks(path: impl AsRef<Path>, nets: &[MlpWeights]) -> Result<()> {
    fs::write(path, encode_networks(nets))?;
    Ok(())
}

pub fn read_networks(path: impl AsRef<Path>) -> Result<Vec<MlpWeights>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::config_path("weight file not found", path),
        _ => Error::Io(e),
    })?;
    decode_networks(&bytes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankMetadata {
    scheme: Scheme,
    class_names: Vec<String>,
    layer_dims: Vec<usize>,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Writes `path` (weights) and `path` with a `.json` extension (metadata).
pub fn save_bank(bank: &AnalyzerBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_networks(path, &bank.networks)?;
    let meta = BankMetadata {
        scheme: bank.scheme,
        class_names: bank.class_names.clone(),
        layer_dims: bank.networks[0].layer_dims(),
    };
    fs::write(sidecar(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<AnalyzerBank> {
    let path = path.as_ref();
    let networks = read_networks(path)?;
    let meta_path = sidecar(path);
    let text =
        fs::read_to_string(&meta_path).map_err(|_| Error::config_path("missing analyzer metadata", &meta_path))?;
    let meta: BankMetadata = serde_json::from_str(&text)?;
    AnalyzerBank::new(meta.scheme, meta.class_names, networks)
}
