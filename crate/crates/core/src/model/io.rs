//! Weights container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "VIGW"
//! version    u16      currently 1
//! config     u32 num_layers, u32 hidden_dim, u32 k, u32 k_end (0 = none),
//!            u32 num_classes, u32 num_heads, u32 ffn_ratio, u64 seed
//! count      u32      number of tensors
//! tensor*    u16 name length, UTF-8 name, u8 rank, rank × u32 dims,
//!            product(dims) × f32 payload (row-major)
//! ```
//!
//! Tensor names: `stem.weight [768,D]`, `stem.bias [D]`, `pos_enc [196,D]`,
//! per layer `l` (0-based) `blocks.l.{in,out,ffn1,ffn2}.{weight,bias}`,
//! `blocks.l.update.weight [heads, 2d, d]`, `blocks.l.update.bias [D]`,
//! and `head.weight [D,C]`, `head.bias [C]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{BlockWeights, ConfigError, ModelConfig, ModelWeights, UpdateWeights};
use crate::codec::{put_f32s, put_u16, put_u32, put_u64, ByteReader, Truncated};
use crate::imaging::{NUM_PATCHES, PATCH_LEN};
use crate::linalg::{Linear, Matrix};
use crate::scalar::Scalar;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VIGW";
pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weights file (bad magic)")]
    BadMagic,
    #[error("unsupported weights version {found} (expected {WEIGHTS_VERSION})")]
    Version { found: u16 },
    #[error("truncated weights file: {0}")]
    Truncated(String),
    #[error("tensor {name}: shape {found:?} inconsistent with header config (expected {expected:?})")]
    Inconsistent {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} missing")]
    MissingTensor(String),
    #[error("malformed weights file: {0}")]
    Malformed(String),
    #[error("header config invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("tensor {0} contains non-finite values")]
    NonFinite(String),
}

impl From<Truncated> for WeightsError {
    fn from(t: Truncated) -> Self {
        WeightsError::Truncated(t.context)
    }
}

fn tensor_list<T: Scalar>(w: &ModelWeights<T>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    fn vals<T: Scalar>(v: &[T]) -> Vec<f32> {
        v.iter().map(|x| x.to_f32_lossy()).collect()
    }
    fn lin<T: Scalar>(out: &mut Vec<(String, Vec<usize>, Vec<f32>)>, name: &str, l: &Linear<T>) {
        out.push((
            format!("{name}.weight"),
            vec![l.weight.rows(), l.weight.cols()],
            vals(l.weight.as_slice()),
        ));
        out.push((format!("{name}.bias"), vec![l.bias.len()], vals(&l.bias)));
    }
    let mut out = Vec::new();
    lin(&mut out, "stem", &w.stem);
    out.push((
        "pos_enc".into(),
        vec![w.pos_enc.rows(), w.pos_enc.cols()],
        vals(w.pos_enc.as_slice()),
    ));
    for (l, b) in w.blocks.iter().enumerate() {
        lin(&mut out, &format!("blocks.{l}.in"), &b.w_in);
        let (r, c) = b.update.heads.first().map_or((0, 0), Matrix::shape);
        out.push((
            format!("blocks.{l}.update.weight"),
            vec![b.update.heads.len(), r, c],
            b.update.heads.iter().flat_map(|m| vals(m.as_slice())).collect(),
        ));
        out.push((
            format!("blocks.{l}.update.bias"),
            vec![b.update.bias.len()],
            vals(&b.update.bias),
        ));
        lin(&mut out, &format!("blocks.{l}.out"), &b.w_out);
        lin(&mut out, &format!("blocks.{l}.ffn1"), &b.ffn1);
        lin(&mut out, &format!("blocks.{l}.ffn2"), &b.ffn2);
    }
    lin(&mut out, "head", &w.head);
    out
}

pub(crate) fn encode_config(out: &mut Vec<u8>, c: &ModelConfig) {
    put_u32(out, c.num_layers as u32);
    put_u32(out, c.hidden_dim as u32);
    put_u32(out, c.k as u32);
    put_u32(out, c.k_end.unwrap_or(0) as u32);
    put_u32(out, c.num_classes as u32);
    put_u32(out, c.num_heads as u32);
    put_u32(out, c.ffn_ratio as u32);
    put_u64(out, c.seed);
}

fn decode_config(r: &mut ByteReader<'_>) -> Result<ModelConfig, Truncated> {
    let num_layers = r.u32("config")? as usize;
    let hidden_dim = r.u32("config")? as usize;
    let k = r.u32("config")? as usize;
    let k_end = match r.u32("config")? {
        0 => None,
        v => Some(v as usize),
    };
    Ok(ModelConfig {
        num_layers,
        hidden_dim,
        k,
        k_end,
        num_classes: r.u32("config")? as usize,
        num_heads: r.u32("config")? as usize,
        ffn_ratio: r.u32("config")? as usize,
        seed: r.u64("config")?,
    })
}

/// Serializes weights; values are stored as `f32`.
pub fn encode_weights<T: Scalar>(w: &ModelWeights<T>) -> Vec<u8> {
    let tensors = tensor_list(w);
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    put_u16(&mut out, WEIGHTS_VERSION);
    encode_config(&mut out, &w.config);
    put_u32(&mut out, tensors.len() as u32);
    for (name, dims, payload) in tensors {
        put_u16(&mut out, name.len() as u16);
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for d in dims {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, payload);
    }
    out
}

pub fn save_weights<T: Scalar>(w: &ModelWeights<T>, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w)).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights<f32>, WeightsError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_weights(&bytes)
}

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights<f32>, WeightsError> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic").map_err(|_| WeightsError::BadMagic)?;
    if magic != WEIGHTS_MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = r.u16("version")?;
    if version != WEIGHTS_VERSION {
        return Err(WeightsError::Version { found: version });
    }
    let config = decode_config(&mut r)?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = BTreeMap::new();
    for t in 0..count {
        let len = r.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| WeightsError::Malformed(format!("tensor {t}: name is not UTF-8")))?
            .to_owned();
        let rank = r.u8("tensor rank")? as usize;
        let dims = r
            .u32_vec(rank, "tensor dims")?
            .into_iter()
            .map(|d| d as usize)
            .collect::<Vec<_>>();
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| WeightsError::Malformed(format!("tensor {name}: size overflow")))?;
        let data = r.f32_vec(numel, &format!("tensor {name} payload"))?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite(name));
        }
        if tensors.insert(name.clone(), Tensor { dims, data }).is_some() {
            return Err(WeightsError::Malformed(format!("duplicate tensor {name}")));
        }
    }
    if r.remaining() != 0 {
        return Err(WeightsError::Malformed(format!(
            "{} trailing bytes after tensor table",
            r.remaining()
        )));
    }
    config.validate()?;
    build_weights(config, tensors)
}

fn take(tensors: &mut BTreeMap<String, Tensor>, name: String, expected: Vec<usize>) -> Result<Vec<f32>, WeightsError> {
    let t = tensors
        .remove(&name)
        .ok_or_else(|| WeightsError::MissingTensor(name.clone()))?;
    if t.dims != expected {
        return Err(WeightsError::Inconsistent {
            name,
            expected,
            found: t.dims,
        });
    }
    Ok(t.data)
}

fn take_linear(
    tensors: &mut BTreeMap<String, Tensor>,
    name: &str,
    i: usize,
    o: usize,
) -> Result<Linear<f32>, WeightsError> {
    let weight = take(tensors, format!("{name}.weight"), vec![i, o])?;
    let bias = take(tensors, format!("{name}.bias"), vec![o])?;
    Ok(Linear {
        weight: Matrix::from_vec(i, o, weight).expect("shape checked"),
        bias,
    })
}

fn build_weights(
    config: ModelConfig,
    mut tensors: BTreeMap<String, Tensor>,
) -> Result<ModelWeights<f32>, WeightsError> {
    let t = &mut tensors;
    let d = config.hidden_dim;
    let hd = config.head_dim();
    let stem = take_linear(t, "stem", PATCH_LEN, d)?;
    let pos_enc = take(t, "pos_enc".into(), vec![NUM_PATCHES, d])?;
    let mut blocks = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let w_in = take_linear(t, &format!("blocks.{l}.in"), d, d)?;
        let upd = take(
            t,
            format!("blocks.{l}.update.weight"),
            vec![config.num_heads, 2 * hd, hd],
        )?;
        let heads = upd
            .chunks_exact(2 * hd * hd)
            .map(|c| Matrix::from_vec(2 * hd, hd, c.to_vec()).expect("chunked"))
            .collect();
        let bias = take(t, format!("blocks.{l}.update.bias"), vec![d])?;
        blocks.push(BlockWeights {
            w_in,
            update: UpdateWeights { heads, bias },
            w_out: take_linear(t, &format!("blocks.{l}.out"), d, d)?,
            ffn1: take_linear(t, &format!("blocks.{l}.ffn1"), d, config.ffn_dim())?,
            ffn2: take_linear(t, &format!("blocks.{l}.ffn2"), config.ffn_dim(), d)?,
        });
    }
    let head = take_linear(t, "head", d, config.num_classes)?;
    if let Some(extra) = tensors.keys().next() {
        return Err(WeightsError::Malformed(format!("unexpected tensor {extra}")));
    }
    Ok(ModelWeights {
        config,
        stem,
        pos_enc: Matrix::from_vec(NUM_PATCHES, d, pos_enc).expect("shape checked"),
        blocks,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_weights;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_dim: 8,
            k: 5,
            k_end: Some(7),
            num_classes: 3,
            num_heads: 2,
            seed: 99,
            ..Default::default()
        }
    }

    fn bits(w: &ModelWeights<f32>) -> Vec<u32> {
        tensor_list(w)
            .into_iter()
            .flat_map(|(_, _, v)| v.into_iter().map(f32::to_bits))
            .collect()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let w = init_weights::<f32>(&cfg()).unwrap();
        let back = decode_weights(&encode_weights(&w)).unwrap();
        assert_eq!(back, w);
        assert_eq!(bits(&back), bits(&w));
    }

    #[test]
    fn wrong_magic() {
        let mut b = encode_weights(&init_weights::<f32>(&cfg()).unwrap());
        b[0] = b'X';
        assert!(matches!(decode_weights(&b), Err(WeightsError::BadMagic)));
        assert!(matches!(decode_weights(b"VI"), Err(WeightsError::BadMagic)));
    }

    #[test]
    fn wrong_version() {
        let mut b = encode_weights(&init_weights::<f32>(&cfg()).unwrap());
        b[4] = 9;
        assert!(matches!(decode_weights(&b), Err(WeightsError::Version { found: 9 })));
    }

    #[test]
    fn truncated() {
        let b = encode_weights(&init_weights::<f32>(&cfg()).unwrap());
        for cut in [10, 40, b.len() / 2, b.len() - 1] {
            assert!(
                matches!(decode_weights(&b[..cut]), Err(WeightsError::Truncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn header_dim_disagrees_with_tensors() {
        let small = ModelConfig {
            hidden_dim: 4,
            num_heads: 1,
            ..cfg()
        };
        let mut b = encode_weights(&init_weights::<f32>(&small).unwrap());
        // hidden_dim lives right after magic, version and num_layers
        b[10..14].copy_from_slice(&8u32.to_le_bytes());
        assert!(matches!(decode_weights(&b), Err(WeightsError::Inconsistent { .. })));
    }
}
