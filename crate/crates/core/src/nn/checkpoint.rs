//! Binary checkpoint container.
//!
//! Layout: the magic bytes `2PFP`, a little-endian `u32` version (1), a
//! little-endian `u32` header length, a UTF-8 JSON header describing the
//! layers, tensor shapes and freeze sets, then every tensor as
//! little-endian IEEE-754 `f64` values in header order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::LayerSpec;
use super::network::{LayerParams, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"2PFP";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
    freeze: Vec<FreezeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreezeEntry {
    layer: usize,
    filters: Vec<usize>,
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut blobs: Vec<&Tensor> = Vec::new();
    for (i, p) in net.params().iter().enumerate() {
        if let Some(p) = p {
            tensors.push(TensorEntry { name: format!("layers.{i}.weight"), shape: p.weight.shape().to_vec() });
            tensors.push(TensorEntry { name: format!("layers.{i}.bias"), shape: p.bias.shape().to_vec() });
            blobs.push(&p.weight);
            blobs.push(&p.bias);
        }
    }
    let header = Header {
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        tensors,
        freeze: net
            .freeze_sets()
            .iter()
            .map(|(&layer, set)| FreezeEntry { layer, filters: set.iter().copied().collect() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let payload: usize = blobs.iter().map(|t| t.len() * 8).sum();
    let mut out = Vec::with_capacity(12 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in blobs {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!("{} bytes, no room for magic", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated("missing version or header length".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(Error::Truncated(format!("header declares {header_len} bytes, {} available", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Header(e.to_string()))?;
    let blob = &body[header_len..];
    let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>() * 8).sum();
    if blob.len() != expected {
        return Err(Error::LengthMismatch(format!(
            "header declares {expected} bytes of tensor data, found {}",
            blob.len()
        )));
    }

    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut entries = header.tensors.iter();
    let mut params = Vec::with_capacity(header.layers.len());
    for (i, layer) in header.layers.iter().enumerate() {
        if !layer.has_params() {
            params.push(None);
            continue;
        }
        let mut take = |suffix: &str| -> Result<Tensor> {
            let entry = entries
                .next()
                .ok_or_else(|| Error::Header(format!("missing tensor for layer {i}")))?;
            let want = format!("layers.{i}.{suffix}");
            if entry.name != want {
                return Err(Error::Header(format!("expected tensor {want}, found {}", entry.name)));
            }
            let n: usize = entry.shape.iter().product();
            Ok(Tensor::from_vec(&entry.shape, values.by_ref().take(n).collect()))
        };
        let weight = take("weight")?;
        let bias = take("bias")?;
        params.push(Some(LayerParams { weight, bias }));
    }
    if entries.next().is_some() {
        return Err(Error::Header("tensors listed for layers without parameters".into()));
    }
    let mut freeze: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for f in header.freeze {
        freeze.entry(f.layer).or_default().extend(f.filters);
    }
    Network::from_parts(&header.input_shape, header.layers, params, freeze)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// SHA-256 of the checkpoint encoding, hex encoded.
pub fn model_hash(net: &Network) -> String {
    Sha256::digest(to_bytes(net)).iter().map(|b| format!("{b:02x}")).collect()
}
