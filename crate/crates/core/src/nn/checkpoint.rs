//! Network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! [0..8)    magic        b"TDGRCKPT"
//! [8..12)   version      u32 (currently 1)
//! [12..20)  manifest_len u64
//! [20..)    manifest     UTF-8 JSON, `manifest_len` bytes
//! ...       payload      f64 LE, every tensor of every network in manifest order
//! ```
//!
//! The manifest lists each network's layers (`weight` shape `[out, in]`,
//! `bias` shape `[out]`, activation) and an opaque `meta` object such as a
//! diffusion schedule descriptor.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Layer, Mlp, Tensors};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TDGRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    weight: [usize; 2],
    bias: [usize; 1],
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkShape {
    name: String,
    layers: Vec<LayerShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    networks: Vec<NetworkShape>,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<(String, Mlp)>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self { networks: Vec::new(), meta }
    }

    pub fn with(mut self, name: &str, net: &Mlp) -> Self {
        self.networks.push((name.to_owned(), net.clone()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = Manifest {
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetworkShape {
                    name: name.clone(),
                    layers: net
                        .layers()
                        .iter()
                        .map(|l| LayerShape {
                            weight: [l.out_dim(), l.in_dim()],
                            bias: [l.bias.len()],
                            activation: l.activation,
                        })
                        .collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let text = serde_json::to_vec(&manifest)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(&text)?;
        let mut buf = Vec::new();
        for (_, net) in &self.networks {
            for t in net.tensors() {
                for v in t {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len))
            .map_err(|_| Error::Format("manifest too large".into()))?;
        let mut text = vec![0u8; len];
        r.read_exact(&mut text)?;
        let manifest: Manifest = serde_json::from_slice(&text)?;

        let mut networks = Vec::with_capacity(manifest.networks.len());
        for shape in manifest.networks {
            let mut layers = Vec::with_capacity(shape.layers.len());
            for ls in shape.layers {
                let [out, inp] = ls.weight;
                if ls.bias[0] != out {
                    return Err(Error::Format(format!("network {}: bias shape mismatch", shape.name)));
                }
                let weight = Array2::from_shape_vec((out, inp), read_f64s(&mut r, out * inp)?)
                    .map_err(|e| Error::Format(e.to_string()))?;
                let bias = Array1::from_vec(read_f64s(&mut r, out)?);
                layers.push(Layer { weight, bias, activation: ls.activation });
            }
            let net = Mlp::new(layers).map_err(|e| Error::Format(format!("network {}: {e}", shape.name)))?;
            networks.push((shape.name, net));
        }
        Ok(Self { networks, meta: manifest.meta })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}
