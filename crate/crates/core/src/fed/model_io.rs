//! Binary model files: `VFLMODEL`, a little-endian u32 version, a u64 byte
//! length, a JSON manifest of specs and tensor shapes, then every tensor as
//! row-major little-endian f64 in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fedonce::{FedModel, GuestModel};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nat::PcaModel;
use crate::nn::{DenseLayer, MlpSpec, ModelParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VFLMODEL";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GuestManifest {
    Nat { spec: MlpSpec },
    Pca { features: usize, dim: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    repr_dim: usize,
    repr_noise: f64,
    noise_seed: u64,
    laggy: Vec<usize>,
    guests: Vec<GuestManifest>,
    host: MlpSpec,
    tensors: Vec<TensorInfo>,
}

fn push_mlp(prefix: &str, p: &ModelParams, infos: &mut Vec<TensorInfo>, data: &mut Vec<f64>) {
    for (l, layer) in p.layers().iter().enumerate() {
        infos.push(TensorInfo {
            name: format!("{prefix}.layer{l}.weights"),
            shape: [layer.weights.rows(), layer.weights.cols()],
        });
        data.extend_from_slice(layer.weights.as_slice());
        infos.push(TensorInfo {
            name: format!("{prefix}.layer{l}.bias"),
            shape: [1, layer.bias.len()],
        });
        data.extend_from_slice(&layer.bias);
    }
}

fn push_tensor(name: String, m: &DenseMatrix, infos: &mut Vec<TensorInfo>, data: &mut Vec<f64>) {
    infos.push(TensorInfo {
        name,
        shape: [m.rows(), m.cols()],
    });
    data.extend_from_slice(m.as_slice());
}

pub fn model_to_bytes(model: &FedModel) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    let mut guests = Vec::new();
    for (i, g) in model.guests.iter().enumerate() {
        let prefix = format!("guest{}", i + 1);
        match g {
            GuestModel::Nat(p) => {
                guests.push(GuestManifest::Nat { spec: p.spec().clone() });
                push_mlp(&prefix, p, &mut tensors, &mut data);
            }
            GuestModel::Pca(p) => {
                guests.push(GuestManifest::Pca {
                    features: p.mean.len(),
                    dim: p.components.rows(),
                });
                push_tensor(
                    format!("{prefix}.mean"),
                    &DenseMatrix::from_vec(1, p.mean.len(), p.mean.clone())?,
                    &mut tensors,
                    &mut data,
                );
                push_tensor(format!("{prefix}.components"), &p.components, &mut tensors, &mut data);
                push_tensor(
                    format!("{prefix}.eigenvalues"),
                    &DenseMatrix::from_vec(1, p.eigenvalues.len(), p.eigenvalues.clone())?,
                    &mut tensors,
                    &mut data,
                );
            }
        }
    }
    push_mlp("host", &model.host, &mut tensors, &mut data);
    let manifest = Manifest {
        repr_dim: model.repr_dim,
        repr_noise: model.repr_noise,
        noise_seed: model.noise_seed,
        laggy: model.laggy.clone(),
        guests,
        host: model.host.spec().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct TensorReader<'a> {
    infos: std::slice::Iter<'a, TensorInfo>,
    body: &'a [u8],
}

impl TensorReader<'_> {
    fn next(&mut self, name: &str) -> Result<DenseMatrix> {
        let info = self
            .infos
            .next()
            .ok_or_else(|| Error::ModelFormat(format!("missing tensor {name}")))?;
        if info.name != name {
            return Err(Error::ModelFormat(format!(
                "expected tensor {name}, found {}",
                info.name
            )));
        }
        let count = info.shape[0] * info.shape[1];
        if self.body.len() < 8 * count {
            return Err(Error::ModelFormat(format!("tensor {name} truncated")));
        }
        let (head, rest) = self.body.split_at(8 * count);
        self.body = rest;
        let values = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        DenseMatrix::from_vec(info.shape[0], info.shape[1], values).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    fn mlp(&mut self, prefix: &str, spec: &MlpSpec) -> Result<ModelParams> {
        let mut layers = Vec::with_capacity(spec.num_layers());
        for l in 0..spec.num_layers() {
            let weights = self.next(&format!("{prefix}.layer{l}.weights"))?;
            let bias = self.next(&format!("{prefix}.layer{l}.bias"))?.into_vec();
            layers.push(DenseLayer { weights, bias });
        }
        ModelParams::from_layers(spec.clone(), layers).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FedModel> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::ModelFormat("missing VFLMODEL header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(20..20 + len)
        .ok_or_else(|| Error::ModelFormat("manifest truncated".into()))?;
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut reader = TensorReader {
        infos: manifest.tensors.iter(),
        body: &bytes[20 + len..],
    };
    let mut guests = Vec::with_capacity(manifest.guests.len());
    for (i, g) in manifest.guests.iter().enumerate() {
        let prefix = format!("guest{}", i + 1);
        guests.push(match g {
            GuestManifest::Nat { spec } => GuestModel::Nat(reader.mlp(&prefix, spec)?),
            GuestManifest::Pca { features, dim } => {
                let mean = reader.next(&format!("{prefix}.mean"))?.into_vec();
                let components = reader.next(&format!("{prefix}.components"))?;
                let eigenvalues = reader.next(&format!("{prefix}.eigenvalues"))?.into_vec();
                if mean.len() != *features || components.shape() != (*dim, *features) {
                    return Err(Error::ModelFormat(format!(
                        "{prefix} shapes disagree with the manifest"
                    )));
                }
                GuestModel::Pca(PcaModel {
                    mean,
                    components,
                    eigenvalues,
                })
            }
        });
    }
    let host = reader.mlp("host", &manifest.host)?;
    if reader.infos.next().is_some() || !reader.body.is_empty() {
        return Err(Error::ModelFormat("trailing data after the last tensor".into()));
    }
    Ok(FedModel {
        guests,
        host,
        repr_dim: manifest.repr_dim,
        repr_noise: manifest.repr_noise,
        noise_seed: manifest.noise_seed,
        laggy: manifest.laggy,
    })
}

pub fn save_model(model: &FedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FedModel> {
    let path = path.as_ref();
    model_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
