//! Checkpoint directories: a TOML manifest plus one binary blob per tensor.
//!
//! Blob layout (little endian): magic `CWB1`, `u32` rank, `u64` per
//! dimension, then `f32` values. The manifest stores each blob's SHA-256 so
//! corruption is reported against the tensor name.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nets::{Mode, NetworkHandle, NetworkSpec, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.toml";
pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CWB1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub iteration: u64,
    pub config_hash: String,
    /// Opaque generator state, e.g. seed and stream position.
    #[serde(default)]
    pub rng_state: BTreeMap<String, String>,
    #[serde(default)]
    pub counters: BTreeMap<String, u64>,
    pub networks: BTreeMap<String, NetworkSpec>,
    pub blobs: Vec<BlobEntry>,
}

/// In-memory checkpoint contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub config_hash: String,
    pub rng_state: BTreeMap<String, String>,
    pub counters: BTreeMap<String, u64>,
    pub networks: BTreeMap<String, NetworkSpec>,
    pub tensors: BTreeMap<String, Tensor<f32>>,
    /// Extra files copied verbatim (e.g. a stats table).
    pub attachments: BTreeMap<String, String>,
}

pub fn encode_blob(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_blob(name: &str, bytes: &[u8]) -> Result<Tensor<f32>> {
    let bad = |reason: &str| Error::Blob { name: name.to_string(), reason: reason.to_string() };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing blob header"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = 8 + 8 * rank;
    if bytes.len() < body {
        return Err(bad("truncated shape header"));
    }
    let shape: Vec<usize> = bytes[8..body]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n: usize = shape.iter().product();
    if bytes.len() != body + 4 * n {
        return Err(bad(&format!("expected {} data bytes, found {}", 4 * n, bytes.len() - body)));
    }
    let data = bytes[body..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(&shape, data).map_err(|e| bad(&e.to_string()))
}

fn file_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.bin")
}

/// Lowercase hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    /// Writes into a sibling temporary directory and renames it into place.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let leaf = dir.file_name().ok_or_else(|| Error::Checkpoint(format!("bad path {}", dir.display())))?;
        let tmp: PathBuf = parent.join(format!(".{}.tmp", leaf.to_string_lossy()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let mut blobs = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let bytes = encode_blob(t);
            let file = file_name(name);
            fs::write(tmp.join(&file), &bytes)?;
            blobs.push(BlobEntry { name: name.clone(), file, shape: t.shape().to_vec(), sha256: digest(&bytes) });
        }
        for (file, text) in &self.attachments {
            fs::write(tmp.join(file), text)?;
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            iteration: self.iteration,
            config_hash: self.config_hash.clone(),
            rng_state: self.rng_state.clone(),
            counters: self.counters.clone(),
            networks: self.networks.clone(),
            blobs,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut f = fs::File::create(tmp.join(MANIFEST))?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&tmp, dir)?;
        Ok(())
    }

    pub fn read_manifest(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint schema {} (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Self::read_manifest(dir)?;
        let mut tensors = BTreeMap::new();
        for b in &m.blobs {
            let bytes = fs::read(dir.join(&b.file))
                .map_err(|e| Error::Blob { name: b.name.clone(), reason: e.to_string() })?;
            if digest(&bytes) != b.sha256 {
                return Err(Error::Blob { name: b.name.clone(), reason: "checksum mismatch".into() });
            }
            let t = decode_blob(&b.name, &bytes)?;
            if t.shape() != b.shape.as_slice() {
                return Err(Error::Blob { name: b.name.clone(), reason: "shape disagrees with manifest".into() });
            }
            tensors.insert(b.name.clone(), t);
        }
        Ok(Self {
            iteration: m.iteration,
            config_hash: m.config_hash,
            rng_state: m.rng_state,
            counters: m.counters,
            networks: m.networks,
            tensors,
            attachments: BTreeMap::new(),
        })
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Blob { name: name.to_string(), reason: "missing from checkpoint".into() })
    }
}

impl Checkpoint {
    /// Stores a network's spec under `key` and its parameters as
    /// `key.<param>` tensors.
    pub fn insert_network<T: Scalar>(&mut self, key: &str, net: &NetworkHandle<T>) {
        self.networks.insert(key.to_string(), net.spec().clone());
        for p in net.params() {
            self.tensors.insert(format!("{key}.{}", p.name), p.value.cast());
        }
    }

    pub fn insert_tensors<T: Scalar>(&mut self, prefix: &str, items: Vec<(String, Tensor<T>)>) {
        for (name, t) in items {
            self.tensors.insert(format!("{prefix}.{name}"), t.cast());
        }
    }

    /// Rebuilds the network stored under `key`, in inference mode.
    pub fn network<T: Scalar>(&self, key: &str) -> Result<NetworkHandle<T>> {
        let spec = self
            .networks
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint has no `{key}` network")))?
            .clone();
        let names: Vec<String> = {
            let mut rng = <rand::rngs::SmallRng as rand::SeedableRng>::seed_from_u64(0);
            NetworkHandle::<T>::init(spec.clone(), &mut rng)?.params().iter().map(|p| p.name.clone()).collect()
        };
        let mut params = Vec::with_capacity(names.len());
        for name in names {
            let full = format!("{key}.{name}");
            let value = self.tensor(&full)?.cast();
            let trainable = !name.ends_with("running_mean") && !name.ends_with("running_var");
            params.push(Param { name, value, trainable });
        }
        let mut net = NetworkHandle::from_params(spec, params)?;
        net.set_mode(Mode::Inference);
        Ok(net)
    }
}
