use std::fs;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::features::{featurize, FeatureVector};
use crate::error::{Error, Result};
use crate::rng::{fnv1a64, rng_from};

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;
pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Unit-norm dense embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear map from the hashed feature space to `dim` dimensions, followed
/// by L2 normalization. `weights` is row-major `feature_dim x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    feature_dim: usize,
    dim: usize,
    temperature: f64,
    weights: Vec<f64>,
}

impl EncoderParams {
    pub fn from_weights(
        feature_dim: usize,
        dim: usize,
        temperature: f64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if dim < 2 {
            return Err(Error::invalid(format!("embedding dimension {dim} < 2")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {temperature} must be positive")));
        }
        if weights.len() != feature_dim * dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim * dim,
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("encoder weight {i}")));
        }
        Ok(Self {
            feature_dim,
            dim,
            temperature,
            weights,
        })
    }

    /// Gaussian initialization with standard deviation `1/sqrt(dim)`.
    pub fn random(feature_dim: usize, dim: usize, temperature: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_from(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let weights = (0..feature_dim * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self::from_weights(feature_dim, dim, temperature, weights)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.weights[feature * self.dim..(feature + 1) * self.dim]
    }

    pub fn featurize(&self, text: &str) -> FeatureVector {
        featurize(text, self.feature_dim)
    }

    /// Pre-normalization projection `Wᵀ x`.
    pub fn project(&self, features: &FeatureVector) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for &(f, c) in features.entries() {
            for (acc, w) in u.iter_mut().zip(self.row(f)) {
                *acc += c * w;
            }
        }
        u
    }

    pub fn embed_features(&self, features: &FeatureVector) -> EmbeddingVector {
        normalize_or_fallback(self.project(features))
    }

    /// Embeds text. Text with no features (or an exactly-zero projection)
    /// maps to the first basis vector.
    pub fn embed(&self, text: &str) -> EmbeddingVector {
        self.embed_features(&self.featurize(text))
    }

    /// Short content hash used to tie indexes and reports to a checkpoint.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.feature_dim as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.temperature.to_le_bytes());
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex16(&h.finalize())
    }

    /// Writes the checkpoint.
    ///
    /// Layout (little-endian): magic `TDENCODR` (8 bytes), version `u32`,
    /// `feature_dim: u64`, `dim: u64`, `temperature: f64`, then
    /// `feature_dim * dim` `f64` weights in row-major order, then a `u64`
    /// FNV-1a checksum of every preceding byte.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(HEADER_LEN + self.weights.len() * 8 + 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.feature_dim as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.extend_from_slice(&self.temperature.to_le_bytes());
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        let sum = fnv1a64(&buf);
        buf.extend_from_slice(&sum.to_le_bytes());
        write_atomic(path, &buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: &str| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < HEADER_LEN + 8 {
            return Err(corrupt("file shorter than header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let feature_dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        let temperature = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        let n = feature_dim
            .checked_mul(dim)
            .ok_or_else(|| corrupt("shape overflow"))?;
        let expected_len = HEADER_LEN + n * 8 + 8;
        if bytes.len() != expected_len {
            return Err(corrupt(&format!(
                "expected {expected_len} bytes, found {}",
                bytes.len()
            )));
        }
        let body = &bytes[..expected_len - 8];
        let stored = u64::from_le_bytes(bytes[expected_len - 8..].try_into().unwrap());
        if fnv1a64(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let weights = body[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_weights(feature_dim, dim, temperature, weights)
    }

    /// Loads and checks the stored shape against what the caller expects.
    pub fn load_with_shape(path: impl AsRef<Path>, feature_dim: usize, dim: usize) -> Result<Self> {
        let p = Self::load(path)?;
        if p.feature_dim != feature_dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                actual: p.feature_dim,
            });
        }
        if p.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.dim,
            });
        }
        Ok(p)
    }
}

const MAGIC: &[u8; 8] = b"TDENCODR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8;

pub(crate) fn normalize_or_fallback(mut u: Vec<f64>) -> EmbeddingVector {
    let norm = dot(&u, &u).sqrt();
    if norm > 0.0 && norm.is_finite() {
        for x in &mut u {
            *x /= norm;
        }
    } else {
        u.iter_mut().for_each(|x| *x = 0.0);
        u[0] = 1.0;
    }
    EmbeddingVector(u)
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a sibling temp file and renames, so a crash never leaves a
/// half-written checkpoint under the final name.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
