//! Embedding space, the feature-extractor boundary, and the Euclidean
//! dissimilarity score.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::FaceImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Unnormalised vector, stored as given.
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// L2-normalises `values`; fails on a zero or non-finite vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot normalise a vector of norm {norm}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Hex SHA-256 of the exact bit patterns; used as a payload digest.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance between two embeddings; lower is more similar.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DissimilarityScore(pub f64);

impl DissimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for DissimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

pub fn dissimilarity(a: &Embedding, b: &Embedding) -> Result<DissimilarityScore> {
    if a.dimension() != b.dimension() {
        return Err(Error::IncompatibleEmbeddings {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(DissimilarityScore(sum.sqrt()))
}

/// Maps a face image to a fixed-dimension embedding.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn extract(&self, img: &FaceImage) -> Result<Embedding>;
}

pub fn extract_features(img: &FaceImage, extractor: &dyn FeatureExtractor) -> Result<Embedding> {
    extractor.extract(img)
}

/// Name under which an extractor is registered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtractorHandle(pub String);

#[derive(Default, Clone)]
pub struct ExtractorRegistry {
    entries: BTreeMap<ExtractorHandle, Arc<dyn FeatureExtractor>>,
}

impl ExtractorRegistry {
    pub fn register(&mut self, extractor: Arc<dyn FeatureExtractor>) -> ExtractorHandle {
        let handle = ExtractorHandle(extractor.name().to_string());
        self.entries.insert(handle.clone(), extractor);
        handle
    }

    pub fn get(&self, handle: &ExtractorHandle) -> Result<Arc<dyn FeatureExtractor>> {
        self.entries
            .get(handle)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown extractor {:?}", handle.0)))
    }

    pub fn extract(&self, img: &FaceImage, handle: &ExtractorHandle) -> Result<Embedding> {
        self.get(handle)?.extract(img)
    }
}

/// Fixed Gaussian random projection of the raw pixel vector followed by L2
/// normalisation.
#[derive(Debug, Clone)]
pub struct RandomProjectionExtractor {
    name: String,
    dimension: usize,
    width: usize,
    height: usize,
    channels: usize,
    /// Row-major `dimension x (width * height * channels)`.
    weights: Vec<f64>,
}

impl RandomProjectionExtractor {
    pub fn new(
        seed: u64,
        dimension: usize,
        width: usize,
        height: usize,
        channels: usize,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let inputs = width * height * channels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (inputs as f64).sqrt();
        let weights = (0..dimension * inputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self {
            name: format!("random-projection-{seed:016x}-d{dimension}"),
            dimension,
            width,
            height,
            channels,
            weights,
        })
    }

    /// Like [`RandomProjectionExtractor::new`], with every weight attenuated by a
    /// Gaussian window centred at `centre` with per-axis spread `spread` (both in
    /// pixels), so the extractor attends to where faces are expected.
    pub fn focused(
        seed: u64,
        dimension: usize,
        width: usize,
        height: usize,
        channels: usize,
        centre: (f64, f64),
        spread: (f64, f64),
    ) -> Result<Self> {
        if !(spread.0 > 0.0 && spread.1 > 0.0) {
            return Err(Error::Config("extractor window spread must be positive".into()));
        }
        let mut ex = Self::new(seed, dimension, width, height, channels)?;
        let window: Vec<f64> = (0..height)
            .flat_map(|y| {
                (0..width).flat_map(move |x| {
                    let dx = (x as f64 - centre.0) / spread.0;
                    let dy = (y as f64 - centre.1) / spread.1;
                    std::iter::repeat_n((-(dx * dx + dy * dy) / 2.0).exp(), channels)
                })
            })
            .collect();
        for row in ex.weights.chunks_exact_mut(window.len()) {
            row.iter_mut().zip(&window).for_each(|(w, m)| *w *= m);
        }
        ex.name = format!("{}-focused", ex.name);
        Ok(ex)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

impl FeatureExtractor for RandomProjectionExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn extract(&self, img: &FaceImage) -> Result<Embedding> {
        if (img.width(), img.height(), img.channels()) != self.input_shape() {
            return Err(Error::IncompatibleImages(format!(
                "extractor expects {}x{}x{}, got {}x{}x{}",
                self.width,
                self.height,
                self.channels,
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        let x = img.data();
        let values = self
            .weights
            .chunks_exact(x.len())
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect();
        Embedding::normalized(values)
    }
}
