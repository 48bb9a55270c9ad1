//! Block descriptors: mean-pooled, L2-normalized frame features that index a
//! block for retrieval, plus the pluggable frame-encoder abstraction with a
//! seeded synthetic implementation standing in for a real visual encoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};
use crate::tensor::{mean_rows, norm_slice, Vector};

/// One encoded frame of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature<S: Scalar> {
    pub raw: Vector<S>,
}

impl<S: Scalar> FrameFeature<S> {
    pub fn new(raw: Vector<S>) -> Self {
        Self { raw }
    }

    pub fn dim(&self) -> usize {
        self.raw.len()
    }
}

/// Unit-norm feature vector indexing one generated block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDescriptor<S: Scalar> {
    feature: Vector<S>,
    block_index: u64,
}

const UNIT_NORM_TOL: f64 = 1e-9;

impl<S: Scalar> BlockDescriptor<S> {
    /// Wrap an already-normalized feature vector. The norm must be within
    /// 1e-9 of 1.
    pub fn new(feature: Vector<S>, block_index: u64) -> Result<Self> {
        let err = (feature.norm() - S::one()).abs();
        if err > real::<S>(UNIT_NORM_TOL) {
            return Err(Error::InvalidParameter(format!(
                "descriptor for block {} is not unit norm (off by {})",
                block_index, err
            )));
        }
        Ok(Self { feature, block_index })
    }

    pub fn feature(&self) -> &Vector<S> {
        &self.feature
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }

    pub fn block_index(&self) -> u64 {
        self.block_index
    }
}

/// Mean-pool a block's frame features and L2-normalize the result.
///
/// Accumulation follows a canonical content-sorted order, so any permutation
/// of the same features produces a bit-identical descriptor. A mean whose
/// norm falls below 1e-12 is an error: normalization is undefined there and
/// a fallback would silently corrupt retrieval ordering.
pub fn encode_block<S: Scalar>(features: &[FrameFeature<S>], block_index: u64) -> Result<BlockDescriptor<S>> {
    if features.is_empty() {
        return Err(Error::EmptyInput("encode_block features"));
    }
    let dim = features[0].dim();
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
        }
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (features[a].raw.as_slice(), features[b].raw.as_slice());
        fa.iter()
            .zip(fb)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows: Vec<&[S]> = order.iter().map(|&i| features[i].raw.as_slice()).collect();
    let mean = mean_rows(&rows)?;
    let norm = norm_slice(&mean);
    if norm < real::<S>(1e-12) {
        return Err(Error::ZeroNorm("block feature mean"));
    }
    let feature = Vector::new(mean.into_iter().map(|x| x / norm).collect())?;
    BlockDescriptor::new(feature, block_index)
}

/// Anything that can turn a block's per-frame latents into frame features.
pub trait FrameEncoder<S: Scalar> {
    fn feature_dim(&self) -> usize;
    fn encode_frames(&self, latents: &[Vector<S>]) -> Result<Vec<FrameFeature<S>>>;
}

/// Deterministic seeded random-projection encoder.
///
/// The projection matrix is derived from the seed alone: a ChaCha8 stream
/// emits `feature_dim x latent_dim` entries row-major, each
/// `(2u - 1) * sqrt(3 / latent_dim)` for `u` uniform in `[0, 1)`. Identical
/// `(seed, dims)` always produce the identical matrix, so encoding is
/// bit-reproducible.
#[derive(Debug, Clone)]
pub struct SyntheticEncoder<S: Scalar> {
    feature_dim: usize,
    latent_dim: usize,
    projection: Vec<S>, // feature_dim x latent_dim, row-major
}

impl<S: Scalar> SyntheticEncoder<S> {
    pub fn new(seed: u64, feature_dim: usize, latent_dim: usize) -> Result<Self> {
        if feature_dim < 2 {
            return Err(Error::InvalidParameter("feature_dim must be at least 2".into()));
        }
        if latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (3.0 / latent_dim as f64).sqrt();
        let projection = (0..feature_dim * latent_dim)
            .map(|_| real::<S>((2.0 * rng.random::<f64>() - 1.0) * scale))
            .collect();
        Ok(Self { feature_dim, latent_dim, projection })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn project(&self, latent: &Vector<S>) -> Result<Vector<S>> {
        if latent.len() != self.latent_dim {
            return Err(Error::DimensionMismatch { expected: self.latent_dim, got: latent.len() });
        }
        let mut out = vec![S::zero(); self.feature_dim];
        for (row, o) in out.iter_mut().enumerate() {
            let start = row * self.latent_dim;
            let mut acc = S::zero();
            for (w, &x) in self.projection[start..start + self.latent_dim]
                .iter()
                .zip(latent.as_slice())
            {
                acc += *w * x;
            }
            *o = acc;
        }
        Vector::new(out)
    }
}

impl<S: Scalar> FrameEncoder<S> for SyntheticEncoder<S> {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn encode_frames(&self, latents: &[Vector<S>]) -> Result<Vec<FrameFeature<S>>> {
        latents
            .iter()
            .map(|l| Ok(FrameFeature::new(self.project(l)?)))
            .collect()
    }
}

/// One-shot form of [`SyntheticEncoder`]: derives the projection from
/// `(encoder_seed, feature_dim, latent dim of the input)` per call.
pub fn synthetic_encode<S: Scalar>(
    latents: &[Vector<S>],
    encoder_seed: u64,
    feature_dim: usize,
) -> Result<Vec<FrameFeature<S>>> {
    if latents.is_empty() {
        return Ok(Vec::new());
    }
    SyntheticEncoder::new(encoder_seed, feature_dim, latents[0].len())?.encode_frames(latents)
}
