//! Proposal-weighted pooling and concatenation into the raw SBA vector.
//!
//! For each detector channel `n` the activation map `v_n` is turned into a
//! spatial weight mask
//!
//! ```text
//! w_n(x, y) = ( v_n(x, y) / (Σ v_n^α)^(1/α) )^(1/β)
//! ```
//!
//! and all C channels are sum-pooled under that mask. The N pooled C-vectors
//! are concatenated in detector order.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::binfmt::{self, Reader};
use crate::detectors::DetectorSet;
use crate::error::{Result, SbaError};
use crate::scalar::{cast_slice, Real};
use crate::tensor::FeatureTensor;
use crate::tensor_io::{read_tensor, DatasetManifest};

pub const BATCH_MAGIC: &[u8; 4] = b"SBAV";

/// Spatial weight mask derived from one detector channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalWeights<T> {
    pub detector: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major `height * width` weights.
    pub weights: Vec<T>,
}

/// Computes the proposal weights of channel `detector`.
///
/// Negative activations are clamped to zero. An all-zero channel gives
/// all-zero weights. Arithmetic runs in `f64` whatever `T` is; the map is
/// divided by its maximum first, which the formula is invariant to, so large
/// activations cannot overflow the α-power sum.
pub fn compute_weights<T: Real>(
    tensor: &FeatureTensor<T>,
    detector: usize,
    alpha: f64,
    beta: f64,
) -> Result<ProposalWeights<T>> {
    check_exponents(alpha, beta)?;
    if detector >= tensor.channels() {
        return Err(SbaError::Param(format!(
            "detector channel {detector} out of range 0..{}",
            tensor.channels()
        )));
    }
    let v: Vec<f64> = tensor
        .channel(detector)
        .iter()
        .map(|x| x.to_f64_lossless().max(0.0))
        .collect();
    let peak = v.iter().copied().fold(0.0f64, f64::max);
    let weights = if peak == 0.0 {
        vec![T::zero(); v.len()]
    } else {
        let norm = v.iter().map(|x| (x / peak).powf(alpha)).sum::<f64>().powf(1.0 / alpha);
        v.iter().map(|x| T::of(((x / peak) / norm).powf(1.0 / beta))).collect()
    };
    Ok(ProposalWeights {
        detector,
        height: tensor.height(),
        width: tensor.width(),
        weights,
    })
}

fn check_exponents(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(SbaError::Param(format!(
            "alpha and beta must be positive and finite, got alpha={alpha} beta={beta}"
        )));
    }
    Ok(())
}

/// `out[c] = Σ_{x,y} w(x,y) · f[c,y,x]`.
pub fn pool_weighted<T: Real>(tensor: &FeatureTensor<T>, weights: &ProposalWeights<T>) -> Result<Vec<T>> {
    if weights.height != tensor.height() || weights.width != tensor.width() || weights.weights.len() != tensor.area() {
        return Err(SbaError::Shape(format!(
            "weights are {}x{}, tensor is {}x{}",
            weights.height,
            weights.width,
            tensor.height(),
            tensor.width()
        )));
    }
    let w: Vec<f64> = weights.weights.iter().map(|v| v.to_f64_lossless()).collect();
    Ok((0..tensor.channels())
        .map(|c| {
            let s: f64 = tensor
                .channel(c)
                .iter()
                .zip(&w)
                .map(|(f, w)| f.to_f64_lossless() * w)
                .sum();
            T::of(s)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Raw,
    Normalized,
    Compressed,
}

/// Concatenated block layout of an uncompressed vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub detectors: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbaVector<T> {
    pub values: Vec<T>,
    /// `None` once compressed.
    pub layout: Option<BlockLayout>,
    pub stage: Stage,
}

impl<T: Real> SbaVector<T> {
    pub fn raw(values: Vec<T>, layout: BlockLayout) -> Result<Self> {
        if values.len() != layout.detectors * layout.channels {
            return Err(SbaError::Shape(format!(
                "{} values do not fit {} blocks of {}",
                values.len(),
                layout.detectors,
                layout.channels
            )));
        }
        Ok(Self {
            values,
            layout: Some(layout),
            stage: Stage::Raw,
        })
    }

    /// A vector whose provenance is unknown (e.g. a row of a batch file).
    pub fn with_stage(values: Vec<T>, stage: Stage) -> Self {
        Self {
            values,
            layout: None,
            stage,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The pooled C-vector of the `i`-th detector.
    pub fn block(&self, i: usize) -> Option<&[T]> {
        let l = self.layout?;
        (i < l.detectors).then(|| &self.values[i * l.channels..(i + 1) * l.channels])
    }

    pub fn norm(&self) -> f64 {
        crate::postprocess::l2_norm(&self.values)
    }
}

/// Raw SBA vector: the weighted-pooled C-vectors of every detector, concatenated
/// in detector order.
pub fn aggregate<T: Real>(
    tensor: &FeatureTensor<T>,
    detectors: &DetectorSet<T>,
    alpha: f64,
    beta: f64,
) -> Result<SbaVector<T>> {
    check_exponents(alpha, beta)?;
    if detectors.source_channels() != tensor.channels() {
        return Err(SbaError::Shape(format!(
            "detectors were selected over {} channels, tensor has {}",
            detectors.source_channels(),
            tensor.channels()
        )));
    }
    let mut values = Vec::with_capacity(detectors.len() * tensor.channels());
    for &n in detectors.indices() {
        let w = compute_weights(tensor, n, alpha, beta)?;
        values.extend(pool_weighted(tensor, &w)?);
    }
    SbaVector::raw(
        values,
        BlockLayout {
            detectors: detectors.len(),
            channels: tensor.channels(),
        },
    )
}

/// Aggregates every image of a manifest on the current rayon pool. Rows come
/// back in manifest order and each row is computed independently, so the
/// output is identical for any worker count.
pub fn aggregate_manifest<T: Real>(
    manifest: &DatasetManifest,
    detectors: &DetectorSet<T>,
    alpha: f64,
    beta: f64,
) -> Result<VectorBatch<T>> {
    if manifest.is_empty() {
        return Err(SbaError::EmptyDataset("manifest has no records".into()));
    }
    let rows = manifest
        .records()
        .par_iter()
        .map(|r| {
            let t = read_tensor::<T>(manifest.resolve(r))?;
            aggregate(&t, detectors, alpha, beta).map(|v| v.values)
        })
        .collect::<Result<Vec<_>>>()?;
    VectorBatch::from_rows(&rows)
}

/// Row-major batch of equal-length vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBatch<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> VectorBatch<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(SbaError::Value("vector dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(SbaError::Shape(format!(
                "{} values are not a whole number of {dim}-dim rows",
                data.len()
            )));
        }
        binfmt::check_finite(&data, "vector batch")?;
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| SbaError::EmptyDataset("no vectors".into()))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(SbaError::Shape(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn map_rows(&self, f: impl Fn(&[T]) -> Vec<T> + Sync + Send) -> Result<Self> {
        let rows: Vec<Vec<T>> = self.data.par_chunks_exact(self.dim).map(f).collect();
        Self::from_rows(&rows)
    }

    pub fn cast<U: Real>(&self) -> VectorBatch<U> {
        VectorBatch {
            dim: self.dim,
            data: cast_slice(&self.data),
        }
    }
}

/// SBAV: magic, `u32` version, `u32` count, `u32` dim, then `f32` rows.
pub fn encode_batch<T: Real>(batch: &VectorBatch<T>) -> Result<Vec<u8>> {
    let fields = [
        binfmt::to_u32(batch.len(), "vector count")?,
        binfmt::to_u32(batch.dim(), "vector dimension")?,
    ];
    let mut out = Vec::with_capacity(16 + 4 * batch.data.len());
    binfmt::put_header(&mut out, BATCH_MAGIC, &fields);
    binfmt::put_reals(&mut out, &batch.data);
    Ok(out)
}

pub fn decode_batch<T: Real>(bytes: &[u8]) -> Result<VectorBatch<T>> {
    let mut r = Reader::open(bytes, BATCH_MAGIC, "SBAV")?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(SbaError::Format("SBAV: zero dimension".into()));
    }
    let total = count
        .checked_mul(dim)
        .ok_or_else(|| SbaError::Corrupt("SBAV: size overflows".into()))?;
    let data = r.reals(total)?;
    r.finish()?;
    VectorBatch::new(dim, data)
}

pub fn read_batch<T: Real>(path: impl AsRef<Path>) -> Result<VectorBatch<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    decode_batch(&bytes)
}

pub fn write_batch<T: Real>(batch: &VectorBatch<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_batch(batch)?;
    fs::write(path, bytes).map_err(|e| SbaError::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(c: usize, h: usize, w: usize, data: &[f64]) -> FeatureTensor<f64> {
        FeatureTensor::new(c, h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn uniform_channel_weights() {
        let t = tensor(1, 2, 2, &[3.0; 4]);
        let w = compute_weights(&t, 0, 2.0, 2.0).unwrap();
        let expected = 4f64.powf(-0.25);
        for v in &w.weights {
            assert!((v - expected).abs() < 1e-12);
        }
        assert!((expected - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_gives_zero_weights() {
        let t = tensor(2, 2, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        let w = compute_weights(&t, 0, 2.0, 2.0).unwrap();
        assert!(w.weights.iter().all(|v| *v == 0.0));
        let psi = aggregate(&t, &DetectorSet::new(vec![0], vec![0.0], 2).unwrap(), 2.0, 2.0).unwrap();
        assert_eq!(psi.values, vec![0.0, 0.0]);
    }

    #[test]
    fn negative_proposal_values_are_clamped() {
        let t = tensor(1, 1, 2, &[-5.0, 2.0]);
        let w = compute_weights(&t, 0, 2.0, 2.0).unwrap();
        assert_eq!(w.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn bad_exponents() {
        let t = tensor(1, 1, 1, &[1.0]);
        for (a, b) in [(0.0, 2.0), (2.0, 0.0), (-1.0, 1.0), (f64::NAN, 1.0)] {
            assert!(matches!(compute_weights(&t, 0, a, b), Err(SbaError::Param(_))));
        }
        assert!(matches!(compute_weights(&t, 1, 2.0, 2.0), Err(SbaError::Param(_))));
    }

    #[test]
    fn pooling_with_unit_and_zero_weights() {
        let t = tensor(2, 1, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ones = ProposalWeights {
            detector: 0,
            height: 1,
            width: 3,
            weights: vec![1.0; 3],
        };
        assert_eq!(pool_weighted(&t, &ones).unwrap(), crate::detectors::sum_pool(&t));
        let zeros = ProposalWeights {
            weights: vec![0.0; 3],
            ..ones.clone()
        };
        assert_eq!(pool_weighted(&t, &zeros).unwrap(), vec![0.0, 0.0]);
        let wrong = ProposalWeights {
            height: 3,
            width: 1,
            ..ones
        };
        assert!(matches!(pool_weighted(&t, &wrong), Err(SbaError::Shape(_))));
    }

    #[test]
    fn concatenation_layout() {
        let t = tensor(2, 1, 2, &[1.0, 3.0, 2.0, 0.5]);
        let single = aggregate(&t, &DetectorSet::new(vec![1], vec![0.0], 2).unwrap(), 2.0, 2.0).unwrap();
        assert_eq!(single.dim(), 2);

        let ab = aggregate(&t, &DetectorSet::new(vec![0, 1], vec![0.0, 0.0], 2).unwrap(), 2.0, 2.0).unwrap();
        let ba = aggregate(&t, &DetectorSet::new(vec![1, 0], vec![0.0, 0.0], 2).unwrap(), 2.0, 2.0).unwrap();
        assert_eq!(ab.dim(), 4);
        assert_eq!(ab.block(0), ba.block(1));
        assert_eq!(ab.block(1), ba.block(0));
        assert_eq!(ab.block(1).unwrap(), single.values.as_slice());

        let wrong = DetectorSet::new(vec![0], vec![0.0], 3).unwrap();
        assert!(matches!(aggregate(&t, &wrong, 2.0, 2.0), Err(SbaError::Shape(_))));
    }

    #[test]
    fn batch_file_round_trip() {
        let b = VectorBatch::from_rows(&[vec![1.0f32, 2.0], vec![3.0, -4.0], vec![0.0, 0.5]]).unwrap();
        let bytes = encode_batch(&b).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 6);
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(decode_batch::<f32>(&bytes).unwrap(), b);
        assert!(matches!(
            decode_batch::<f32>(&bytes[..bytes.len() - 1]),
            Err(SbaError::Corrupt(_))
        ));
        assert!(matches!(
            VectorBatch::<f64>::from_rows::<Vec<f64>>(&[]),
            Err(SbaError::EmptyDataset(_))
        ));
    }
}
