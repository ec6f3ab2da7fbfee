//! L2 normalization and PCA whitening of aggregated vectors.
//!
//! The fitted transform is
//!
//! ```text
//! y = diag(σ)^-1 · P · (x − μ)
//! ```
//!
//! with `P` the top-M principal directions of the mean-centred training
//! batch and `σ_j = s_j / sqrt(n)`, `s_j` the singular values of the centred
//! `n × d` data matrix. With that scaling the training outputs have identity
//! population covariance. The result is L2-normalized again unless disabled.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::aggregation::{SbaVector, Stage, VectorBatch};
use crate::binfmt::{self, Reader};
use crate::error::{Result, SbaError};
use crate::scalar::Real;

pub const MODEL_MAGIC: &[u8; 4] = b"SBAP";

/// Singular values at or below this are treated as a rank deficiency.
pub const RANK_EPSILON: f64 = 1e-10;

/// Relative floor `σ_m / σ_1` below which a direction is numerical noise of
/// the eigen-solver rather than signal.
const RELATIVE_RANK_FLOOR: f64 = 1e-7;

pub fn l2_norm<T: Real>(values: &[T]) -> f64 {
    values
        .iter()
        .map(|v| {
            let v = v.to_f64_lossless();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Scales to unit Euclidean norm; the zero vector is left as is.
pub fn normalize_in_place<T: Real>(values: &mut [T]) {
    let n = l2_norm(values);
    if n > 0.0 {
        for v in values.iter_mut() {
            *v = T::of(v.to_f64_lossless() / n);
        }
    }
}

pub fn l2_normalize<T: Real>(vector: &SbaVector<T>) -> SbaVector<T> {
    let mut values = vector.values.clone();
    normalize_in_place(&mut values);
    let stage = match vector.stage {
        Stage::Compressed => Stage::Compressed,
        _ => Stage::Normalized,
    };
    SbaVector {
        values,
        layout: vector.layout,
        stage,
    }
}

/// Row-wise [`normalize_in_place`] over a batch.
pub fn normalize_batch<T: Real>(batch: &VectorBatch<T>) -> Result<VectorBatch<T>> {
    batch.map_rows(|r| {
        let mut r = r.to_vec();
        normalize_in_place(&mut r);
        r
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaWhitenModel<T> {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<T>,
    /// `output_dim × input_dim`, row-major, rows are principal directions.
    projection: Vec<T>,
    singular_values: Vec<T>,
}

impl<T: Real> PcaWhitenModel<T> {
    pub fn new(mean: Vec<T>, projection: Vec<T>, singular_values: Vec<T>) -> Result<Self> {
        let input_dim = mean.len();
        let output_dim = singular_values.len();
        if input_dim == 0 || output_dim == 0 {
            return Err(SbaError::Value("model dimensions must be positive".into()));
        }
        if output_dim > input_dim {
            return Err(SbaError::Value(format!(
                "output dimension {output_dim} exceeds input dimension {input_dim}"
            )));
        }
        if projection.len() != input_dim * output_dim {
            return Err(SbaError::Shape(format!(
                "projection has {} entries, expected {output_dim}x{input_dim}",
                projection.len()
            )));
        }
        binfmt::check_finite(&mean, "model mean")?;
        binfmt::check_finite(&projection, "model projection")?;
        if singular_values.iter().any(|s| *s <= T::zero() || !s.is_finite()) {
            return Err(SbaError::Value("singular values must be positive and finite".into()));
        }
        if singular_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(SbaError::Value("singular values must be non-increasing".into()));
        }
        Ok(Self {
            input_dim,
            output_dim,
            mean,
            projection,
            singular_values,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn projection(&self) -> &[T] {
        &self.projection
    }

    pub fn projection_row(&self, j: usize) -> &[T] {
        &self.projection[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    /// Centred, projected and whitened, without the final normalization.
    pub fn whiten(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim {
            return Err(SbaError::Shape(format!(
                "vector has dimension {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let centred: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .map(|(v, m)| v.to_f64_lossless() - m.to_f64_lossless())
            .collect();
        Ok((0..self.output_dim)
            .map(|j| {
                let dot: f64 = self
                    .projection_row(j)
                    .iter()
                    .zip(&centred)
                    .map(|(p, c)| p.to_f64_lossless() * c)
                    .sum();
                T::of(dot / self.singular_values[j].to_f64_lossless())
            })
            .collect())
    }

    /// Whitens and, when `final_norm` is set, re-normalizes to unit length.
    pub fn transform(&self, x: &[T], final_norm: bool) -> Result<Vec<T>> {
        let mut y = self.whiten(x)?;
        if final_norm {
            normalize_in_place(&mut y);
        }
        Ok(y)
    }

    pub fn transform_batch(&self, batch: &VectorBatch<T>, final_norm: bool) -> Result<VectorBatch<T>> {
        if batch.dim() != self.input_dim {
            return Err(SbaError::Shape(format!(
                "batch has dimension {}, model expects {}",
                batch.dim(),
                self.input_dim
            )));
        }
        // dimensions already checked, so whiten cannot fail per row
        let data: Vec<T> = batch
            .rows()
            .flat_map(|r| self.transform(r, final_norm).expect("dimension checked"))
            .collect();
        VectorBatch::new(self.output_dim, data)
    }
}

/// Fits mean, top-`m` principal directions and whitening scales on a batch of
/// L2-normalized vectors.
///
/// The eigen-decomposition runs on whichever of the `d × d` covariance or the
/// `n × n` Gram matrix is smaller. Each direction is sign-fixed so that its
/// largest-magnitude entry is positive.
pub fn fit_pca_whiten<T: Real>(batch: &VectorBatch<T>, m: usize) -> Result<PcaWhitenModel<T>> {
    let n = batch.len();
    let d = batch.dim();
    if n == 0 {
        return Err(SbaError::EmptyDataset("no training vectors for PCA".into()));
    }
    let limit = d.min(n.saturating_sub(1));
    if m == 0 || m > limit {
        return Err(SbaError::Param(format!(
            "output dimension {m} must be in 1..={limit} for {n} vectors of dimension {d}"
        )));
    }

    let mut mean = vec![0.0f64; d];
    for r in batch.rows() {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v.to_f64_lossless();
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let x = DMatrix::<f64>::from_fn(n, d, |i, j| batch.row(i)[j].to_f64_lossless() - mean[j]);

    // (eigenvalue of XᵀX, unit direction in input space)
    let mut components: Vec<(f64, Vec<f64>)> = if d <= n {
        let cov = x.transpose() * &x;
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect()))
            .collect()
    } else {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let u = x.transpose() * eig.eigenvectors.column(k);
                let norm = u.norm();
                let dir = if norm > 0.0 {
                    u.iter().map(|v| v / norm).collect()
                } else {
                    vec![0.0; d]
                };
                (l, dir)
            })
            .collect()
    };
    components.sort_by(|a, b| b.0.total_cmp(&a.0));
    components.truncate(m);

    let s_first = components[0].0.max(0.0).sqrt();
    let scale = (n as f64).sqrt();
    let mut projection = Vec::with_capacity(m * d);
    let mut sigmas = Vec::with_capacity(m);
    for (j, (lambda, mut dir)) in components.into_iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        let sigma = s / scale;
        if sigma <= RANK_EPSILON || s <= s_first * RELATIVE_RANK_FLOOR {
            return Err(SbaError::Rank(format!(
                "component {} has singular value {sigma:e}; the training batch spans fewer than {m} \
                 dimensions, lower the output dimension",
                j + 1
            )));
        }
        fix_sign(&mut dir);
        projection.extend(dir.into_iter().map(T::of));
        sigmas.push(T::of(sigma));
    }
    PcaWhitenModel::new(mean.into_iter().map(T::of).collect(), projection, sigmas)
}

fn fix_sign(dir: &mut [f64]) {
    let mut best = 0;
    for (i, v) in dir.iter().enumerate() {
        if v.abs() > dir[best].abs() {
            best = i;
        }
    }
    if dir[best] < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Compresses a normalized vector into the model's output space.
pub fn apply_pca_whiten<T: Real>(
    vector: &SbaVector<T>,
    model: &PcaWhitenModel<T>,
    final_norm: bool,
) -> Result<SbaVector<T>> {
    let values = model.transform(&vector.values, final_norm)?;
    Ok(SbaVector::with_stage(values, Stage::Compressed))
}

/// SBAP: magic, `u32` version, `u32` input_dim, `u32` M, then mean, projection
/// (row-major) and singular values as `f32`.
pub fn encode_model<T: Real>(model: &PcaWhitenModel<T>) -> Result<Vec<u8>> {
    let fields = [
        binfmt::to_u32(model.input_dim, "input dimension")?,
        binfmt::to_u32(model.output_dim, "output dimension")?,
    ];
    let mut out = Vec::new();
    binfmt::put_header(&mut out, MODEL_MAGIC, &fields);
    binfmt::put_reals(&mut out, &model.mean);
    binfmt::put_reals(&mut out, &model.projection);
    binfmt::put_reals(&mut out, &model.singular_values);
    Ok(out)
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<PcaWhitenModel<T>> {
    let mut r = Reader::open(bytes, MODEL_MAGIC, "SBAP")?;
    let d = r.u32()? as usize;
    let m = r.u32()? as usize;
    let mean = r.reals(d)?;
    let projection = r.reals(
        d.checked_mul(m)
            .ok_or_else(|| SbaError::Corrupt("SBAP: size overflows".into()))?,
    )?;
    let sigmas = r.reals(m)?;
    r.finish()?;
    if mean.len() != d || sigmas.len() != m {
        return Err(SbaError::Corrupt("SBAP: inconsistent sizes".into()));
    }
    PcaWhitenModel::new(mean, projection, sigmas)
}

pub fn read_model<T: Real>(path: impl AsRef<Path>) -> Result<PcaWhitenModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    decode_model(&bytes)
}

pub fn write_model<T: Real>(model: &PcaWhitenModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| SbaError::io(path.display().to_string(), e))
}
