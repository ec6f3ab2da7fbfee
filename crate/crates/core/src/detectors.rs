//! Variance-based selection of semantic detector channels.
//!
//! Every image is sum-pooled to a C-vector; the per-channel population
//! variance of those vectors over the database ranks the channels, and the
//! `n` highest-variance channels become the detectors whose activation maps
//! weight the aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SbaError};
use crate::scalar::Real;
use crate::tensor::FeatureTensor;
use crate::tensor_io::{read_tensor, DatasetManifest};

/// Sums each channel over all spatial positions.
pub fn sum_pool<T: Real>(tensor: &FeatureTensor<T>) -> Vec<T> {
    (0..tensor.channels())
        .map(|c| {
            let s: f64 = tensor.channel(c).iter().map(|v| v.to_f64_lossless()).sum();
            T::of(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    pub dataset_size: usize,
}

impl<T: Real> ChannelStats<T> {
    /// Mean and population variance (normalized by `D`) of sum-pooled vectors,
    /// accumulated in manifest order.
    pub fn from_pooled(pooled: &[Vec<T>]) -> Result<Self> {
        let first = pooled
            .first()
            .ok_or_else(|| SbaError::EmptyDataset("no images to compute channel statistics".into()))?;
        let channels = first.len();
        let d = pooled.len() as f64;
        let mut mean = vec![0.0f64; channels];
        for (i, g) in pooled.iter().enumerate() {
            if g.len() != channels {
                return Err(SbaError::Shape(format!(
                    "image {i} has {} channels, expected {channels}",
                    g.len()
                )));
            }
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v.to_f64_lossless();
            }
        }
        mean.iter_mut().for_each(|m| *m /= d);
        let mut variance = vec![0.0f64; channels];
        for g in pooled {
            for ((acc, v), m) in variance.iter_mut().zip(g).zip(&mean) {
                let dev = v.to_f64_lossless() - m;
                *acc += dev * dev;
            }
        }
        variance.iter_mut().for_each(|v| *v /= d);
        Ok(Self {
            mean: mean.into_iter().map(T::of).collect(),
            variance: variance.into_iter().map(T::of).collect(),
            dataset_size: pooled.len(),
        })
    }

    pub fn from_tensors(tensors: &[FeatureTensor<T>]) -> Result<Self> {
        let pooled: Vec<Vec<T>> = tensors.par_iter().map(sum_pool).collect();
        Self::from_pooled(&pooled)
    }

    pub fn channels(&self) -> usize {
        self.variance.len()
    }
}

/// Reads every tensor of the manifest and computes channel statistics.
///
/// Images are pooled in parallel on the current rayon pool; the reduction
/// runs in manifest order so the result does not depend on worker count.
pub fn compute_channel_stats<T: Real>(manifest: &DatasetManifest) -> Result<ChannelStats<T>> {
    if manifest.is_empty() {
        return Err(SbaError::EmptyDataset("manifest has no records".into()));
    }
    let pooled = manifest
        .records()
        .par_iter()
        .map(|r| read_tensor::<T>(manifest.resolve(r)).map(|t| sum_pool(&t)))
        .collect::<Result<Vec<_>>>()?;
    ChannelStats::from_pooled(&pooled)
}

/// Ordered detector channels with the variances they were selected by.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSet<T> {
    indices: Vec<usize>,
    variances: Vec<T>,
    source_channels: usize,
}

impl<T: Real> DetectorSet<T> {
    pub fn new(indices: Vec<usize>, variances: Vec<T>, source_channels: usize) -> Result<Self> {
        let n = indices.len();
        if n == 0 || n > source_channels {
            return Err(SbaError::Param(format!(
                "detector count {n} must be in 1..={source_channels}"
            )));
        }
        if variances.len() != n {
            return Err(SbaError::Shape(format!(
                "{n} detector indices but {} variances",
                variances.len()
            )));
        }
        let mut seen = vec![false; source_channels];
        for &i in &indices {
            if i >= source_channels {
                return Err(SbaError::Value(format!(
                    "detector channel {i} out of range 0..{source_channels}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(SbaError::Value(format!("detector channel {i} repeated")));
            }
        }
        if variances.windows(2).any(|w| w[1] > w[0]) {
            return Err(SbaError::Value("detector variances must be non-increasing".into()));
        }
        Ok(Self {
            indices,
            variances,
            source_channels,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn source_channels(&self) -> usize {
        self.source_channels
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `SBADET 1 <C> <N>` followed by `<index>\t<variance>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("SBADET 1 {} {}\n", self.source_channels, self.indices.len());
        for (i, v) in self.indices.iter().zip(&self.variances) {
            writeln!(out, "{i}\t{v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| SbaError::Format("empty detector file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "SBADET" {
            return Err(SbaError::Format(format!("bad detector header {header:?}")));
        }
        if parts[1] != "1" {
            return Err(SbaError::Format(format!(
                "unsupported detector file version {}",
                parts[1]
            )));
        }
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| SbaError::Format(format!("bad count {s:?} in detector header")))
        };
        let channels = parse_count(parts[2])?;
        let n = parse_count(parts[3])?;
        let mut indices = Vec::with_capacity(n);
        let mut variances = Vec::with_capacity(n);
        for line in lines.filter(|l| !l.is_empty()) {
            let (i, v) = line
                .split_once('\t')
                .ok_or_else(|| SbaError::Format(format!("bad detector line {line:?}")))?;
            indices.push(
                i.parse::<usize>()
                    .map_err(|_| SbaError::Format(format!("bad channel index {i:?}")))?,
            );
            let v: f64 = v.parse().map_err(|_| SbaError::Format(format!("bad variance {v:?}")))?;
            variances.push(T::of(v));
        }
        if indices.len() != n {
            return Err(SbaError::Corrupt(format!(
                "detector header announces {n} lines, found {}",
                indices.len()
            )));
        }
        Self::new(indices, variances, channels)
    }
}

pub fn read_detectors<T: Real>(path: impl AsRef<Path>) -> Result<DetectorSet<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    DetectorSet::parse(&text)
}

pub fn write_detectors<T: Real>(set: &DetectorSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_text()).map_err(|e| SbaError::io(path.display().to_string(), e))
}

/// The `n` channels of largest variance, descending; ties go to the lower
/// channel index.
pub fn select_detectors<T: Real>(stats: &ChannelStats<T>, n: usize) -> Result<DetectorSet<T>> {
    let c = stats.channels();
    if n == 0 || n > c {
        return Err(SbaError::Param(format!("detector count {n} must be in 1..={c}")));
    }
    let mut order: Vec<usize> = (0..c).collect();
    // stable sort keeps lower indices first among equal variances
    order.sort_by(|&a, &b| {
        let (va, vb) = (stats.variance[a].to_f64_lossless(), stats.variance[b].to_f64_lossless());
        vb.total_cmp(&va)
    });
    order.truncate(n);
    let variances = order.iter().map(|&i| stats.variance[i]).collect();
    DetectorSet::new(order, variances, c)
}

/// Uniform draw of `n` distinct channels without replacement, reproducible
/// per seed. Variances are unknown and recorded as zero.
pub fn select_random_detectors<T: Real>(c: usize, n: usize, seed: u64) -> Result<DetectorSet<T>> {
    if n == 0 || n > c {
        return Err(SbaError::Param(format!("detector count {n} must be in 1..={c}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = index::sample(&mut rng, c, n).into_vec();
    DetectorSet::new(indices, vec![T::zero(); n], c)
}
