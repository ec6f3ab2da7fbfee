//! Semantic-based aggregation (SBA) of convolutional feature maps.
//!
//! The pipeline: pick the highest-variance channels of a dataset as semantic
//! detectors ([`detectors`]), pool every image's feature maps under each
//! detector's normalized activation map and concatenate ([`aggregation`]),
//! L2-normalize and PCA-whiten ([`postprocess`]), then rank by L2 distance,
//! optionally with query expansion, and evaluate ([`retrieval`]) or classify
//! with rank-weighted neighbor votes ([`classification`]).
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common choices.

mod binfmt;

pub mod aggregation;
pub mod classification;
pub mod config;
pub mod detectors;
pub mod error;
pub mod postprocess;
pub mod retrieval;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod tensor_io;

pub use aggregation::{
    aggregate, compute_weights, pool_weighted, BlockLayout, ProposalWeights, SbaVector, Stage, VectorBatch,
};
pub use classification::{knn, mn_classify, MnWeight, NeighborList, ScoreTable};
pub use config::PipelineConfig;
pub use detectors::{select_detectors, select_random_detectors, sum_pool, ChannelStats, DetectorSet};
pub use error::{Result, SbaError};
pub use postprocess::{apply_pca_whiten, fit_pca_whiten, l2_normalize, PcaWhitenModel};
pub use retrieval::{
    average_precision, distance, mean_average_precision, query_expansion, rank, Database, RankedList,
    RetrievalGroundTruth,
};
pub use scalar::Real;
pub use tensor::FeatureTensor;
pub use tensor_io::{read_manifest, read_tensor, write_tensor, DatasetManifest};

/// Storage precision of every file format.
pub type FeatureTensorF32 = FeatureTensor<f32>;
pub type FeatureTensorF64 = FeatureTensor<f64>;
pub type SbaVectorF32 = SbaVector<f32>;
pub type SbaVectorF64 = SbaVector<f64>;
pub type VectorBatchF32 = VectorBatch<f32>;
pub type VectorBatchF64 = VectorBatch<f64>;
pub type DetectorSetF64 = DetectorSet<f64>;
pub type PcaWhitenModelF32 = PcaWhitenModel<f32>;
pub type PcaWhitenModelF64 = PcaWhitenModel<f64>;
pub type DatabaseF32 = Database<f32>;
pub type DatabaseF64 = Database<f64>;
