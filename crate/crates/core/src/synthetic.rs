//! Seeded synthetic data with planted structure, for tests, benchmarks and
//! the bundled CLI fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::retrieval::{Relevance, RetrievalGroundTruth};
use crate::tensor::FeatureTensor;

/// Feature maps of images that each contain one object of some class plus
/// background clutter.
///
/// Object pixels respond in every channel following a per-class appearance
/// vector; clutter blobs respond following random appearance vectors. The
/// `detector_channels` respond only to the object, with a class-dependent
/// amplitude, so their pooled sums have the largest variance over the
/// dataset and their maps localise the object.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub detector_channels: Vec<usize>,
    pub clutter_blobs: usize,
    pub clutter_amplitude: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 8,
            channels: 16,
            height: 6,
            width: 6,
            detector_channels: vec![3, 7],
            clutter_blobs: 3,
            clutter_amplitude: 1.2,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedImage {
    pub id: String,
    pub label: String,
    pub class: usize,
    pub tensor: FeatureTensor<f64>,
}

fn blob(height: usize, width: usize, cy: f64, cx: f64, radius: f64) -> Vec<f64> {
    let mut m = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
            m.push((-d2 / (2.0 * radius * radius)).exp());
        }
    }
    m
}

impl PlantedConfig {
    pub fn generate(&self) -> Result<Vec<PlantedImage>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("valid std");
        let c = self.channels;
        let (h, w) = (self.height, self.width);
        let is_detector = |ch: usize| self.detector_channels.contains(&ch);

        let prototypes: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| (0..c).map(|_| rng.random::<f64>()).collect())
            .collect();

        let mut out = Vec::with_capacity(self.classes * self.per_class);
        for i in 0..self.classes * self.per_class {
            let class = i % self.classes;
            let object = blob(
                h,
                w,
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                0.8,
            );
            let clutter: Vec<(Vec<f64>, Vec<f64>)> = (0..self.clutter_blobs)
                .map(|_| {
                    let mask = blob(
                        h,
                        w,
                        rng.random_range(0.0..h as f64),
                        rng.random_range(0.0..w as f64),
                        0.8,
                    );
                    let look: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
                    (mask, look)
                })
                .collect();
            let detector_amp = 4.0 + 3.0 * class as f64;
            let mut data = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for p in 0..h * w {
                    let v = if is_detector(ch) {
                        detector_amp * object[p]
                    } else {
                        let background: f64 = clutter
                            .iter()
                            .map(|(mask, look)| self.clutter_amplitude * look[ch] * mask[p])
                            .sum();
                        prototypes[class][ch] * object[p] + background
                    };
                    data.push((v + noise.sample(&mut rng)).max(0.0));
                }
            }
            out.push(PlantedImage {
                id: format!("img{i:04}"),
                label: format!("class{class}"),
                class,
                tensor: FeatureTensor::new(c, h, w, data)?,
            });
        }
        Ok(out)
    }
}

/// Ground truth where every other image of the same class is `good`.
pub fn class_ground_truth<'a>(
    queries: impl IntoIterator<Item = (&'a str, &'a str)>,
    database: &[(&str, &str)],
) -> Result<RetrievalGroundTruth> {
    let mut gt = RetrievalGroundTruth::default();
    for (qid, qlabel) in queries {
        for (id, label) in database {
            if *label == qlabel && *id != qid {
                gt.insert(qid, id, Relevance::Good)?;
            }
        }
    }
    Ok(gt)
}

/// Unit vectors scattered around random unit class centres. Returns
/// `(vectors, class index per vector)`, classes interleaved.
pub fn clustered_unit_vectors(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).expect("valid std");
    let unit = |mut v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| unit((0..dim).map(|_| gauss.sample(&mut rng)).collect()))
        .collect();
    let mut vectors = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let class = i % classes;
        let v = centres[class]
            .iter()
            .map(|c| c + spread * gauss.sample(&mut rng) / (dim as f64).sqrt())
            .collect();
        vectors.push(unit(v));
        labels.push(class);
    }
    (vectors, labels)
}
