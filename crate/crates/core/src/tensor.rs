use crate::error::{Result, SbaError};
use crate::scalar::{cast_slice, Real};

/// Activations of one image: `channels × height × width`, stored `(c, y, x)`
/// row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureTensor<T> {
    /// Builds a tensor, rejecting empty dimensions, length mismatches and
    /// non-finite values. Negative values are accepted with a warning.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(SbaError::Value(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| SbaError::Value("tensor dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(SbaError::Shape(format!(
                "tensor {channels}x{height}x{width} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SbaError::Value(format!("non-finite activation at flat index {pos}")));
        }
        let negatives = data.iter().filter(|v| **v < T::zero()).count();
        if negatives > 0 {
            log::warn!("tensor has {negatives} negative activations; proposals clamp them to zero");
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![T::zero(); channels * height * width])
    }

    /// Builds a tensor from a generator called as `f(c, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of spatial positions, `height * width`.
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `height * width` activation map of channel `c`.
    pub fn channel(&self, c: usize) -> &[T] {
        let area = self.area();
        &self.data[c * area..(c + 1) * area]
    }

    pub fn cast<U: Real>(&self) -> FeatureTensor<U> {
        FeatureTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: cast_slice(&self.data),
        }
    }
}
