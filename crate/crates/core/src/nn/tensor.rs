use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::image_io::FloatImage;

/// Scalar type the layers are generic over: `f32` for training and inference,
/// `f64` for the gradient-check harness.
pub trait Real:
    Float + Sum + AddAssign + SubAssign + MulAssign + Debug + Default + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense NCHW tensor. Fully-connected activations use `h = w = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    /// Packs channel-interleaved tiles into an NCHW batch.
    pub fn from_tiles<'a, I>(tiles: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FloatImage>,
    {
        let mut data = Vec::new();
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut n = 0;
        for tile in tiles {
            let d = (tile.channels(), tile.height(), tile.width());
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::DimensionMismatch(format!(
                        "tile {d:?} in a batch of {prev:?} (channels, height, width)"
                    )))
                }
                _ => {}
            }
            let (c, h, w) = d;
            let src = tile.data();
            for ch in 0..c {
                for p in 0..h * w {
                    data.push(T::of(f64::from(src[p * c + ch])));
                }
            }
            n += 1;
        }
        let (c, h, w) = dims.ok_or(Error::EmptyDataset)?;
        Ok(Self { shape: [n, c, h, w], data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Same data viewed as `batch x features x 1 x 1`.
    pub fn flatten(self) -> Self {
        let len = self.sample_len();
        Self { shape: [self.shape[0], len, 1, 1], data: self.data }
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}
