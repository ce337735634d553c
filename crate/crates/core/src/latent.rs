//! Dense `frames x dim` video latents.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::Scalar;

/// A video latent: `frames` rows of `dim` real coordinates, stored row-major.
///
/// Every latent in the pipeline (clean, noisy, predicted clean, and the noise
/// draws themselves) uses this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoLatent<T> {
    frames: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> VideoLatent<T> {
    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self::filled(frames, dim, T::zero())
    }

    pub fn filled(frames: usize, dim: usize, value: T) -> Self {
        assert!(frames >= 1 && dim >= 1, "latent must have at least one frame and one coordinate");
        Self {
            frames,
            dim,
            data: vec![value; frames * dim],
        }
    }

    pub fn from_vec(frames: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::param(format!("latent shape {frames}x{dim} is empty")));
        }
        if data.len() != frames * dim {
            return Err(Error::shape(frames * dim, data.len()));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("latent construction (element {i})")));
        }
        Ok(Self { frames, dim, data })
    }

    /// Builds a latent by repeating one frame.
    pub fn tiled(frame: &[T], frames: usize) -> Self {
        assert!(!frame.is_empty() && frames >= 1);
        let mut data = Vec::with_capacity(frame.len() * frames);
        for _ in 0..frames {
            data.extend_from_slice(frame);
        }
        Self {
            frames,
            dim: frame.len(),
            data,
        }
    }

    /// Standard normal draw of the given shape. Draws are made in `f64`.
    pub fn gaussian<R: Rng + ?Sized>(frames: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..frames * dim)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { frames, dim, data }
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.dim)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn frame_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    #[inline]
    pub fn get(&self, frame: usize, coord: usize) -> T {
        self.data[frame * self.dim + coord]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, coord: usize, value: T) {
        self.data[frame * self.dim + coord] = value;
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.frames, self.dim),
                format!("{}x{}", other.frames, other.dim),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(Self {
            frames: self.frames,
            dim: self.dim,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            frames: self.frames,
            dim: self.dim,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lincomb(T::one(), other, -T::one())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lincomb(T::one(), other, T::one())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&x, &y)| x * y).sum())
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn mean_squared_error(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        let n = T::lit(self.data.len() as f64);
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            / n)
    }

    /// Reorders frames: frame `i` of the result is frame `order[i]` of `self`.
    pub fn permute_frames(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.frames {
            return Err(Error::shape(self.frames, order.len()));
        }
        let mut seen = vec![false; self.frames];
        let mut data = Vec::with_capacity(self.data.len());
        for &src in order {
            if src >= self.frames || std::mem::replace(&mut seen[src], true) {
                return Err(Error::param(format!("{order:?} is not a frame permutation")));
            }
            data.extend_from_slice(self.frame(src));
        }
        Ok(Self {
            frames: self.frames,
            dim: self.dim,
            data,
        })
    }

    pub fn cast<U: Scalar>(&self) -> VideoLatent<U> {
        VideoLatent {
            frames: self.frames,
            dim: self.dim,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}
