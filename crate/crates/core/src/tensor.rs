use crate::error::{FddError, Result};
use crate::scalar::Scalar;

/// Channel-major 3-D tensor: `(channels, height, width)`, row-major within a
/// channel, channel outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(FddError::shape(format!(
                "tensor {:?} needs {} values, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FddError::Input(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    /// Skips the finiteness scan. Used on hot paths whose inputs were validated.
    pub(crate) fn from_parts(dims: (usize, usize, usize), data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.0 * dims.1 * dims.2);
        Self { dims, data }
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for ch in 0..dims.0 {
            for row in 0..dims.1 {
                for col in 0..dims.2 {
                    data.push(f(ch, row, col));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims.0
    }

    pub fn height(&self) -> usize {
        self.dims.1
    }

    pub fn width(&self) -> usize {
        self.dims.2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, ch: usize, row: usize, col: usize) -> usize {
        (ch * self.dims.1 + row) * self.dims.2 + col
    }

    #[inline]
    pub fn get(&self, ch: usize, row: usize, col: usize) -> T {
        self.data[self.index(ch, row, col)]
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        let plane = self.dims.1 * self.dims.2;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise sum; shapes must agree.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.require_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self::from_parts(self.dims, data))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.require_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self::from_parts(self.dims, data))
    }

    /// Stacks `self` on top of `other` along the channel axis.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.dims.1 != other.dims.1 || self.dims.2 != other.dims.2 {
            return Err(FddError::shape(format!(
                "cannot concatenate {:?} with {:?}",
                self.dims, other.dims
            )));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self::from_parts(
            (self.dims.0 + other.dims.0, self.dims.1, self.dims.2),
            data,
        ))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts storage precision.
    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub(crate) fn require_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(FddError::shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }
}
