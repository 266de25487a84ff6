//! Dense row-major 2-D grids.

use crate::error::{Error, Result};
use crate::tensor_store::Tensor;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::DimMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, y: usize, x: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Scalar> Grid<T> {
    /// Reads a 2-D tensor, or one plane `[index, .., ..]` of a 3-D tensor.
    pub fn from_tensor_plane(tensor: &Tensor, index: Option<usize>) -> Result<Self> {
        let dims = tensor.dims();
        let (h, w, offset) = match (dims.len(), index) {
            (2, None) => (dims[0], dims[1], 0),
            (3, Some(i)) if i < dims[0] => (dims[1], dims[2], i * dims[1] * dims[2]),
            _ => return Err(Error::InvalidDims(dims.to_vec())),
        };
        let data = tensor.data()[offset..offset + h * w]
            .iter()
            .map(|&v| T::of_f32(v))
            .collect();
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|v| v.to_f64_lossy() as f32)
            .collect();
        Tensor::new(vec![self.height, self.width], data).expect("grid shape is consistent")
    }

    pub fn max_value(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| a.max(b))
    }
}
