use crate::error::{Result, TensorError};
use crate::real::Real;

/// Dense row-major tensor.
///
/// `grad` is present iff the tensor participates in gradient accumulation
/// (i.e. it is a learnable parameter).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
    grad: Option<Vec<R>>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(TensorError::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::zero(); numel(shape)],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: R) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
            grad: None,
        }
    }

    pub fn scalar(value: R) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            grad: None,
        }
    }

    /// Builds a tensor from `f64` values, converting to `R`.
    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Tensor::new(shape.to_vec(), values.iter().map(|&v| R::lit(v)).collect())
    }

    pub fn from_f32(shape: &[usize], values: &[f32]) -> Result<Self> {
        Tensor::new(
            shape.to_vec(),
            values.iter().map(|&v| R::lit(v as f64)).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Marks the tensor as learnable, materializing a zeroed gradient.
    pub fn with_grad(mut self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        if on {
            if self.grad.is_none() {
                self.grad = Some(vec![R::zero(); self.data.len()]);
            }
        } else {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [R]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = R::zero());
        }
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
            grad: None,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scalar_value(&self) -> Option<R> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn sum_squares(&self) -> R {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Value with gradient stripped.
    pub fn detached(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            grad: None,
        }
    }
}
