use indexmap::IndexMap;

use crate::error::{Result, TensorError};
use crate::graph::Gradients;
use crate::real::Real;
use crate::tensor::Tensor;

/// Ordered collection of named learnable tensors for one network copy.
///
/// Names are hierarchical (`encoder.stage0.conv.w`) and iteration follows
/// insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<R> {
    entries: IndexMap<String, Tensor<R>>,
    rng_seed: u64,
}

impl<R: Real> ParameterSet<R> {
    pub fn new(rng_seed: u64) -> Self {
        ParameterSet {
            entries: IndexMap::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Inserts a new entry; the tensor is marked as requiring grad.
    pub fn insert(&mut self, name: &str, tensor: Tensor<R>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(TensorError::invalid("parameter_set", format!("duplicate name `{name}`")));
        }
        self.entries.insert(name.to_string(), tensor.with_grad());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<R>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// True when both sets have identical names, order and shapes.
    pub fn congruent(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    pub fn check_congruent(&self, other: &Self) -> Result<()> {
        if self.congruent(other) {
            return Ok(());
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(TensorError::shape("parameter_set", ta.shape(), tb.shape()));
            }
        }
        Err(TensorError::shape("parameter_set", &[self.len()], &[other.len()]))
    }

    /// Adds a backward pass's gradients onto the stored accumulators.
    pub fn accumulate(&mut self, grads: &Gradients<R>) -> Result<()> {
        for (name, g) in grads.iter() {
            let t = self
                .entries
                .get_mut(name)
                .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
            if t.len() != g.len() {
                return Err(TensorError::shape("accumulate", t.shape(), &[g.len()]));
            }
            t.set_requires_grad(true);
            let acc = t.grad_mut().expect("grad materialized");
            acc.iter_mut().zip(g).for_each(|(a, &v)| *a += v);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(Tensor::zero_grad);
    }

    /// L2 norm over every scalar parameter.
    pub fn norm(&self) -> R {
        self.entries.values().map(Tensor::sum_squares).sum::<R>().sqrt()
    }

    /// L2 norm over stored gradients.
    pub fn grad_norm(&self) -> R {
        self.entries
            .values()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter())
            .map(|&v| v * v)
            .sum::<R>()
            .sqrt()
    }

    /// Copies values (not gradients) from a congruent set.
    pub fn copy_values_from(&mut self, other: &Self) -> Result<()> {
        self.check_congruent(other)?;
        for ((_, dst), (_, src)) in self.entries.iter_mut().zip(&other.entries) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_uniqueness() {
        let mut p = ParameterSet::<f32>::new(3);
        p.insert("b", Tensor::zeros(&[2])).unwrap();
        p.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(p.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(p.num_scalars(), 3);
        assert!(p.get("a").unwrap().requires_grad());
    }

    #[test]
    fn congruence_checks_names_and_shapes() {
        let mut a = ParameterSet::<f32>::new(0);
        a.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        let mut b = ParameterSet::<f32>::new(1);
        b.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(a.congruent(&b));
        let mut c = ParameterSet::<f32>::new(1);
        c.insert("w", Tensor::zeros(&[4])).unwrap();
        assert!(!a.congruent(&c));
        assert!(a.copy_values_from(&c).is_err());
    }
}
