use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors with their Adam moment buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGroup {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl ParamGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.first_moment.push(vec![0.0; tensor.len()]);
        self.second_moment.push(vec![0.0; tensor.len()]);
        self.tensors.push(tensor.with_requires_grad(true));
        Ok(())
    }

    /// Adds a tensor drawn from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.add(name, Tensor::full(shape, 1.0))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn data_mut(&mut self, i: usize) -> &mut [f64] {
        self.tensors[i].data_mut()
    }

    /// Overwrites the values of a named parameter.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter `{name}`")))?;
        let dst = self.tensors[i].data_mut();
        if dst.len() != values.len() {
            return Err(Error::shape("ParamGroup::set", &[dst.len()], &[values.len()]));
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.first_moment[i], &self.second_moment[i])
    }

    pub(crate) fn adam_parts(
        &mut self,
    ) -> (&mut [Tensor], &mut [Vec<f64>], &mut [Vec<f64>], &mut u64) {
        (
            &mut self.tensors,
            &mut self.first_moment,
            &mut self.second_moment,
            &mut self.step,
        )
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments_start_at_zero_and_match_shapes() {
        let mut p = ParamGroup::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        p.add_uniform("w", &[3, 4], 3, &mut rng).unwrap();
        p.add_zeros("b", &[4]).unwrap();
        for i in 0..p.len() {
            let (m, v) = p.moments(i);
            assert_eq!(m.len(), p.tensor(i).len());
            assert!(m.iter().chain(v).all(|&x| x == 0.0));
        }
        let bound = 1.0 / 3f64.sqrt();
        assert!(p.get("w").unwrap().data().iter().all(|v| v.abs() < bound));
        assert!(p.add_zeros("b", &[1]).is_err());
    }
}
