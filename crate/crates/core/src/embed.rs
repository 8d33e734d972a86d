//! Injected feature maps standing in for learned MLP heads.
//!
//! Nothing here trains; weights are fixed by the caller (or drawn from a
//! seeded RNG for smoke tests).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A deterministic map from a real vector to a vector of length
/// [`Embed::channels`].
pub trait Embed {
    fn channels(&self) -> usize;
    fn embed(&self, input: &[f64]) -> Vec<f64>;
}

/// Always returns zeros.
#[derive(Debug, Clone, Copy)]
pub struct ZeroEmbed(pub usize);

impl Embed for ZeroEmbed {
    fn channels(&self) -> usize {
        self.0
    }

    fn embed(&self, _input: &[f64]) -> Vec<f64> {
        vec![0.0; self.0]
    }
}

/// Ignores its input and returns a fixed vector.
#[derive(Debug, Clone)]
pub struct ConstEmbed(pub Vec<f64>);

impl Embed for ConstEmbed {
    fn channels(&self) -> usize {
        self.0.len()
    }

    fn embed(&self, _input: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Returns the first `n` input coordinates, zero-padded.
#[derive(Debug, Clone, Copy)]
pub struct Truncate(pub usize);

impl Embed for Truncate {
    fn channels(&self) -> usize {
        self.0
    }

    fn embed(&self, input: &[f64]) -> Vec<f64> {
        (0..self.0).map(|i| input.get(i).copied().unwrap_or(0.0)).collect()
    }
}

/// `y = W x + b`. Inputs shorter than `W.cols()` are zero-padded, longer ones
/// truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(alloc::format!("bias length {} for {} outputs", bias.len(), weight.rows())));
        }
        Ok(Self { weight, bias })
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialisation from a seed.
    pub fn seeded(inputs: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / libm::sqrt(inputs.max(1) as f64);
        let weight = Matrix::from_fn(outputs, inputs, |_, _| rng.random_range(-bound..bound));
        let bias = (0..outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let n = self.weight.cols().min(input.len());
        (0..self.weight.rows())
            .map(|o| {
                let row = self.weight.row(o);
                self.bias[o] + row[..n].iter().zip(&input[..n]).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

impl Embed for Linear {
    fn channels(&self) -> usize {
        self.weight.rows()
    }

    fn embed(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input)
    }
}

/// Stack of linear layers with ReLU between them (not after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("mlp needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].weight.rows() != w[1].weight.cols() {
                return Err(Error::Shape("mlp layer widths do not chain".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Layer widths `[in, hidden.., out]`, each layer seeded from `seed`.
    pub fn seeded(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Param("mlp needs input and output widths".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::seeded(w[0], w[1], seed.wrapping_add(i as u64)))
            .collect();
        Self::new(layers)
    }
}

impl Embed for Mlp {
    fn channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows())
    }

    fn embed(&self, input: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x);
            if i != last {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        x
    }
}

impl<E: Embed + ?Sized> Embed for &E {
    fn channels(&self) -> usize {
        (**self).channels()
    }

    fn embed(&self, input: &[f64]) -> Vec<f64> {
        (**self).embed(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_forward() {
        let l = Linear::new(Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]]).unwrap(), vec![0.5, 0.0]).unwrap();
        assert_eq!(l.embed(&[1.0, 1.0]), vec![3.5, -1.0]);
        // zero padding
        assert_eq!(l.embed(&[2.0]), vec![2.5, 0.0]);
    }

    #[test]
    fn mlp_seeded_is_deterministic() {
        let a = Mlp::seeded(&[6, 8, 3], 7).unwrap();
        let b = Mlp::seeded(&[6, 8, 3], 7).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(a.embed(&x), b.embed(&x));
        assert_eq!(a.channels(), 3);
        assert!(Mlp::seeded(&[4], 1).is_err());
    }
}
