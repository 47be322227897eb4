//! Named trainable parameters living outside the per-batch graph.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;

use super::graph::{Graph, TensorId};

/// A named, persistently stored tensor inserted into each batch graph as a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
    pub trainable: bool,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Param { name: name.into(), rows, cols, data, trainable: true }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, rows, cols, vec![F::zero(); rows * cols])
    }

    /// Identity matrix parameter.
    pub fn eye(name: impl Into<String>, n: usize) -> Self {
        let mut data = vec![F::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = F::one();
        }
        Self::new(name, n, n, data)
    }

    /// Columns `[start, start+len)` of the `n x n` identity.
    pub fn eye_cols(name: impl Into<String>, n: usize, start: usize, len: usize) -> Self {
        let mut data = vec![F::zero(); n * len];
        for j in 0..len {
            data[(start + j) * len + j] = F::one();
        }
        Self::new(name, n, len, data)
    }

    /// Linear-layer init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
    pub fn uniform_init(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| F::from_f64_lossy(rng.gen_range(-bound..bound)))
            .collect();
        Self::new(name, rows, cols, data)
    }

    pub fn insert(&self, g: &mut Graph<F>) -> Result<TensorId> {
        g.leaf(self.rows, self.cols, self.data.clone(), self.trainable)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
