use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

/// Unit-norm tolerance for embeddings entering the bank.
pub const UNIT_TOL: f64 = 1e-6;

/// FIFO queue of at most `capacity` teacher bag embeddings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    items: VecDeque<Vec<f64>>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.items.iter().map(Vec::as_slice)
    }

    /// Contents as a `len × h` matrix, oldest first.
    pub fn to_matrix(&self) -> Option<Tensor> {
        let h = self.items.front()?.len();
        let data = self.items.iter().flatten().copied().collect();
        Some(Tensor::matrix(self.len(), h, data))
    }

    pub fn push(&mut self, z: &[f64]) -> Result<()> {
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm.is_nan() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitNorm { norm });
        }
        if let Some(f) = self.items.front() {
            if f.len() != z.len() {
                return Err(Error::shape("bank_push", format!("width {} into bank of {}", z.len(), f.len())));
            }
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(z.to_vec());
        Ok(())
    }
}

pub fn bank_push(bank: &mut MemoryBank, z: &[f64]) -> Result<()> {
    bank.push(z)
}
