use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{ParamId, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered, named collection of parameter tensors.
///
/// The position of a tensor in the set is its [`ParamId`] when bound to a
/// tape, shifted by the binding offset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(self.index(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index(name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Appends every entry of `other` with `prefix` prepended to its name.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ParamSet) {
        for (n, t) in other.names.into_iter().zip(other.tensors) {
            self.push(format!("{prefix}{n}"), t);
        }
    }

    /// Entries whose name starts with `prefix`, prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            if let Some(rest) = n.strip_prefix(prefix) {
                out.push(rest, t.clone());
            }
        }
        out
    }

    /// Entries whose name starts with any of `prefixes`, names unchanged.
    pub fn subset(&self, prefixes: &[&str]) -> ParamSet {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            if prefixes.iter().any(|p| n.starts_with(p)) {
                out.push(n, t.clone());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Places every tensor on `tape`. With `Some(offset)` they become
    /// parameters with ids `offset + index`; with `None`, constants.
    pub fn bind(&self, tape: &mut Tape, offset: Option<ParamId>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| match offset {
                Some(o) => tape.param(o + i, t.clone()),
                None => tape.constant(t.clone()),
            })
            .collect();
        Bound {
            names: self.names.clone(),
            vars,
        }
    }

    /// `self[i] -= lr * grad[i]` for every tensor that has a gradient.
    pub fn sgd_step(&mut self, grads: &super::tape::Gradients, offset: ParamId, lr: f64) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            if let Some(g) = grads.get(offset + i) {
                for (p, gv) in t.data_mut().iter_mut().zip(g.data()) {
                    *p -= lr * gv;
                }
            }
        }
    }

    pub fn check_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::shape("ParamSet", "parameter names differ"));
        }
        for ((n, a), b) in self.iter().zip(&other.tensors) {
            if !a.same_shape(b) {
                return Err(Error::shape(
                    "ParamSet",
                    format!("{n}: {:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// A [`ParamSet`] placed on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// # Panics
    /// If `name` was not in the bound set.
    pub fn var(&self, name: &str) -> Var {
        self.try_var(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| self.vars[i])
    }
}

/// Gaussian-initialised `rows × cols` matrix with std `1/√rows`.
pub fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

/// Identity plus Gaussian noise of std `noise`.
pub fn init_near_identity<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::identity(n);
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("valid std");
        for v in t.data_mut() {
            *v += normal.sample(rng);
        }
    }
    t
}
