//! Dense multilinear operators between coordinate spaces.
//!
//! An n-linear operator `T: X_1 × … × X_n → Y` is stored as the coefficient
//! tensor of its form `⟨T[e_1, …, e_n], e_out⟩`, with axes ordered
//! `[out, in_1, …, in_n]` (last axis contiguous). Pairings are plain
//! coordinate sums, so the output coordinates are paired against vectors of
//! the space `X_{n+1}` whose dual holds `Y`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilinearOp {
    in_dims: Vec<usize>,
    out_dim: usize,
    data: Vec<f64>,
}

/// Largest dense tensor accepted.
pub const MAX_DENSE: usize = 4096;

impl MultilinearOp {
    pub fn new(in_dims: Vec<usize>, out_dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = out_dim * in_dims.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "coefficient tensor has {} entries, expected {len}",
                data.len()
            )));
        }
        if len > MAX_DENSE {
            return Err(Error::BudgetExceeded(format!(
                "dense tensor of {len} entries exceeds {MAX_DENSE}"
            )));
        }
        Ok(Self {
            in_dims,
            out_dim,
            data,
        })
    }

    pub fn zeros(in_dims: Vec<usize>, out_dim: usize) -> Self {
        let len = out_dim * in_dims.iter().product::<usize>();
        Self {
            in_dims,
            out_dim,
            data: vec![0.0; len],
        }
    }

    /// Scalar multiplier `a·e_1⋯e_n` on one-dimensional spaces.
    pub fn scalar(a: f64, arity: usize) -> Self {
        Self {
            in_dims: vec![1; arity],
            out_dim: 1,
            data: vec![a],
        }
    }

    /// Entries drawn uniformly from `[-1, 1]`.
    pub fn random(rng: &mut crate::Rng, in_dims: Vec<usize>, out_dim: usize) -> Self {
        let mut op = Self::zeros(in_dims, out_dim);
        for x in &mut op.data {
            *x = rng.random_range(-1.0..=1.0);
        }
        op
    }

    pub fn arity(&self) -> usize {
        self.in_dims.len()
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Dimensions of all tensor axes, output first.
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.out_dim)
            .chain(self.in_dims.iter().copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Contracts the input axes from the last one inward.
    pub fn apply(&self, inputs: &[&[f64]]) -> Vec<f64> {
        debug_assert_eq!(inputs.len(), self.arity());
        let mut cur = self.data.clone();
        for (slot, x) in inputs.iter().enumerate().rev() {
            let dim = self.in_dims[slot];
            debug_assert_eq!(x.len(), dim);
            cur = cur
                .chunks_exact(dim)
                .map(|row| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect();
        }
        cur
    }

    /// `⟨T[e_1, …, e_n], e_out⟩`.
    pub fn form(&self, inputs: &[&[f64]], out: &[f64]) -> f64 {
        self.apply(inputs)
            .iter()
            .zip(out.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// The operator obtained by exchanging the output with input slot `m` (1-based).
    pub fn transpose_slot(&self, m: usize) -> Self {
        assert!(m >= 1 && m <= self.arity(), "slot out of range");
        let mut perm: Vec<usize> = (0..=self.arity()).collect();
        perm.swap(0, m);
        self.permute(&perm)
    }

    /// Reorders tensor axes: new axis `a` is old axis `perm[a]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let old_shape = self.shape();
        let new_shape: Vec<usize> = perm.iter().map(|&p| old_shape[p]).collect();
        let old_strides = strides(&old_shape);
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; new_shape.len()];
        for slot in out.iter_mut() {
            let src: usize = idx
                .iter()
                .enumerate()
                .map(|(a, &i)| i * old_strides[perm[a]])
                .sum();
            *slot = self.data[src];
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < new_shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self {
            out_dim: new_shape[0],
            in_dims: new_shape[1..].to_vec(),
            data: out,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// `self += c·other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}
