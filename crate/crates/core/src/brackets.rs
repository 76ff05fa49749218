//! Poisson and Nambu brackets over block-structured coordinate spaces, and
//! the epsilon-sum Jacobian decomposition identity.
//!
//! A bracket context is a list of index blocks of equal arity. The bracket of
//! `N` fields is the sum over blocks of the `N x N` Jacobian determinant taken
//! on that block's coordinates. Disjoint consecutive blocks give the usual
//! many-subsystem brackets; overlapping blocks (a coordinate shared by several
//! multiplets) are allowed.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::combinatorics::{factorial, signed_permutations};
use crate::fields::{determinant, gradient_into, minor, FieldError, Layout, ScalarField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BracketError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(&'static str),
    #[error("arity mismatch: bracket takes {expected} fields, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BracketContext {
    dim: usize,
    arity: usize,
    blocks: Vec<Vec<usize>>,
}

impl BracketContext {
    /// `n` canonical doublets `(q_k, p_k)` stored interleaved.
    pub fn poisson(n: usize) -> Self {
        Self::nambu(n, 2)
    }

    /// `n` consecutive multiplets of the given arity.
    pub fn nambu(n: usize, arity: usize) -> Self {
        let blocks = (0..n).map(|k| (k * arity..(k + 1) * arity).collect()).collect();
        Self {
            dim: n * arity,
            arity,
            blocks,
        }
    }

    pub fn from_layout(layout: &Layout) -> Result<Self, BracketError> {
        let arity = layout
            .uniform_arity()
            .ok_or(BracketError::LayoutMismatch("non-uniform arity"))?;
        if arity < 2 {
            return Err(BracketError::LayoutMismatch("arity must be at least 2"));
        }
        Ok(Self::nambu(layout.subsystems(), arity))
    }

    /// Arbitrary equal-arity blocks of coordinate indices, possibly sharing
    /// coordinates.
    pub fn from_blocks(dim: usize, blocks: Vec<Vec<usize>>) -> Result<Self, BracketError> {
        let arity = blocks
            .first()
            .map(|b| b.len())
            .ok_or(BracketError::LayoutMismatch("no blocks"))?;
        if arity < 2 {
            return Err(BracketError::LayoutMismatch("arity must be at least 2"));
        }
        for b in &blocks {
            if b.len() != arity {
                return Err(BracketError::LayoutMismatch("blocks differ in arity"));
            }
            if b.iter().any(|&i| i >= dim) {
                return Err(BracketError::LayoutMismatch("block index out of range"));
            }
            for (i, a) in b.iter().enumerate() {
                if b[i + 1..].contains(a) {
                    return Err(BracketError::LayoutMismatch("repeated index in block"));
                }
            }
        }
        Ok(Self { dim, arity, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Bracket from precomputed gradient rows (row-major, `arity` rows of
    /// length `dim`).
    pub fn bracket_of_gradients(&self, rows: &[f64]) -> f64 {
        let k = self.arity;
        let mut m = vec![0.0; k * k];
        let mut total = 0.0;
        for block in &self.blocks {
            for r in 0..k {
                for (c, &a) in block.iter().enumerate() {
                    m[r * k + c] = rows[r * self.dim + a];
                }
            }
            total += determinant(&mut m, k);
        }
        total
    }

    fn gradient_rows(&self, fields: &[ScalarField], at: &[f64]) -> Result<Vec<f64>, BracketError> {
        if at.len() != self.dim {
            return Err(BracketError::LayoutMismatch("point dimension differs from context"));
        }
        if fields.iter().any(|f| f.dim() != self.dim) {
            return Err(BracketError::LayoutMismatch("field dimension differs from context"));
        }
        let mut rows = vec![0.0; fields.len() * self.dim];
        for (row, f) in rows.chunks_mut(self.dim).zip(fields) {
            gradient_into(f, at, row)?;
        }
        Ok(rows)
    }
}

/// `{A, B}_PB = sum_k d(A,B)/d(q_k,p_k)`.
pub fn poisson_bracket(
    a: &ScalarField,
    b: &ScalarField,
    at: &[f64],
    ctx: &BracketContext,
) -> Result<f64, BracketError> {
    if ctx.arity != 2 {
        return Err(BracketError::LayoutMismatch("Poisson bracket needs doublets"));
    }
    let rows = ctx.gradient_rows(&[a.clone(), b.clone()], at)?;
    Ok(ctx.bracket_of_gradients(&rows))
}

/// `{A_1, ..., A_N}_NB = sum_k d(A_1..A_N)/d(x_1(k)..x_N(k))`.
pub fn nambu_bracket(fields: &[ScalarField], at: &[f64], ctx: &BracketContext) -> Result<f64, BracketError> {
    if fields.len() != ctx.arity {
        return Err(BracketError::ArityMismatch {
            expected: ctx.arity,
            found: fields.len(),
        });
    }
    let rows = ctx.gradient_rows(fields, at)?;
    Ok(ctx.bracket_of_gradients(&rows))
}

/// Residual between the full `N x N` Jacobian of `fields` and its
/// epsilon-weighted split into a `head`-minor times a `tail`-minor,
/// normalised by `head! tail!`. Every ordered index tuple is enumerated.
pub fn verify_jacobian_decomposition(
    fields: &[ScalarField],
    at: &[f64],
    split: (usize, usize),
) -> Result<f64, BracketError> {
    let (head, tail) = split;
    let n = head + tail;
    if fields.len() != n || at.len() != n {
        return Err(BracketError::LayoutMismatch("head + tail must equal the ambient dimension"));
    }
    if fields.iter().any(|f| f.dim() != n) {
        return Err(BracketError::LayoutMismatch("field dimension differs from ambient"));
    }
    let mut g = vec![0.0; n * n];
    for (row, f) in g.chunks_mut(n).zip(fields) {
        gradient_into(f, at, row)?;
    }
    let full = determinant(&mut g.clone(), n);

    let head_rows: Vec<usize> = (0..head).collect();
    let tail_rows: Vec<usize> = (head..n).collect();
    let axes: Vec<usize> = (0..n).collect();
    let mut sum = 0.0;
    for (perm, sign) in signed_permutations(&axes) {
        let h = minor(&g, n, &head_rows, &perm[..head]);
        let t = minor(&g, n, &tail_rows, &perm[head..]);
        sum += f64::from(sign) * h * t;
    }
    sum /= factorial(head) * factorial(tail);
    Ok(libm::fabs(full - sum))
}
