#![allow(dead_code)]

use nambu_core::fields::ScalarField;
use nambu_core::systems::{make_builtin, BuiltinBundle, BuiltinName, BuiltinParams};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    pub fn point(&mut self, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..dim).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn points(&mut self, count: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.point(dim, lo, hi)).collect()
    }

    pub fn quadratic(&mut self, dim: usize) -> ScalarField {
        quadratic(self.point(dim * dim + dim, -1.0, 1.0), dim)
    }
}

pub fn builtin(name: BuiltinName) -> BuiltinBundle {
    make_builtin(name, &BuiltinParams::default()).unwrap()
}

/// `sum_ij a_ij x_i x_j + sum_i b_i x_i` with an exact gradient; `c` holds
/// `a` row-major followed by `b`.
pub fn quadratic(c: Vec<f64>, dim: usize) -> ScalarField {
    assert_eq!(c.len(), dim * dim + dim);
    let c2 = c.clone();
    ScalarField::with_gradient(
        dim,
        move |x| {
            let mut s = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    s += c[i * dim + j] * x[i] * x[j];
                }
                s += c[dim * dim + i] * x[i];
            }
            s
        },
        move |x, g| {
            for (k, gk) in g.iter_mut().enumerate() {
                let mut s = c2[dim * dim + k];
                for j in 0..dim {
                    s += (c2[k * dim + j] + c2[j * dim + k]) * x[j];
                }
                *gk = s;
            }
        },
    )
}

/// Product of row norms, the natural scale of a determinant.
pub fn hadamard_bound(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).product()
}
