//! Differentiable scalar fields, coordinate layouts and the Jacobian kernels
//! every bracket and right-hand side is built on.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use thiserror::Error;

/// Errors raised while evaluating fields or their derivatives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("dimension mismatch: expected {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite evaluation at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("empty Jacobian")]
    EmptyJacobian,
    #[error("invalid axes: {0}")]
    InvalidAxes(&'static str),
    #[error("layout arities sum to {sum} but point has {len} coordinates")]
    LayoutMismatch { sum: usize, len: usize },
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A real-valued function on `dim` coordinates, optionally carrying an exact
/// gradient. Cloning is cheap: closures are reference counted.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("exact_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ScalarField {
    /// Field without an exact gradient; derivatives fall back to central
    /// differences.
    pub fn new(dim: usize, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            grad: None,
        }
    }

    pub fn with_gradient(
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            grad: Some(Arc::new(grad)),
        }
    }

    /// The projection `x -> x[index]`.
    pub fn coordinate(dim: usize, index: usize) -> Self {
        assert!(index < dim, "coordinate index out of range");
        Self::with_gradient(
            dim,
            move |x| x[index],
            move |_, g| {
                g.fill(0.0);
                g[index] = 1.0;
            },
        )
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::with_gradient(dim, move |_| value, |_, g| g.fill(0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// Writes the exact gradient into `out` and returns true, or returns false
    /// when the field carries none.
    pub fn exact_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(x, out);
                true
            }
            None => false,
        }
    }

    /// Same values, gradient dropped (forces the finite-difference path).
    pub fn without_gradient(&self) -> Self {
        Self {
            dim: self.dim,
            eval: self.eval.clone(),
            grad: None,
        }
    }

    /// `self(inner_1(x), ..., inner_k(x))`. The result has an exact gradient
    /// when `self` and every inner field have one.
    pub fn compose(&self, inner: &[ScalarField]) -> Self {
        assert_eq!(inner.len(), self.dim, "compose: need one inner field per coordinate");
        let dim = inner.first().map_or(0, |f| f.dim);
        assert!(inner.iter().all(|f| f.dim == dim), "compose: inner fields disagree on dimension");
        let outer = self.clone();
        let inner: Arc<[ScalarField]> = inner.into();
        let eval = {
            let outer = outer.clone();
            let inner = inner.clone();
            move |x: &[f64]| {
                let u: Vec<f64> = inner.iter().map(|f| f.eval(x)).collect();
                outer.eval(&u)
            }
        };
        if outer.grad.is_none() || inner.iter().any(|f| f.grad.is_none()) {
            return Self::new(dim, eval);
        }
        let grad = move |x: &[f64], out: &mut [f64]| {
            let u: Vec<f64> = inner.iter().map(|f| f.eval(x)).collect();
            let mut g_outer = vec![0.0; u.len()];
            outer.exact_gradient(&u, &mut g_outer);
            out.fill(0.0);
            let mut g_inner = vec![0.0; out.len()];
            for (f, &w) in inner.iter().zip(&g_outer) {
                if w == 0.0 {
                    continue;
                }
                f.exact_gradient(x, &mut g_inner);
                for (o, gi) in out.iter_mut().zip(&g_inner) {
                    *o += w * gi;
                }
            }
        };
        Self::with_gradient(dim, eval, grad)
    }

    /// Lifts a field on `self.dim()` local coordinates to an `ambient`
    /// dimensional space, reading its arguments from `axes`.
    pub fn embed(&self, ambient: usize, axes: &[usize]) -> Self {
        assert_eq!(axes.len(), self.dim);
        assert!(axes.iter().all(|&a| a < ambient));
        let axes: Arc<[usize]> = axes.into();
        let eval = {
            let f = self.clone();
            let axes = axes.clone();
            move |x: &[f64]| {
                let local: Vec<f64> = axes.iter().map(|&a| x[a]).collect();
                f.eval(&local)
            }
        };
        match &self.grad {
            None => Self::new(ambient, eval),
            Some(_) => {
                let f = self.clone();
                Self::with_gradient(ambient, eval, move |x, out| {
                    let local: Vec<f64> = axes.iter().map(|&a| x[a]).collect();
                    let mut g = vec![0.0; local.len()];
                    f.exact_gradient(&local, &mut g);
                    out.fill(0.0);
                    for (&a, gi) in axes.iter().zip(&g) {
                        out[a] += gi;
                    }
                })
            }
        }
    }

    /// Pointwise sum of fields sharing a dimension.
    pub fn sum(fields: &[ScalarField]) -> Self {
        assert!(!fields.is_empty(), "sum of no fields");
        let dim = fields[0].dim;
        assert!(fields.iter().all(|f| f.dim == dim));
        let fields: Arc<[ScalarField]> = fields.into();
        let eval = {
            let fields = fields.clone();
            move |x: &[f64]| fields.iter().map(|f| f.eval(x)).sum()
        };
        if fields.iter().any(|f| f.grad.is_none()) {
            return Self::new(dim, eval);
        }
        Self::with_gradient(dim, eval, move |x, out| {
            out.fill(0.0);
            let mut g = vec![0.0; out.len()];
            for f in fields.iter() {
                f.exact_gradient(x, &mut g);
                for (o, gi) in out.iter_mut().zip(&g) {
                    *o += gi;
                }
            }
        })
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        Self::sum(&[self.clone(), other.clone()])
    }

    pub fn scale(&self, c: f64) -> Self {
        let f = self.clone();
        let eval = move |x: &[f64]| c * f.eval(x);
        match &self.grad {
            None => Self::new(self.dim, eval),
            Some(_) => {
                let f = self.clone();
                Self::with_gradient(self.dim, eval, move |x, out| {
                    f.exact_gradient(x, out);
                    out.iter_mut().for_each(|o| *o *= c);
                })
            }
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> Self {
        assert_eq!(self.dim, other.dim);
        let (a, b) = (self.clone(), other.clone());
        let eval = move |x: &[f64]| a.eval(x) * b.eval(x);
        if self.grad.is_none() || other.grad.is_none() {
            return Self::new(self.dim, eval);
        }
        let (a, b) = (self.clone(), other.clone());
        Self::with_gradient(self.dim, eval, move |x, out| {
            let (va, vb) = (a.eval(x), b.eval(x));
            let mut gb = vec![0.0; out.len()];
            a.exact_gradient(x, out);
            b.exact_gradient(x, &mut gb);
            for (o, g) in out.iter_mut().zip(&gb) {
                *o = *o * vb + va * g;
            }
        })
    }
}

/// Partition of a flat coordinate vector into consecutive subsystems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    arities: Vec<usize>,
}

impl Layout {
    pub fn new(arities: Vec<usize>) -> Self {
        Self { arities }
    }

    /// `n` subsystems of the same arity.
    pub fn uniform(n: usize, arity: usize) -> Self {
        Self {
            arities: vec![arity; n],
        }
    }

    /// `n` canonical doublets `(q_k, p_k)`, stored interleaved.
    pub fn canonical(n: usize) -> Self {
        Self::uniform(n, 2)
    }

    pub fn single(dim: usize) -> Self {
        Self { arities: vec![dim] }
    }

    pub fn dim(&self) -> usize {
        self.arities.iter().sum()
    }

    pub fn subsystems(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    /// Common arity, if every subsystem has the same one.
    pub fn uniform_arity(&self) -> Option<usize> {
        let first = *self.arities.first()?;
        self.arities.iter().all(|&a| a == first).then_some(first)
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        let start: usize = self.arities[..k].iter().sum();
        start..start + self.arities[k]
    }
}

/// A coordinate vector together with its subsystem layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    layout: Layout,
}

impl Point {
    pub fn new(coords: Vec<f64>, layout: Layout) -> Result<Self, FieldError> {
        if layout.dim() != coords.len() {
            return Err(FieldError::LayoutMismatch {
                sum: layout.dim(),
                len: coords.len(),
            });
        }
        Ok(Self { coords, layout })
    }

    /// One subsystem spanning all coordinates.
    pub fn single(coords: Vec<f64>) -> Self {
        let layout = Layout::single(coords.len());
        Self { coords, layout }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn subsystem(&self, k: usize) -> &[f64] {
        &self.coords[self.layout.range(k)]
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Finite-difference step scale, `cbrt(machine epsilon)`.
pub fn fd_step_scale() -> f64 {
    libm::cbrt(f64::EPSILON)
}

/// Gradient of `field` at `at`: the exact one when available, otherwise
/// central differences with `h_j = cbrt(eps) * max(1, |x_j|)`.
pub fn gradient(field: &ScalarField, at: &[f64]) -> Result<Vec<f64>, FieldError> {
    let mut out = vec![0.0; field.dim()];
    gradient_into(field, at, &mut out)?;
    Ok(out)
}

pub fn gradient_into(field: &ScalarField, at: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
    check_dim(field, at)?;
    if field.exact_gradient(at, out) {
        if let Some(j) = out.iter().position(|g| !g.is_finite()) {
            return Err(FieldError::NonFinite { coordinate: j });
        }
        return Ok(());
    }
    central_difference_into(field, at, fd_step_scale(), out)
}

/// Central-difference gradient with steps `h_j = scale * max(1, |x_j|)`.
pub fn central_difference(field: &ScalarField, at: &[f64], scale: f64) -> Result<Vec<f64>, FieldError> {
    check_dim(field, at)?;
    let mut out = vec![0.0; field.dim()];
    central_difference_into(field, at, scale, &mut out)?;
    Ok(out)
}

fn central_difference_into(
    field: &ScalarField,
    at: &[f64],
    scale: f64,
    out: &mut [f64],
) -> Result<(), FieldError> {
    let mut x = at.to_vec();
    for j in 0..at.len() {
        let h = scale * libm::fmax(1.0, libm::fabs(at[j]));
        x[j] = at[j] + h;
        let fp = field.eval(&x);
        x[j] = at[j] - h;
        let fm = field.eval(&x);
        x[j] = at[j];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(FieldError::NonFinite { coordinate: j });
        }
        // (x+h)-(x-h) is the step actually taken after rounding
        out[j] = (fp - fm) / ((at[j] + h) - (at[j] - h));
    }
    Ok(())
}

fn check_dim(field: &ScalarField, at: &[f64]) -> Result<(), FieldError> {
    if at.len() != field.dim() {
        return Err(FieldError::DimensionMismatch {
            expected: field.dim(),
            found: at.len(),
        });
    }
    Ok(())
}

/// Row-major matrix of gradients, one row per field.
pub fn jacobian_matrix(fields: &[ScalarField], at: &[f64]) -> Result<Vec<f64>, FieldError> {
    let d = at.len();
    let mut m = vec![0.0; fields.len() * d];
    for (row, f) in m.chunks_mut(d.max(1)).zip(fields) {
        gradient_into(f, at, row)?;
    }
    Ok(m)
}

/// `det[d fields_a / d x_{axes_b}]` for `k` fields and `k` distinct axes.
pub fn jacobian_determinant(fields: &[ScalarField], at: &[f64], axes: &[usize]) -> Result<f64, FieldError> {
    let k = fields.len();
    if k == 0 {
        return Err(FieldError::EmptyJacobian);
    }
    if axes.len() != k {
        return Err(FieldError::InvalidAxes("need one axis per field"));
    }
    if axes.iter().any(|&a| a >= at.len()) {
        return Err(FieldError::InvalidAxes("axis out of range"));
    }
    for (i, a) in axes.iter().enumerate() {
        if axes[i + 1..].contains(a) {
            return Err(FieldError::InvalidAxes("repeated axis"));
        }
    }
    let mut grad = vec![0.0; at.len()];
    let mut m = vec![0.0; k * k];
    for (r, f) in fields.iter().enumerate() {
        gradient_into(f, at, &mut grad)?;
        for (c, &a) in axes.iter().enumerate() {
            m[r * k + c] = grad[a];
        }
    }
    Ok(determinant(&mut m, k))
}

/// Determinant of a row-major `k x k` matrix by Gaussian elimination with
/// partial pivoting. The matrix is overwritten.
pub fn determinant(m: &mut [f64], k: usize) -> f64 {
    debug_assert_eq!(m.len(), k * k);
    let mut det = 1.0;
    for col in 0..k {
        let mut pivot = col;
        let mut best = libm::fabs(m[col * k + col]);
        for row in col + 1..k {
            let v = libm::fabs(m[row * k + col]);
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..k {
                m.swap(col * k + c, pivot * k + c);
            }
            det = -det;
        }
        let p = m[col * k + col];
        det *= p;
        for row in col + 1..k {
            let factor = m[row * k + col] / p;
            if factor == 0.0 {
                continue;
            }
            for c in col + 1..k {
                m[row * k + c] -= factor * m[col * k + c];
            }
        }
    }
    det
}

/// Determinant of the submatrix of a row-major `rows x cols` matrix picked out
/// by `row_idx` and `col_idx`.
pub fn minor(matrix: &[f64], cols: usize, row_idx: &[usize], col_idx: &[usize]) -> f64 {
    let k = row_idx.len();
    debug_assert_eq!(k, col_idx.len());
    if k == 0 {
        return 1.0;
    }
    let mut m = vec![0.0; k * k];
    for (i, &r) in row_idx.iter().enumerate() {
        for (j, &c) in col_idx.iter().enumerate() {
            m[i * k + j] = matrix[r * cols + c];
        }
    }
    determinant(&mut m, k)
}
