//! Hamiltonian, Nambu and generalized Nambu systems, the variable maps that
//! connect them, and the checks that a candidate set of induced constraints
//! actually reproduces the canonical dynamics.

mod builtin;
mod conjugate;
mod relativistic;
mod verify;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::brackets::{BracketContext, BracketError};
use crate::fields::{gradient_into, FieldError, Layout, ScalarField};

pub use builtin::{make_builtin, BuiltinBundle, BuiltinName, BuiltinParams};
pub use conjugate::{construct_conjugate_coordinates, ConjugateCoordinate, ConjugatePath};
pub use relativistic::{gauge_reduce_relativistic, EnergyBranch, RelativisticReduction};
pub use verify::{
    metric_pullback, verify_constraint_constancy, verify_generalized_conditions,
    verify_induced_constraints, GeneralizedResiduals, SamplePoints,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("unknown built-in system `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid system: {0}")]
    Invalid(&'static str),
    #[error("constraint check needs inverse or embedding")]
    MissingInverse,
    #[error("degenerate z-block: constraint Jacobian {determinant:e} at sample {sample}")]
    DegenerateZBlock { sample: usize, determinant: f64 },
    #[error("non-invertible change of variables (Jacobian determinant {0:e})")]
    NonInvertibleChange(f64),
    #[error("singular integrand on path at {0}")]
    SingularIntegrand(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Bracket(#[from] BracketError),
}

/// `n` canonical doublets evolving under `H(q_1, p_1, ..., q_n, p_n)`.
#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    n: usize,
    hamiltonian: ScalarField,
}

impl HamiltonianSystem {
    pub fn new(n: usize, hamiltonian: ScalarField) -> Result<Self, SystemError> {
        if n == 0 || hamiltonian.dim() != 2 * n {
            return Err(SystemError::Invalid("Hamiltonian must act on 2n coordinates"));
        }
        Ok(Self { n, hamiltonian })
    }

    pub fn subsystems(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.hamiltonian
    }

    pub fn layout(&self) -> Layout {
        Layout::canonical(self.n)
    }

    pub fn context(&self) -> BracketContext {
        BracketContext::poisson(self.n)
    }
}

/// Map from a multiplet point back to canonical coordinates (one branch).
pub type InverseFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The redundant variables `w_l(q, p)`, each a field on the full canonical
/// space.
#[derive(Clone)]
pub struct VariableMap {
    canonical: Layout,
    multiplet: Layout,
    outputs: Vec<ScalarField>,
    inverse: Option<InverseFn>,
}

impl fmt::Debug for VariableMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariableMap")
            .field("canonical", &self.canonical)
            .field("multiplet", &self.multiplet)
            .field("has_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl VariableMap {
    pub fn new(
        n: usize,
        multiplet: Layout,
        outputs: Vec<ScalarField>,
        inverse: Option<InverseFn>,
    ) -> Result<Self, SystemError> {
        if outputs.len() != multiplet.dim() {
            return Err(SystemError::Invalid("one output field per multiplet coordinate"));
        }
        if outputs.iter().any(|f| f.dim() != 2 * n) {
            return Err(SystemError::Invalid("output fields must act on the canonical space"));
        }
        Ok(Self {
            canonical: Layout::canonical(n),
            multiplet,
            outputs,
            inverse,
        })
    }

    /// The same local map `x_i(q_k, p_k)` applied to each of `n` doublets.
    /// `local_inverse`, if given, maps one multiplet back to `(q, p)`.
    pub fn per_subsystem(n: usize, local: &[ScalarField], local_inverse: Option<InverseFn>) -> Self {
        assert!(local.iter().all(|f| f.dim() == 2));
        let arity = local.len();
        let mut outputs = Vec::with_capacity(n * arity);
        for k in 0..n {
            for f in local {
                outputs.push(f.embed(2 * n, &[2 * k, 2 * k + 1]));
            }
        }
        let inverse = local_inverse.map(|inv| -> InverseFn {
            Arc::new(move |x: &[f64]| {
                let mut qp = Vec::with_capacity(2 * n);
                for block in x.chunks(arity) {
                    qp.extend(inv(block));
                }
                qp
            })
        });
        Self {
            canonical: Layout::canonical(n),
            multiplet: Layout::uniform(n, arity),
            outputs,
            inverse,
        }
    }

    pub fn canonical_layout(&self) -> &Layout {
        &self.canonical
    }

    pub fn multiplet_layout(&self) -> &Layout {
        &self.multiplet
    }

    pub fn outputs(&self) -> &[ScalarField] {
        &self.outputs
    }

    pub fn canonical_dim(&self) -> usize {
        self.canonical.dim()
    }

    pub fn multiplet_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn forward(&self, qp: &[f64]) -> Vec<f64> {
        self.outputs.iter().map(|f| f.eval(qp)).collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        self.inverse
            .as_ref()
            .map(|inv| inv(x))
            .ok_or(SystemError::MissingInverse)
    }

    /// Row-major `dw_l / d(q, p)`.
    pub fn jacobian(&self, qp: &[f64]) -> Result<Vec<f64>, SystemError> {
        let d = self.canonical_dim();
        let mut jac = vec![0.0; self.outputs.len() * d];
        for (row, f) in jac.chunks_mut(d).zip(&self.outputs) {
            gradient_into(f, qp, row)?;
        }
        Ok(jac)
    }

    /// Matrix of Poisson brackets `{w_i, w_j}_PB` at a canonical point.
    pub fn bracket_matrix(&self, qp: &[f64]) -> Result<Vec<f64>, SystemError> {
        let jac = self.jacobian(qp)?;
        Ok(poisson_from_jacobian(&jac, self.outputs.len(), self.canonical_dim()))
    }

    /// `f(w(q, p))` as a field on the canonical space.
    pub fn pullback(&self, f: &ScalarField) -> ScalarField {
        f.compose(&self.outputs)
    }

    /// Number of nonzero (`|.| > 1e-10`) pairwise brackets within
    /// multiplet `k`.
    pub fn nonvanishing_brackets(&self, qp: &[f64], k: usize) -> Result<usize, SystemError> {
        let pb = self.bracket_matrix(qp)?;
        let w = self.outputs.len();
        let r = self.multiplet.range(k);
        let mut count = 0;
        for i in r.clone() {
            for j in i + 1..r.end {
                if libm::fabs(pb[i * w + j]) > 1e-10 {
                    count += 1;
                }
            }
        }
        Ok(count)
    }
}

/// `P_ij = sum_k (J_i,qk J_j,pk - J_i,pk J_j,qk)` for a row-major Jacobian
/// with `rows` rows over `2n` interleaved canonical columns.
pub(crate) fn poisson_from_jacobian(jac: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut pb = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in i + 1..rows {
            let mut s = 0.0;
            for k in 0..cols / 2 {
                let (q, p) = (2 * k, 2 * k + 1);
                s += jac[i * cols + q] * jac[j * cols + p] - jac[i * cols + p] * jac[j * cols + q];
            }
            pb[i * rows + j] = s;
            pb[j * rows + i] = -s;
        }
    }
    pb
}

/// A (possibly monitored) field that should stay fixed along the flow.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub name: String,
    pub field: ScalarField,
}

/// Nambu system: `N`-plet coordinates, the Hamiltonian, and `N - 2`
/// further Hamiltonians (the induced constraints), over a bracket context.
#[derive(Debug, Clone)]
pub struct NambuSystem {
    ctx: BracketContext,
    hamiltonian: ScalarField,
    constraints: Vec<ScalarField>,
    gauge_terms: Vec<ScalarField>,
    monitors: Vec<Monitor>,
}

impl NambuSystem {
    /// `constraints` are fields on the full multiplet space (for several
    /// subsystems, the sums over subsystems).
    pub fn new(
        ctx: BracketContext,
        hamiltonian: ScalarField,
        constraints: Vec<ScalarField>,
    ) -> Result<Self, SystemError> {
        if constraints.len() + 2 != ctx.arity() {
            return Err(SystemError::Invalid("a Nambu N-plet needs N - 2 constraint fields"));
        }
        if hamiltonian.dim() != ctx.dim() || constraints.iter().any(|g| g.dim() != ctx.dim()) {
            return Err(SystemError::Invalid("fields must act on the multiplet space"));
        }
        let monitors = constraints
            .iter()
            .enumerate()
            .map(|(b, g)| Monitor {
                name: alloc::format!("G{}", b + 1),
                field: g.clone(),
            })
            .collect();
        Ok(Self {
            ctx,
            hamiltonian,
            constraints,
            gauge_terms: Vec::new(),
            monitors,
        })
    }

    /// `n` non-interacting-layout multiplets sharing the local constraints
    /// `G_b(x_(k))`; the bracket sees `G_b = sum_k G_b(k)` and each local piece
    /// is monitored separately.
    pub fn per_subsystem(
        n: usize,
        arity: usize,
        hamiltonian: ScalarField,
        local_constraints: &[ScalarField],
    ) -> Result<Self, SystemError> {
        if local_constraints.iter().any(|g| g.dim() != arity) {
            return Err(SystemError::Invalid("local constraints act on one multiplet"));
        }
        let dim = n * arity;
        let mut monitors = Vec::new();
        let mut global = Vec::new();
        for (b, g) in local_constraints.iter().enumerate() {
            let pieces: Vec<ScalarField> = (0..n)
                .map(|k| {
                    let axes: Vec<usize> = (k * arity..(k + 1) * arity).collect();
                    g.embed(dim, &axes)
                })
                .collect();
            for (k, piece) in pieces.iter().enumerate() {
                monitors.push(Monitor {
                    name: if n == 1 {
                        alloc::format!("G{}", b + 1)
                    } else {
                        alloc::format!("G{}({})", b + 1, k + 1)
                    },
                    field: piece.clone(),
                });
            }
            global.push(ScalarField::sum(&pieces));
        }
        let mut sys = Self::new(BracketContext::nambu(n, arity), hamiltonian, global)?;
        sys.monitors = monitors;
        Ok(sys)
    }

    /// Records multipliers `lambda_b`; the effective Hamiltonian becomes
    /// `H + sum_b lambda_b G_b`.
    pub fn with_gauge_terms(mut self, multipliers: Vec<ScalarField>) -> Result<Self, SystemError> {
        if multipliers.len() != self.constraints.len() || multipliers.iter().any(|l| l.dim() != self.ctx.dim()) {
            return Err(SystemError::Invalid("one multiplier per constraint, on the multiplet space"));
        }
        self.gauge_terms = multipliers;
        Ok(self)
    }

    pub fn with_monitors(mut self, monitors: Vec<Monitor>) -> Self {
        self.monitors = monitors;
        self
    }

    pub fn context(&self) -> &BracketContext {
        &self.ctx
    }

    pub fn arity(&self) -> usize {
        self.ctx.arity()
    }

    pub fn dim(&self) -> usize {
        self.ctx.dim()
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.hamiltonian
    }

    pub fn constraints(&self) -> &[ScalarField] {
        &self.constraints
    }

    pub fn gauge_terms(&self) -> &[ScalarField] {
        &self.gauge_terms
    }

    pub fn monitors(&self) -> &[Monitor] {
        &self.monitors
    }

    pub fn effective_hamiltonian(&self) -> ScalarField {
        if self.gauge_terms.is_empty() {
            return self.hamiltonian.clone();
        }
        let mut terms = vec![self.hamiltonian.clone()];
        for (l, g) in self.gauge_terms.iter().zip(&self.constraints) {
            terms.push(l.mul(g));
        }
        ScalarField::sum(&terms)
    }

    /// The `N - 1` generating functions: effective Hamiltonian, then the
    /// constraints.
    pub fn generators(&self) -> Vec<ScalarField> {
        let mut out = vec![self.effective_hamiltonian()];
        out.extend(self.constraints.iter().cloned());
        out
    }
}

/// Antisymmetric, point-dependent factor `g_ab` over the `x` block.
#[derive(Clone)]
pub struct MetricField {
    size: usize,
    dim: usize,
    eval: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("size", &self.size)
            .field("dim", &self.dim)
            .finish()
    }
}

impl MetricField {
    /// `eval` returns the row-major `size x size` matrix at a point of
    /// dimension `dim`.
    pub fn new(size: usize, dim: usize, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            size,
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(size: usize, dim: usize, matrix: Vec<f64>) -> Self {
        assert_eq!(matrix.len(), size * size);
        Self::new(size, dim, move |_| matrix.clone())
    }

    /// `g_ab = 1/2 (delta_{a, b-n} - delta_{a-n, b})` for `n` conjugate pairs
    /// laid out as `(x_1..x_n, y_1..y_n)`.
    pub fn canonical_pairs(n: usize, dim: usize) -> Self {
        let size = 2 * n;
        let mut m = vec![0.0; size * size];
        for i in 0..n {
            m[i * size + i + n] = 0.5;
            m[(i + n) * size + i] = -0.5;
        }
        Self::constant(size, dim, m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, at: &[f64]) -> Vec<f64> {
        (self.eval)(at)
    }

    /// `max |g_ab + g_ba|`.
    pub fn antisymmetry_defect(&self, at: &[f64]) -> f64 {
        let g = self.eval(at);
        let s = self.size;
        let mut worst: f64 = 0.0;
        for a in 0..s {
            for b in a..s {
                worst = worst.max(libm::fabs(g[a * s + b] + g[b * s + a]));
            }
        }
        worst
    }
}

/// One irreducible set of a generalized Nambu system: indices into the `x`
/// block, into the `z` block, and into the constraint list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrreducibleBlock {
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    pub constraints: Vec<usize>,
}

/// Generalized Nambu system on `w = (x_1..x_{2n}, z_1..z_m)`.
#[derive(Debug, Clone)]
pub struct GeneralizedNambuSystem {
    x_dim: usize,
    z_dim: usize,
    hamiltonian: ScalarField,
    constraints: Vec<ScalarField>,
    metric: MetricField,
    blocks: Vec<IrreducibleBlock>,
}

impl GeneralizedNambuSystem {
    pub fn new(
        x_dim: usize,
        z_dim: usize,
        hamiltonian: ScalarField,
        constraints: Vec<ScalarField>,
        metric: MetricField,
    ) -> Result<Self, SystemError> {
        let block = IrreducibleBlock {
            x: (0..x_dim).collect(),
            z: (0..z_dim).collect(),
            constraints: (0..z_dim).collect(),
        };
        Self::with_blocks(x_dim, z_dim, hamiltonian, constraints, metric, vec![block])
    }

    pub fn with_blocks(
        x_dim: usize,
        z_dim: usize,
        hamiltonian: ScalarField,
        constraints: Vec<ScalarField>,
        metric: MetricField,
        blocks: Vec<IrreducibleBlock>,
    ) -> Result<Self, SystemError> {
        let dim = x_dim + z_dim;
        if x_dim == 0 || !x_dim.is_multiple_of(2) {
            return Err(SystemError::Invalid("x block must have even, positive size"));
        }
        if constraints.len() != z_dim {
            return Err(SystemError::Invalid("one constraint per z coordinate"));
        }
        if hamiltonian.dim() != dim || constraints.iter().any(|g| g.dim() != dim) {
            return Err(SystemError::Invalid("fields must act on (x, z)"));
        }
        if metric.size() != x_dim || metric.dim() != dim {
            return Err(SystemError::Invalid("metric must be x_dim square on (x, z)"));
        }
        let mut seen_x = vec![false; x_dim];
        let mut seen_z = vec![false; z_dim];
        let mut seen_c = vec![false; z_dim];
        for b in &blocks {
            if b.z.len() != b.constraints.len() || b.x.len() % 2 != 0 || b.x.is_empty() {
                return Err(SystemError::Invalid("irreducible block shape"));
            }
            for (idx, seen) in [(&b.x, &mut seen_x), (&b.z, &mut seen_z), (&b.constraints, &mut seen_c)] {
                for &i in idx {
                    if i >= seen.len() || seen[i] {
                        return Err(SystemError::Invalid("blocks must partition x, z and constraints"));
                    }
                    seen[i] = true;
                }
            }
        }
        if !(seen_x.iter().all(|&s| s) && seen_z.iter().all(|&s| s) && seen_c.iter().all(|&s| s)) {
            return Err(SystemError::Invalid("blocks must partition x, z and constraints"));
        }
        Ok(Self {
            x_dim,
            z_dim,
            hamiltonian,
            constraints,
            metric,
            blocks,
        })
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn dim(&self) -> usize {
        self.x_dim + self.z_dim
    }

    /// Ambient index of `z_s`.
    pub fn z_axis(&self, s: usize) -> usize {
        self.x_dim + s
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.hamiltonian
    }

    pub fn constraints(&self) -> &[ScalarField] {
        &self.constraints
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn blocks(&self) -> &[IrreducibleBlock] {
        &self.blocks
    }

    pub fn monitors(&self) -> Vec<Monitor> {
        let mut out = vec![Monitor {
            name: "H".into(),
            field: self.hamiltonian.clone(),
        }];
        out.extend(self.constraints.iter().enumerate().map(|(s, g)| Monitor {
            name: alloc::format!("G{}", s + 1),
            field: g.clone(),
        }));
        out
    }
}

/// First class constraints `phi_s` with gauge conditions `chi_t` on a
/// canonical space.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub phi: Vec<ScalarField>,
    pub chi: Vec<ScalarField>,
}

impl ConstraintSpec {
    pub fn new(phi: Vec<ScalarField>, chi: Vec<ScalarField>) -> Result<Self, SystemError> {
        if phi.len() != chi.len() || phi.is_empty() {
            return Err(SystemError::Invalid("need as many gauge conditions as constraints"));
        }
        Ok(Self { phi, chi })
    }

    /// `det {phi_s, chi_t}_PB`.
    pub fn bracket_determinant(&self, at: &[f64]) -> Result<f64, SystemError> {
        let n = at.len() / 2;
        let ctx = BracketContext::poisson(n);
        let m = self.phi.len();
        let mut mat = vec![0.0; m * m];
        for (s, phi) in self.phi.iter().enumerate() {
            for (t, chi) in self.chi.iter().enumerate() {
                mat[s * m + t] = crate::brackets::poisson_bracket(phi, chi, at, &ctx)?;
            }
        }
        Ok(crate::fields::determinant(&mut mat, m))
    }
}
