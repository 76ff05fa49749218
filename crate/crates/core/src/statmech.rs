//! Canonical partition functions in the Hamiltonian description and in the
//! delta-resolved Nambu description, and their ratio.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::{determinant, gradient_into, ScalarField};
use crate::quadrature::{nested, Rule};
use crate::systems::{HamiltonianSystem, NambuSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("invalid partition configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("integrand overflow at {location:?}")]
    IntegrandOverflow { location: Vec<f64> },
    #[error("degenerate denominator: Z_H = {value:e} +- {stderr:e}")]
    DegenerateDenominator { value: f64, stderr: f64 },
    #[error("branch solver does not match the system: {0}")]
    BranchMismatch(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    TensorQuadrature,
    MonteCarlo,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::TensorQuadrature => "tensor-quadrature",
            Estimator::MonteCarlo => "monte-carlo",
        }
    }
}

/// Integration region over the integrated coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Every axis in `[-R, R]`.
    Radius(f64),
    /// Explicit `(lo, hi)` per axis.
    Bounds(Vec<(f64, f64)>),
}

impl Domain {
    pub fn axis_bounds(&self, dim: usize) -> Result<Vec<(f64, f64)>, StatError> {
        let b = match self {
            Domain::Radius(r) => {
                if !(*r > 0.0 && r.is_finite()) {
                    return Err(StatError::InvalidConfig("radius must be positive"));
                }
                vec![(-r, *r); dim]
            }
            Domain::Bounds(b) => {
                if b.len() != dim {
                    return Err(StatError::InvalidConfig("one bound pair per integrated axis"));
                }
                if b.iter().any(|(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
                    return Err(StatError::InvalidConfig("bounds must be finite with lo < hi"));
                }
                b.clone()
            }
        };
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub beta: f64,
    pub domain: Domain,
    pub estimator: Estimator,
    pub samples: usize,
    pub seed: u64,
    /// Tanh-sinh level for the delta-resolved integral. The Hamiltonian
    /// integral derives its rule from it, see
    /// [`PartitionConfig::hamiltonian_rule`].
    pub level: u32,
    /// Width of the excluded band `|det dG/dz| < epsilon` for Monte Carlo.
    /// `None` picks the largest of `1e-2, 1e-3, ..., 1e-12` whose excluded
    /// mass bound is below 0.1% of the estimate.
    pub epsilon: Option<f64>,
}

impl PartitionConfig {
    pub fn quadrature(beta: f64, domain: Domain) -> Self {
        Self {
            beta,
            domain,
            estimator: Estimator::TensorQuadrature,
            samples: 0,
            seed: 0,
            level: 6,
            epsilon: None,
        }
    }

    pub fn monte_carlo(beta: f64, domain: Domain, samples: usize, seed: u64) -> Self {
        Self {
            beta,
            domain,
            estimator: Estimator::MonteCarlo,
            samples,
            seed,
            level: 6,
            epsilon: None,
        }
    }

    fn validate(&self) -> Result<(), StatError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(StatError::InvalidConfig("beta must be positive"));
        }
        if self.estimator == Estimator::MonteCarlo && self.samples < 1000 {
            return Err(StatError::InvalidConfig("monte-carlo needs at least 1000 samples"));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(StatError::InvalidConfig("epsilon must be non-negative"));
            }
        }
        Ok(())
    }

    /// Gauss-Legendre rule for smooth integrands: order 8 on `2^level / 4`
    /// panels per axis (at least 2).
    pub fn hamiltonian_rule(&self) -> Rule {
        Rule::GaussLegendre {
            panels: ((1usize << self.level) / 4).max(2),
            order: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Monte-carlo standard error, or the last-refinement delta.
    pub stderr: f64,
    pub method: Estimator,
    pub beta: f64,
    pub seed: u64,
    pub samples: usize,
    /// Analytic bound on the mass removed by the epsilon band, when the
    /// branch solver provides one.
    pub excluded_mass_bound: Option<f64>,
    pub epsilon: Option<f64>,
    pub branch_count: usize,
    /// Bound on the mass outside a `Radius` domain for Gaussian integrands.
    pub tail_bound: Option<f64>,
    /// Quadrature nodes dropped because the weight was singular there.
    pub flagged_nodes: usize,
}

/// Mean and sum of squared deviations of a batch (Welford / Chan).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: self.mean + d * other.count as f64 / n,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * other.count as f64 / n,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Per-chunk accumulators, one per candidate epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStats {
    pub moments: Vec<Moments>,
}

/// Merges chunk statistics by recursive halving in index order, so the
/// result does not depend on how chunks were scheduled.
pub fn merge_pairwise(chunks: &[ChunkStats]) -> ChunkStats {
    match chunks.len() {
        0 => ChunkStats { moments: Vec::new() },
        1 => chunks[0].clone(),
        n => {
            let (a, b) = chunks.split_at(n / 2);
            let (a, b) = (merge_pairwise(a), merge_pairwise(b));
            ChunkStats {
                moments: a.moments.iter().zip(&b.moments).map(|(x, y)| x.merge(y)).collect(),
            }
        }
    }
}

/// Runs the Monte Carlo chunks; the default runs them in order on the
/// calling thread.
pub trait ChunkRunner {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkStats + Sync)) -> Vec<ChunkStats>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkRunner for Sequential {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkStats + Sync)) -> Vec<ChunkStats> {
        (0..chunks).map(job).collect()
    }
}

pub const CHUNK_SIZE: usize = 1 << 14;

/// Generator for chunk `index`: ChaCha8 keyed by `seed` on stream `index`.
pub fn chunk_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn chunk_count(samples: usize) -> usize {
    samples.div_ceil(CHUNK_SIZE)
}

fn chunk_len(samples: usize, index: usize) -> usize {
    (samples - index * CHUNK_SIZE).min(CHUNK_SIZE)
}

/// `E1(x) = int_x^inf e^-t / t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if libm::fabs(add) < 1e-17 * libm::fabs(sum) {
                break;
            }
        }
        return -EULER - libm::log(x) + sum;
    }
    // modified Lentz on the continued fraction
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if libm::fabs(del - 1.0) < 1e-16 {
            break;
        }
    }
    h * libm::exp(-x)
}

/// Solutions of the constraints for the `solved` coordinates of one
/// multiplet given the `free` ones; `None` outside the admissible region.
pub type BranchFn = Arc<dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync>;
/// `(beta, epsilon) -> bound` on the mass inside the excluded band.
pub type ExcludedMassFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Branch enumeration for delta-resolving the constraints, applied to every
/// multiplet of a system.
#[derive(Clone)]
pub struct BranchSolver {
    arity: usize,
    subsystems: usize,
    /// Local integrated coordinates, outermost first.
    free: Vec<usize>,
    solved: Vec<usize>,
    constraints: Vec<ScalarField>,
    branches: Vec<BranchFn>,
    excluded_mass: Option<ExcludedMassFn>,
}

impl fmt::Debug for BranchSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BranchSolver")
            .field("arity", &self.arity)
            .field("subsystems", &self.subsystems)
            .field("free", &self.free)
            .field("solved", &self.solved)
            .field("branches", &self.branches.len())
            .finish()
    }
}

impl BranchSolver {
    pub fn new(
        subsystems: usize,
        arity: usize,
        free: Vec<usize>,
        solved: Vec<usize>,
        constraints: Vec<ScalarField>,
        branches: Vec<BranchFn>,
    ) -> Result<Self, StatError> {
        let mut seen = vec![false; arity];
        for &i in free.iter().chain(&solved) {
            if i >= arity || seen[i] {
                return Err(StatError::BranchMismatch("free and solved must partition the multiplet"));
            }
            seen[i] = true;
        }
        if !seen.iter().all(|s| *s) || subsystems == 0 {
            return Err(StatError::BranchMismatch("free and solved must partition the multiplet"));
        }
        if constraints.len() != solved.len() || constraints.iter().any(|g| g.dim() != arity) {
            return Err(StatError::BranchMismatch("one local constraint per solved coordinate"));
        }
        if branches.is_empty() {
            return Err(StatError::BranchMismatch("no branches"));
        }
        Ok(Self {
            arity,
            subsystems,
            free,
            solved,
            constraints,
            branches,
            excluded_mass: None,
        })
    }

    pub fn with_excluded_mass_bound(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.excluded_mass = Some(Arc::new(f));
        self
    }

    /// `z = +-sqrt(y^2 - x^2)` on `y > |x|` for `G = (x^2 - y^2 + z^2)/2`,
    /// integrating `y` outside `x`. With `rate` such that `H >= rate * y` on
    /// that region, a single triplet reports the band bound
    /// `2 pi eps (1 + E1(beta rate eps))`.
    pub fn quadratic_triplet(subsystems: usize, constraint: ScalarField, rate: Option<f64>) -> Result<Self, StatError> {
        let plus: BranchFn = Arc::new(|v: &[f64]| (v[0] > libm::fabs(v[1])).then(|| vec![libm::sqrt(v[0] * v[0] - v[1] * v[1])]));
        let minus: BranchFn =
            Arc::new(|v: &[f64]| (v[0] > libm::fabs(v[1])).then(|| vec![-libm::sqrt(v[0] * v[0] - v[1] * v[1])]));
        let s = Self::new(subsystems, 3, vec![1, 0], vec![2], vec![constraint], vec![plus, minus])?;
        Ok(match rate {
            Some(k) if subsystems == 1 => s.with_excluded_mass_bound(move |beta, eps| {
                2.0 * core::f64::consts::PI * eps * (1.0 + exp_integral_e1(beta * k * eps))
            }),
            _ => s,
        })
    }

    /// Multiplets per system.
    pub fn subsystems(&self) -> usize {
        self.subsystems
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Branches per multiplet.
    pub fn local_branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Predicted normalization `prod_k N_k`.
    pub fn predicted_branch_count(&self) -> usize {
        self.branches.len().pow(self.subsystems as u32)
    }

    /// Integrated coordinates of the whole system, multiplet-major.
    pub fn integrated_dim(&self) -> usize {
        self.free.len() * self.subsystems
    }

    /// Fills multiplet `k` of `point` from its free values and branch `b`;
    /// returns `|det dG/dz|` or `None` if the branch is not admissible.
    fn assemble(&self, free: &[f64], b: usize, local: &mut [f64]) -> Option<f64> {
        let solved = (self.branches[b])(free)?;
        for (v, &i) in free.iter().zip(&self.free) {
            local[i] = *v;
        }
        for (v, &i) in solved.iter().zip(&self.solved) {
            local[i] = *v;
        }
        let m = self.solved.len();
        let mut jac = vec![0.0; m * m];
        let mut row = vec![0.0; self.arity];
        for (r, g) in self.constraints.iter().enumerate() {
            gradient_into(g, local, &mut row).ok()?;
            for (c, &i) in self.solved.iter().enumerate() {
                jac[r * m + c] = row[i];
            }
        }
        Some(libm::fabs(determinant(&mut jac, m)))
    }

    /// `max |G(branch point)|` over admissible branches at the given
    /// free-coordinate samples (one multiplet each).
    pub fn consistency_residual(&self, samples: &[Vec<f64>]) -> f64 {
        let mut local = vec![0.0; self.arity];
        let mut worst: f64 = 0.0;
        for s in samples {
            for b in 0..self.branches.len() {
                if self.assemble(s, b, &mut local).is_some() {
                    for g in &self.constraints {
                        worst = worst.max(libm::fabs(g.eval(&local)));
                    }
                }
            }
        }
        worst
    }
}

/// `sum over branch combinations of prod_k |det dG/dz|_k^-1 exp(-beta H)`
/// at the integrated coordinates `u`. Weights at or below `eps` drop the
/// combination; the smallest weight determinant seen is returned alongside.
struct NambuIntegrand<'a> {
    solver: &'a BranchSolver,
    hamiltonian: &'a ScalarField,
    beta: f64,
}

impl NambuIntegrand<'_> {
    /// Returns the total and, per combination, `(min det, term)`.
    fn terms(&self, u: &[f64], out: &mut Vec<(f64, f64)>) -> Result<(), Vec<f64>> {
        out.clear();
        let s = self.solver;
        let nf = s.free.len();
        let nb = s.branches.len();
        let combos = s.predicted_branch_count();
        let mut point = vec![0.0; s.arity * s.subsystems];
        'combo: for mut c in 0..combos {
            let mut weight = 1.0;
            let mut min_det = f64::INFINITY;
            for k in 0..s.subsystems {
                let b = c % nb;
                c /= nb;
                let local = &mut point[k * s.arity..(k + 1) * s.arity];
                match s.assemble(&u[k * nf..(k + 1) * nf], b, local) {
                    Some(det) => {
                        weight /= det;
                        min_det = min_det.min(det);
                    }
                    None => continue 'combo,
                }
            }
            let boltzmann = libm::exp(-self.beta * self.hamiltonian.eval(&point));
            if !boltzmann.is_finite() {
                return Err(point);
            }
            out.push((min_det, weight * boltzmann));
        }
        Ok(())
    }
}

/// `int prod dq dp exp(-beta H)` over the configured domain.
pub fn estimate_partition_hamiltonian(sys: &HamiltonianSystem, cfg: &PartitionConfig) -> Result<Estimate, StatError> {
    estimate_partition_hamiltonian_with(sys, cfg, &Sequential)
}

pub fn estimate_partition_hamiltonian_with(
    sys: &HamiltonianSystem,
    cfg: &PartitionConfig,
    runner: &(dyn ChunkRunner + Sync),
) -> Result<Estimate, StatError> {
    cfg.validate()?;
    let bounds = cfg.domain.axis_bounds(sys.dim())?;
    let h = sys.hamiltonian();
    let beta = cfg.beta;
    let overflow: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let f = |x: &[f64]| {
        let v = libm::exp(-beta * h.eval(x));
        if !v.is_finite() {
            overflow.borrow_mut().get_or_insert_with(|| x.to_vec());
            return 0.0;
        }
        v
    };
    let tail_bound = match cfg.domain {
        Domain::Radius(r) => Some(libm::exp(-beta * r * r / 2.0)),
        Domain::Bounds(_) => None,
    };
    let mut est = Estimate {
        value: 0.0,
        stderr: 0.0,
        method: cfg.estimator,
        beta,
        seed: cfg.seed,
        samples: cfg.samples,
        excluded_mass_bound: None,
        epsilon: None,
        branch_count: 1,
        tail_bound,
        flagged_nodes: 0,
    };
    match cfg.estimator {
        Estimator::TensorQuadrature => {
            let r = nested(&f, &bounds, cfg.hamiltonian_rule(), false, 0);
            if let Some(location) = overflow.into_inner() {
                return Err(StatError::IntegrandOverflow { location });
            }
            est.value = r.value;
            est.stderr = r.refinement_delta;
        }
        Estimator::MonteCarlo => {
            let volume: f64 = bounds.iter().map(|(lo, hi)| hi - lo).product();
            let job = |index: usize| {
                let mut rng = chunk_rng(cfg.seed, index);
                let mut m = Moments::default();
                let mut x = vec![0.0; bounds.len()];
                for _ in 0..chunk_len(cfg.samples, index) {
                    for (xi, (lo, hi)) in x.iter_mut().zip(&bounds) {
                        *xi = lo + (hi - lo) * uniform(&mut rng);
                    }
                    let v = libm::exp(-beta * h.eval(&x));
                    m.push(if v.is_finite() { v } else { f64::NAN });
                }
                ChunkStats { moments: vec![m] }
            };
            let merged = merge_pairwise(&runner.run(chunk_count(cfg.samples), &job));
            let m = merged.moments[0];
            if !m.mean.is_finite() {
                return Err(StatError::IntegrandOverflow { location: Vec::new() });
            }
            est.value = volume * m.mean;
            est.stderr = volume * libm::sqrt(m.variance() / m.count as f64);
        }
    }
    Ok(est)
}

const EPSILON_CANDIDATES: [f64; 11] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12];

/// Delta-resolved `int prod dx dy sum_a |dG/dz|^-1 exp(-beta H(x, y, z_a))`
/// over the admissible part of the domain of the integrated coordinates.
pub fn estimate_partition_nambu(
    nsys: &NambuSystem,
    branches: &BranchSolver,
    cfg: &PartitionConfig,
) -> Result<Estimate, StatError> {
    estimate_partition_nambu_with(nsys, branches, cfg, &Sequential)
}

pub fn estimate_partition_nambu_with(
    nsys: &NambuSystem,
    branches: &BranchSolver,
    cfg: &PartitionConfig,
    runner: &(dyn ChunkRunner + Sync),
) -> Result<Estimate, StatError> {
    cfg.validate()?;
    if branches.arity * branches.subsystems != nsys.dim() || branches.arity != nsys.arity() {
        return Err(StatError::BranchMismatch("multiplet layout differs from the system"));
    }
    let bounds = cfg.domain.axis_bounds(branches.integrated_dim())?;
    let integrand = NambuIntegrand {
        solver: branches,
        hamiltonian: nsys.hamiltonian(),
        beta: cfg.beta,
    };
    let mut est = Estimate {
        value: 0.0,
        stderr: 0.0,
        method: cfg.estimator,
        beta: cfg.beta,
        seed: cfg.seed,
        samples: cfg.samples,
        excluded_mass_bound: None,
        epsilon: None,
        branch_count: branches.predicted_branch_count(),
        tail_bound: None,
        flagged_nodes: 0,
    };
    match cfg.estimator {
        Estimator::TensorQuadrature => {
            let overflow: RefCell<Option<Vec<f64>>> = RefCell::new(None);
            let scratch = RefCell::new(Vec::new());
            let f = |u: &[f64]| {
                let mut terms = scratch.borrow_mut();
                match integrand.terms(u, &mut terms) {
                    // a vanishing weight determinant gives an infinite term,
                    // which the driver drops and counts
                    Ok(()) => terms.iter().map(|(_, t)| t).sum(),
                    Err(p) => {
                        overflow.borrow_mut().get_or_insert(p);
                        0.0
                    }
                }
            };
            let r = nested(&f, &bounds, Rule::TanhSinh { level: cfg.level }, true, 64);
            if let Some(location) = overflow.into_inner() {
                return Err(StatError::IntegrandOverflow { location });
            }
            est.value = r.value;
            est.stderr = r.refinement_delta;
            est.flagged_nodes = r.flagged_nodes;
        }
        Estimator::MonteCarlo => {
            let candidates: Vec<f64> = match cfg.epsilon {
                Some(e) => vec![e],
                None if branches.excluded_mass.is_some() => EPSILON_CANDIDATES.to_vec(),
                None => vec![1e-6],
            };
            let volume: f64 = bounds.iter().map(|(lo, hi)| hi - lo).product();
            let job = |index: usize| {
                let mut rng = chunk_rng(cfg.seed, index);
                let mut moments = vec![Moments::default(); candidates.len()];
                let mut u = vec![0.0; bounds.len()];
                let mut terms = Vec::new();
                for _ in 0..chunk_len(cfg.samples, index) {
                    for (ui, (lo, hi)) in u.iter_mut().zip(&bounds) {
                        *ui = lo + (hi - lo) * uniform(&mut rng);
                    }
                    let ok = integrand.terms(&u, &mut terms).is_ok();
                    for (m, &eps) in moments.iter_mut().zip(&candidates) {
                        let v: f64 = if ok {
                            terms.iter().filter(|(d, _)| *d > eps).map(|(_, t)| t).sum()
                        } else {
                            f64::NAN
                        };
                        m.push(v);
                    }
                }
                ChunkStats { moments }
            };
            let merged = merge_pairwise(&runner.run(chunk_count(cfg.samples), &job));
            if merged.moments.iter().any(|m| !m.mean.is_finite()) {
                return Err(StatError::IntegrandOverflow { location: Vec::new() });
            }
            let bound = |eps: f64| branches.excluded_mass.as_ref().map(|f| f(cfg.beta, eps));
            let mut pick = candidates.len() - 1;
            for (i, &eps) in candidates.iter().enumerate() {
                let value = volume * merged.moments[i].mean;
                if bound(eps).is_some_and(|b| b <= 1e-3 * libm::fabs(value)) || candidates.len() == 1 {
                    pick = i;
                    break;
                }
            }
            let m = merged.moments[pick];
            est.value = volume * m.mean;
            est.stderr = volume * libm::sqrt(m.variance() / m.count as f64);
            est.epsilon = Some(candidates[pick]);
            est.excluded_mass_bound = bound(candidates[pick]);
        }
    }
    Ok(est)
}

/// `Z_N / Z_H` with propagated relative error and the predicted branch
/// product.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub ratio: f64,
    pub stderr: f64,
    pub predicted: usize,
    pub nambu: Estimate,
    pub hamiltonian: Estimate,
}

pub fn normalization_factor(
    nambu: Estimate,
    hamiltonian: Estimate,
    branches: &BranchSolver,
) -> Result<Normalization, StatError> {
    if hamiltonian.value == 0.0 || libm::fabs(hamiltonian.value) <= 2.0 * hamiltonian.stderr {
        return Err(StatError::DegenerateDenominator {
            value: hamiltonian.value,
            stderr: hamiltonian.stderr,
        });
    }
    let ratio = nambu.value / hamiltonian.value;
    let rel = libm::hypot(nambu.stderr / nambu.value, hamiltonian.stderr / hamiltonian.value);
    Ok(Normalization {
        ratio,
        stderr: libm::fabs(ratio) * rel,
        predicted: branches.predicted_branch_count(),
        nambu,
        hamiltonian,
    })
}

/// Both estimates with their own configurations, then the ratio.
pub fn estimate_normalization(
    nsys: &NambuSystem,
    branches: &BranchSolver,
    sys: &HamiltonianSystem,
    nambu_cfg: &PartitionConfig,
    hamiltonian_cfg: &PartitionConfig,
) -> Result<Normalization, StatError> {
    let zn = estimate_partition_nambu(nsys, branches, nambu_cfg)?;
    let zh = estimate_partition_hamiltonian(sys, hamiltonian_cfg)?;
    normalization_factor(zn, zh, branches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_builtin, BuiltinName, BuiltinParams};
    use core::f64::consts::PI;

    fn triplet() -> (HamiltonianSystem, NambuSystem, BranchSolver) {
        let b = make_builtin(BuiltinName::QuadraticTriplet, &BuiltinParams::default()).unwrap();
        let solver = BranchSolver::quadratic_triplet(1, b.local_constraints[0].clone(), Some(2.0)).unwrap();
        (b.hamiltonian, b.nambu.unwrap(), solver)
    }

    #[test]
    fn e1_reference_values() {
        // tabulated: E1(0.5) = 0.5597735947761608, E1(2) = 0.04890051070806112
        assert!((exp_integral_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_integral_e1(2.0) - 0.048_900_510_708_061_12).abs() < 1e-15);
        assert!((exp_integral_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| libm::sin(i as f64) * 3.0 + 1.0).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|x| a.push(*x));
        xs[37..].iter().for_each(|x| b.push(*x));
        let m = a.merge(&b);
        assert_eq!(m.count, all.count);
        assert!((m.mean - all.mean).abs() < 1e-14);
        assert!((m.m2 - all.m2).abs() < 1e-11);
    }

    #[test]
    fn zero_hamiltonian_gives_box_volume() {
        let sys = HamiltonianSystem::new(1, ScalarField::constant(2, 0.0)).unwrap();
        let cfg = PartitionConfig::quadrature(1.0, Domain::Bounds(vec![(0.0, 1.0), (0.0, 1.0)]));
        let z = estimate_partition_hamiltonian(&sys, &cfg).unwrap();
        assert!((z.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oscillator_quadrature() {
        let (h, _, _) = triplet();
        for beta in [1.0, 2.0] {
            let z = estimate_partition_hamiltonian(&h, &PartitionConfig::quadrature(beta, Domain::Radius(8.0))).unwrap();
            assert!((z.value - 2.0 * PI / beta).abs() < 1e-10, "{z:?}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let sys = HamiltonianSystem::new(1, ScalarField::new(2, |x| -1e3 * x[0] * x[0])).unwrap();
        let r = estimate_partition_hamiltonian(&sys, &PartitionConfig::quadrature(1.0, Domain::Radius(8.0)));
        assert!(matches!(r, Err(StatError::IntegrandOverflow { .. })));
    }

    #[test]
    fn triplet_quadrature_value() {
        // independent oracle: the inner integral of 2 / sqrt(y^2 - x^2) over
        // |x| < y is 2 pi, leaving int_0^inf 2 pi e^{-2 beta y} dy = pi / beta
        let (_, n, s) = triplet();
        let cfg = PartitionConfig {
            level: 5,
            ..PartitionConfig::quadrature(1.0, Domain::Bounds(vec![(0.0, 20.0), (-20.0, 20.0)]))
        };
        let z = estimate_partition_nambu(&n, &s, &cfg).unwrap();
        assert!((z.value - PI).abs() < 1e-6 * PI, "{z:?}");
        assert_eq!(z.branch_count, 2);
    }

    #[test]
    fn single_branch_linear_constraint() {
        // G = z - (x + y)/2 on one triplet, H = x^2 + y^2 + z^2
        let g = ScalarField::with_gradient(3, |v| v[2] - 0.5 * (v[0] + v[1]), |_, g| g.copy_from_slice(&[-0.5, -0.5, 1.0]));
        let h = ScalarField::with_gradient(3, |v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2], |v, g| {
            g.copy_from_slice(&[2.0 * v[0], 2.0 * v[1], 2.0 * v[2]])
        });
        let n = NambuSystem::new(crate::brackets::BracketContext::nambu(1, 3), h, vec![g.clone()]).unwrap();
        let branch: BranchFn = Arc::new(|v: &[f64]| Some(vec![0.5 * (v[0] + v[1])]));
        let s = BranchSolver::new(1, 3, vec![0, 1], vec![2], vec![g], vec![branch]).unwrap();
        let reduced = HamiltonianSystem::new(
            1,
            ScalarField::new(2, |v| v[0] * v[0] + v[1] * v[1] + 0.25 * (v[0] + v[1]) * (v[0] + v[1])),
        )
        .unwrap();
        let cfg = PartitionConfig::quadrature(1.0, Domain::Radius(7.0));
        let zn = estimate_partition_nambu(&n, &s, &PartitionConfig { level: 5, ..cfg.clone() }).unwrap();
        let zh = estimate_partition_hamiltonian(&reduced, &cfg).unwrap();
        assert!((zn.value - zh.value).abs() <= 1e-10 * zh.value, "{} {}", zn.value, zh.value);
        let r = normalization_factor(zn, zh, &s).unwrap();
        assert_eq!(r.predicted, 1);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let (h, n, s) = triplet();
        let cfg = PartitionConfig::monte_carlo(1.0, Domain::Radius(8.0), 40_000, 7);
        let a = estimate_partition_hamiltonian(&h, &cfg).unwrap();
        let b = estimate_partition_hamiltonian(&h, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let cfg = PartitionConfig::monte_carlo(1.0, Domain::Bounds(vec![(0.0, 12.0), (-12.0, 12.0)]), 40_000, 7);
        let a = estimate_partition_nambu(&n, &s, &cfg).unwrap();
        let b = estimate_partition_nambu(&n, &s, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.excluded_mass_bound.unwrap() <= 1e-3 * a.value);
    }

    #[test]
    fn branches_satisfy_constraint() {
        let (_, _, s) = triplet();
        let mut rng = chunk_rng(3, 0);
        let pts: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![10.0 * uniform(&mut rng), 20.0 * uniform(&mut rng) - 10.0])
            .collect();
        assert!(s.consistency_residual(&pts) <= 1e-10);
    }

    #[test]
    fn config_validation() {
        let (h, _, _) = triplet();
        assert!(estimate_partition_hamiltonian(&h, &PartitionConfig::monte_carlo(1.0, Domain::Radius(8.0), 10, 0)).is_err());
        assert!(estimate_partition_hamiltonian(&h, &PartitionConfig::quadrature(-1.0, Domain::Radius(8.0))).is_err());
    }

    #[test]
    fn degenerate_denominator() {
        let (_, _, s) = triplet();
        let mut e = Estimate {
            value: 0.0,
            stderr: 0.1,
            method: Estimator::MonteCarlo,
            beta: 1.0,
            seed: 0,
            samples: 1000,
            excluded_mass_bound: None,
            epsilon: None,
            branch_count: 1,
            tail_bound: None,
            flagged_nodes: 0,
        };
        let num = Estimate { value: 1.0, ..e.clone() };
        assert!(normalization_factor(num.clone(), e.clone(), &s).is_err());
        e.value = 0.15;
        assert!(normalization_factor(num, e, &s).is_err());
    }
}
