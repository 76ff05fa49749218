//! Lifting an N-plet Nambu system to an (N+r)-plet one through maps
//! `y_j(x)` and induced constraints `G_c(y) = 0`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::brackets::{nambu_bracket, BracketContext, BracketError};
use crate::combinatorics::{combinations, factorial, levi_civita, signed_permutations};
use crate::fields::{gradient_into, minor, FieldError, ScalarField};
use crate::systems::{NambuSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("invalid lift: {0}")]
    Invalid(&'static str),
    #[error("lift condition fails: residual {residual:e} above {threshold:e}")]
    ConditionViolated { residual: f64, threshold: f64 },
    #[error("only {found} non-vanishing N-brackets of the new variables, need {needed}")]
    TooFewBrackets { found: usize, needed: usize },
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// A source N-plet system (one block), `N + r` maps `y_j(x)`, their left
/// inverse `x_i(y)` and `r` candidate constraints on the `y` space.
#[derive(Debug, Clone)]
pub struct LiftSpec {
    pub source: NambuSystem,
    pub maps: Vec<ScalarField>,
    pub inverse: Vec<ScalarField>,
    pub candidates: Vec<ScalarField>,
}

pub const LIFT_THRESHOLD: f64 = 1e-8;

impl LiftSpec {
    pub fn new(
        source: NambuSystem,
        maps: Vec<ScalarField>,
        inverse: Vec<ScalarField>,
        candidates: Vec<ScalarField>,
    ) -> Result<Self, LiftError> {
        let n = source.arity();
        if source.dim() != n || source.context().blocks().len() != 1 {
            return Err(LiftError::Invalid("source must be a single multiplet"));
        }
        let m = maps.len();
        if m != n + candidates.len() {
            return Err(LiftError::Invalid("need N + r maps for r candidates"));
        }
        if maps.iter().any(|f| f.dim() != n) {
            return Err(LiftError::Invalid("maps act on the source multiplet"));
        }
        if inverse.len() != n || inverse.iter().chain(&candidates).any(|f| f.dim() != m) {
            return Err(LiftError::Invalid("inverse and candidates act on the lifted space"));
        }
        Ok(Self {
            source,
            maps,
            inverse,
            candidates,
        })
    }

    /// `y = (x, phi_1(x), ..., phi_r(x))` with `G_c = y_{N+c} - phi_c`.
    pub fn graph(source: NambuSystem, extras: Vec<ScalarField>) -> Result<Self, LiftError> {
        let n = source.arity();
        let m = n + extras.len();
        let mut maps: Vec<ScalarField> = (0..n).map(|i| ScalarField::coordinate(n, i)).collect();
        maps.extend(extras.iter().cloned());
        let inverse = (0..n).map(|i| ScalarField::coordinate(m, i)).collect();
        let axes: Vec<usize> = (0..n).collect();
        let candidates = extras
            .iter()
            .enumerate()
            .map(|(c, phi)| ScalarField::coordinate(m, n + c).add(&phi.embed(m, &axes).scale(-1.0)))
            .collect();
        Self::new(source, maps, inverse, candidates)
    }

    pub fn r(&self) -> usize {
        self.candidates.len()
    }

    pub fn lifted_dim(&self) -> usize {
        self.maps.len()
    }

    pub fn lift_point(&self, x: &[f64]) -> Vec<f64> {
        self.maps.iter().map(|f| f.eval(x)).collect()
    }

    pub fn project_point(&self, y: &[f64]) -> Vec<f64> {
        self.inverse.iter().map(|f| f.eval(y)).collect()
    }

    /// Number of increasing N-tuples with `|{y_j1, ..., y_jN}| > tol` at `x`.
    pub fn nonvanishing_brackets(&self, x: &[f64], tol: f64) -> Result<usize, LiftError> {
        let ctx = self.source.context();
        let mut count = 0;
        for j in combinations(self.lifted_dim(), self.source.arity()) {
            let fields: Vec<ScalarField> = j.iter().map(|&i| self.maps[i].clone()).collect();
            if libm::fabs(nambu_bracket(&fields, x, ctx)?) > tol {
                count += 1;
            }
        }
        Ok(count)
    }
}

/// Max over source points and increasing index tuples `j_1 < ... < j_N` of
/// `|(1/r!) sum eps_{j k} d(G_1..G_r)/d(y_k) - {y_j1, ..., y_jN}|`, the sum
/// running over every ordering `k` of the complementary indices.
pub fn verify_lift_conditions(spec: &LiftSpec, points: &[Vec<f64>]) -> Result<f64, LiftError> {
    let n = spec.source.arity();
    let m = spec.lifted_dim();
    let r = spec.r();
    let ctx = spec.source.context();
    let rows: Vec<usize> = (0..r).collect();
    let norm = factorial(r);
    let mut worst: f64 = 0.0;
    let mut jac = vec![0.0; r * m];
    for x in points {
        let y = spec.lift_point(x);
        for (c, g) in spec.candidates.iter().enumerate() {
            gradient_into(g, &y, &mut jac[c * m..(c + 1) * m])?;
        }
        for j in combinations(m, n) {
            let fields: Vec<ScalarField> = j.iter().map(|&i| spec.maps[i].clone()).collect();
            let rhs = nambu_bracket(&fields, x, ctx)?;
            let rest: Vec<usize> = (0..m).filter(|i| !j.contains(i)).collect();
            let mut lhs = 0.0;
            for (k, _) in signed_permutations(&rest) {
                let mut all = j.clone();
                all.extend_from_slice(&k);
                let eps = levi_civita(&all);
                if eps != 0 {
                    lhs += eps as f64 * minor(&jac, m, &rows, &k);
                }
            }
            worst = worst.max(libm::fabs(lhs / norm - rhs));
        }
    }
    Ok(worst)
}

/// Max over candidates and points of
/// `|sum_J d(G_c, u_1..u_{N-1})/d(y_J) {y_J}|` over increasing `N`-tuples
/// `J`, for probes `u` on the lifted space. This is the chain-rule
/// expansion of `{G_c, u_1, ..., u_{N-1}}` in the source variables.
pub fn verify_lift_constancy(spec: &LiftSpec, probes: &[ScalarField], points: &[Vec<f64>]) -> Result<f64, LiftError> {
    let n = spec.source.arity();
    let m = spec.lifted_dim();
    if probes.len() + 1 != n || probes.iter().any(|u| u.dim() != m) {
        return Err(LiftError::Invalid("need N - 1 probes on the lifted space"));
    }
    let ctx = spec.source.context();
    let rows: Vec<usize> = (0..n).collect();
    let brackets: Vec<Vec<usize>> = combinations(m, n);
    let mut jac = vec![0.0; n * m];
    let mut worst: f64 = 0.0;
    for x in points {
        let y = spec.lift_point(x);
        let nb: Vec<f64> = brackets
            .iter()
            .map(|j| {
                let fields: Vec<ScalarField> = j.iter().map(|&i| spec.maps[i].clone()).collect();
                nambu_bracket(&fields, x, ctx)
            })
            .collect::<Result<_, _>>()?;
        for (r, u) in probes.iter().enumerate() {
            gradient_into(u, &y, &mut jac[(r + 1) * m..(r + 2) * m])?;
        }
        for g in &spec.candidates {
            gradient_into(g, &y, &mut jac[..m])?;
            let total: f64 = brackets.iter().zip(&nb).map(|(j, b)| minor(&jac, m, &rows, j) * b).sum();
            worst = worst.max(libm::fabs(total));
        }
    }
    Ok(worst)
}

/// The `(N+r)`-plet system with generators `(H, G_1..G_{N-2})` of the
/// source pulled up through the inverse, followed by the candidates.
/// `points` are source-space samples for the admissibility checks.
pub fn lift_nambu_system(spec: &LiftSpec, points: &[Vec<f64>]) -> Result<NambuSystem, LiftError> {
    if spec.r() == 0 {
        return Ok(spec.source.clone());
    }
    if points.is_empty() {
        return Err(LiftError::Invalid("no sample points"));
    }
    let residual = verify_lift_conditions(spec, points)?;
    if !(residual <= LIFT_THRESHOLD) {
        return Err(LiftError::ConditionViolated {
            residual,
            threshold: LIFT_THRESHOLD,
        });
    }
    let needed = spec.r() + 1;
    let found = points
        .iter()
        .map(|x| spec.nonvanishing_brackets(x, LIFT_THRESHOLD))
        .try_fold(usize::MAX, |acc, c| c.map(|c| acc.min(c)))?;
    if found < needed {
        return Err(LiftError::TooFewBrackets { found, needed });
    }
    let mut generators: Vec<ScalarField> = spec.source.generators().iter().map(|f| f.compose(&spec.inverse)).collect();
    let hamiltonian = generators.remove(0);
    generators.extend(spec.candidates.iter().cloned());
    let ctx = BracketContext::nambu(1, spec.lifted_dim());
    Ok(NambuSystem::new(ctx, hamiltonian, generators)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_builtin, BuiltinName, BuiltinParams};

    fn triplet() -> NambuSystem {
        make_builtin(BuiltinName::QuadraticTriplet, &BuiltinParams::default())
            .unwrap()
            .nambu
            .unwrap()
    }

    fn points() -> Vec<Vec<f64>> {
        (0..20)
            .map(|i| {
                let t = i as f64;
                vec![libm::sin(1.3 * t) + 0.3, libm::cos(0.7 * t) - 0.2, libm::sin(2.1 * t + 0.5)]
            })
            .collect()
    }

    fn sq(dim: usize, i: usize) -> ScalarField {
        ScalarField::with_gradient(dim, move |v| v[i] * v[i], move |v, g| {
            g.fill(0.0);
            g[i] = 2.0 * v[i];
        })
    }

    #[test]
    fn graph_lift_residual() {
        let spec = LiftSpec::graph(triplet(), vec![sq(3, 0)]).unwrap();
        assert!(verify_lift_conditions(&spec, &points()).unwrap() <= 1e-8);
    }

    #[test]
    fn wrong_candidate_is_detected() {
        let mut spec = LiftSpec::graph(triplet(), vec![sq(3, 0)]).unwrap();
        spec.candidates = vec![ScalarField::coordinate(4, 3)];
        assert!(verify_lift_conditions(&spec, &points()).unwrap() >= 0.1);
        assert!(matches!(
            lift_nambu_system(&spec, &points()),
            Err(LiftError::ConditionViolated { .. })
        ));
    }

    #[test]
    fn constant_extra_coordinate() {
        let spec = LiftSpec::graph(triplet(), vec![ScalarField::constant(3, 1.0)]).unwrap();
        assert_eq!(verify_lift_conditions(&spec, &points()).unwrap(), 0.0);
    }

    #[test]
    fn zero_lift_returns_source() {
        let src = triplet();
        let spec = LiftSpec::graph(src.clone(), Vec::new()).unwrap();
        let lifted = lift_nambu_system(&spec, &[]).unwrap();
        assert_eq!(lifted.dim(), 3);
        let x = [0.2, 0.9, -0.4];
        assert_eq!(lifted.hamiltonian().eval(&x), src.hamiltonian().eval(&x));
    }

    #[test]
    fn lifted_generators_pull_up() {
        let spec = LiftSpec::graph(triplet(), vec![sq(3, 0)]).unwrap();
        let lifted = lift_nambu_system(&spec, &points()).unwrap();
        assert_eq!(lifted.arity(), 4);
        assert_eq!(lifted.constraints().len(), 2);
        let x = [0.2, 0.9, -0.4];
        let y = spec.lift_point(&x);
        assert_eq!(lifted.hamiltonian().eval(&y), 2.0 * 0.9);
        assert!(lifted.constraints()[1].eval(&y).abs() < 1e-15);
    }
}
