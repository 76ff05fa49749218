use alloc::vec;
use alloc::vec::Vec;

use super::{GeneralizedNambuSystem, SystemError, VariableMap};
use crate::brackets::{poisson_bracket, BracketContext};
use crate::combinatorics::{factorial, levi_civita, signed_permutations};
use crate::fields::{determinant, gradient_into, jacobian_matrix, minor, ScalarField};

/// Sample points given either in canonical coordinates or on the multiplet
/// side. Multiplet samples are pulled back through the map's inverse and
/// pushed forward again, so every check runs on the embedded surface.
#[derive(Debug, Clone)]
pub enum SamplePoints {
    Canonical(Vec<Vec<f64>>),
    Multiplet(Vec<Vec<f64>>),
}

impl SamplePoints {
    fn canonical(&self, map: &VariableMap) -> Result<Vec<Vec<f64>>, SystemError> {
        match self {
            SamplePoints::Canonical(p) => Ok(p.clone()),
            SamplePoints::Multiplet(p) => p.iter().map(|x| map.inverse(x)).collect(),
        }
    }
}

/// Max residual of the induced-constraint conditions
/// `1/(N-2)! sum eps_{i1 i2 i3..iN} d(G_1..G_{N-2})/d(x_i3..x_iN) = {x_i1, x_i2}_PB`
/// over all sample points, multiplets and index pairs `i1 < i2`.
///
/// `constraints` are the `N - 2` local fields on one multiplet; every
/// multiplet of `map` is checked against them.
pub fn verify_induced_constraints(
    map: &VariableMap,
    constraints: &[ScalarField],
    points: &SamplePoints,
) -> Result<f64, SystemError> {
    let arity = map
        .multiplet_layout()
        .uniform_arity()
        .ok_or(SystemError::Invalid("map must produce equal-size multiplets"))?;
    if arity < 3 || constraints.len() + 2 != arity {
        return Err(SystemError::Invalid("need N - 2 constraints for an N-plet, N >= 3"));
    }
    if constraints.iter().any(|g| g.dim() != arity) {
        return Err(SystemError::Invalid("constraints act on a single multiplet"));
    }
    let width = map.multiplet_dim();
    let rows: Vec<usize> = (0..constraints.len()).collect();
    let norm = factorial(arity - 2);
    let mut worst: f64 = 0.0;
    for qp in points.canonical(map)? {
        let x = map.forward(&qp);
        let pb = map.bracket_matrix(&qp)?;
        for k in 0..map.multiplet_layout().subsystems() {
            let r = map.multiplet_layout().range(k);
            let local = &x[r.clone()];
            let mut grads = vec![0.0; constraints.len() * arity];
            for (row, g) in grads.chunks_mut(arity).zip(constraints) {
                gradient_into(g, local, row)?;
            }
            for i1 in 0..arity {
                for i2 in i1 + 1..arity {
                    let rest: Vec<usize> = (0..arity).filter(|&i| i != i1 && i != i2).collect();
                    let mut lhs = 0.0;
                    for (perm, _) in signed_permutations(&rest) {
                        let mut full = vec![i1, i2];
                        full.extend(&perm);
                        let eps = levi_civita(&full);
                        lhs += f64::from(eps) * minor(&grads, arity, &rows, &perm);
                    }
                    lhs /= norm;
                    let rhs = pb[(r.start + i1) * width + r.start + i2];
                    worst = worst.max(libm::fabs(lhs - rhs));
                }
            }
        }
    }
    Ok(worst)
}

/// Max `|{G, u}_PB|` over probes and points, with `G` (a field on the
/// multiplet space) pulled back to canonical coordinates.
pub fn verify_constraint_constancy(
    constraint: &ScalarField,
    probes: &[ScalarField],
    map: &VariableMap,
    points: &[Vec<f64>],
) -> Result<f64, SystemError> {
    if probes.is_empty() {
        return Err(SystemError::Invalid("no probes"));
    }
    if constraint.dim() != map.multiplet_dim() {
        return Err(SystemError::Invalid("constraint must act on the multiplet space"));
    }
    let pulled = map.pullback(constraint);
    let ctx = BracketContext::poisson(map.canonical_layout().subsystems());
    let mut worst: f64 = 0.0;
    for qp in points {
        for u in probes {
            worst = worst.max(libm::fabs(poisson_bracket(&pulled, u, qp, &ctx)?));
        }
    }
    Ok(worst)
}

/// Residuals of the three relation families tying the Poisson brackets of
/// `(x, z)` to `g_ab` and the constraint Jacobians, plus the largest bracket
/// between coordinates of different irreducible blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneralizedResiduals {
    pub xx: f64,
    pub xz: f64,
    pub zz: f64,
    pub cross: f64,
}

impl GeneralizedResiduals {
    pub fn max(&self) -> f64 {
        self.xx.max(self.xz).max(self.zz).max(self.cross)
    }
}

pub fn verify_generalized_conditions(
    gsys: &GeneralizedNambuSystem,
    map: &VariableMap,
    points: &[Vec<f64>],
) -> Result<GeneralizedResiduals, SystemError> {
    let dim = gsys.dim();
    if map.multiplet_dim() != dim {
        return Err(SystemError::Invalid("map must produce (x, z)"));
    }
    let xd = gsys.x_dim();
    let mut res = GeneralizedResiduals::default();
    for (sample, qp) in points.iter().enumerate() {
        let w = map.forward(qp);
        let pb = map.bracket_matrix(qp)?;
        let g = gsys.metric().eval(&w);
        let grads = jacobian_matrix(gsys.constraints(), &w)?;

        let mut owner = vec![usize::MAX; dim];
        for (bi, block) in gsys.blocks().iter().enumerate() {
            block.x.iter().for_each(|&a| owner[a] = bi);
            block.z.iter().for_each(|&s| owner[xd + s] = bi);
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if owner[i] != owner[j] {
                    res.cross = res.cross.max(libm::fabs(pb[i * dim + j]));
                }
            }
        }

        for block in gsys.blocks() {
            let rows = &block.constraints;
            let zcols: Vec<usize> = block.z.iter().map(|&s| xd + s).collect();
            let dz = minor(&grads, dim, rows, &zcols);
            if !dz.is_finite() || libm::fabs(dz) <= 1e-14 {
                return Err(SystemError::DegenerateZBlock {
                    sample,
                    determinant: dz,
                });
            }
            for &a in &block.x {
                for &b in &block.x {
                    let lhs = 0.5 * pb[a * dim + b];
                    res.xx = res.xx.max(libm::fabs(lhs - g[a * xd + b] * dz));
                }
            }
            for &a in &block.x {
                for (si, &zs) in zcols.iter().enumerate() {
                    let mut rhs = 0.0;
                    for &b in &block.x {
                        let mut cols = zcols.clone();
                        cols[si] = b;
                        rhs -= g[a * xd + b] * minor(&grads, dim, rows, &cols);
                    }
                    res.xz = res.xz.max(libm::fabs(0.5 * pb[a * dim + zs] - rhs));
                }
            }
            for si in 0..zcols.len() {
                for ti in si + 1..zcols.len() {
                    let mut rhs = 0.0;
                    for &a in &block.x {
                        for &b in &block.x {
                            let mut cols = zcols.clone();
                            cols[si] = a;
                            cols[ti] = b;
                            rhs += g[a * xd + b] * minor(&grads, dim, rows, &cols);
                        }
                    }
                    res.zz = res.zz.max(libm::fabs(pb[zcols[si] * dim + zcols[ti]] - rhs));
                }
            }
        }
    }
    Ok(res)
}

/// `g'_ab = sum_cd (dx'_a/dx_c)(dx'_b/dx_d) g_cd` at `at`, for a square
/// change of variables given as one field per new coordinate.
pub fn metric_pullback(metric: &[f64], change: &[ScalarField], at: &[f64]) -> Result<Vec<f64>, SystemError> {
    let k = change.len();
    if metric.len() != k * k || at.len() != k || change.iter().any(|f| f.dim() != k) {
        return Err(SystemError::Invalid("metric, change map and point must agree in size"));
    }
    let jac = jacobian_matrix(change, at)?;
    let det = determinant(&mut jac.clone(), k);
    if !det.is_finite() || libm::fabs(det) < 1e-14 {
        return Err(SystemError::NonInvertibleChange(det));
    }
    let mut tmp = vec![0.0; k * k];
    for a in 0..k {
        for d in 0..k {
            tmp[a * k + d] = (0..k).map(|c| jac[a * k + c] * metric[c * k + d]).sum();
        }
    }
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            out[a * k + b] = (0..k).map(|d| tmp[a * k + d] * jac[b * k + d]).sum();
        }
    }
    Ok(out)
}
