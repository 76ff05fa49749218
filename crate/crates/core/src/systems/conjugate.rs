//! Coordinates `X_a` defined by quadrature, `X_a = int 2 g_ab dG/dZ dQ`,
//! so that `{X_a, P}/2 = g_ab dG/dZ` holds with `P` the momentum conjugate
//! to the integration axis.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use super::{MetricField, SystemError};
use crate::fields::{jacobian_matrix, minor, ScalarField};
use crate::quadrature::adaptive_gauss_kronrod;

/// How one output coordinate is built.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePath {
    /// Slot of the constructed coordinate in `w`.
    pub target: usize,
    /// Slot (in the `x` block) of its partner `b` in `g_ab`.
    pub partner: usize,
    /// Canonical axis integrated over.
    pub axis: usize,
    /// Value of the axis where the coordinate is zero.
    pub origin: f64,
    /// Tabulation range and node count for the cached interpolant.
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

type Integrand = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ConjugateCoordinate {
    path: ConjugatePath,
    integrand: Integrand,
    dim: usize,
    table: Option<Table>,
}

#[derive(Debug, Clone)]
struct Table {
    base: Vec<f64>,
    xs: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl fmt::Debug for ConjugateCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConjugateCoordinate")
            .field("path", &self.path)
            .field("tabulated", &self.table.is_some())
            .finish()
    }
}

const QUAD_TOL: f64 = 1e-13;

impl ConjugateCoordinate {
    pub fn path(&self) -> &ConjugatePath {
        &self.path
    }

    /// Integrand `2 g_ab det dG/dZ` at a canonical point.
    pub fn integrand(&self, qp: &[f64]) -> f64 {
        (self.integrand)(qp)
    }

    /// Cumulative quadrature from the origin to `qp[axis]`, other
    /// coordinates held fixed.
    pub fn eval(&self, qp: &[f64]) -> Result<f64, SystemError> {
        if let Some(t) = &self.table {
            let same_base = t
                .base
                .iter()
                .enumerate()
                .all(|(i, &b)| i == self.path.axis || b == qp[i]);
            let s = qp[self.path.axis];
            if same_base && s >= t.xs[0] && s <= t.xs[t.xs.len() - 1] {
                return Ok(t.interpolate(s));
            }
        }
        self.integrate(qp, qp[self.path.axis])
    }

    fn integrate(&self, qp: &[f64], to: f64) -> Result<f64, SystemError> {
        let axis = self.path.axis;
        let cell = core::cell::RefCell::new(qp.to_vec());
        let g = |s: f64| {
            let mut p = cell.borrow_mut();
            p[axis] = s;
            (self.integrand)(&p)
        };
        adaptive_gauss_kronrod(&g, self.path.origin, to, QUAD_TOL).map_err(|e| SystemError::SingularIntegrand(e.0))
    }

    /// Caches values on `nodes` points of `[lower, upper]` through `base`;
    /// later evaluations on that line interpolate with cubic Hermite
    /// polynomials.
    pub fn tabulate(mut self, base: &[f64]) -> Result<Self, SystemError> {
        let p = &self.path;
        let nodes = p.nodes.max(2);
        let xs: Vec<f64> = (0..nodes)
            .map(|i| p.lower + (p.upper - p.lower) * i as f64 / (nodes - 1) as f64)
            .collect();
        let mut values = Vec::with_capacity(nodes);
        let mut slopes = Vec::with_capacity(nodes);
        let mut point = base.to_vec();
        for &s in &xs {
            values.push(self.integrate(base, s)?);
            point[p.axis] = s;
            let d = self.integrand(&point);
            if !d.is_finite() {
                return Err(SystemError::SingularIntegrand(s));
            }
            slopes.push(d);
        }
        self.table = Some(Table {
            base: base.to_vec(),
            xs,
            values,
            slopes,
        });
        Ok(self)
    }

    /// As a field on the canonical chart (derivatives by finite
    /// differences).
    pub fn as_field(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::new(self.dim, move |qp| me.eval(qp).unwrap_or(f64::NAN))
    }
}

impl Table {
    fn interpolate(&self, s: f64) -> f64 {
        let n = self.xs.len();
        let h = self.xs[1] - self.xs[0];
        let i = (((s - self.xs[0]) / h) as usize).min(n - 2);
        let t = (s - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[i] + h10 * h * self.slopes[i] + h01 * self.values[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Builds one coordinate per path. `chart` gives `w(q, p)` for every slot
/// the integrands read; the slots being constructed are fed as 0, so the
/// constraint Jacobian and `g_ab` must not depend on them.
pub fn construct_conjugate_coordinates(
    constraints: &[ScalarField],
    metric: &MetricField,
    z_axes: &[usize],
    chart: &[ScalarField],
    paths: &[ConjugatePath],
) -> Result<Vec<ConjugateCoordinate>, SystemError> {
    if constraints.len() != z_axes.len() || constraints.is_empty() {
        return Err(SystemError::Invalid("one z axis per constraint"));
    }
    let wdim = metric.dim();
    if chart.len() != wdim || constraints.iter().any(|g| g.dim() != wdim) {
        return Err(SystemError::Invalid("chart and constraints must cover w"));
    }
    let dim = chart.first().map(|f| f.dim()).unwrap_or(0);
    let targets: Arc<[usize]> = paths.iter().map(|p| p.target).collect();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        if p.axis >= dim || p.target >= metric.size() || p.partner >= metric.size() {
            return Err(SystemError::Invalid("path indices out of range"));
        }
        let constraints: Arc<[ScalarField]> = constraints.into();
        let chart: Arc<[ScalarField]> = chart.into();
        let metric = metric.clone();
        let z_axes = z_axes.to_vec();
        let targets = targets.clone();
        let (a, b, size) = (p.target, p.partner, metric.size());
        let rows: Vec<usize> = (0..constraints.len()).collect();
        let integrand: Integrand = Arc::new(move |qp: &[f64]| {
            let mut w: Vec<f64> = chart.iter().map(|f| f.eval(qp)).collect();
            for &t in targets.iter() {
                w[t] = 0.0;
            }
            let Ok(jac) = jacobian_matrix(&constraints, &w) else {
                return f64::NAN;
            };
            let det = minor(&jac, w.len(), &rows, &z_axes);
            2.0 * metric.eval(&w)[a * size + b] * det
        });
        out.push(ConjugateCoordinate {
            path: p.clone(),
            integrand,
            dim,
            table: None,
        });
    }
    Ok(out)
}
