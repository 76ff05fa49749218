//! Right-hand sides of the Hamiltonian, Nambu, generalized Nambu and
//! least-action equations, a fixed-step integrator with optional tangent
//! flow, and trajectory comparison helpers.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::fields::{determinant, fd_step_scale, gradient_into, FieldError, Layout, Point, ScalarField};
use crate::systems::{GeneralizedNambuSystem, HamiltonianSystem, Monitor, NambuSystem, SystemError, VariableMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("fully degenerate chart: every bracket of the triplet vanishes")]
    DegenerateChart,
    #[error("least-action equations are defined for a single triplet")]
    NotATriplet,
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite right-hand side at the start point")]
    NonFiniteStart,
    #[error("integration truncated after step {0}")]
    Truncated(usize),
    #[error("tangent flow was not integrated (variational = false)")]
    NoTangentFlow,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Autonomous vector field `dx/dt = F(x)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError>;

    fn velocity(&self, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        let mut out = vec![0.0; self.dim()];
        self.eval(at, &mut out)?;
        Ok(out)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<(), DynamicsError> {
    if expected == found {
        Ok(())
    } else {
        Err(DynamicsError::DimensionMismatch { expected, found })
    }
}

/// `(dq_k/dt, dp_k/dt) = (dH/dp_k, -dH/dq_k)`.
pub fn hamiltonian_rhs(sys: &HamiltonianSystem, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    sys.velocity(at)
}

impl VectorField for HamiltonianSystem {
    fn dim(&self) -> usize {
        HamiltonianSystem::dim(self)
    }

    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        check_dim(self.dim(), at.len())?;
        gradient_into(self.hamiltonian(), at, out)?;
        for pair in out.chunks_mut(2) {
            let (dq, dp) = (pair[0], pair[1]);
            pair[0] = dp;
            pair[1] = -dq;
        }
        Ok(())
    }
}

/// `dx_i/dt = {x_i, H, G_1, ..., G_{N-2}}_NB`, summed over every bracket
/// block containing `x_i`.
pub fn nambu_rhs(nsys: &NambuSystem, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    nsys.velocity(at)
}

impl VectorField for NambuSystem {
    fn dim(&self) -> usize {
        NambuSystem::dim(self)
    }

    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        let d = self.dim();
        check_dim(d, at.len())?;
        let gens = self.generators();
        let mut rows = vec![0.0; gens.len() * d];
        for (row, g) in rows.chunks_mut(d).zip(&gens) {
            gradient_into(g, at, row)?;
        }
        out.fill(0.0);
        let k = self.arity() - 1;
        let mut m = vec![0.0; k * k];
        for block in self.context().blocks() {
            // cofactor expansion along the coordinate-projection row
            for (c, &axis) in block.iter().enumerate() {
                for r in 0..k {
                    let mut col = 0;
                    for (cc, &a) in block.iter().enumerate() {
                        if cc != c {
                            m[r * k + col] = rows[r * d + a];
                            col += 1;
                        }
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                out[axis] += sign * determinant(&mut m, k);
            }
        }
        Ok(())
    }
}

/// `df/dt = sum_ab g_ab d(f, H, G_1..G_m)/d(x_a, x_b, z_1..z_m)` per
/// irreducible block, with `f` each coordinate in turn.
pub fn generalized_nambu_rhs(gsys: &GeneralizedNambuSystem, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    gsys.velocity(at)
}

impl VectorField for GeneralizedNambuSystem {
    fn dim(&self) -> usize {
        GeneralizedNambuSystem::dim(self)
    }

    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        let d = self.dim();
        check_dim(d, at.len())?;
        let g = self.metric().eval(at);
        let xd = self.x_dim();
        let mut h = vec![0.0; d];
        gradient_into(self.hamiltonian(), at, &mut h)?;
        let mut grads = vec![0.0; self.constraints().len() * d];
        for (row, c) in grads.chunks_mut(d).zip(self.constraints()) {
            gradient_into(c, at, row)?;
        }
        out.fill(0.0);
        for block in self.blocks() {
            let k = block.z.len() + 1;
            let mut cols = vec![0usize; k + 1];
            for (zi, &s) in block.z.iter().enumerate() {
                cols[2 + zi] = self.z_axis(s);
            }
            let mut m = vec![0.0; k * k];
            for &a in &block.x {
                for &b in &block.x {
                    let gab = g[a * xd + b];
                    if gab == 0.0 {
                        continue;
                    }
                    cols[0] = a;
                    cols[1] = b;
                    for (c, &axis) in cols.iter().enumerate() {
                        for r in 0..k {
                            let src = if r == 0 { &h[..] } else { &grads[block.constraints[r - 1] * d..][..d] };
                            let mut col = 0;
                            for (cc, &ax) in cols.iter().enumerate() {
                                if cc != c {
                                    m[r * k + col] = src[ax];
                                    col += 1;
                                }
                            }
                        }
                        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                        out[axis] += gab * sign * determinant(&mut m, k);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Triplet equations from the action principle: each velocity component a
/// combination of `dH/dx_i` and the brackets `{x, y}`, `{y, z}`, `{z, x}`
/// evaluated at the canonical preimage of the point.
pub fn least_action_rhs(map: &VariableMap, hamiltonian: &ScalarField, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    if map.multiplet_dim() != 3 || map.canonical_dim() != 2 {
        return Err(DynamicsError::NotATriplet);
    }
    check_dim(3, at.len())?;
    let qp = map.inverse(at)?;
    let pb = map.bracket_matrix(&qp)?;
    let (xy, yz, zx) = (pb[1], pb[5], pb[6]);
    if [xy, yz, zx].iter().all(|v| libm::fabs(*v) <= 1e-14) {
        return Err(DynamicsError::DegenerateChart);
    }
    let mut h = [0.0; 3];
    gradient_into(hamiltonian, at, &mut h)?;
    Ok(vec![
        h[1] * xy - h[2] * zx,
        h[2] * yz - h[0] * xy,
        h[0] * zx - h[1] * yz,
    ])
}

/// Least-action triplet flow as a vector field.
#[derive(Debug, Clone)]
pub struct LeastActionFlow {
    pub map: VariableMap,
    pub hamiltonian: ScalarField,
}

impl VectorField for LeastActionFlow {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        out.copy_from_slice(&least_action_rhs(&self.map, &self.hamiltonian, at)?);
        Ok(())
    }
}

/// Vector field from a closure.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("dim", &self.dim).finish()
    }
}

impl FnField {
    pub fn new(dim: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        check_dim(self.dim, at.len())?;
        (self.f)(at, out);
        Ok(())
    }
}

/// Central-difference Jacobian `dF_i/dx_j`, row-major.
pub fn rhs_jacobian(rhs: &dyn VectorField, at: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let d = rhs.dim();
    check_dim(d, at.len())?;
    let mut jac = vec![0.0; d * d];
    let mut x = at.to_vec();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let scale = fd_step_scale();
    for j in 0..d {
        let h = scale * libm::fabs(at[j]).max(1.0);
        let (hi, lo) = (at[j] + h, at[j] - h);
        x[j] = hi;
        rhs.eval(&x, &mut plus)?;
        x[j] = lo;
        rhs.eval(&x, &mut minus)?;
        x[j] = at[j];
        let span = hi - lo;
        for i in 0..d {
            jac[i * d + j] = (plus[i] - minus[i]) / span;
        }
    }
    Ok(jac)
}

/// `|det(I + dt J) - 1|`: the change of the Jacobian bracket of the
/// coordinates across one explicit Euler step.
pub fn euler_step_bracket_defect(rhs: &dyn VectorField, at: &[f64], dt: f64) -> Result<f64, DynamicsError> {
    let d = rhs.dim();
    let mut m = rhs_jacobian(rhs, at)?;
    for v in m.iter_mut() {
        *v *= dt;
    }
    for i in 0..d {
        m[i * d + i] += 1.0;
    }
    Ok(libm::fabs(determinant(&mut m, d) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    ExplicitEuler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    /// Co-integrate the tangent flow `dM/dt = (dF/dx) M`, `M(0) = I`.
    pub variational: bool,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, steps: usize) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            steps,
            variational: false,
        }
    }

    pub fn with_variational(mut self, on: bool) -> Self {
        self.variational = on;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidConfig("dt must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(DynamicsError::InvalidConfig("steps must be positive"));
        }
        if !(self.dt * self.steps as f64).is_finite() {
            return Err(DynamicsError::InvalidConfig("dt * steps overflows"));
        }
        Ok(())
    }
}

/// Where a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub last_good: usize,
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    states: Vec<f64>,
    pub layout: Layout,
    /// One named series per monitor, aligned with `times`.
    pub diagnostics: Vec<(String, Vec<f64>)>,
    /// `det M` per step when the tangent flow was integrated.
    pub volume: Option<Vec<f64>>,
    pub truncated: Option<Truncation>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks(self.dim())
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn diagnostic(&self, name: &str) -> Option<&[f64]> {
        self.diagnostics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// `max_t |v(t)|` of a diagnostic.
    pub fn max_abs(&self, name: &str) -> Option<f64> {
        self.diagnostic(name)
            .map(|v| v.iter().fold(0.0_f64, |m, x| m.max(libm::fabs(*x))))
    }

    /// `max_t |v(t) - v(0)|` of a diagnostic.
    pub fn max_drift(&self, name: &str) -> Option<f64> {
        self.diagnostic(name).map(|v| {
            let v0 = v[0];
            v.iter().fold(0.0_f64, |m, x| m.max(libm::fabs(x - v0)))
        })
    }

    /// Builds a trajectory from explicit samples (used by readers).
    pub fn from_parts(
        times: Vec<f64>,
        states: Vec<f64>,
        layout: Layout,
        diagnostics: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DynamicsError> {
        check_dim(times.len() * layout.dim(), states.len())?;
        if diagnostics.iter().any(|(_, v)| v.len() != times.len()) {
            return Err(DynamicsError::InvalidConfig("diagnostic length differs from time axis"));
        }
        Ok(Self {
            times,
            states,
            layout,
            diagnostics,
            volume: None,
            truncated: None,
        })
    }

    /// States mapped pointwise (diagnostics dropped).
    pub fn map_states(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Trajectory {
        let mapped: Vec<Vec<f64>> = self.states().map(f).collect();
        let d = mapped.first().map_or(0, |s| s.len());
        Trajectory {
            times: self.times.clone(),
            states: mapped.into_iter().flatten().collect(),
            layout: Layout::single(d),
            diagnostics: Vec::new(),
            volume: None,
            truncated: self.truncated.clone(),
        }
    }

    /// Sup-norm distance between two trajectories on the same time grid.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64, DynamicsError> {
        check_dim(self.len(), other.len())?;
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .fold(0.0_f64, |m, (a, b)| m.max(libm::fabs(a - b))))
    }
}

fn step_field(rhs: &dyn VectorField, variational: bool, at: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
    let d = rhs.dim();
    rhs.eval(&at[..d], &mut out[..d])?;
    if variational {
        let j = rhs_jacobian(rhs, &at[..d])?;
        let m = &at[d..];
        let dm = &mut out[d..];
        for r in 0..d {
            for c in 0..d {
                dm[r * d + c] = (0..d).map(|k| j[r * d + k] * m[k * d + c]).sum();
            }
        }
    }
    Ok(())
}

/// Fixed-step integration. A non-finite state or a failed right-hand side
/// evaluation stops the run and marks it truncated.
pub fn integrate(
    rhs: &dyn VectorField,
    start: &Point,
    cfg: &IntegratorConfig,
    monitors: &[Monitor],
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    let d = rhs.dim();
    check_dim(d, start.coords().len())?;
    let v0 = rhs.velocity(start.coords())?;
    if v0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFiniteStart);
    }
    let aug = if cfg.variational { d + d * d } else { d };
    let mut y = vec![0.0; aug];
    y[..d].copy_from_slice(start.coords());
    if cfg.variational {
        for i in 0..d {
            y[d + i * d + i] = 1.0;
        }
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(cfg.steps + 1),
        states: Vec::with_capacity((cfg.steps + 1) * d),
        layout: start.layout().clone(),
        diagnostics: monitors
            .iter()
            .map(|m| (m.name.clone(), Vec::with_capacity(cfg.steps + 1)))
            .collect(),
        volume: cfg.variational.then(|| Vec::with_capacity(cfg.steps + 1)),
        truncated: None,
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[f64]| {
        traj.times.push(t);
        traj.states.extend_from_slice(&y[..d]);
        for ((_, series), m) in traj.diagnostics.iter_mut().zip(monitors) {
            series.push(m.field.eval(&y[..d]));
        }
        if let Some(vol) = traj.volume.as_mut() {
            let mut m = y[d..].to_vec();
            vol.push(determinant(&mut m, d));
        }
    };
    record(&mut traj, 0.0, &y);

    let dt = cfg.dt;
    let mut k1 = vec![0.0; aug];
    let mut k2 = vec![0.0; aug];
    let mut k3 = vec![0.0; aug];
    let mut k4 = vec![0.0; aug];
    let mut tmp = vec![0.0; aug];
    for step in 1..=cfg.steps {
        let result = (|| -> Result<(), DynamicsError> {
            step_field(rhs, cfg.variational, &y, &mut k1)?;
            match cfg.method {
                Method::ExplicitEuler => {
                    for i in 0..aug {
                        tmp[i] = y[i] + dt * k1[i];
                    }
                }
                Method::Rk4 => {
                    for i in 0..aug {
                        tmp[i] = y[i] + 0.5 * dt * k1[i];
                    }
                    step_field(rhs, cfg.variational, &tmp, &mut k2)?;
                    for i in 0..aug {
                        tmp[i] = y[i] + 0.5 * dt * k2[i];
                    }
                    step_field(rhs, cfg.variational, &tmp, &mut k3)?;
                    for i in 0..aug {
                        tmp[i] = y[i] + dt * k3[i];
                    }
                    step_field(rhs, cfg.variational, &tmp, &mut k4)?;
                    for i in 0..aug {
                        tmp[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
            }
            Ok(())
        })();
        let reason = match result {
            Err(e) => Some(alloc::format!("{e}")),
            Ok(()) if tmp.iter().any(|v| !v.is_finite()) => Some("non-finite state".into()),
            Ok(()) => None,
        };
        if let Some(reason) = reason {
            traj.truncated = Some(Truncation {
                last_good: step - 1,
                time: (step - 1) as f64 * dt,
                reason,
            });
            break;
        }
        y.copy_from_slice(&tmp);
        record(&mut traj, step as f64 * dt, &y);
    }
    Ok(traj)
}

/// `det M(t)` of the tangent flow. The step count is `t / cfg.dt` rounded
/// up, with the step shortened to land on `t`.
pub fn flow_volume_jacobian(
    rhs: &dyn VectorField,
    start: &Point,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, DynamicsError> {
    if !cfg.variational {
        return Err(DynamicsError::NoTangentFlow);
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(DynamicsError::InvalidConfig("t must be positive"));
    }
    let steps = libm::ceil(t / cfg.dt - 1e-9).max(1.0) as usize;
    let cfg = IntegratorConfig {
        dt: t / steps as f64,
        steps,
        ..*cfg
    };
    let traj = integrate(rhs, start, &cfg, &[])?;
    if let Some(tr) = &traj.truncated {
        return Err(DynamicsError::Truncated(tr.last_good));
    }
    Ok(*traj.volume.as_ref().and_then(|v| v.last()).ok_or(DynamicsError::NoTangentFlow)?)
}
