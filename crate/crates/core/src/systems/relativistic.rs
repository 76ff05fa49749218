//! Free relativistic particle: first class mass-shell constraint, gauge
//! condition `q^0 = c tau`, and the reduced three-doublet system.

use alloc::vec::Vec;

use super::{ConstraintSpec, HamiltonianSystem, SystemError};
use crate::fields::ScalarField;

/// Which root of the mass shell `P_0^2 = P^2 + m^2 c^2` is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyBranch {
    /// `P_0 = -sqrt(P^2 + m^2 c^2)`; the reduced Hamiltonian `K = -c P_0`
    /// is the positive free-particle energy.
    #[default]
    Negative,
    Positive,
}

impl EnergyBranch {
    pub fn sign(self) -> f64 {
        match self {
            EnergyBranch::Negative => -1.0,
            EnergyBranch::Positive => 1.0,
        }
    }
}

/// Result of fixing the gauge and solving the constraint for `P_0`.
///
/// The reduced chart is `(Q^1, P_1, Q^2, P_2, Q^3, P_3)`; the extended chart
/// used by `phi`, `psi` and `constraints` is `(q^0, p_0, q^1, p_1, ...)`.
#[derive(Debug, Clone)]
pub struct RelativisticReduction {
    pub mass: f64,
    pub c: f64,
    pub branch: EnergyBranch,
    /// `K = -c P_0(P)`.
    pub reduced: HamiltonianSystem,
    /// `P^mu P_mu - m^2 c^2` with signature `(+, -, -, -)`.
    pub phi: ScalarField,
    /// `P_0 -+ sqrt(P^2 + m^2 c^2)`, zero on the chosen branch.
    pub psi: ScalarField,
    /// `phi` with the gauge condition `chi = q^0 - c tau` at `tau = 0`.
    pub constraints: ConstraintSpec,
}

impl RelativisticReduction {
    /// `P_0` on the chosen branch.
    pub fn energy_component(&self, momentum: &[f64]) -> f64 {
        let mc = self.mass * self.c;
        let p2: f64 = momentum.iter().map(|p| p * p).sum();
        self.branch.sign() * libm::sqrt(p2 + mc * mc)
    }

    /// Reduced point to the extended chart, with `Q^0 = 0` and `P_0` on
    /// the branch.
    pub fn extend(&self, qp: &[f64]) -> Vec<f64> {
        let momentum = [qp[1], qp[3], qp[5]];
        let mut out = Vec::with_capacity(8);
        out.push(0.0);
        out.push(self.energy_component(&momentum));
        out.extend_from_slice(&qp[..6]);
        out
    }
}

pub fn gauge_reduce_relativistic(mass: f64, c: f64, branch: EnergyBranch) -> Result<RelativisticReduction, SystemError> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(SystemError::InvalidParameter(alloc::format!("mass must be positive, got {mass}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(SystemError::InvalidParameter(alloc::format!("speed of light must be positive, got {c}")));
    }
    let mc2 = mass * mass * c * c;
    let s = branch.sign();

    let k = ScalarField::with_gradient(
        6,
        move |x| -c * s * libm::sqrt(x[1] * x[1] + x[3] * x[3] + x[5] * x[5] + mc2),
        move |x, g| {
            let r = libm::sqrt(x[1] * x[1] + x[3] * x[3] + x[5] * x[5] + mc2);
            g.fill(0.0);
            for i in 0..3 {
                g[2 * i + 1] = -c * s * x[2 * i + 1] / r;
            }
        },
    );
    let phi = ScalarField::with_gradient(
        8,
        move |x| x[1] * x[1] - x[3] * x[3] - x[5] * x[5] - x[7] * x[7] - mc2,
        |x, g| {
            g.fill(0.0);
            g[1] = 2.0 * x[1];
            for i in 1..4 {
                g[2 * i + 1] = -2.0 * x[2 * i + 1];
            }
        },
    );
    let psi = ScalarField::with_gradient(
        8,
        move |x| x[1] - s * libm::sqrt(x[3] * x[3] + x[5] * x[5] + x[7] * x[7] + mc2),
        move |x, g| {
            let r = libm::sqrt(x[3] * x[3] + x[5] * x[5] + x[7] * x[7] + mc2);
            g.fill(0.0);
            g[1] = 1.0;
            for i in 1..4 {
                g[2 * i + 1] = -s * x[2 * i + 1] / r;
            }
        },
    );
    let chi = ScalarField::coordinate(8, 0);
    Ok(RelativisticReduction {
        mass,
        c,
        branch,
        reduced: HamiltonianSystem::new(3, k)?,
        constraints: ConstraintSpec::new(alloc::vec![phi.clone()], alloc::vec![chi])?,
        phi,
        psi,
    })
}
