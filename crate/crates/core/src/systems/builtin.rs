//! Gallery of ready-made systems with closed-form constraints and exact
//! gradients.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::relativistic::{gauge_reduce_relativistic, EnergyBranch, RelativisticReduction};
use super::{
    ConstraintSpec, GeneralizedNambuSystem, HamiltonianSystem, InverseFn, MetricField, NambuSystem, SystemError,
    VariableMap,
};
use crate::brackets::BracketContext;
use crate::fields::{Layout, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinName {
    /// `x = (q^2 - p^2)/4, y = (q^2 + p^2)/4, z = qp/2` with
    /// `H = (q^2 + p^2)/2`.
    QuadraticTriplet,
    /// `(q, p, qp, q^3/3 + p^2/2)` with `H = (q^2 + p^2)/2`.
    QuartetExB,
    /// Quadratic triplet carrying `H = p^2/2m + m w^2 q^2/2`.
    HarmonicOscillatorTriplet,
    RelativisticA,
    RelativisticB,
    RelativisticC,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 6] = [
        BuiltinName::QuadraticTriplet,
        BuiltinName::QuartetExB,
        BuiltinName::HarmonicOscillatorTriplet,
        BuiltinName::RelativisticA,
        BuiltinName::RelativisticB,
        BuiltinName::RelativisticC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::QuadraticTriplet => "quadratic-triplet",
            BuiltinName::QuartetExB => "quartet-ex-b",
            BuiltinName::HarmonicOscillatorTriplet => "harmonic-oscillator-triplet",
            BuiltinName::RelativisticA => "relativistic-a",
            BuiltinName::RelativisticB => "relativistic-b",
            BuiltinName::RelativisticC => "relativistic-c",
        }
    }

    pub fn is_relativistic(self) -> bool {
        matches!(
            self,
            BuiltinName::RelativisticA | BuiltinName::RelativisticB | BuiltinName::RelativisticC
        )
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinName {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| SystemError::UnknownBuiltin(s.to_string()))
    }
}

/// Numeric parameters. `masses` and `frequencies` hold one entry per
/// subsystem or a single entry shared by all.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinParams {
    pub subsystems: usize,
    pub masses: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Particle mass for the relativistic systems.
    pub mass: f64,
    pub speed_of_light: f64,
    pub branch: EnergyBranch,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self {
            subsystems: 1,
            masses: vec![1.0],
            frequencies: vec![1.0],
            mass: 1.0,
            speed_of_light: 1.0,
            branch: EnergyBranch::Negative,
        }
    }
}

impl BuiltinParams {
    fn per_subsystem(values: &[f64], n: usize, what: &str) -> Result<Vec<f64>, SystemError> {
        let out = match values.len() {
            1 => vec![values[0]; n],
            len if len == n => values.to_vec(),
            len => {
                return Err(SystemError::InvalidParameter(alloc::format!(
                    "{what}: expected 1 or {n} values, got {len}"
                )))
            }
        };
        if let Some(bad) = out.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(SystemError::InvalidParameter(alloc::format!("{what} must be positive, got {bad}")));
        }
        Ok(out)
    }
}

/// Everything a built-in provides. `local_constraints` act on one multiplet
/// (for the relativistic systems, on the whole `(X, Y, Z)` point).
#[derive(Debug, Clone)]
pub struct BuiltinBundle {
    pub name: BuiltinName,
    pub hamiltonian: HamiltonianSystem,
    pub map: VariableMap,
    pub local_constraints: Vec<ScalarField>,
    pub nambu: Option<NambuSystem>,
    pub generalized: Option<GeneralizedNambuSystem>,
    pub reduction: Option<RelativisticReduction>,
    pub constraint_spec: Option<ConstraintSpec>,
}

impl BuiltinBundle {
    /// Coordinate labels of the multiplet space.
    pub fn coordinate_names(&self) -> Vec<String> {
        let n = self.hamiltonian.subsystems();
        let suffix = |k: usize| if n == 1 { String::new() } else { alloc::format!("{}", k + 1) };
        match self.name {
            BuiltinName::QuadraticTriplet | BuiltinName::HarmonicOscillatorTriplet => (0..n)
                .flat_map(|k| ["x", "y", "z"].map(|c| alloc::format!("{c}{}", suffix(k))))
                .collect(),
            BuiltinName::QuartetExB => (0..n)
                .flat_map(|k| {
                    (1..=4).map(move |i| {
                        if n == 1 {
                            alloc::format!("x{i}")
                        } else {
                            alloc::format!("x{i}_{}", k + 1)
                        }
                    })
                })
                .collect(),
            _ => ["X1", "X2", "X3", "Y1", "Y2", "Y3", "Z"].map(String::from).to_vec(),
        }
    }
}

fn field(
    dim: usize,
    eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
) -> ScalarField {
    ScalarField::with_gradient(dim, eval, grad)
}

fn quadratic_map() -> [ScalarField; 3] {
    [
        field(2, |v| (v[0] * v[0] - v[1] * v[1]) / 4.0, |v, g| {
            g[0] = v[0] / 2.0;
            g[1] = -v[1] / 2.0;
        }),
        field(2, |v| (v[0] * v[0] + v[1] * v[1]) / 4.0, |v, g| {
            g[0] = v[0] / 2.0;
            g[1] = v[1] / 2.0;
        }),
        field(2, |v| v[0] * v[1] / 2.0, |v, g| {
            g[0] = v[1] / 2.0;
            g[1] = v[0] / 2.0;
        }),
    ]
}

/// Branch `q >= 0` of the quadratic map; `p` takes the sign of `z`.
fn quadratic_inverse() -> InverseFn {
    Arc::new(|x: &[f64]| {
        let q = libm::sqrt((2.0 * (x[0] + x[1])).max(0.0));
        let p = libm::copysign(libm::sqrt((2.0 * (x[1] - x[0])).max(0.0)), x[2]);
        vec![q, p]
    })
}

fn quadratic_constraint() -> ScalarField {
    field(
        3,
        |x| 0.5 * (x[0] * x[0] - x[1] * x[1] + x[2] * x[2]),
        |x, g| {
            g[0] = x[0];
            g[1] = -x[1];
            g[2] = x[2];
        },
    )
}

/// `sum_k H_k(q_k, p_k)` with `H_k = p^2/2m_k + m_k w_k^2 q^2/2`.
fn oscillator_hamiltonian(masses: &[f64], freqs: &[f64]) -> ScalarField {
    let n = masses.len();
    let coeffs: Arc<[(f64, f64)]> = masses
        .iter()
        .zip(freqs)
        .map(|(&m, &w)| (m * w * w, 1.0 / m))
        .collect();
    let c2 = coeffs.clone();
    field(
        2 * n,
        move |v| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| 0.5 * (a * v[2 * k] * v[2 * k] + b * v[2 * k + 1] * v[2 * k + 1]))
                .sum()
        },
        move |v, g| {
            for (k, (a, b)) in c2.iter().enumerate() {
                g[2 * k] = a * v[2 * k];
                g[2 * k + 1] = b * v[2 * k + 1];
            }
        },
    )
}

/// `sum_k (y_k - x_k)/m_k + m_k w_k^2 (x_k + y_k)` on `n` triplets.
fn oscillator_triplet_hamiltonian(masses: &[f64], freqs: &[f64]) -> ScalarField {
    let n = masses.len();
    let coeffs: Arc<[(f64, f64)]> = masses
        .iter()
        .zip(freqs)
        .map(|(&m, &w)| (m * w * w - 1.0 / m, m * w * w + 1.0 / m))
        .collect();
    let c2 = coeffs.clone();
    field(
        3 * n,
        move |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| a * x[3 * k] + b * x[3 * k + 1])
                .sum()
        },
        move |_, g| {
            g.fill(0.0);
            for (k, (a, b)) in c2.iter().enumerate() {
                g[3 * k] = *a;
                g[3 * k + 1] = *b;
            }
        },
    )
}

fn quartet_map() -> [ScalarField; 4] {
    [
        ScalarField::coordinate(2, 0),
        ScalarField::coordinate(2, 1),
        field(2, |v| v[0] * v[1], |v, g| {
            g[0] = v[1];
            g[1] = v[0];
        }),
        field(2, |v| v[0] * v[0] * v[0] / 3.0 + v[1] * v[1] / 2.0, |v, g| {
            g[0] = v[0] * v[0];
            g[1] = v[1];
        }),
    ]
}

fn quartet_constraints() -> [ScalarField; 2] {
    [
        field(4, |x| x[2] - x[0] * x[1], |x, g| {
            g[0] = -x[1];
            g[1] = -x[0];
            g[2] = 1.0;
            g[3] = 0.0;
        }),
        field(
            4,
            |x| x[3] - (x[0] * x[0] * x[0] / 3.0 + x[1] * x[1] / 2.0),
            |x, g| {
                g[0] = -x[0] * x[0];
                g[1] = -x[1];
                g[2] = 0.0;
                g[3] = 1.0;
            },
        ),
    ]
}

/// `sum_k (x1_k^2 + x2_k^2)/2` on `n` quartets.
fn quartet_hamiltonian(n: usize) -> ScalarField {
    field(
        4 * n,
        move |x| (0..n).map(|k| 0.5 * (x[4 * k] * x[4 * k] + x[4 * k + 1] * x[4 * k + 1])).sum(),
        move |x, g| {
            g.fill(0.0);
            for k in 0..n {
                g[4 * k] = x[4 * k];
                g[4 * k + 1] = x[4 * k + 1];
            }
        },
    )
}

pub fn make_builtin(name: BuiltinName, params: &BuiltinParams) -> Result<BuiltinBundle, SystemError> {
    if name.is_relativistic() {
        return relativistic(name, params);
    }
    let n = params.subsystems;
    if n == 0 {
        return Err(SystemError::InvalidParameter("subsystem count must be positive".into()));
    }
    match name {
        BuiltinName::QuadraticTriplet | BuiltinName::HarmonicOscillatorTriplet => {
            let (masses, freqs) = if name == BuiltinName::QuadraticTriplet {
                (vec![1.0; n], vec![1.0; n])
            } else {
                (
                    BuiltinParams::per_subsystem(&params.masses, n, "mass")?,
                    BuiltinParams::per_subsystem(&params.frequencies, n, "frequency")?,
                )
            };
            let map = VariableMap::per_subsystem(n, &quadratic_map(), Some(quadratic_inverse()));
            let g = quadratic_constraint();
            let nambu = NambuSystem::per_subsystem(
                n,
                3,
                oscillator_triplet_hamiltonian(&masses, &freqs),
                core::slice::from_ref(&g),
            )?;
            Ok(BuiltinBundle {
                name,
                hamiltonian: HamiltonianSystem::new(n, oscillator_hamiltonian(&masses, &freqs))?,
                map,
                local_constraints: vec![g],
                nambu: Some(nambu),
                generalized: None,
                reduction: None,
                constraint_spec: None,
            })
        }
        BuiltinName::QuartetExB => {
            let inverse: InverseFn = Arc::new(|x: &[f64]| vec![x[0], x[1]]);
            let map = VariableMap::per_subsystem(n, &quartet_map(), Some(inverse));
            let gs = quartet_constraints().to_vec();
            let nambu = NambuSystem::per_subsystem(n, 4, quartet_hamiltonian(n), &gs)?;
            Ok(BuiltinBundle {
                name,
                hamiltonian: HamiltonianSystem::new(n, oscillator_hamiltonian(&vec![1.0; n], &vec![1.0; n]))?,
                map,
                local_constraints: gs,
                nambu: Some(nambu),
                generalized: None,
                reduction: None,
                constraint_spec: None,
            })
        }
        _ => unreachable!(),
    }
}

/// Canonical chart `(Q1, P1, Q2, P2, Q3, P3)` to `w = (X1, X2, X3, Y1, Y2, Y3, Z)`.
fn relativistic(name: BuiltinName, params: &BuiltinParams) -> Result<BuiltinBundle, SystemError> {
    if params.subsystems != 1 {
        return Err(SystemError::InvalidParameter(
            "the relativistic particle is a single system".into(),
        ));
    }
    let (m, c) = (params.mass, params.speed_of_light);
    let red = gauge_reduce_relativistic(m, c, params.branch)?;
    let s = params.branch.sign();
    let mc2 = m * m * c * c;
    let energy = move |v: &[f64]| s * libm::sqrt(v[1] * v[1] + v[3] * v[3] + v[5] * v[5] + mc2);
    // d P_0 / d P_i = P_i / P_0
    let energy_grad = move |v: &[f64], g: &mut [f64]| {
        let p0 = energy(v);
        g.fill(0.0);
        for i in 0..3 {
            g[2 * i + 1] = v[2 * i + 1] / p0;
        }
    };

    let mut outputs = Vec::with_capacity(7);
    for i in 0..3 {
        outputs.push(match name {
            BuiltinName::RelativisticC => field(
                6,
                move |v| 2.0 * energy(v) * v[2 * i],
                move |v, g| {
                    energy_grad(v, g);
                    let p0 = energy(v);
                    for x in g.iter_mut() {
                        *x *= 2.0 * v[2 * i];
                    }
                    g[2 * i] = 2.0 * p0;
                },
            ),
            _ => ScalarField::coordinate(6, 2 * i),
        });
    }
    for i in 0..3 {
        outputs.push(ScalarField::coordinate(6, 2 * i + 1));
    }
    outputs.push(match name {
        BuiltinName::RelativisticB => field(
            6,
            move |v| v[1] * v[1] + v[3] * v[3] + v[5] * v[5] + mc2,
            |v, g| {
                g.fill(0.0);
                for i in 0..3 {
                    g[2 * i + 1] = 2.0 * v[2 * i + 1];
                }
            },
        ),
        _ => field(6, energy, energy_grad),
    });

    let inverse: InverseFn = if name == BuiltinName::RelativisticC {
        Arc::new(|w: &[f64]| {
            let z2 = 2.0 * w[6];
            vec![w[0] / z2, w[3], w[1] / z2, w[4], w[2] / z2, w[5]]
        })
    } else {
        Arc::new(|w: &[f64]| vec![w[0], w[3], w[1], w[4], w[2], w[5]])
    };
    let map = VariableMap::new(3, Layout::single(7), outputs, Some(inverse))?;

    let y2 = |w: &[f64]| w[3] * w[3] + w[4] * w[4] + w[5] * w[5];
    let (h, g) = match name {
        BuiltinName::RelativisticA => (
            field(7, move |w| -c * w[6], move |_, g| {
                g.fill(0.0);
                g[6] = -c;
            }),
            field(
                7,
                move |w| w[6] - s * libm::sqrt(y2(w) + mc2),
                move |w, g| {
                    let r = libm::sqrt(y2(w) + mc2);
                    g.fill(0.0);
                    for i in 3..6 {
                        g[i] = -s * w[i] / r;
                    }
                    g[6] = 1.0;
                },
            ),
        ),
        BuiltinName::RelativisticB => (
            field(7, move |w| -c * s * libm::sqrt(w[6]), move |w, g| {
                g.fill(0.0);
                g[6] = -c * s * 0.5 / libm::sqrt(w[6]);
            }),
            field(
                7,
                move |w| w[6] - y2(w) - mc2,
                |w, g| {
                    g.fill(0.0);
                    for i in 3..6 {
                        g[i] = -2.0 * w[i];
                    }
                    g[6] = 1.0;
                },
            ),
        ),
        _ => (
            field(7, move |w| -c * w[6], move |_, g| {
                g.fill(0.0);
                g[6] = -c;
            }),
            field(
                7,
                move |w| w[6] * w[6] - y2(w) - mc2,
                |w, g| {
                    g.fill(0.0);
                    for i in 3..6 {
                        g[i] = -2.0 * w[i];
                    }
                    g[6] = 2.0 * w[6];
                },
            ),
        ),
    };

    let metric = if name == BuiltinName::RelativisticC {
        MetricField::new(6, 7, |w| {
            let mut m = vec![0.0; 36];
            let z2 = 2.0 * w[6] * w[6];
            for i in 0..3 {
                for j in 0..3 {
                    m[i * 6 + j] = -(w[i] * w[3 + j] - w[j] * w[3 + i]) / z2;
                }
                m[i * 6 + i + 3] = 0.5;
                m[(i + 3) * 6 + i] = -0.5;
            }
            m
        })
    } else {
        MetricField::canonical_pairs(3, 7)
    };
    let generalized = GeneralizedNambuSystem::new(6, 1, h.clone(), vec![g.clone()], metric)?;

    let nambu = if name == BuiltinName::RelativisticA {
        let ctx = BracketContext::from_blocks(7, vec![vec![0, 3, 6], vec![1, 4, 6], vec![2, 5, 6]])?;
        Some(NambuSystem::new(ctx, h, vec![g.clone()])?)
    } else {
        None
    };

    Ok(BuiltinBundle {
        name,
        hamiltonian: red.reduced.clone(),
        map,
        local_constraints: vec![g],
        nambu,
        generalized: Some(generalized),
        constraint_spec: Some(red.constraints.clone()),
        reduction: Some(red),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in BuiltinName::ALL {
            assert_eq!(b.as_str().parse::<BuiltinName>().unwrap(), b);
        }
        assert!(matches!("duffing".parse::<BuiltinName>(), Err(SystemError::UnknownBuiltin(_))));
    }

    #[test]
    fn quadratic_triplet_point() {
        let b = make_builtin(BuiltinName::QuadraticTriplet, &BuiltinParams::default()).unwrap();
        assert_eq!(b.map.forward(&[1.0, 0.0]), vec![0.25, 0.25, 0.0]);
        let g = &b.local_constraints[0];
        for qp in [[0.3, -1.2], [2.0, 5.0], [-1.0, 0.4]] {
            assert!(g.eval(&b.map.forward(&qp)).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_recovers_upper_half_plane() {
        let b = make_builtin(BuiltinName::QuadraticTriplet, &BuiltinParams::default()).unwrap();
        for qp in [[0.3, -1.2], [2.0, 5.0], [1.0, 0.0]] {
            let back = b.map.inverse(&b.map.forward(&qp)).unwrap();
            assert!((back[0] - qp[0]).abs() < 1e-12 && (back[1] - qp[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillator_triplet_matches_hamiltonian() {
        let p = BuiltinParams {
            subsystems: 2,
            masses: vec![2.0, 0.5],
            frequencies: vec![3.0],
            ..Default::default()
        };
        let b = make_builtin(BuiltinName::HarmonicOscillatorTriplet, &p).unwrap();
        let qp = [0.3, -0.7, 1.1, 0.2];
        let ht = b.nambu.as_ref().unwrap().hamiltonian().eval(&b.map.forward(&qp));
        assert!((ht - b.hamiltonian.hamiltonian().eval(&qp)).abs() < 1e-13);
    }

    #[test]
    fn rejects_non_positive_mass() {
        let p = BuiltinParams {
            masses: vec![-1.0],
            ..Default::default()
        };
        assert!(matches!(
            make_builtin(BuiltinName::HarmonicOscillatorTriplet, &p),
            Err(SystemError::InvalidParameter(_))
        ));
        let p = BuiltinParams {
            frequencies: vec![0.0],
            ..Default::default()
        };
        assert!(make_builtin(BuiltinName::HarmonicOscillatorTriplet, &p).is_err());
        let p = BuiltinParams {
            mass: 0.0,
            ..Default::default()
        };
        assert!(make_builtin(BuiltinName::RelativisticA, &p).is_err());
    }

    #[test]
    fn relativistic_constraints_on_shell() {
        for name in [BuiltinName::RelativisticA, BuiltinName::RelativisticB, BuiltinName::RelativisticC] {
            let b = make_builtin(name, &BuiltinParams::default()).unwrap();
            let qp = [0.4, 1.5, -0.3, 0.2, 2.0, -0.8];
            let w = b.map.forward(&qp);
            assert!(b.local_constraints[0].eval(&w).abs() < 1e-12, "{name}");
            let back = b.map.inverse(&w).unwrap();
            for (a, e) in back.iter().zip(qp) {
                assert!((a - e).abs() < 1e-12);
            }
            let h = b.generalized.as_ref().unwrap().hamiltonian().eval(&w);
            assert!((h - b.hamiltonian.hamiltonian().eval(&qp)).abs() < 1e-12);
        }
    }
}
