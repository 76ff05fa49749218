//! JSON scenario files.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use nambu_core::fields::{Layout, ScalarField};
use nambu_core::systems::{
    make_builtin, BuiltinBundle, BuiltinName, BuiltinParams, EnergyBranch, GeneralizedNambuSystem,
    HamiltonianSystem, NambuSystem, VariableMap,
};
use nambu_core::BracketContext;

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Verify,
    Partition,
    Lift,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Verify => "verify",
            Task::Partition => "partition",
            Task::Lift => "lift",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSpec,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Residual threshold for verify and lift, and drift threshold for
    /// simulate when given.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub simulate: Option<SimulateCfg>,
    #[serde(default)]
    pub verify: Option<VerifyCfg>,
    #[serde(default)]
    pub partition: Option<PartitionCfg>,
    #[serde(default)]
    pub lift: Option<LiftCfg>,
    #[serde(default)]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Name(String),
    Builtin {
        builtin: String,
        #[serde(default)]
        params: ParamsCfg,
    },
    Inline {
        inline: InlineSystem,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsCfg {
    pub subsystems: Option<usize>,
    pub masses: Option<Vec<f64>>,
    pub frequencies: Option<Vec<f64>>,
    pub mass: Option<f64>,
    pub speed_of_light: Option<f64>,
    pub branch: Option<BranchCfg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchCfg {
    Negative,
    Positive,
}

/// A system written out as expressions. `canonical` lists `q1, p1, q2, p2,
/// ...`; the optional multiplet part describes one Nambu block.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    pub canonical: Vec<String>,
    pub hamiltonian: String,
    #[serde(default)]
    pub multiplet: Option<InlineMultiplet>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMultiplet {
    pub coordinates: Vec<String>,
    /// One expression in the canonical names per multiplet coordinate.
    pub map: Vec<String>,
    /// Expressions in the multiplet names.
    pub hamiltonian: String,
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    Hamiltonian,
    #[default]
    Nambu,
    Generalized,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub dt: f64,
    pub steps: usize,
    /// Canonical start `(q1, p1, ...)`.
    pub start: Vec<f64>,
    #[serde(default)]
    pub flow: Flow,
    #[serde(default)]
    pub variational: bool,
    /// Keep every n-th state in the CSV.
    #[serde(default = "one")]
    pub every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCfg {
    #[serde(default = "hundred")]
    pub samples: usize,
    /// Canonical samples are drawn from `[-range, range]` per axis.
    #[serde(default = "two")]
    pub range: f64,
}

impl Default for VerifyCfg {
    fn default() -> Self {
        Self {
            samples: hundred(),
            range: two(),
        }
    }
}

fn hundred() -> usize {
    100
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorCfg {
    #[default]
    TensorQuadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionCfg {
    pub beta: f64,
    #[serde(default)]
    pub estimator: EstimatorCfg,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub level: Option<u32>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftCfg {
    /// Expressions in the multiplet names for the new coordinates.
    pub extras: Vec<String>,
    #[serde(default)]
    pub names: Option<Vec<String>>,
    #[serde(default = "twenty")]
    pub samples: usize,
    #[serde(default = "two")]
    pub range: f64,
    #[serde(default)]
    pub simulate: Option<SimulateCfg>,
}

fn twenty() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub dir: Option<PathBuf>,
    pub report: Option<String>,
    pub trajectory: Option<String>,
}

impl Scenario {
    pub fn from_str_at(text: &str, path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_str_at(&text, path)
    }
}

/// Everything the tasks need from a system.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub label: String,
    pub builtin: Option<BuiltinName>,
    pub params: BuiltinParams,
    pub hamiltonian: HamiltonianSystem,
    pub map: Option<VariableMap>,
    pub local_constraints: Vec<ScalarField>,
    pub nambu: Option<NambuSystem>,
    pub generalized: Option<GeneralizedNambuSystem>,
    pub canonical_names: Vec<String>,
    pub multiplet_names: Vec<String>,
}

fn parse_field(src: &str, names: &[String], field: &str) -> Result<ScalarField, CliError> {
    Expr::parse(src, names)
        .map(Expr::into_field)
        .map_err(|source| CliError::Expression {
            field: field.to_string(),
            source,
        })
}

fn check_names(names: &[String], what: &str) -> Result<(), CliError> {
    for (i, n) in names.iter().enumerate() {
        let ok = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && n != "sqrt";
        if !ok {
            return Err(CliError::Scenario(format!("{what}: `{n}` is not a valid coordinate name")));
        }
        if names[..i].contains(n) {
            return Err(CliError::Scenario(format!("{what}: duplicate coordinate `{n}`")));
        }
    }
    Ok(())
}

impl SystemSpec {
    pub fn load(&self) -> Result<LoadedSystem, CliError> {
        match self {
            SystemSpec::Name(name) => load_builtin(name, &ParamsCfg::default()),
            SystemSpec::Builtin { builtin, params } => load_builtin(builtin, params),
            SystemSpec::Inline { inline } => load_inline(inline),
        }
    }
}

fn load_builtin(name: &str, cfg: &ParamsCfg) -> Result<LoadedSystem, CliError> {
    let which = BuiltinName::from_str(name)?;
    let mut params = BuiltinParams::default();
    if let Some(v) = cfg.subsystems {
        params.subsystems = v;
    }
    if let Some(v) = &cfg.masses {
        params.masses = v.clone();
    }
    if let Some(v) = &cfg.frequencies {
        params.frequencies = v.clone();
    }
    if let Some(v) = cfg.mass {
        params.mass = v;
    }
    if let Some(v) = cfg.speed_of_light {
        params.speed_of_light = v;
    }
    if let Some(b) = cfg.branch {
        params.branch = match b {
            BranchCfg::Negative => EnergyBranch::Negative,
            BranchCfg::Positive => EnergyBranch::Positive,
        };
    }
    let b: BuiltinBundle = make_builtin(which, &params)?;
    let n = b.hamiltonian.subsystems();
    let canonical_names = (0..n)
        .flat_map(|k| {
            if which.is_relativistic() {
                [format!("Q{}", k + 1), format!("P{}", k + 1)]
            } else if n == 1 {
                ["q".to_string(), "p".to_string()]
            } else {
                [format!("q{}", k + 1), format!("p{}", k + 1)]
            }
        })
        .collect();
    Ok(LoadedSystem {
        label: which.as_str().to_string(),
        builtin: Some(which),
        multiplet_names: b.coordinate_names(),
        params,
        hamiltonian: b.hamiltonian,
        map: Some(b.map),
        local_constraints: b.local_constraints,
        nambu: b.nambu,
        generalized: b.generalized,
        canonical_names,
    })
}

fn load_inline(s: &InlineSystem) -> Result<LoadedSystem, CliError> {
    check_names(&s.canonical, "inline.canonical")?;
    if s.canonical.is_empty() || !s.canonical.len().is_multiple_of(2) {
        return Err(CliError::Scenario("inline.canonical needs q, p pairs".into()));
    }
    let n = s.canonical.len() / 2;
    let h = parse_field(&s.hamiltonian, &s.canonical, "inline.hamiltonian")?;
    let hamiltonian = HamiltonianSystem::new(n, h)?;
    let mut out = LoadedSystem {
        label: "inline".into(),
        builtin: None,
        params: BuiltinParams::default(),
        hamiltonian,
        map: None,
        local_constraints: Vec::new(),
        nambu: None,
        generalized: None,
        canonical_names: s.canonical.clone(),
        multiplet_names: Vec::new(),
    };
    let Some(m) = &s.multiplet else {
        return Ok(out);
    };
    check_names(&m.coordinates, "inline.multiplet.coordinates")?;
    let arity = m.coordinates.len();
    if m.map.len() != arity {
        return Err(CliError::Scenario(format!(
            "inline.multiplet.map: {} expressions for {arity} coordinates",
            m.map.len()
        )));
    }
    if arity < 3 || m.constraints.len() + 2 != arity {
        return Err(CliError::Scenario(format!(
            "inline.multiplet: a {arity}-plet needs {} constraints, got {}",
            arity.saturating_sub(2),
            m.constraints.len()
        )));
    }
    let outputs = m
        .map
        .iter()
        .enumerate()
        .map(|(i, e)| parse_field(e, &s.canonical, &format!("inline.multiplet.map[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let constraints = m
        .constraints
        .iter()
        .enumerate()
        .map(|(i, e)| parse_field(e, &m.coordinates, &format!("inline.multiplet.constraints[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let nh = parse_field(&m.hamiltonian, &m.coordinates, "inline.multiplet.hamiltonian")?;
    out.map = Some(VariableMap::new(n, Layout::single(arity), outputs, None)?);
    out.nambu = Some(NambuSystem::new(BracketContext::nambu(1, arity), nh, constraints.clone())?);
    out.local_constraints = constraints;
    out.multiplet_names = m.coordinates.clone();
    Ok(out)
}
