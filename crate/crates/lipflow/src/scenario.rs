//! Scenario files: a region, named fields and functions, and a list of checks.
//!
//! The JSON schema is strict. Unknown keys are rejected, every error names
//! the offending path, and names referenced by checks must be defined.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lipflow_core::expr::ParseError;
use lipflow_core::field::{Cuboid, Region, VectorField};
use lipflow_core::flow::{IntegratorConfig, JacobianMode};
use lipflow_core::theorems::CheckSettings;
use lipflow_core::Expression;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: undefined {what} `{name}`")]
    Undefined {
        path: String,
        what: &'static str,
        name: String,
    },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    region: RawRegion,
    fields: BTreeMap<String, RawField>,
    functions: BTreeMap<String, String>,
    checks: Vec<RawCheck>,
    #[serde(default)]
    output: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default)]
    sub: Option<RawBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    components: Vec<String>,
    lipschitz: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    kind: String,
    #[serde(default)]
    name: Option<String>,
    args: Map<String, Value>,
    t_sequence: Vec<f64>,
    threshold: f64,
}

/// Numerical knobs accepted by every check kind.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    /// One value for every axis, or one per axis.
    pub resolution: Option<Resolution>,
    pub time_substeps: Option<usize>,
    pub bumps_per_axis: Option<usize>,
    pub reconstruction_per_axis: Option<usize>,
    pub reconstruction_tolerance: Option<f64>,
    pub h_div: Option<f64>,
    pub trajectory_samples: Option<usize>,
    pub seed: Option<u64>,
    pub base_step: Option<f64>,
    pub tolerance: Option<f64>,
    pub jacobian_mode: Option<ModeName>,
}

const TUNING_KEYS: &[&str] = &[
    "resolution",
    "time_substeps",
    "bumps_per_axis",
    "reconstruction_per_axis",
    "reconstruction_tolerance",
    "h_div",
    "trajectory_samples",
    "seed",
    "base_step",
    "tolerance",
    "jacobian_mode",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Variational,
    ForwardDifference,
}

impl Tuning {
    /// Grid resolution for a `dim`-dimensional region: 2000, 200 and 40
    /// per axis in one, two and three dimensions unless overridden.
    pub fn resolution(&self, dim: usize) -> Vec<usize> {
        match &self.resolution {
            Some(Resolution::Uniform(r)) => vec![*r; dim],
            Some(Resolution::PerAxis(r)) => r.clone(),
            None => vec![default_resolution(dim); dim],
        }
    }

    pub fn settings(&self, threshold: f64) -> CheckSettings {
        let d = CheckSettings::default();
        let integrator = IntegratorConfig {
            base_step: self.base_step.unwrap_or(d.integrator.base_step),
            tolerance: self.tolerance.unwrap_or(d.integrator.tolerance),
            jacobian_mode: match self.jacobian_mode {
                Some(ModeName::ForwardDifference) => JacobianMode::ForwardDifference,
                Some(ModeName::Variational) | None => JacobianMode::Variational,
            },
            ..d.integrator
        };
        CheckSettings {
            threshold: Some(threshold),
            integrator,
            h_div: self.h_div.unwrap_or(d.h_div),
            bumps_per_axis: self.bumps_per_axis.unwrap_or(d.bumps_per_axis),
            reconstruction_per_axis: self.reconstruction_per_axis.or(d.reconstruction_per_axis),
            reconstruction_tolerance: self
                .reconstruction_tolerance
                .unwrap_or(d.reconstruction_tolerance),
            trajectory_samples: self.trajectory_samples.unwrap_or(d.trajectory_samples),
            time_substeps: self.time_substeps.or(d.time_substeps),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    fn validate(&self, dim: usize, path: &str) -> Result<(), ScenarioError> {
        let res = self.resolution(dim);
        if res.len() != dim || res.iter().any(|&r| r < 2) {
            return Err(schema(
                format!("{path}.resolution"),
                format!("need {dim} value(s), each at least 2"),
            ));
        }
        let positive = [
            ("h_div", self.h_div),
            ("base_step", self.base_step),
            ("tolerance", self.tolerance),
            ("reconstruction_tolerance", self.reconstruction_tolerance),
        ];
        for (key, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(schema(
                        format!("{path}.{key}"),
                        "must be positive and finite",
                    ));
                }
            }
        }
        if self.tolerance.is_some_and(|t| t >= 1.0) {
            return Err(schema(format!("{path}.tolerance"), "must be below 1"));
        }
        let counts = [
            ("time_substeps", self.time_substeps),
            ("bumps_per_axis", self.bumps_per_axis),
            ("reconstruction_per_axis", self.reconstruction_per_axis),
            ("trajectory_samples", self.trajectory_samples),
        ];
        for (key, v) in counts {
            if v == Some(0) {
                return Err(schema(format!("{path}.{key}"), "must be at least 1"));
            }
        }
        if self.reconstruction_per_axis == Some(1) {
            return Err(schema(
                format!("{path}.reconstruction_per_axis"),
                "must be at least 2",
            ));
        }
        Ok(())
    }
}

pub fn default_resolution(dim: usize) -> usize {
    match dim {
        1 => 2000,
        2 => 200,
        3 => 40,
        4 => 12,
        _ => 6,
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// What a check computes, with the names it refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckKind {
    MainEquivalence {
        field: String,
        f: String,
        g: String,
    },
    DqDistributionLimit {
        field: String,
        f: String,
        bump: BumpSpec,
    },
    /// Evaluated at `±t` for `t` in the sequence, and at 0.
    JacobianBounds {
        field: String,
        points: Option<Vec<Vec<f64>>>,
        samples: usize,
    },
    WeakstarDivergence {
        field: String,
        bumps: Vec<BumpSpec>,
    },
    Semigroup {
        field: String,
        f: String,
        pairs: Vec<(f64, f64)>,
    },
    /// Pairs `(t, h)` range over the square of the sequence.
    Commutation {
        field: String,
        f: String,
    },
    UpperGradient {
        field: String,
        f: String,
        h: String,
    },
    System {
        fields: Vec<String>,
        f: String,
        h: String,
        coefficients: usize,
        coefficient_vectors: Option<Vec<Vec<f64>>>,
    },
    CutoffLocalization {
        field: String,
        f: String,
        g: String,
        bump: BumpSpec,
    },
    LebesguePoints {
        field: String,
        f: String,
        points: Vec<Vec<f64>>,
        exceptional: Vec<bool>,
    },
    /// The family is `{Δ_t f : t in the sequence}`.
    UniformIntegrability {
        field: String,
        f: String,
        deltas: Vec<f64>,
    },
}

pub const CHECK_KINDS: &[&str] = &[
    "main_equivalence",
    "dq_distribution_limit",
    "jacobian_bounds",
    "weakstar_divergence",
    "semigroup",
    "commutation",
    "upper_gradient",
    "system",
    "cutoff_localization",
    "lebesgue_points",
    "uniform_integrability",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    /// Unique within the scenario; used in report file names.
    pub name: String,
    pub kind: CheckKind,
    pub t_sequence: Vec<f64>,
    pub threshold: f64,
    pub tuning: Tuning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub region: Region,
    pub fields: BTreeMap<String, VectorField>,
    pub functions: BTreeMap<String, Expression>,
    pub checks: Vec<CheckSpec>,
    pub output: PathBuf,
}

impl Scenario {
    pub fn field(&self, name: &str) -> &VectorField {
        &self.fields[name]
    }

    pub fn function(&self, name: &str) -> &Expression {
        &self.functions[name]
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(
            if path == "." { "(root)".into() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    build(raw)
}

fn from_value<T: DeserializeOwned>(value: Value, path: &str) -> Result<T, ScenarioError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." {
            path.to_string()
        } else {
            format!("{path}.{inner}")
        };
        schema(full, e.into_inner().to_string())
    })
}

fn build(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if raw.name.is_empty() || raw.name.contains(['/', '\\']) {
        return Err(schema("name", "must be a nonempty file-name-safe string"));
    }
    let dim = raw.region.dim;
    if dim == 0 || dim > lipflow_core::expr::MAX_DIMENSION {
        return Err(schema(
            "region.dim",
            format!("must lie in 1..={}", lipflow_core::expr::MAX_DIMENSION),
        ));
    }
    let check_len = |v: &[f64], path: &str| {
        if v.len() != dim {
            Err(schema(
                path,
                format!("expected {dim} coordinates, got {}", v.len()),
            ))
        } else {
            Ok(())
        }
    };
    check_len(&raw.region.lower, "region.lower")?;
    check_len(&raw.region.upper, "region.upper")?;
    let domain = Cuboid::new(raw.region.lower, raw.region.upper)
        .map_err(|e| schema("region", e.to_string()))?;
    let sub = match raw.region.sub {
        Some(b) => {
            check_len(&b.lower, "region.sub.lower")?;
            check_len(&b.upper, "region.sub.upper")?;
            Some(Cuboid::new(b.lower, b.upper).map_err(|e| schema("region.sub", e.to_string()))?)
        }
        None => None,
    };
    let region = Region::new(domain, sub).map_err(|e| schema("region.sub", e.to_string()))?;

    let mut fields = BTreeMap::new();
    for (name, f) in raw.fields {
        let path = format!("fields.{name}");
        if f.components.len() != dim {
            return Err(schema(
                format!("{path}.components"),
                format!("expected {dim} components, got {}", f.components.len()),
            ));
        }
        if !(f.lipschitz >= 0.0 && f.lipschitz.is_finite()) {
            return Err(schema(
                format!("{path}.lipschitz"),
                "must be finite and nonnegative",
            ));
        }
        let mut components = Vec::with_capacity(dim);
        for (i, src) in f.components.iter().enumerate() {
            components.push(Expression::parse(src, dim).map_err(|source| {
                ScenarioError::Parse {
                    path: format!("{path}.components[{i}]"),
                    source,
                }
            })?);
        }
        let field = VectorField::new(name.clone(), region.clone(), components, Some(f.lipschitz))
            .map_err(|e| schema(path, e.to_string()))?;
        fields.insert(name, field);
    }

    let mut functions = BTreeMap::new();
    for (name, src) in raw.functions {
        let expr = Expression::parse(&src, dim).map_err(|source| ScenarioError::Parse {
            path: format!("functions.{name}"),
            source,
        })?;
        functions.insert(name, expr);
    }

    let mut checks = Vec::with_capacity(raw.checks.len());
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    for (i, c) in raw.checks.into_iter().enumerate() {
        let path = format!("checks[{i}]");
        let spec = build_check(c, &path, dim, &fields, &functions)?;
        let count = used.entry(spec.name.clone()).or_insert(0);
        *count += 1;
        let spec = if *count > 1 {
            CheckSpec {
                name: format!("{}_{}", spec.name, count),
                ..spec
            }
        } else {
            spec
        };
        checks.push(spec);
    }

    Ok(Scenario {
        name: raw.name,
        region,
        fields,
        functions,
        checks,
        output: PathBuf::from(raw.output.unwrap_or_else(|| "./reports".into())),
    })
}

struct Names<'a> {
    path: &'a str,
    fields: &'a BTreeMap<String, VectorField>,
    functions: &'a BTreeMap<String, Expression>,
}

impl Names<'_> {
    fn field(&self, name: String, key: &str) -> Result<String, ScenarioError> {
        if !self.fields.contains_key(&name) {
            return Err(ScenarioError::Undefined {
                path: format!("{}.args.{key}", self.path),
                what: "field",
                name,
            });
        }
        Ok(name)
    }

    fn function(&self, name: String, key: &str) -> Result<String, ScenarioError> {
        if !self.functions.contains_key(&name) {
            return Err(ScenarioError::Undefined {
                path: format!("{}.args.{key}", self.path),
                what: "function",
                name,
            });
        }
        Ok(name)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFG {
    field: String,
    f: String,
    g: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFH {
    field: String,
    f: String,
    h: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldF {
    field: String,
    f: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DqArgs {
    field: String,
    f: String,
    center: Vec<f64>,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JacobianArgs {
    field: String,
    #[serde(default)]
    points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    samples: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeakstarArgs {
    field: String,
    bumps: Vec<BumpSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SemigroupArgs {
    field: String,
    f: String,
    pairs: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemArgs {
    fields: Vec<String>,
    f: String,
    h: String,
    #[serde(default)]
    coefficients: Option<usize>,
    #[serde(default)]
    coefficient_vectors: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CutoffArgs {
    field: String,
    f: String,
    g: String,
    center: Vec<f64>,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LebesgueArgs {
    field: String,
    f: String,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    exceptional: Option<Vec<bool>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegrabilityArgs {
    field: String,
    f: String,
    deltas: Vec<f64>,
}

fn build_check(
    c: RawCheck,
    path: &str,
    dim: usize,
    fields: &BTreeMap<String, VectorField>,
    functions: &BTreeMap<String, Expression>,
) -> Result<CheckSpec, ScenarioError> {
    if !CHECK_KINDS.contains(&c.kind.as_str()) {
        return Err(schema(
            format!("{path}.kind"),
            format!(
                "unknown check kind `{}`; expected one of {}",
                c.kind,
                CHECK_KINDS.join(", ")
            ),
        ));
    }
    if c.t_sequence.is_empty() {
        return Err(schema(format!("{path}.t_sequence"), "must not be empty"));
    }
    if c.t_sequence.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(schema(
            format!("{path}.t_sequence"),
            "values must be positive and finite",
        ));
    }
    if c.t_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(schema(
            format!("{path}.t_sequence"),
            "values must be strictly decreasing",
        ));
    }
    if !(c.threshold > 0.0 && c.threshold.is_finite()) {
        return Err(schema(
            format!("{path}.threshold"),
            "must be positive and finite",
        ));
    }
    let name = c.name.unwrap_or_else(|| c.kind.clone());
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(schema(
            format!("{path}.name"),
            "must be a nonempty file-name-safe string",
        ));
    }

    let mut specific = Map::new();
    let mut common = Map::new();
    for (k, v) in c.args {
        if TUNING_KEYS.contains(&k.as_str()) {
            common.insert(k, v);
        } else {
            specific.insert(k, v);
        }
    }
    let args_path = format!("{path}.args");
    let tuning: Tuning = from_value(Value::Object(common), &args_path)?;
    tuning.validate(dim, &args_path)?;
    let specific = Value::Object(specific);
    let names = Names {
        path,
        fields,
        functions,
    };
    let point = |p: &[f64], key: &str| {
        if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
            Err(schema(
                format!("{args_path}.{key}"),
                format!("expected {dim} finite coordinates"),
            ))
        } else {
            Ok(())
        }
    };
    let bump = |b: &BumpSpec, key: &str| {
        point(&b.center, &format!("{key}.center"))?;
        if !(b.radius > 0.0 && b.radius.is_finite()) {
            return Err(schema(
                format!("{args_path}.{key}.radius"),
                "must be positive and finite",
            ));
        }
        Ok(())
    };

    let kind = match c.kind.as_str() {
        "main_equivalence" => {
            let a: FieldFG = from_value(specific, &args_path)?;
            CheckKind::MainEquivalence {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                g: names.function(a.g, "g")?,
            }
        }
        "dq_distribution_limit" => {
            let a: DqArgs = from_value(specific, &args_path)?;
            let b = BumpSpec {
                center: a.center,
                radius: a.radius,
            };
            bump(&b, "bump")?;
            CheckKind::DqDistributionLimit {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                bump: b,
            }
        }
        "jacobian_bounds" => {
            let a: JacobianArgs = from_value(specific, &args_path)?;
            if let Some(points) = &a.points {
                if points.is_empty() {
                    return Err(schema(format!("{args_path}.points"), "must not be empty"));
                }
                for (i, p) in points.iter().enumerate() {
                    point(p, &format!("points[{i}]"))?;
                }
            }
            if a.samples == Some(0) {
                return Err(schema(format!("{args_path}.samples"), "must be at least 1"));
            }
            CheckKind::JacobianBounds {
                field: names.field(a.field, "field")?,
                points: a.points,
                samples: a.samples.unwrap_or(16),
            }
        }
        "weakstar_divergence" => {
            let a: WeakstarArgs = from_value(specific, &args_path)?;
            if a.bumps.is_empty() {
                return Err(schema(format!("{args_path}.bumps"), "must not be empty"));
            }
            for (i, b) in a.bumps.iter().enumerate() {
                bump(b, &format!("bumps[{i}]"))?;
            }
            CheckKind::WeakstarDivergence {
                field: names.field(a.field, "field")?,
                bumps: a.bumps,
            }
        }
        "semigroup" => {
            let a: SemigroupArgs = from_value(specific, &args_path)?;
            if a.pairs
                .iter()
                .any(|(s, t)| !s.is_finite() || !t.is_finite())
            {
                return Err(schema(
                    format!("{args_path}.pairs"),
                    "values must be finite",
                ));
            }
            CheckKind::Semigroup {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                pairs: a.pairs,
            }
        }
        "commutation" => {
            let a: FieldF = from_value(specific, &args_path)?;
            CheckKind::Commutation {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
            }
        }
        "upper_gradient" => {
            let a: FieldFH = from_value(specific, &args_path)?;
            CheckKind::UpperGradient {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                h: names.function(a.h, "h")?,
            }
        }
        "system" => {
            let a: SystemArgs = from_value(specific, &args_path)?;
            if a.fields.is_empty() {
                return Err(schema(format!("{args_path}.fields"), "must not be empty"));
            }
            let mut resolved = Vec::with_capacity(a.fields.len());
            for (i, name) in a.fields.into_iter().enumerate() {
                resolved.push(names.field(name, &format!("fields[{i}]"))?);
            }
            if let Some(vs) = &a.coefficient_vectors {
                for (i, v) in vs.iter().enumerate() {
                    if v.len() != resolved.len() {
                        return Err(schema(
                            format!("{args_path}.coefficient_vectors[{i}]"),
                            format!("expected {} coefficients", resolved.len()),
                        ));
                    }
                    if v.iter().map(|c| c * c).sum::<f64>() > 1.0 + 1e-12 {
                        return Err(schema(
                            format!("{args_path}.coefficient_vectors[{i}]"),
                            "must lie in the closed unit ball",
                        ));
                    }
                }
            }
            if a.coefficients == Some(0) {
                return Err(schema(
                    format!("{args_path}.coefficients"),
                    "must be at least 1",
                ));
            }
            CheckKind::System {
                fields: resolved,
                f: names.function(a.f, "f")?,
                h: names.function(a.h, "h")?,
                coefficients: a.coefficients.unwrap_or(32),
                coefficient_vectors: a.coefficient_vectors,
            }
        }
        "cutoff_localization" => {
            let a: CutoffArgs = from_value(specific, &args_path)?;
            let b = BumpSpec {
                center: a.center,
                radius: a.radius,
            };
            bump(&b, "cutoff")?;
            CheckKind::CutoffLocalization {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                g: names.function(a.g, "g")?,
                bump: b,
            }
        }
        "lebesgue_points" => {
            let a: LebesgueArgs = from_value(specific, &args_path)?;
            if a.points.is_empty() {
                return Err(schema(format!("{args_path}.points"), "must not be empty"));
            }
            for (i, p) in a.points.iter().enumerate() {
                point(p, &format!("points[{i}]"))?;
            }
            let exceptional = a.exceptional.unwrap_or_else(|| vec![false; a.points.len()]);
            if exceptional.len() != a.points.len() {
                return Err(schema(
                    format!("{args_path}.exceptional"),
                    "must have one entry per point",
                ));
            }
            CheckKind::LebesguePoints {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                points: a.points,
                exceptional,
            }
        }
        "uniform_integrability" => {
            let a: IntegrabilityArgs = from_value(specific, &args_path)?;
            if a.deltas.is_empty()
                || a.deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0))
                || a.deltas.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(schema(
                    format!("{args_path}.deltas"),
                    "must be nonempty, strictly decreasing, in (0, 1]",
                ));
            }
            CheckKind::UniformIntegrability {
                field: names.field(a.field, "field")?,
                f: names.function(a.f, "f")?,
                deltas: a.deltas,
            }
        }
        _ => unreachable!("kind checked above"),
    };
    Ok(CheckSpec {
        name,
        kind,
        t_sequence: c.t_sequence,
        threshold: c.threshold,
        tuning,
    })
}
