//! Fields with closed-form flows, each paired with a function and its
//! derivative along the field.

use std::fmt::Write as _;

use lipflow_core::calculus::{lie_residual, CalculusError, QuadratureAlongFlow};
use lipflow_core::field::{Cuboid, FieldError, Region, VectorField};
use lipflow_core::grid::GridError;
use lipflow_core::theorems::sample_points;
use lipflow_core::{Expression, Grid, IntegratorConfig, SampledFunction};

use crate::scenario::default_resolution;

/// One field of an oracle with the derivative of the oracle function along it.
#[derive(Debug, Clone, Copy)]
pub struct OracleField {
    pub label: &'static str,
    pub components: &'static [&'static str],
    /// `Xf` in closed form.
    pub derivative: &'static str,
    /// `|Xf|`, the least upper gradient along `X`.
    pub least_upper_gradient: &'static str,
    pub flow: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleEntry {
    pub name: &'static str,
    pub dimension: usize,
    pub lipschitz: f64,
    pub fields: &'static [OracleField],
    pub function: &'static str,
    pub jacobian: &'static str,
    pub divergence: &'static str,
    pub notes: &'static str,
}

pub const CATALOG: &[OracleEntry] = &[
    OracleEntry {
        name: "translation",
        dimension: 1,
        lipschitz: 0.0,
        fields: &[OracleField {
            label: "X",
            components: &["1"],
            derivative: "2*x0",
            least_upper_gradient: "abs(2*x0)",
            flow: "x + t",
        }],
        function: "x0^2",
        jacobian: "J_t = 1",
        divergence: "div X = 0",
        notes: "Δ_t f = 2x + t exactly.",
    },
    OracleEntry {
        name: "scaling",
        dimension: 1,
        lipschitz: 1.0,
        fields: &[OracleField {
            label: "X",
            components: &["x0"],
            derivative: "2*x0^2",
            least_upper_gradient: "2*x0^2",
            flow: "x·e^t",
        }],
        function: "x0^2",
        jacobian: "J_t = e^t",
        divergence: "div X = 1",
        notes: "Attains the Gronwall and Jacobian upper bounds.",
    },
    OracleEntry {
        name: "rotation",
        dimension: 2,
        lipschitz: 1.0,
        fields: &[OracleField {
            label: "X",
            components: &["-x1", "x0"],
            derivative: "x0^2 - x1^2",
            least_upper_gradient: "abs(x0^2 - x1^2)",
            flow: "(x0·cos t − x1·sin t, x0·sin t + x1·cos t)",
        }],
        function: "x0*x1",
        jacobian: "J_t = 1",
        divergence: "div X = 0",
        notes: "Volume preserving; |x| is invariant.",
    },
    OracleEntry {
        name: "kink",
        dimension: 1,
        lipschitz: 1.0,
        fields: &[OracleField {
            label: "X",
            components: &["abs(x0)"],
            derivative: "abs(x0)",
            least_upper_gradient: "abs(x0)",
            flow: "x·e^(t·sign x)",
        }],
        function: "x0",
        jacobian: "J_t = e^(t·sign x) for x ≠ 0",
        divergence: "div X = sign(x0)",
        notes: "Lipschitz but not C¹; 0 is a fixed point where J_t is undefined.",
    },
    OracleEntry {
        name: "heisenberg",
        dimension: 3,
        lipschitz: 0.5,
        fields: &[
            OracleField {
                label: "X1",
                components: &["1", "0", "-x1/2"],
                derivative: "1",
                least_upper_gradient: "1",
                flow: "(x0 + t, x1, x2 − t·x1/2)",
            },
            OracleField {
                label: "X2",
                components: &["0", "1", "x0/2"],
                derivative: "0",
                least_upper_gradient: "0",
                flow: "(x0, x1 + t, x2 + t·x0/2)",
            },
        ],
        function: "x0",
        jacobian: "J_t = 1",
        divergence: "div X1 = div X2 = 0",
        notes: "Horizontal fields of the Heisenberg group; (X1 f)² + (X2 f)² = 1.",
    },
    OracleEntry {
        name: "abs",
        dimension: 1,
        lipschitz: 0.0,
        fields: &[OracleField {
            label: "X",
            components: &["1"],
            derivative: "x0/abs(x0)",
            least_upper_gradient: "1",
            flow: "x + t",
        }],
        function: "abs(x0)",
        jacobian: "J_t = 1",
        divergence: "div X = 0",
        notes: "No classical derivative at 0; ‖Δ_t f − Xf‖_L1(−a,a) = t for t < a.",
    },
];

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle `{0}` is not in the catalog")]
    Unknown(String),
    #[error("oracle `{name}`: {source}")]
    Field { name: String, source: FieldError },
    #[error("oracle `{name}`: {source}")]
    Grid { name: String, source: GridError },
    #[error("oracle `{name}`: {source}")]
    Calculus { name: String, source: CalculusError },
}

pub fn find(name: &str) -> Result<&'static OracleEntry, OracleError> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| OracleError::Unknown(name.into()))
}

impl OracleEntry {
    /// The oracle's fields on `(−1, 1)^n`.
    pub fn build_fields(&self) -> Result<Vec<VectorField>, OracleError> {
        let wrap = |source| OracleError::Field {
            name: self.name.into(),
            source,
        };
        let cube = Cuboid::cube(self.dimension, -1.0, 1.0).map_err(|e| wrap(e.into()))?;
        let region = Region::from_domain(cube);
        self.fields
            .iter()
            .map(|f| {
                VectorField::parse(f.label, region.clone(), f.components, Some(self.lipschitz))
                    .map_err(wrap)
            })
            .collect()
    }

    /// Largest `|f(γ_t x) − f(x) − ∫_0^t Xf(γ_s x) ds|` over eight seeded
    /// starts in `(−½, ½)^n` with `t = ¼`, on the default grid.
    pub fn lie_residual(&self) -> Result<f64, OracleError> {
        let name = || self.name.to_string();
        let fields = self.build_fields()?;
        let cube = Cuboid::cube(self.dimension, -1.0, 1.0).map_err(|e| OracleError::Field {
            name: name(),
            source: e.into(),
        })?;
        let inner = cube.scaled(0.5).expect("half cube");
        let grid = Grid::uniform(cube, default_resolution(self.dimension)).map_err(|source| {
            OracleError::Grid {
                name: name(),
                source,
            }
        })?;
        let sample = |src: &str| {
            let expr = Expression::parse(src, self.dimension).map_err(|e| OracleError::Field {
                name: name(),
                source: e.into(),
            })?;
            SampledFunction::sample(&expr, grid.clone()).map_err(|source| OracleError::Grid {
                name: name(),
                source,
            })
        };
        let f = sample(self.function)?;
        let quad = QuadratureAlongFlow::new(2000).expect("positive");
        let cfg = IntegratorConfig::default();
        let mut worst: f64 = 0.0;
        for (spec, field) in self.fields.iter().zip(&fields) {
            let g = sample(spec.derivative)?;
            for x in sample_points(&inner, 8, 17) {
                let r = lie_residual(&f, &g, field, &x, 0.25, quad, &cfg).map_err(|source| {
                    OracleError::Calculus {
                        name: name(),
                        source,
                    }
                })?;
                worst = worst.max(r.abs());
            }
        }
        Ok(worst)
    }
}

/// Residual allowed when validating the catalog.
pub const VALIDATION_TOLERANCE: f64 = 1e-3;

/// Human-readable catalog, each entry validated by its Lie residual.
pub fn list_oracles() -> Result<String, OracleError> {
    let mut out = String::new();
    for e in CATALOG {
        let residual = e.lie_residual()?;
        let status = if residual <= VALIDATION_TOLERANCE {
            "ok"
        } else {
            "FAILED"
        };
        writeln!(
            out,
            "{}  (n = {}, L = {})",
            e.name, e.dimension, e.lipschitz
        )
        .unwrap();
        for f in e.fields {
            writeln!(
                out,
                "  field        {} = ({})",
                f.label,
                f.components.join(", ")
            )
            .unwrap();
            writeln!(out, "  flow         γ_t(x) = {}", f.flow).unwrap();
        }
        writeln!(out, "  jacobian     {}", e.jacobian).unwrap();
        writeln!(out, "  divergence   {}", e.divergence).unwrap();
        writeln!(out, "  function     f = {}", e.function).unwrap();
        for f in e.fields {
            writeln!(
                out,
                "  derivative   {}f = {}   least upper gradient |{}f| = {}",
                f.label, f.derivative, f.label, f.least_upper_gradient
            )
            .unwrap();
        }
        writeln!(out, "  notes        {}", e.notes).unwrap();
        writeln!(out, "  lie residual {residual:.3e} ({status})").unwrap();
        writeln!(out).unwrap();
    }
    Ok(out)
}
