//! Locally Lipschitz vector fields on open boxes.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{BinaryOp, EvalError, Expression, Node, ParseError};
use crate::grid::{FlaggedFunction, Grid, SampledFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegionError {
    #[error("lower has {lower} coordinates, upper has {upper}")]
    DimensionMismatch { lower: usize, upper: usize },
    #[error("box must have at least one coordinate")]
    Empty,
    #[error("box bounds must be finite")]
    NotFinite,
    #[error("axis {axis} is degenerate: lower {lower} >= upper {upper}")]
    Degenerate { axis: usize, lower: f64, upper: f64 },
    #[error("sub-box closure is not inside the domain (margin {margin})")]
    SubNotInside { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("component {index} is declared over dimension {got}, region has {expected}")]
    ComponentDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("declared Lipschitz constant must be finite and nonnegative, got {0}")]
    BadLipschitz(f64),
    #[error("point lies outside the open domain")]
    OutsideDomain,
    #[error("at least two samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("sampled Lipschitz quotient {observed} exceeds the declared constant {declared}")]
    LipschitzViolated { declared: f64, observed: f64 },
    #[error("finite-difference stencil of half-width {h} leaves the domain")]
    StencilOutside { h: f64 },
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("fields must share dimension and region")]
    Incompatible,
    #[error("field produced a non-finite value")]
    NonFinite,
}

/// An axis-aligned open box `Π (lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Cuboid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, RegionError> {
        if lower.len() != upper.len() {
            return Err(RegionError::DimensionMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(RegionError::Empty);
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(RegionError::NotFinite);
            }
            if lo >= hi {
                return Err(RegionError::Degenerate {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `(lo, hi)^n`.
    pub fn cube(dimension: usize, lo: f64, hi: f64) -> Result<Self, RegionError> {
        Self::new(vec![lo; dimension], vec![hi; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dimension()).map(|i| self.width(i)).product()
    }

    /// Open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| lo < v && v < hi)
    }

    /// Smallest gap between the closure of `inner` and the boundary of `self`;
    /// positive iff `inner` is relatively compact in `self`.
    pub fn margin_to(&self, inner: &Cuboid) -> f64 {
        if inner.dimension() != self.dimension() {
            return f64::NEG_INFINITY;
        }
        (0..self.dimension())
            .map(|i| {
                let a = inner.lower[i] - self.lower[i];
                let b = self.upper[i] - inner.upper[i];
                a.min(b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the closed ball stays at distance more than `margin` from the boundary.
    pub fn contains_ball(&self, center: &[f64], radius: f64, margin: f64) -> bool {
        center.len() == self.dimension()
            && (0..self.dimension()).all(|i| {
                center[i] - radius - margin > self.lower[i]
                    && center[i] + radius + margin < self.upper[i]
            })
    }

    /// The box with the same center and every width multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, RegionError> {
        let c = self.center();
        let lower = (0..self.dimension())
            .map(|i| c[i] - 0.5 * factor * self.width(i))
            .collect();
        let upper = (0..self.dimension())
            .map(|i| c[i] + 0.5 * factor * self.width(i))
            .collect();
        Self::new(lower, upper)
    }
}

/// Open domain Ω, optionally with a relatively compact sub-box Ω′.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    domain: Cuboid,
    sub: Option<Cuboid>,
}

impl Region {
    pub fn new(domain: Cuboid, sub: Option<Cuboid>) -> Result<Self, RegionError> {
        if let Some(s) = &sub {
            let margin = domain.margin_to(s);
            if !(margin > 0.0) {
                return Err(RegionError::SubNotInside { margin });
            }
        }
        Ok(Self { domain, sub })
    }

    pub fn from_domain(domain: Cuboid) -> Self {
        Self { domain, sub: None }
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &Cuboid {
        &self.domain
    }

    pub fn sub(&self) -> Option<&Cuboid> {
        self.sub.as_ref()
    }

    /// Ω′ when declared, otherwise Ω.
    pub fn working_box(&self) -> &Cuboid {
        self.sub.as_ref().unwrap_or(&self.domain)
    }
}

/// Anything that behaves like a Lipschitz vector field on a box.
pub trait Field: Sync {
    fn name(&self) -> &str;

    fn region(&self) -> &Region;

    fn dimension(&self) -> usize {
        self.region().dimension()
    }

    /// Evaluates the components at any point of R^n. Domain membership is
    /// left to the caller, which lets integrators evaluate Runge–Kutta stages
    /// that graze the boundary.
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError>;

    /// Declared Lipschitz constant, trusted by every bound formula.
    fn lipschitz(&self) -> Option<f64>;

    fn is_smooth(&self) -> bool;
}

/// `X = Σ a_i ∂/∂x_i` with textual components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    name: String,
    region: Region,
    components: Vec<Expression>,
    lipschitz: Option<f64>,
    smooth: bool,
}

impl VectorField {
    pub fn new(
        name: impl Into<String>,
        region: Region,
        components: Vec<Expression>,
        lipschitz: Option<f64>,
    ) -> Result<Self, FieldError> {
        let n = region.dimension();
        if components.len() != n {
            return Err(FieldError::ComponentCount {
                expected: n,
                got: components.len(),
            });
        }
        for (index, c) in components.iter().enumerate() {
            if c.dimension() != n {
                return Err(FieldError::ComponentDimension {
                    index,
                    expected: n,
                    got: c.dimension(),
                });
            }
        }
        if let Some(l) = lipschitz {
            if !(l.is_finite() && l >= 0.0) {
                return Err(FieldError::BadLipschitz(l));
            }
        }
        let smooth = components.iter().all(Expression::is_smooth);
        Ok(Self {
            name: name.into(),
            region,
            components,
            lipschitz,
            smooth,
        })
    }

    /// Builds a field from component source text.
    pub fn parse(
        name: impl Into<String>,
        region: Region,
        components: &[&str],
        lipschitz: Option<f64>,
    ) -> Result<Self, FieldError> {
        let n = region.dimension();
        let exprs = components
            .iter()
            .map(|s| Expression::parse(s, n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, region, exprs, lipschitz)
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn with_region(&self, region: Region) -> Result<Self, FieldError> {
        Self::new(
            self.name.clone(),
            region,
            self.components.clone(),
            self.lipschitz,
        )
    }

    /// `Σ c_j X_j`. The declared constant is `Σ |c_j| L_j` when every `L_j` is declared.
    pub fn linear_combination(
        fields: &[VectorField],
        coefficients: &[f64],
    ) -> Result<Self, FieldError> {
        let first = fields.first().ok_or(FieldError::Incompatible)?;
        if fields.len() != coefficients.len() || fields.iter().any(|f| f.region != first.region) {
            return Err(FieldError::Incompatible);
        }
        let n = first.region.dimension();
        let components = (0..n)
            .map(|i| {
                let node = fields
                    .iter()
                    .zip(coefficients)
                    .map(|(f, &c)| {
                        Node::Binary(
                            BinaryOp::Mul,
                            Box::new(Node::Const(c)),
                            Box::new(f.components[i].root().clone()),
                        )
                    })
                    .reduce(|a, b| Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b)))
                    .unwrap();
                Expression::from_node(node, n)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lipschitz = fields
            .iter()
            .zip(coefficients)
            .map(|(f, c)| f.lipschitz.map(|l| l * libm::fabs(*c)))
            .sum::<Option<f64>>();
        Self::new("combination", first.region.clone(), components, lipschitz)
    }
}

impl Field for VectorField {
    fn name(&self) -> &str {
        &self.name
    }

    fn region(&self) -> &Region {
        &self.region
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.evaluate(x)?;
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn is_smooth(&self) -> bool {
        self.smooth
    }
}

/// `(a_1(x), …, a_n(x))` for `x ∈ Ω`.
pub fn eval_field<F: Field + ?Sized>(field: &F, x: &[f64]) -> Result<Vec<f64>, FieldError> {
    if !field.region().domain().contains(x) {
        return Err(FieldError::OutsideDomain);
    }
    let mut out = vec![0.0; field.dimension()];
    field.eval_into(x, &mut out)?;
    Ok(out)
}

/// Largest `|X(x) − X(y)| / |x − y|` over `samples` seeded random pairs in Ω.
///
/// The pair stream only depends on the seed, so raising `samples` extends
/// the same sequence and the estimate can only grow. A declared constant
/// smaller than the estimate (beyond 1e-12) is reported as an error.
pub fn estimate_lipschitz<F: Field + ?Sized>(
    field: &F,
    samples: usize,
    seed: u64,
) -> Result<f64, FieldError> {
    if samples < 2 {
        return Err(FieldError::TooFewSamples(samples));
    }
    let domain = field.region().domain();
    let n = domain.dimension();
    if !(domain.volume() > 0.0) {
        return Err(RegionError::Degenerate {
            axis: 0,
            lower: domain.lower()[0],
            upper: domain.upper()[0],
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        for p in [&mut x, &mut y] {
            for (i, v) in p.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *v = domain.lower()[i] + u * domain.width(i);
            }
        }
        let dist = distance(&x, &y);
        if dist == 0.0 || !domain.contains(&x) || !domain.contains(&y) {
            continue;
        }
        field.eval_into(&x, &mut fx)?;
        field.eval_into(&y, &mut fy)?;
        let q = distance(&fx, &fy) / dist;
        if !q.is_finite() {
            return Err(FieldError::NonFinite);
        }
        best = best.max(q);
    }
    if let Some(declared) = field.lipschitz() {
        if best > declared + 1e-12 {
            return Err(FieldError::LipschitzViolated {
                declared,
                observed: best,
            });
        }
    }
    Ok(best)
}

/// Central-difference divergence `Σ_i (a_i(x + h e_i) − a_i(x − h e_i)) / 2h`.
pub fn divergence_at<F: Field + ?Sized>(field: &F, x: &[f64], h: f64) -> Result<f64, FieldError> {
    let n = field.dimension();
    let mut scratch = vec![0.0; 3 * n];
    divergence_with(field, x, h, &mut scratch)
}

/// Same as [`divergence_at`] with caller-provided scratch of length `3n`.
pub(crate) fn divergence_with<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    h: f64,
    scratch: &mut [f64],
) -> Result<f64, FieldError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(FieldError::BadStep(h));
    }
    let n = field.dimension();
    let domain = field.region().domain();
    if !domain.contains_ball(x, h, 0.0) {
        return Err(FieldError::StencilOutside { h });
    }
    let (probe, rest) = scratch.split_at_mut(n);
    let (plus, minus) = rest.split_at_mut(n);
    probe.copy_from_slice(x);
    let mut div = 0.0;
    for i in 0..n {
        probe[i] = x[i] + h;
        field.eval_into(probe, plus)?;
        probe[i] = x[i] - h;
        field.eval_into(probe, minus)?;
        probe[i] = x[i];
        div += (plus[i] - minus[i]) / (2.0 * h);
    }
    Ok(div)
}

/// [`divergence_at`] at every node of `grid`; nodes whose stencil leaves Ω
/// carry 0 and are flagged.
pub fn divergence_field<F: Field + ?Sized>(
    field: &F,
    grid: &Grid,
    h: f64,
) -> Result<FlaggedFunction, FieldError> {
    let n = field.dimension();
    let mut node = vec![0.0; n];
    let mut scratch = vec![0.0; 3 * n];
    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        grid.node_into(k, &mut node);
        match divergence_with(field, &node, h, &mut scratch) {
            Ok(v) => {
                values.push(v);
                flags.push(false);
            }
            Err(FieldError::StencilOutside { .. }) => {
                values.push(0.0);
                flags.push(true);
            }
            Err(e) => return Err(e),
        }
    }
    let function =
        SampledFunction::from_values(grid.clone(), values).map_err(|_| FieldError::NonFinite)?;
    Ok(FlaggedFunction { function, flags })
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lo: f64, hi: f64) -> Region {
        Region::from_domain(Cuboid::cube(1, lo, hi).unwrap())
    }

    fn square(lo: f64, hi: f64) -> Region {
        Region::from_domain(Cuboid::cube(2, lo, hi).unwrap())
    }

    #[test]
    fn region_validation() {
        assert!(matches!(
            Cuboid::new(vec![0.0], vec![0.0]),
            Err(RegionError::Degenerate { axis: 0, .. })
        ));
        assert!(Cuboid::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let outer = Cuboid::cube(2, -1.0, 1.0).unwrap();
        let touching = Cuboid::cube(2, -1.0, 0.5).unwrap();
        assert!(matches!(
            Region::new(outer.clone(), Some(touching)),
            Err(RegionError::SubNotInside { .. })
        ));
        let inner = Cuboid::cube(2, -0.5, 0.5).unwrap();
        let r = Region::new(outer, Some(inner.clone())).unwrap();
        assert_eq!(r.working_box(), &inner);
    }

    #[test]
    fn evaluation_examples() {
        let rot =
            VectorField::parse("rotation", square(-2.0, 2.0), &["-x1", "x0"], Some(1.0)).unwrap();
        assert_eq!(eval_field(&rot, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let kink = VectorField::parse("kink", line(-2.0, 2.0), &["abs(x0)"], Some(1.0)).unwrap();
        assert_eq!(eval_field(&kink, &[0.0]).unwrap(), vec![0.0]);
        assert!(!kink.is_smooth());
        let scale = VectorField::parse("scaling", line(-2.0, 2.0), &["x0"], Some(1.0)).unwrap();
        assert_eq!(eval_field(&scale, &[0.5]).unwrap(), vec![0.5]);
        assert_eq!(eval_field(&scale, &[2.0]), Err(FieldError::OutsideDomain));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            VectorField::parse("bad", square(-1.0, 1.0), &["x0"], None),
            Err(FieldError::ComponentCount { .. })
        ));
        assert!(matches!(
            VectorField::parse("bad", line(-1.0, 1.0), &["x0"], Some(-1.0)),
            Err(FieldError::BadLipschitz(_))
        ));
    }

    #[test]
    fn lipschitz_estimates() {
        let c = VectorField::parse("const", line(-1.0, 1.0), &["1"], Some(0.0)).unwrap();
        assert_eq!(estimate_lipschitz(&c, 100, 7).unwrap(), 0.0);
        let s = VectorField::parse("scaling", line(-2.0, 2.0), &["x0"], Some(1.0)).unwrap();
        let l = estimate_lipschitz(&s, 100, 7).unwrap();
        assert!(l <= 1.0 + 1e-12 && l > 1.0 - 1e-9, "{l}");
        let rot =
            VectorField::parse("rotation", square(-1.0, 1.0), &["-x1", "x0"], Some(1.0)).unwrap();
        let l = estimate_lipschitz(&rot, 500, 3).unwrap();
        assert!(l <= 1.0 + 1e-12 && l > 1.0 - 1e-9, "{l}");
        let lying = VectorField::parse("lying", line(-1.0, 1.0), &["3*x0"], Some(1.0)).unwrap();
        assert!(matches!(
            estimate_lipschitz(&lying, 10, 1),
            Err(FieldError::LipschitzViolated { .. })
        ));
        assert_eq!(
            estimate_lipschitz(&c, 1, 0),
            Err(FieldError::TooFewSamples(1))
        );
    }

    #[test]
    fn lipschitz_estimate_is_monotone_in_samples() {
        let f =
            VectorField::parse("wave", square(-1.0, 1.0), &["sin(3*x1)", "x0*x1"], None).unwrap();
        let mut prev = 0.0;
        for samples in [2, 5, 20, 80, 320] {
            let l = estimate_lipschitz(&f, samples, 11).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn divergence_examples() {
        let rot =
            VectorField::parse("rotation", square(-2.0, 2.0), &["-x1", "x0"], Some(1.0)).unwrap();
        assert!(divergence_at(&rot, &[0.3, -0.7], 1e-3).unwrap().abs() < 1e-12);
        let s = VectorField::parse("scaling", line(-2.0, 2.0), &["x0"], Some(1.0)).unwrap();
        assert!((divergence_at(&s, &[0.5], 1e-4).unwrap() - 1.0).abs() <= 1e-7);
        let k = VectorField::parse("kink", line(-2.0, 2.0), &["abs(x0)"], Some(1.0)).unwrap();
        assert!((divergence_at(&k, &[-1.0], 1e-4).unwrap() + 1.0).abs() <= 1e-7);
        assert!((divergence_at(&k, &[1.0], 1e-4).unwrap() - 1.0).abs() <= 1e-7);
        assert!(matches!(
            divergence_at(&k, &[1.99], 0.1),
            Err(FieldError::StencilOutside { .. })
        ));
    }

    #[test]
    fn divergence_of_affine_field_is_trace_for_any_step() {
        let f = VectorField::parse(
            "affine",
            square(-3.0, 3.0),
            &["2*x0 - x1 + 1", "x0 + 0.5*x1"],
            None,
        )
        .unwrap();
        for h in [1e-1, 1e-3, 0.5] {
            let d = divergence_at(&f, &[0.25, -0.5], h).unwrap();
            assert!((d - 2.5).abs() < 1e-12, "{h}: {d}");
        }
    }

    #[test]
    fn divergence_field_flags_boundary_nodes() {
        let r = Region::from_domain(Cuboid::cube(3, -1.0, 1.0).unwrap());
        let heis = VectorField::parse("X1", r, &["1", "0", "-x1/2"], Some(0.5)).unwrap();
        let grid = Grid::new(Cuboid::cube(3, -1.0, 1.0).unwrap(), vec![4, 4, 4]).unwrap();
        let div = divergence_field(&heis, &grid, 1e-3).unwrap();
        assert!(div.flags.iter().all(|f| !f));
        assert!(div.function.values().iter().all(|v| v.abs() < 1e-12));

        let lin = VectorField::parse("lin", square(-1.0, 1.0), &["x0", "x1"], Some(1.0)).unwrap();
        let grid = Grid::new(Cuboid::cube(2, -1.0, 1.0).unwrap(), vec![5, 5]).unwrap();
        let div = divergence_field(&lin, &grid, 1e-4).unwrap();
        assert!(div.function.values().iter().all(|v| (v - 2.0).abs() < 1e-7));
        let wide = divergence_field(&lin, &grid, 0.25).unwrap();
        assert!(wide.flags.iter().any(|&f| f));
        for (v, f) in wide.function.values().iter().zip(&wide.flags) {
            if *f {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn linear_combination_components() {
        let r = Region::from_domain(Cuboid::cube(3, -1.0, 1.0).unwrap());
        let x1 = VectorField::parse("X1", r.clone(), &["1", "0", "-x1/2"], Some(0.5)).unwrap();
        let x2 = VectorField::parse("X2", r, &["0", "1", "x0/2"], Some(0.5)).unwrap();
        let c = VectorField::linear_combination(&[x1, x2], &[0.6, -0.8]).unwrap();
        let v = eval_field(&c, &[0.2, 0.4, 0.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] + 0.8).abs() < 1e-15);
        assert!((v[2] - (0.6 * -0.2 - 0.8 * 0.1)).abs() < 1e-15);
        assert!((c.lipschitz().unwrap() - 0.7).abs() < 1e-15);
    }
}
