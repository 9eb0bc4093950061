//! Numerical verification of the flow calculus on concrete instances.
//!
//! Every check produces a [`ConvergenceReport`]: a list of
//! `(parameter, error)` points, a verdict against a threshold, and any
//! co-checks that must hold on the same instance. Numerics can only exhibit
//! consistency at the sampled parameters; the reports make no claim beyond
//! the sampled family.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{
    distributional_pairing, lie_residual, CalculusError, CutoffField, QuadratureAlongFlow,
};
use crate::field::{divergence_with, norm, Cuboid, Field, FieldError, VectorField};
use crate::flow::{jacobian_det, transport, FlowError, IntegratorConfig, Trajectory};
use crate::grid::{Bump, Grid, GridError, SampledFunction};
use crate::par::map_indices;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoremError {
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid parameter sequence: {0}")]
    Sequence(&'static str),
    #[error("trajectory from a required point leaves the domain (t = {t})")]
    Escaped { t: f64 },
    #[error("coefficient vector has squared norm {0} > 1")]
    Coefficients(f64),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("reconstruction bumps of radius {radius} do not fit inside the domain")]
    Reconstruction { radius: f64 },
    #[error("dimension mismatch between inputs")]
    Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported numbers only; no pass/fail is decidable.
    Diagnostic,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Diagnostic => "diagnostic",
        }
    }
}

/// Error budget behind a default threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Integrator tolerance.
    pub integrator: f64,
    /// `τ²` for the largest midpoint time step `τ`.
    pub quadrature: f64,
    /// `δ²` for the largest grid cell `δ`.
    pub interpolation: f64,
}

impl Budget {
    pub fn total(&self) -> f64 {
        self.integrator + self.quadrature + self.interpolation
    }

    /// `max(1e-6, 10 · total)`.
    pub fn default_threshold(&self) -> f64 {
        (10.0 * self.total()).max(1e-6)
    }
}

/// A secondary condition evaluated on the same instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CoCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl CoCheck {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    /// `(parameter, error)`, parameters strictly decreasing.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log error` against `log parameter`.
    pub fitted_rate: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
    pub notes: String,
    pub budget: Budget,
    pub cochecks: Vec<CoCheck>,
}

impl ConvergenceReport {
    pub fn final_error(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    pub fn cocheck(&self, name: &str) -> Option<&CoCheck> {
        self.cochecks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Slope of the least-squares line through `(log p, log e)` over points with
/// `p, e > 0`; `None` with fewer than two such points.
pub fn fitted_rate(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(p, e)| *p > 0.0 && *e > 0.0)
        .map(|(p, e)| (libm::log(*p), libm::log(*e)))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Errors are nonincreasing up to a 10% factor, plus an absolute 1e-12 so
/// that plateaus at round-off do not count as growth.
pub fn nonincreasing(points: &[(f64, f64)]) -> bool {
    points.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1 + 1e-12)
}

#[derive(Clone, Copy)]
enum Kind {
    /// Final error below threshold and errors nonincreasing.
    Convergence,
    /// Every error below threshold.
    Bound,
}

fn assemble(
    label: &str,
    points: Vec<(f64, f64)>,
    threshold: f64,
    kind: Kind,
    budget: Budget,
    cochecks: Vec<CoCheck>,
    mut notes: String,
) -> ConvergenceReport {
    let main = match kind {
        Kind::Convergence => {
            points.last().is_some_and(|p| p.1 <= threshold) && nonincreasing(&points)
        }
        Kind::Bound => points.iter().all(|p| p.1 <= threshold),
    };
    let pass = main && cochecks.iter().all(|c| c.pass);
    let fitted = match kind {
        Kind::Convergence => fitted_rate(&points),
        Kind::Bound => None,
    };
    if !notes.is_empty() {
        notes.push(' ');
    }
    notes.push_str(&format!(
        "Budget: integrator {:e}, quadrature {:e}, interpolation {:e}.",
        budget.integrator, budget.quadrature, budget.interpolation
    ));
    ConvergenceReport {
        label: label.into(),
        points,
        fitted_rate: fitted,
        threshold,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        notes,
        budget,
        cochecks,
    }
}

/// `Σ c_j² ≤ 1`, checked to 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(c: Vec<f64>) -> Result<Self, TheoremError> {
        let sq: f64 = c.iter().map(|v| v * v).sum();
        if !(sq <= 1.0 + 1e-12) {
            return Err(TheoremError::Coefficients(sq));
        }
        Ok(Self(c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `count` seeded samples, uniform in the closed unit ball of R^k.
    pub fn sample_unit_ball(k: usize, count: usize, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let c: Vec<f64> = (0..k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                out.push(Self(c));
            }
        }
        out
    }
}

/// Knobs shared by the checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSettings {
    /// `None` uses [`Budget::default_threshold`].
    pub threshold: Option<f64>,
    pub integrator: IntegratorConfig,
    /// Central-difference half-width for divergences.
    pub h_div: f64,
    /// Test bumps per axis over Ω′ for pairing co-checks.
    pub bumps_per_axis: usize,
    /// Reconstruction nodes per axis over Ω′; `None` picks
    /// `clamp(⌊width / 4 cell⌋, 2, 64)` so each bump spans at least eight cells.
    pub reconstruction_per_axis: Option<usize>,
    /// L1 allowance for smoothing in pairing-reconstructed derivatives.
    pub reconstruction_tolerance: f64,
    pub trajectory_samples: usize,
    /// Midpoint nodes per mean; `None` uses `ceil(|t| / base_step)`.
    pub time_substeps: Option<usize>,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            threshold: None,
            integrator: IntegratorConfig::default(),
            h_div: 1e-5,
            bumps_per_axis: 4,
            reconstruction_per_axis: None,
            reconstruction_tolerance: 0.05,
            trajectory_samples: 32,
            time_substeps: None,
            seed: 0x5eed,
        }
    }
}

impl CheckSettings {
    fn quad(&self, t: f64) -> Result<QuadratureAlongFlow, TheoremError> {
        Ok(match self.time_substeps {
            Some(m) => QuadratureAlongFlow::new(m)?,
            None => QuadratureAlongFlow::for_time(t, &self.integrator),
        })
    }

    fn budget(&self, grid: Option<&Grid>, times: &[f64]) -> Result<Budget, TheoremError> {
        let mut tau: f64 = 0.0;
        for &t in times {
            tau = tau.max(libm::fabs(t) / self.quad(t)?.substeps() as f64);
        }
        let cell = grid.map_or(0.0, |g| g.max_cell());
        Ok(Budget {
            integrator: self.integrator.tolerance,
            quadrature: tau * tau,
            interpolation: cell * cell,
        })
    }

    fn threshold(&self, budget: &Budget) -> f64 {
        self.threshold.unwrap_or_else(|| budget.default_threshold())
    }
}

fn check_decreasing(t: &[f64], positive: bool) -> Result<(), TheoremError> {
    if t.is_empty() {
        return Err(TheoremError::Empty("t_sequence"));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(TheoremError::Sequence("values must be finite"));
    }
    if positive && t.iter().any(|&v| v <= 0.0) {
        return Err(TheoremError::Sequence("values must be positive"));
    }
    if t.windows(2).any(|w| w[1] >= w[0]) {
        return Err(TheoremError::Sequence("values must be strictly decreasing"));
    }
    Ok(())
}

/// Indices of grid nodes inside `sub`.
fn nodes_in(grid: &Grid, sub: &Cuboid) -> Vec<usize> {
    let mut node = vec![0.0; grid.dimension()];
    (0..grid.len())
        .filter(|&k| {
            grid.node_into(k, &mut node);
            sub.contains(&node)
        })
        .collect()
}

/// `count` seeded points, uniform in the open box.
pub fn sample_points(region: &Cuboid, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = region.dimension();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec<f64> = (0..n)
            .map(|i| region.lower()[i] + rng.random::<f64>() * region.width(i))
            .collect();
        if region.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// `k` bumps per axis centred on the midpoint lattice of `sub`, with a
/// common radius of one lattice spacing, shrunk to keep each support more
/// than `2 h_div` inside `domain`.
pub fn bump_family(
    sub: &Cuboid,
    domain: &Cuboid,
    k: usize,
    h_div: f64,
) -> Result<Vec<Bump>, TheoremError> {
    if k == 0 {
        return Err(TheoremError::Empty("bump family"));
    }
    let n = sub.dimension();
    let spacing: Vec<f64> = (0..n).map(|i| sub.width(i) / k as f64).collect();
    let mut radius = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let total = k.pow(n as u32);
    let centers: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut c = vec![0.0; n];
            for axis in (0..n).rev() {
                c[axis] =
                    sub.lower()[axis] + (idx % k) as f64 * spacing[axis] + 0.5 * spacing[axis];
                idx /= k;
            }
            c
        })
        .collect();
    for c in &centers {
        for i in 0..n {
            let room = (c[i] - domain.lower()[i]).min(domain.upper()[i] - c[i]) - 2.0 * h_div;
            radius = radius.min(0.999 * room);
        }
    }
    if !(radius > 0.0) {
        return Err(TheoremError::Calculus(CalculusError::Support {
            margin: h_div,
        }));
    }
    centers
        .into_iter()
        .map(|c| Bump::new(c, radius).map_err(Into::into))
        .collect()
}

fn same_grid(a: &SampledFunction, b: &SampledFunction) -> Result<(), TheoremError> {
    if a.grid() != b.grid() {
        return Err(GridError::Mismatch.into());
    }
    Ok(())
}

fn field_matches<F: Field + ?Sized>(f: &SampledFunction, field: &F) -> Result<(), TheoremError> {
    if f.grid().dimension() != field.dimension() {
        return Err(TheoremError::Dimension);
    }
    Ok(())
}

/// `Δ_t f` at node `k`, failing on escape.
fn dq_at<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    k: usize,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, TheoremError> {
    let x = f.grid().node(k);
    let end = transport(field, &x, t, cfg)?;
    if end.escape_time.is_some() {
        return Err(TheoremError::Escaped { t });
    }
    Ok((f.value_at(&end.point) - f.values()[k]) / t)
}

/// Endpoint `γ_t x` and midpoint mean of `h` along the way, or `None` when
/// the trajectory leaves Ω (or `stay`, when given) at a sampled time.
fn along<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    h: &SampledFunction,
    quad: QuadratureAlongFlow,
    cfg: &IntegratorConfig,
    stay: Option<&Cuboid>,
) -> Result<Option<(Vec<f64>, f64)>, TheoremError> {
    let mut traj = Trajectory::new(field, x, cfg)?;
    let m = quad.substeps();
    let mut acc = 0.0;
    for j in 0..m {
        if !traj.advance_to((j as f64 + 0.5) * t / m as f64)? {
            return Ok(None);
        }
        if stay.is_some_and(|b| !b.contains(traj.state())) {
            return Ok(None);
        }
        acc += h.value_at(traj.state());
    }
    if !traj.advance_to(t)? || stay.is_some_and(|b| !b.contains(traj.state())) {
        return Ok(None);
    }
    Ok(Some((traj.state().to_vec(), acc / m as f64)))
}

/// Midpoint nodes for Lie residuals: at least `ceil(|t|/base_step)`, and
/// enough that one time step moves no more than a quarter cell.
fn residual_quadrature<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cell: f64,
    settings: &CheckSettings,
) -> Result<QuadratureAlongFlow, TheoremError> {
    if let Some(m) = settings.time_substeps {
        return Ok(QuadratureAlongFlow::new(m)?);
    }
    let mut v = vec![0.0; field.dimension()];
    field.eval_into(x, &mut v).map_err(CalculusError::from)?;
    let speed = 2.0 * norm(&v) + field.lipschitz().unwrap_or(0.0) * libm::fabs(t);
    let by_cell = libm::ceil(4.0 * libm::fabs(t) * speed / cell).min(1e6) as usize;
    let base = QuadratureAlongFlow::for_time(t, &settings.integrator).substeps();
    Ok(QuadratureAlongFlow::new(base.max(by_cell).max(1))?)
}

/// Equivalence of the distributional derivative, the Lie derivative and the
/// L1 limit of difference quotients, as three co-verifications on one
/// instance: points are `(t, ‖Δ_t f − g‖_{L1(Ω′)})`; co-checks are the
/// largest pairing mismatch over a bump family and the largest Lie residual
/// over sampled trajectories at the largest `t`.
pub fn verify_main_equivalence<F: Field + ?Sized>(
    f: &SampledFunction,
    g: &SampledFunction,
    field: &F,
    sub: Option<&Cuboid>,
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    same_grid(f, g)?;
    field_matches(f, field)?;
    let sub = sub.unwrap_or(field.region().working_box());
    let cfg = &settings.integrator;
    let grid = f.grid();
    let nodes = nodes_in(grid, sub);
    let vol = grid.cell_volume();

    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let diffs = map_indices(nodes.len(), cfg.threads, |i| {
            let k = nodes[i];
            dq_at(f, field, k, t, cfg).map(|d| libm::fabs(d - g.values()[k]))
        });
        let mut err = 0.0;
        for d in diffs {
            err += d?;
        }
        points.push((t, err * vol));
    }

    let bumps = bump_family(
        sub,
        field.region().domain(),
        settings.bumps_per_axis,
        settings.h_div,
    )?;
    let mut pairing_gap: f64 = 0.0;
    for u in &bumps {
        let lhs = distributional_pairing(f, field, u, settings.h_div)?;
        pairing_gap = pairing_gap.max(libm::fabs(lhs - g.pair(u)?));
    }

    let t_max = t_sequence[0];
    let starts = sample_points(sub, settings.trajectory_samples, settings.seed);
    let residuals = map_indices(starts.len(), cfg.threads, |i| {
        let x = &starts[i];
        let quad = residual_quadrature(field, x, t_max, grid.max_cell(), settings)?;
        lie_residual(f, g, field, x, t_max, quad, cfg)
            .map(libm::fabs)
            .map_err(TheoremError::from)
    });
    let mut worst_residual: f64 = 0.0;
    for r in residuals {
        worst_residual = worst_residual.max(r?);
    }

    let budget = settings.budget(Some(grid), t_sequence)?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![
        CoCheck::at_most("distributional_pairing", pairing_gap, threshold),
        CoCheck::at_most("lie_residual", worst_residual, threshold),
    ];
    let notes = format!(
        "Consistency of three characterisations on one instance: L1 limit of difference quotients (points), \
         pairing against {} bumps of radius {:.6}, Lie residual on {} trajectories up to t = {}.",
        bumps.len(),
        bumps[0].radius(),
        starts.len(),
        t_max
    );
    Ok(assemble(
        "main_equivalence",
        points,
        threshold,
        Kind::Convergence,
        budget,
        cochecks,
        notes,
    ))
}

/// `∫ Δ_t f · u → −∫ f Xu − ∫ f u div X`; points are `(t, |difference|)`.
pub fn verify_dq_distribution_limit<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    u: &Bump,
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    field_matches(f, field)?;
    let cfg = &settings.integrator;
    let limit = distributional_pairing(f, field, u, settings.h_div)?;
    let grid = f.grid();
    let mut support = Vec::new();
    f.for_each_in_support(u, |k, x, _| support.push((k, u.value(x))));
    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let terms = map_indices(support.len(), cfg.threads, |i| {
            let (k, w) = support[i];
            dq_at(f, field, k, t, cfg).map(|d| d * w)
        });
        let mut acc = 0.0;
        for term in terms {
            acc += term?;
        }
        points.push((t, libm::fabs(acc * grid.cell_volume() - limit)));
    }
    let budget = settings.budget(Some(grid), &[])?;
    let threshold = settings.threshold(&budget);
    let notes = format!("Limit pairing −∫f Xu − ∫f u div X = {limit:.12e}.");
    Ok(assemble(
        "dq_distribution_limit",
        points,
        threshold,
        Kind::Convergence,
        budget,
        Vec::new(),
        notes,
    ))
}

/// `e^{−nL|t|} ≤ J_t(x) ≤ e^{nL|t|}` at every sample; points are
/// `(t, largest excess beyond the bounds, clamped at 0)` over a strictly
/// decreasing `t_grid` (negative times allowed). Points on a kink of a
/// nonsmooth field are skipped.
pub fn verify_jacobian_bounds<F: Field + ?Sized>(
    field: &F,
    sample_points: &[Vec<f64>],
    t_grid: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_grid, false)?;
    if sample_points.is_empty() {
        return Err(TheoremError::Empty("sample points"));
    }
    let l = field
        .lipschitz()
        .ok_or_else(|| FlowError::MissingLipschitz(field.name().into()))?;
    let n = field.dimension() as f64;
    let cfg = &settings.integrator;
    let mut points = Vec::with_capacity(t_grid.len());
    let mut skipped = 0usize;
    let mut closest_upper = f64::INFINITY;
    let mut closest_lower = f64::INFINITY;
    for &t in t_grid {
        let hi = libm::exp(n * l * libm::fabs(t));
        let lo = 1.0 / hi;
        let dets = map_indices(sample_points.len(), cfg.threads, |i| {
            jacobian_det(field, &sample_points[i], t, cfg)
        });
        let mut excess: f64 = 0.0;
        for d in dets {
            let j = match d {
                Ok(j) => j,
                Err(FlowError::NearKink) => {
                    skipped += 1;
                    continue;
                }
                Err(FlowError::Escaped { .. }) => return Err(TheoremError::Escaped { t }),
                Err(e) => return Err(e.into()),
            };
            excess = excess.max(j - hi).max(lo - j);
            if t != 0.0 {
                closest_upper = closest_upper.min((hi - j) / hi);
                closest_lower = closest_lower.min((j - lo) / lo);
            }
        }
        points.push((t, excess));
    }
    let budget = settings.budget(None, &[])?;
    let threshold = settings.threshold(&budget);
    let notes = format!(
        "Smallest relative gap to e^(nL|t|): {closest_upper:.3e}; to e^(-nL|t|): {closest_lower:.3e}; \
         {skipped} evaluations skipped on kinks."
    );
    Ok(assemble(
        "jacobian_bounds",
        points,
        threshold,
        Kind::Bound,
        budget,
        Vec::new(),
        notes,
    ))
}

/// `(J_t − 1)/t → div X` weakly-*: points are `(t, max over the family of
/// |∫u(J_t−1)/t − ∫u div X|)`; the co-check asserts
/// `|(J_t−1)/t| ≤ (e^{nL t_0} − 1)/t_0 + 1e-6` for `t ≤ t_0`.
pub fn verify_weakstar_divergence<F: Field + ?Sized>(
    field: &F,
    u_family: &[SampledFunction],
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    if u_family.is_empty() {
        return Err(TheoremError::Empty("test function family"));
    }
    let l = field
        .lipschitz()
        .ok_or_else(|| FlowError::MissingLipschitz(field.name().into()))?;
    let cfg = &settings.integrator;
    let n = field.dimension();
    let mut per_u: Vec<(Vec<(usize, Vec<f64>, f64)>, f64)> = Vec::with_capacity(u_family.len());
    for u in u_family {
        field_matches(u, field)?;
        let grid = u.grid();
        let support: Vec<(usize, Vec<f64>, f64)> = (0..grid.len())
            .filter(|&k| u.values()[k] != 0.0)
            .map(|k| (k, grid.node(k), u.values()[k]))
            .collect();
        let mut scratch = vec![0.0; 3 * n];
        let mut div_pair = 0.0;
        for (_, x, w) in &support {
            div_pair += w * divergence_with(field, x, settings.h_div, &mut scratch)?;
        }
        per_u.push((support, div_pair * grid.cell_volume()));
    }

    let t0 = t_sequence[0];
    let uniform = libm::expm1(n as f64 * l * t0) / t0;
    let mut worst_quotient: f64 = 0.0;
    let mut skipped = 0usize;
    let mut points = Vec::with_capacity(t_sequence.len());
    let mut finals = Vec::with_capacity(u_family.len());
    for &t in t_sequence {
        let mut worst: f64 = 0.0;
        for (i, (support, div_pair)) in per_u.iter().enumerate() {
            let dets = map_indices(support.len(), cfg.threads, |j| {
                jacobian_det(field, &support[j].1, t, cfg)
            });
            let mut acc = 0.0;
            for (d, (_, _, w)) in dets.into_iter().zip(support) {
                let j = match d {
                    Ok(j) => j,
                    Err(FlowError::NearKink) => {
                        skipped += 1;
                        continue;
                    }
                    Err(FlowError::Escaped { .. }) => return Err(TheoremError::Escaped { t }),
                    Err(e) => return Err(e.into()),
                };
                let q = (j - 1.0) / t;
                worst_quotient = worst_quotient.max(libm::fabs(q));
                acc += w * q;
            }
            let err = libm::fabs(acc * u_family[i].grid().cell_volume() - div_pair);
            worst = worst.max(err);
            if t == *t_sequence.last().unwrap() {
                finals.push(err);
            }
        }
        points.push((t, worst));
    }
    let budget = settings.budget(u_family.first().map(|u| u.grid()), &[])?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![CoCheck::at_most(
        "uniform_bound",
        worst_quotient,
        uniform + 1e-6,
    )];
    let finals: Vec<String> = finals.iter().map(|e| format!("{e:.3e}")).collect();
    let notes = format!(
        "Family of {} test functions; final errors per function [{}]; {} evaluations skipped on kinks; \
         no claim beyond this family.",
        u_family.len(),
        finals.join(", "),
        skipped
    );
    Ok(assemble(
        "weakstar_divergence",
        points,
        threshold,
        Kind::Convergence,
        budget,
        cochecks,
        notes,
    ))
}

/// `f(γ_{t_k}∘…∘γ_{t_1} x)` at node `x` with zero extension.
fn composed_at<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    x: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64, TheoremError> {
    let mut y = x.to_vec();
    for &t in times {
        if t == 0.0 {
            continue;
        }
        match transport(field, &y, t, cfg) {
            Ok(end) if end.escape_time.is_none() => y = end.point,
            Ok(_) | Err(FlowError::OutsideDomain) => return Ok(0.0),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(f.value_at(&y))
}

fn pullback_values<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    nodes: &[usize],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, TheoremError> {
    let grid = f.grid();
    map_indices(nodes.len(), cfg.threads, |i| {
        let x = grid.node(nodes[i]);
        composed_at(f, field, &x, times, cfg)
    })
    .into_iter()
    .collect()
}

/// The pullback group `T_t f = f∘γ_t`: points are `(t, ‖T_t f − f‖_{L1(Ω′)})`
/// (continuity at 0). Co-checks: the group law `‖T_s T_t f − T_{s+t} f‖_{L1(Ω′)}`
/// over `s_t_pairs`, and the growth `‖T_t f‖_{L1(Ω)} / (e^{nL|t|}‖f‖_{L1(Ω)})`.
///
/// `T_s T_t f` is evaluated as `f∘γ_t∘γ_s` at each node, so the only
/// interpolation is that of `f` itself.
pub fn verify_semigroup<F: Field + ?Sized>(
    field: &F,
    f: &SampledFunction,
    s_t_pairs: &[(f64, f64)],
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    field_matches(f, field)?;
    let l = field
        .lipschitz()
        .ok_or_else(|| FlowError::MissingLipschitz(field.name().into()))?;
    let n = field.dimension() as f64;
    let cfg = &settings.integrator;
    let grid = f.grid();
    let vol = grid.cell_volume();
    let sub = field.region().working_box();
    let inner = nodes_in(grid, sub);
    let all: Vec<usize> = (0..grid.len()).collect();
    let base_values: Vec<f64> = inner.iter().map(|&k| f.values()[k]).collect();

    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let moved = pullback_values(f, field, &inner, &[t], cfg)?;
        let d: f64 = moved
            .iter()
            .zip(&base_values)
            .map(|(a, b)| libm::fabs(a - b))
            .sum();
        points.push((t, d * vol));
    }

    let mut group: f64 = 0.0;
    let mut times: Vec<f64> = t_sequence.to_vec();
    for &(s, t) in s_t_pairs {
        // (T_s T_t f)(x) = (T_t f)(γ_s x) = f(γ_t(γ_s x))
        let lhs = pullback_values(f, field, &inner, &[s, t], cfg)?;
        let rhs = pullback_values(f, field, &inner, &[s + t], cfg)?;
        let d: f64 = lhs.iter().zip(&rhs).map(|(a, b)| libm::fabs(a - b)).sum();
        group = group.max(d * vol);
        times.extend([s, t, s + t]);
    }

    let norm_f = f.l1_norm(None);
    let mut growth: f64 = 0.0;
    if norm_f > 0.0 {
        for &t in &times {
            let moved = pullback_values(f, field, &all, &[t], cfg)?;
            let m: f64 = moved.iter().map(|v| libm::fabs(*v)).sum::<f64>() * vol;
            growth = growth.max(m / (libm::exp(n * l * libm::fabs(t)) * norm_f));
        }
    }

    let budget = settings.budget(Some(grid), &[])?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![
        CoCheck::at_most("group_law", group, threshold),
        CoCheck::at_most("norm_growth", growth, 1.0 + 1e-6),
    ];
    let notes = format!(
        "Group law over {} (s, t) pairs; norm growth relative to e^(nL|t|).",
        s_t_pairs.len()
    );
    Ok(assemble(
        "semigroup",
        points,
        threshold,
        Kind::Convergence,
        budget,
        cochecks,
        notes,
    ))
}

/// `M_h Δ_t f = M_t Δ_h f`: points are `(pairs − i, ‖M_h Δ_t f − M_t Δ_h f‖_{L1(Ω′)})`
/// for the `i`-th pair, so parameters count down; the notes map them back to `(t, h)`.
pub fn verify_commutation<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    t_h_pairs: &[(f64, f64)],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    if t_h_pairs.is_empty() {
        return Err(TheoremError::Empty("(t, h) pairs"));
    }
    if t_h_pairs
        .iter()
        .any(|&(t, h)| t == 0.0 || h == 0.0 || !t.is_finite() || !h.is_finite())
    {
        return Err(TheoremError::Sequence("t and h must be finite and nonzero"));
    }
    field_matches(f, field)?;
    let cfg = &settings.integrator;
    let grid = f.grid();
    let vol = grid.cell_volume();
    let inner = nodes_in(grid, field.region().working_box());

    let mut steps: Vec<f64> = t_h_pairs.iter().flat_map(|&(t, h)| [t, h]).collect();
    steps.sort_by(f64::total_cmp);
    steps.dedup();
    let mut quotients = Vec::with_capacity(steps.len());
    for &s in &steps {
        quotients.push(crate::calculus::difference_quotient(f, field, s, cfg)?.function);
    }
    let dq = |s: f64| &quotients[steps.iter().position(|&v| v == s).unwrap()];

    let mean_over = |h: &SampledFunction, t: f64| -> Result<Vec<f64>, TheoremError> {
        let quad = settings.quad(t)?;
        map_indices(inner.len(), cfg.threads, |i| {
            let x = grid.node(inner[i]);
            match along(field, &x, t, h, quad, cfg, None)? {
                Some((_, mean)) => Ok(mean),
                None => Err(TheoremError::Escaped { t }),
            }
        })
        .into_iter()
        .collect()
    };

    let total = t_h_pairs.len();
    let mut points = Vec::with_capacity(total);
    let mut mapping = Vec::with_capacity(total);
    for (i, &(t, h)) in t_h_pairs.iter().enumerate() {
        let a = mean_over(dq(t), h)?;
        let b = mean_over(dq(h), t)?;
        let d: f64 = a.iter().zip(&b).map(|(x, y)| libm::fabs(x - y)).sum();
        points.push(((total - i) as f64, d * vol));
        mapping.push(format!("{}->({}, {})", total - i, t, h));
    }
    let budget = settings.budget(Some(grid), &steps)?;
    let threshold = settings.threshold(&budget);
    let notes = format!("Parameter -> (t, h): {}.", mapping.join(", "));
    Ok(assemble(
        "commutation",
        points,
        threshold,
        Kind::Bound,
        budget,
        Vec::new(),
        notes,
    ))
}

/// A derivative recovered from pairings on a coarse grid over Ω′.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `g(c) = (−∫ f Xu_c − ∫ f u_c div X) / ∫ u_c` at each coarse node `c`.
    pub derivative: SampledFunction,
    pub radius: f64,
}

/// Recovers `Xf` on a reconstruction grid over `sub` by pairing `f`
/// against bumps centred at the coarse nodes, radius two coarse cells.
pub fn reconstruct_derivative<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    sub: &Cuboid,
    settings: &CheckSettings,
) -> Result<Reconstruction, TheoremError> {
    field_matches(f, field)?;
    let fine = f.grid();
    let n = fine.dimension();
    let per_axis: Vec<usize> = (0..n)
        .map(|i| {
            settings.reconstruction_per_axis.unwrap_or_else(|| {
                let k = libm::floor(sub.width(i) / (4.0 * fine.cell()[i])) as usize;
                k.clamp(2, 64)
            })
        })
        .collect();
    let coarse = Grid::new(sub.clone(), per_axis)?;
    let radius = 2.0 * coarse.max_cell();
    let domain = field.region().domain();
    let cfg = &settings.integrator;
    let values = map_indices(
        coarse.len(),
        cfg.threads,
        |k| -> Result<f64, TheoremError> {
            let c = coarse.node(k);
            if !domain.contains_ball(&c, radius, settings.h_div)
                || !fine.bounds().contains_ball(&c, radius, 0.0)
            {
                return Err(TheoremError::Reconstruction { radius });
            }
            let u = Bump::new(c, radius)?;
            let mut mass = 0.0;
            f.for_each_in_support(&u, |_, x, _| mass += u.value(x));
            let pairing = distributional_pairing(f, field, &u, settings.h_div)?;
            Ok(pairing / (mass * fine.cell_volume()))
        },
    );
    let values: Result<Vec<f64>, TheoremError> = values.into_iter().collect();
    Ok(Reconstruction {
        derivative: SampledFunction::from_values(coarse, values?)?,
        radius,
    })
}

struct GradientDefects {
    /// `max (|Δ_t f| − M_t h)_+` over nodes of Ω′.
    pointwise: f64,
}

fn upper_gradient_defect<F: Field + ?Sized>(
    f: &SampledFunction,
    h: &SampledFunction,
    field: &F,
    nodes: &[usize],
    t: f64,
    settings: &CheckSettings,
) -> Result<GradientDefects, TheoremError> {
    let cfg = &settings.integrator;
    let grid = f.grid();
    let quad = settings.quad(t)?;
    let defects = map_indices(nodes.len(), cfg.threads, |i| -> Result<f64, TheoremError> {
        let k = nodes[i];
        let x = grid.node(k);
        let (end, mean) =
            along(field, &x, t, h, quad, cfg, None)?.ok_or(TheoremError::Escaped { t })?;
        let dq = (f.value_at(&end) - f.values()[k]) / t;
        Ok((libm::fabs(dq) - mean).max(0.0))
    });
    let mut pointwise: f64 = 0.0;
    for d in defects {
        pointwise = pointwise.max(d?);
    }
    Ok(GradientDefects { pointwise })
}

/// `‖(|Δ_t f| − M_t|g|)_+‖_{L1}` over nodes of Ω′ whose sampled trajectory
/// stays in Ω′, where the coarse `|g|` lives.
fn reconstructed_defect<F: Field + ?Sized>(
    f: &SampledFunction,
    abs_g: &SampledFunction,
    field: &F,
    nodes: &[usize],
    sub: &Cuboid,
    t: f64,
    settings: &CheckSettings,
) -> Result<f64, TheoremError> {
    let cfg = &settings.integrator;
    let grid = f.grid();
    let quad = settings.quad(t)?;
    let defects = map_indices(nodes.len(), cfg.threads, |i| -> Result<f64, TheoremError> {
        let k = nodes[i];
        let x = grid.node(k);
        Ok(match along(field, &x, t, abs_g, quad, cfg, Some(sub))? {
            Some((end, mean)) => {
                let dq = (f.value_at(&end) - f.values()[k]) / t;
                (libm::fabs(dq) - mean).max(0.0)
            }
            None => 0.0,
        })
    });
    let mut total = 0.0;
    for d in defects {
        total += d?;
    }
    Ok(total * grid.cell_volume())
}

/// Upper gradients along `X`: points are `(t, max_{Ω′}(|Δ_t f| − M_t h)_+)`,
/// bounded by the threshold. Co-checks: the pairing-reconstructed `g`
/// satisfies `|g| ≤ h` on the coarse grid (least upper gradient), and `|g|`
/// is itself an upper gradient in the L1 sense
/// `‖(|Δ_t f| − M_t|g|)_+‖_{L1(Ω′)} ≤ threshold + reconstruction_tolerance`.
pub fn verify_upper_gradient<F: Field + ?Sized>(
    f: &SampledFunction,
    h: &SampledFunction,
    field: &F,
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    same_grid(f, h)?;
    field_matches(f, field)?;
    let sub = field.region().working_box().clone();
    let nodes = nodes_in(f.grid(), &sub);
    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let d = upper_gradient_defect(f, h, field, &nodes, t, settings)?;
        points.push((t, d.pointwise));
    }

    let rec = reconstruct_derivative(f, field, &sub, settings)?;
    let coarse = rec.derivative.grid().clone();
    let mut least: f64 = 0.0;
    for (k, g) in rec.derivative.values().iter().enumerate() {
        least = least.max(libm::fabs(*g) - h.value_at(&coarse.node(k)));
    }
    let abs_g = rec.derivative.map(libm::fabs)?;
    let mut own: f64 = 0.0;
    for &t in t_sequence {
        own = own.max(reconstructed_defect(
            f, &abs_g, field, &nodes, &sub, t, settings,
        )?);
    }

    let budget = settings.budget(Some(f.grid()), t_sequence)?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![
        CoCheck::at_most("least_gradient", least.max(0.0), threshold),
        CoCheck::at_most(
            "reconstructed_upper_gradient",
            own,
            threshold + settings.reconstruction_tolerance,
        ),
    ];
    let notes = format!(
        "Derivative reconstructed on a {:?} grid with bump radius {:.6}; the smoothing of that \
         reconstruction is allowed {} in L1.",
        coarse.resolution(),
        rec.radius,
        settings.reconstruction_tolerance
    );
    Ok(assemble(
        "upper_gradient",
        points,
        threshold,
        Kind::Bound,
        budget,
        cochecks,
        notes,
    ))
}

/// A family `X_1…X_k`: points are `(t, max over coefficient samples of
/// max_{Ω′}(|Δ_t^{Σc_jX_j} f| − M_t h)_+)`. Co-check: `Σ_j (X_j f)² ≤ h²` on
/// the reconstruction grid with each `X_j f` recovered by pairings.
pub fn verify_system(
    f: &SampledFunction,
    fields: &[VectorField],
    h: &SampledFunction,
    coefficients: &[CoefficientVector],
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    if fields.is_empty() {
        return Err(TheoremError::Empty("field family"));
    }
    if coefficients.is_empty() {
        return Err(TheoremError::Empty("coefficient samples"));
    }
    same_grid(f, h)?;
    let sub = fields[0].region().working_box().clone();
    let nodes = nodes_in(f.grid(), &sub);
    let mut combined = Vec::with_capacity(coefficients.len());
    for c in coefficients {
        if c.as_slice().len() != fields.len() {
            return Err(TheoremError::Dimension);
        }
        combined.push(VectorField::linear_combination(fields, c.as_slice())?);
    }
    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let mut worst: f64 = 0.0;
        for field in &combined {
            worst = worst.max(upper_gradient_defect(f, h, field, &nodes, t, settings)?.pointwise);
        }
        points.push((t, worst));
    }

    let mut squares: Option<SampledFunction> = None;
    for field in fields {
        let rec = reconstruct_derivative(f, field, &sub, settings)?.derivative;
        let sq = rec.map(|v| v * v)?;
        squares = Some(match squares {
            None => sq,
            Some(acc) => acc.zip_with(&sq, |a, b| a + b)?,
        });
    }
    let squares = squares.unwrap();
    let coarse = squares.grid().clone();
    let mut excess: f64 = 0.0;
    for (k, s) in squares.values().iter().enumerate() {
        let hv = h.value_at(&coarse.node(k));
        excess = excess.max(s - hv * hv);
    }

    let budget = settings.budget(Some(f.grid()), t_sequence)?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![CoCheck::at_most(
        "sum_of_squares",
        excess.max(0.0),
        threshold,
    )];
    let notes = format!(
        "{} fields, {} coefficient vectors in the unit ball; derivatives reconstructed on a {:?} grid.",
        fields.len(),
        coefficients.len(),
        coarse.resolution()
    );
    Ok(assemble(
        "system",
        points,
        threshold,
        Kind::Bound,
        budget,
        cochecks,
        notes,
    ))
}

/// Localisation by a cutoff `ρX`: points are `(t, max |lie_residual(f, ρg, ρX)|)`
/// over sampled trajectories. Co-checks: the base residual for `(f, g, X)`,
/// the pairing identity `⟨ρX f, u⟩ = ∫ρ g u` over a bump family, and
/// invariance of those pairings when `f` is changed where `ρX` vanishes.
pub fn verify_cutoff_localization(
    f: &SampledFunction,
    g: &SampledFunction,
    cutoff: &CutoffField,
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    same_grid(f, g)?;
    let base = cutoff.base();
    field_matches(f, base)?;
    let cfg = &settings.integrator;
    let grid = f.grid();
    let rho = cutoff.cutoff();
    let mut rho_g_values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        rho_g_values.push(rho.value(&grid.node(k)) * g.values()[k]);
    }
    let rho_g = SampledFunction::from_values(grid.clone(), rho_g_values)?;

    let sub = base.region().working_box();
    let starts = sample_points(sub, settings.trajectory_samples, settings.seed);
    let worst_residual =
        |field: &dyn Field, g: &SampledFunction, t: f64| -> Result<f64, TheoremError> {
            let rs = map_indices(
                starts.len(),
                cfg.threads,
                |i| -> Result<f64, TheoremError> {
                    let quad =
                        residual_quadrature(field, &starts[i], t, grid.max_cell(), settings)?;
                    Ok(libm::fabs(lie_residual(
                        f, g, field, &starts[i], t, quad, cfg,
                    )?))
                },
            );
            let mut worst: f64 = 0.0;
            for r in rs {
                worst = worst.max(r?);
            }
            Ok(worst)
        };
    let mut points = Vec::with_capacity(t_sequence.len());
    let mut base_residual: f64 = 0.0;
    for &t in t_sequence {
        points.push((t, worst_residual(cutoff, &rho_g, t)?));
        base_residual = base_residual.max(worst_residual(base, g, t)?);
    }

    let bumps = bump_family(
        sub,
        base.region().domain(),
        settings.bumps_per_axis,
        settings.h_div,
    )?;
    let mut pairing_gap: f64 = 0.0;
    let mut modified_gap: f64 = 0.0;
    let mut changed = 0usize;
    let mut v = vec![0.0; grid.dimension()];
    let mut modified_values = f.values().to_vec();
    for (k, value) in modified_values.iter_mut().enumerate() {
        cutoff
            .eval_into(&grid.node(k), &mut v)
            .map_err(CalculusError::from)?;
        if v.iter().all(|c| *c == 0.0) {
            *value += 1.0;
            changed += 1;
        }
    }
    let modified = SampledFunction::from_values(grid.clone(), modified_values)?;
    for u in &bumps {
        let lhs = distributional_pairing(f, cutoff, u, settings.h_div)?;
        pairing_gap = pairing_gap.max(libm::fabs(lhs - rho_g.pair(u)?));
        let alt = distributional_pairing(&modified, cutoff, u, settings.h_div)?;
        modified_gap = modified_gap.max(libm::fabs(alt - lhs));
    }

    let budget = settings.budget(Some(grid), &[])?;
    let threshold = settings.threshold(&budget);
    let cochecks = vec![
        CoCheck::at_most("base_lie_residual", base_residual, threshold),
        CoCheck::at_most("cutoff_pairing", pairing_gap, threshold),
        CoCheck::at_most("zero_set_modification", modified_gap, threshold),
    ];
    let notes = format!(
        "Cutoff bump at {:?} radius {}; f raised by 1 on {} nodes where the cutoff field vanishes.",
        rho.center(),
        rho.radius(),
        changed
    );
    Ok(assemble(
        "cutoff_localization",
        points,
        threshold,
        Kind::Bound,
        budget,
        cochecks,
        notes,
    ))
}

/// `M_t f(x) → f(x)`: points are `(t, max over non-exceptional points of
/// |M_t f(x) − f(x)|)`.
pub fn lebesgue_point_check<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    points_x: &[Vec<f64>],
    exceptional: &[bool],
    t_sequence: &[f64],
    settings: &CheckSettings,
) -> Result<ConvergenceReport, TheoremError> {
    check_decreasing(t_sequence, true)?;
    field_matches(f, field)?;
    if points_x.is_empty() {
        return Err(TheoremError::Empty("points"));
    }
    if exceptional.len() != points_x.len() {
        return Err(TheoremError::Dimension);
    }
    let cfg = &settings.integrator;
    let used: Vec<&Vec<f64>> = points_x
        .iter()
        .zip(exceptional)
        .filter(|(_, e)| !**e)
        .map(|(p, _)| p)
        .collect();
    let mut points = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let quad = settings.quad(t)?;
        let mut worst: f64 = 0.0;
        for x in &used {
            let (_, mean) =
                along(field, x, t, f, quad, cfg, None)?.ok_or(TheoremError::Escaped { t })?;
            worst = worst.max(libm::fabs(mean - f.value_at(x)));
        }
        points.push((t, worst));
    }
    let budget = settings.budget(Some(f.grid()), t_sequence)?;
    let threshold = settings.threshold(&budget);
    let notes = format!(
        "{} points, {} flagged exceptional and excluded.",
        points_x.len(),
        points_x.len() - used.len()
    );
    Ok(assemble(
        "lebesgue_points",
        points,
        threshold,
        Kind::Convergence,
        budget,
        Vec::new(),
        notes,
    ))
}

/// Grid surrogates for equi-integrability of a family; no verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityDiagnostic {
    /// `sup ‖f‖_{L1}` over the family.
    pub sup_l1: f64,
    /// `(δ, sup over the family of ∫|f| over the ⌈δN⌉ heaviest cells)`.
    pub worst_cells: Vec<(f64, f64)>,
    /// `(s, sup over the family of ∫|f| outside the box scaled by s)`.
    pub tail: Vec<(f64, f64)>,
}

impl IntegrabilityDiagnostic {
    /// As a report with a diagnostic verdict; points are the worst-cell masses.
    pub fn to_report(&self) -> ConvergenceReport {
        let tail: Vec<String> = self
            .tail
            .iter()
            .map(|(s, m)| format!("{s}: {m:.6e}"))
            .collect();
        ConvergenceReport {
            label: "uniform_integrability".into(),
            points: self.worst_cells.clone(),
            fitted_rate: fitted_rate(&self.worst_cells),
            threshold: 0.0,
            verdict: Verdict::Diagnostic,
            notes: format!(
                "Diagnostic only: weak compactness is not decidable from finite data. sup L1 = {:.6e}; \
                 tail mass outside scaled boxes {{{}}}.",
                self.sup_l1,
                tail.join(", ")
            ),
            budget: Budget {
                integrator: 0.0,
                quadrature: 0.0,
                interpolation: 0.0,
            },
            cochecks: Vec::new(),
        }
    }
}

/// `delta_grid` must be strictly decreasing in (0, 1].
pub fn uniform_integrability_diagnostic(
    family: &[SampledFunction],
    delta_grid: &[f64],
) -> Result<IntegrabilityDiagnostic, TheoremError> {
    let first = family.first().ok_or(TheoremError::Empty("family"))?;
    check_decreasing(delta_grid, true)?;
    if delta_grid[0] > 1.0 {
        return Err(TheoremError::Sequence("δ must lie in (0, 1]"));
    }
    for f in family {
        same_grid(first, f)?;
    }
    let grid = first.grid();
    let vol = grid.cell_volume();
    let sup_l1 = family.iter().map(|f| f.l1_norm(None)).fold(0.0, f64::max);
    let sorted: Vec<Vec<f64>> = family
        .iter()
        .map(|f| {
            let mut v: Vec<f64> = f.values().iter().map(|x| libm::fabs(*x)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect();
    let worst_cells = delta_grid
        .iter()
        .map(|&d| {
            let count = (libm::ceil(d * grid.len() as f64) as usize).min(grid.len());
            let mass = sorted
                .iter()
                .map(|v| v[..count].iter().sum::<f64>() * vol)
                .fold(0.0, f64::max);
            (d, mass)
        })
        .collect();
    let mut tail = Vec::new();
    for s in [0.25, 0.5, 0.75, 0.9] {
        let inner = grid.bounds().scaled(s).map_err(FieldError::from)?;
        let mass = family
            .iter()
            .map(|f| f.l1_norm(None) - f.l1_norm(Some(&inner)))
            .fold(0.0, f64::max);
        tail.push((s, mass));
    }
    Ok(IntegrabilityDiagnostic {
        sup_l1,
        worst_cells,
        tail,
    })
}
