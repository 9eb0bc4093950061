//! Flow maps `γ_t` of Lipschitz fields, their Jacobians, and the
//! Gronwall-type estimates they satisfy.
//!
//! Integration is classical RK4 with fixed substeps. The substep never
//! exceeds `ln 2 / L`, so every per-substep Jacobian factor stays within
//! operator distance 1 of the identity and is orientation preserving.
//! Fields with kinks (`abs`, `min`, `max`) additionally cap the substep
//! at `tolerance^{1/2}`.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::EvalError;
use crate::field::{distance, Field};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("starting point lies outside the open domain")]
    OutsideDomain,
    #[error("point dimension {got} does not match field dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("integration needs more than {limit} steps")]
    MaxSteps { limit: usize },
    #[error("trajectory leaves the domain at time {time}")]
    Escaped { time: f64 },
    #[error("finite-difference stencil leaves the domain")]
    StencilOutside,
    #[error("trajectory passes within the stencil width of a kink of the field")]
    NearKink,
    #[error("Jacobian determinant {0} is not positive")]
    NonPositiveDeterminant(f64),
    #[error("field `{0}` has no declared Lipschitz constant")]
    MissingLipschitz(alloc::string::String),
    #[error("invalid integrator configuration: {0}")]
    BadConfig(&'static str),
    #[error("integration produced a non-finite state")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Integrate `Y' = DX(γ) Y` next to the flow, with `DX` by central differences.
    Variational,
    /// Central differences of the flow map itself.
    ForwardDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub base_step: f64,
    pub tolerance: f64,
    pub max_steps: usize,
    pub jacobian_mode: JacobianMode,
    /// Worker threads for node-wise loops; only honoured with the `std` feature.
    pub threads: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            base_step: 1e-2,
            tolerance: 1e-9,
            max_steps: 2_000_000,
            jacobian_mode: JacobianMode::Variational,
            threads: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.base_step > 0.0 && self.base_step.is_finite()) {
            return Err(FlowError::BadConfig("base_step must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(FlowError::BadConfig("tolerance must lie in (0, 1)"));
        }
        if self.max_steps == 0 {
            return Err(FlowError::BadConfig("max_steps must be positive"));
        }
        Ok(())
    }

    /// Substep actually used for `field`.
    pub fn step_for<F: Field + ?Sized>(&self, field: &F) -> f64 {
        let mut h = self.base_step;
        if let Some(l) = field.lipschitz().filter(|&l| l > 0.0) {
            h = h.min(core::f64::consts::LN_2 / l);
        }
        if !field.is_smooth() {
            h = h.min(libm::sqrt(self.tolerance));
        }
        h
    }

    /// Finite-difference half-width used for Jacobians.
    pub fn fd_step(&self) -> f64 {
        libm::sqrt(self.tolerance)
    }
}

/// Endpoint of a trajectory together with its escape time, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    /// `γ_t(x)`, or the last point inside Ω when the trajectory escaped.
    pub point: Vec<f64>,
    pub escape_time: Option<f64>,
}

/// One evaluation record of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub gamma: Vec<f64>,
    pub advance: Vec<f64>,
    /// `None` when escaped, or when the Jacobian is undefined near a kink.
    pub jac_det: Option<f64>,
    pub escape_time: Option<f64>,
}

impl FlowSample {
    pub fn escaped(&self) -> bool {
        self.escape_time.is_some()
    }
}

struct Rk4Scratch {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }
}

fn rk4_step<F: Field + ?Sized>(
    field: &F,
    y: &[f64],
    dt: f64,
    out: &mut [f64],
    s: &mut Rk4Scratch,
) -> Result<(), EvalError> {
    let n = y.len();
    field.eval_into(y, &mut s.k[0])?;
    for i in 0..n {
        s.stage[i] = y[i] + 0.5 * dt * s.k[0][i];
    }
    field.eval_into(&s.stage, &mut s.k[1])?;
    for i in 0..n {
        s.stage[i] = y[i] + 0.5 * dt * s.k[1][i];
    }
    field.eval_into(&s.stage, &mut s.k[2])?;
    for i in 0..n {
        s.stage[i] = y[i] + dt * s.k[2][i];
    }
    field.eval_into(&s.stage, &mut s.k[3])?;
    for i in 0..n {
        out[i] = y[i] + dt / 6.0 * (s.k[0][i] + 2.0 * s.k[1][i] + 2.0 * s.k[2][i] + s.k[3][i]);
    }
    Ok(())
}

/// A trajectory that can be advanced monotonically in time.
pub struct Trajectory<'a, F: Field + ?Sized> {
    field: &'a F,
    state: Vec<f64>,
    next: Vec<f64>,
    time: f64,
    step: f64,
    tolerance: f64,
    steps: usize,
    max_steps: usize,
    escape_time: Option<f64>,
    scratch: Rk4Scratch,
}

impl<'a, F: Field + ?Sized> Trajectory<'a, F> {
    pub fn new(field: &'a F, x: &[f64], cfg: &IntegratorConfig) -> Result<Self, FlowError> {
        let n = field.dimension();
        if x.len() != n {
            return Err(FlowError::Dimension {
                expected: n,
                got: x.len(),
            });
        }
        if !field.region().domain().contains(x) {
            return Err(FlowError::OutsideDomain);
        }
        Ok(Self {
            field,
            state: x.to_vec(),
            next: vec![0.0; n],
            time: 0.0,
            step: cfg.step_for(field),
            tolerance: cfg.tolerance,
            steps: 0,
            max_steps: cfg.max_steps,
            escape_time: None,
            scratch: Rk4Scratch::new(n),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn escape_time(&self) -> Option<f64> {
        self.escape_time
    }

    /// Integrates up to `target`. Returns `false` once the trajectory has
    /// left Ω; the state then stays at the last point inside, and the escape
    /// time is bracketed to `tolerance` by bisection.
    pub fn advance_to(&mut self, target: f64) -> Result<bool, FlowError> {
        if self.escape_time.is_some() {
            return Ok(false);
        }
        let span = target - self.time;
        if span == 0.0 {
            return Ok(true);
        }
        let count = libm::ceil(libm::fabs(span) / self.step).max(1.0) as usize;
        let dt = span / count as f64;
        let domain = self.field.region().domain();
        for k in 0..count {
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(FlowError::MaxSteps {
                    limit: self.max_steps,
                });
            }
            rk4_step(
                self.field,
                &self.state,
                dt,
                &mut self.next,
                &mut self.scratch,
            )?;
            if self.next.iter().any(|v| !v.is_finite()) {
                return Err(FlowError::NonFinite);
            }
            if domain.contains(&self.next) {
                core::mem::swap(&mut self.state, &mut self.next);
                // land exactly on the target to avoid drift in the clock
                self.time = if k + 1 == count {
                    target
                } else {
                    self.time + dt
                };
                continue;
            }
            self.bracket_escape(dt)?;
            return Ok(false);
        }
        Ok(true)
    }

    fn bracket_escape(&mut self, dt: f64) -> Result<(), FlowError> {
        let domain = self.field.region().domain();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut inside = self.state.clone();
        let mut probe = vec![0.0; self.state.len()];
        while (hi - lo) * libm::fabs(dt) > self.tolerance {
            let mid = 0.5 * (lo + hi);
            rk4_step(
                self.field,
                &self.state,
                mid * dt,
                &mut probe,
                &mut self.scratch,
            )?;
            if domain.contains(&probe) {
                lo = mid;
                inside.copy_from_slice(&probe);
            } else {
                hi = mid;
            }
        }
        self.state = inside;
        self.time += lo * dt;
        self.escape_time = Some(self.time);
        Ok(())
    }
}

/// `γ_t(x)` with escape detection.
pub fn transport<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Transport, FlowError> {
    let mut traj = Trajectory::new(field, x, cfg)?;
    traj.advance_to(t)?;
    Ok(Transport {
        escape_time: traj.escape_time(),
        point: traj.state,
    })
}

/// Full flow record: endpoint, advance `λ = γ_t(x) − x`, Jacobian determinant.
pub fn flow_point<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowSample, FlowError> {
    cfg.validate()?;
    let end = transport(field, x, t, cfg)?;
    let jac_det = if end.escape_time.is_some() {
        None
    } else {
        match jacobian_det(field, x, t, cfg) {
            Ok(j) => Some(j),
            Err(FlowError::NearKink | FlowError::StencilOutside | FlowError::Escaped { .. }) => {
                None
            }
            Err(e) => return Err(e),
        }
    };
    let advance = end.point.iter().zip(x).map(|(g, x)| g - x).collect();
    Ok(FlowSample {
        x: x.to_vec(),
        t,
        gamma: end.point,
        advance,
        jac_det,
        escape_time: end.escape_time,
    })
}

/// `Dγ_t(x)`.
pub fn jacobian_matrix<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Matrix, FlowError> {
    cfg.validate()?;
    let n = field.dimension();
    if t == 0.0 {
        if !field.region().domain().contains(x) {
            return Err(FlowError::OutsideDomain);
        }
        return Ok(Matrix::identity(n));
    }
    match cfg.jacobian_mode {
        JacobianMode::Variational => variational(field, x, t, cfg),
        JacobianMode::ForwardDifference => flow_differences(field, x, t, cfg),
    }
}

/// `J_t(x) = det Dγ_t(x)`, required to be strictly positive.
pub fn jacobian_det<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    if t == 0.0 {
        jacobian_matrix(field, x, t, cfg)?;
        return Ok(1.0);
    }
    let det = jacobian_matrix(field, x, t, cfg)?.determinant();
    if !(det > 0.0) {
        return Err(FlowError::NonPositiveDeterminant(det));
    }
    Ok(det)
}

/// Central-difference `DX(y)` into `out` (row-major); detects kinks on
/// nonsmooth fields by comparing one-sided quotients.
fn field_jacobian<F: Field + ?Sized>(
    field: &F,
    y: &[f64],
    delta: f64,
    out: &mut [f64],
    probe: &mut [f64],
    plus: &mut [f64],
    minus: &mut [f64],
    centre: &mut [f64],
) -> Result<(), FlowError> {
    let n = y.len();
    let smooth = field.is_smooth();
    if !smooth {
        field.eval_into(y, centre)?;
    }
    probe.copy_from_slice(y);
    for j in 0..n {
        probe[j] = y[j] + delta;
        field.eval_into(probe, plus)?;
        probe[j] = y[j] - delta;
        field.eval_into(probe, minus)?;
        probe[j] = y[j];
        for i in 0..n {
            let central = (plus[i] - minus[i]) / (2.0 * delta);
            if !smooth {
                let fwd = (plus[i] - centre[i]) / delta;
                let bwd = (centre[i] - minus[i]) / delta;
                if libm::fabs(fwd - bwd) > 1e-2 * (1.0 + libm::fabs(central)) {
                    return Err(FlowError::NearKink);
                }
            }
            out[i * n + j] = central;
        }
    }
    Ok(())
}

fn variational<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Matrix, FlowError> {
    let n = field.dimension();
    if x.len() != n {
        return Err(FlowError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    let domain = field.region().domain();
    if !domain.contains(x) {
        return Err(FlowError::OutsideDomain);
    }
    let delta = cfg.fd_step();
    let count = libm::ceil(libm::fabs(t) / cfg.step_for(field)).max(1.0) as usize;
    if count > cfg.max_steps {
        return Err(FlowError::MaxSteps {
            limit: cfg.max_steps,
        });
    }
    let dt = t / count as f64;
    let m = n + n * n;

    // augmented state: (y, Y) with Y row-major
    let mut state = vec![0.0; m];
    state[..n].copy_from_slice(x);
    for i in 0..n {
        state[n + i * n + i] = 1.0;
    }
    let mut k: [Vec<f64>; 4] = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    let mut stage = vec![0.0; m];
    let mut dx = vec![0.0; n * n];
    let (mut probe, mut plus, mut minus, mut centre) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let mut rhs = |s: &[f64], out: &mut [f64]| -> Result<(), FlowError> {
        field.eval_into(&s[..n], &mut out[..n])?;
        field_jacobian(
            field,
            &s[..n],
            delta,
            &mut dx,
            &mut probe,
            &mut plus,
            &mut minus,
            &mut centre,
        )?;
        let y = &s[n..];
        let dy = &mut out[n..];
        for i in 0..n {
            for j in 0..n {
                dy[i * n + j] = (0..n).map(|l| dx[i * n + l] * y[l * n + j]).sum();
            }
        }
        Ok(())
    };

    let mut time = 0.0;
    for _ in 0..count {
        rhs(&state, &mut k[0])?;
        for i in 0..m {
            stage[i] = state[i] + 0.5 * dt * k[0][i];
        }
        rhs(&stage, &mut k[1])?;
        for i in 0..m {
            stage[i] = state[i] + 0.5 * dt * k[1][i];
        }
        rhs(&stage, &mut k[2])?;
        for i in 0..m {
            stage[i] = state[i] + dt * k[2][i];
        }
        rhs(&stage, &mut k[3])?;
        for i in 0..m {
            state[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        time += dt;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        if !domain.contains(&state[..n]) {
            return Err(FlowError::Escaped { time });
        }
    }
    Ok(Matrix::from_row_major(n, state[n..].to_vec()).unwrap())
}

fn flow_differences<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Matrix, FlowError> {
    let n = field.dimension();
    let domain = field.region().domain();
    if !domain.contains(x) {
        return Err(FlowError::OutsideDomain);
    }
    let delta = cfg.fd_step();
    if !domain.contains_ball(x, delta, 0.0) {
        return Err(FlowError::StencilOutside);
    }
    let mut jac = Matrix::zeros(n);
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + delta;
        let plus = transport(field, &probe, t, cfg)?;
        probe[j] = x[j] - delta;
        let minus = transport(field, &probe, t, cfg)?;
        probe[j] = x[j];
        if let Some(time) = plus.escape_time.or(minus.escape_time) {
            return Err(FlowError::Escaped { time });
        }
        for i in 0..n {
            jac.set(i, j, (plus.point[i] - minus.point[i]) / (2.0 * delta));
        }
    }
    Ok(jac)
}

/// Outcome of a pairwise estimate over a list of point pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// Largest observed `|left side| / |x − y|`.
    pub worst_ratio: f64,
    /// Multiplier on `|x − y|` in the estimate.
    pub bound: f64,
    /// Largest `|left side| − bound·|x − y|` (negative when the estimate has room).
    pub worst_excess: f64,
    pub pairs: usize,
    /// Absolute slack allowed for integration error.
    pub slack: f64,
    pub holds: bool,
}

fn declared_lipschitz<F: Field + ?Sized>(field: &F) -> Result<f64, FlowError> {
    field
        .lipschitz()
        .ok_or_else(|| FlowError::MissingLipschitz(field.name().into()))
}

fn pairwise<F: Field + ?Sized>(
    field: &F,
    pairs: &[(Vec<f64>, Vec<f64>)],
    t: f64,
    cfg: &IntegratorConfig,
    bound: f64,
    advance: bool,
) -> Result<EstimateReport, FlowError> {
    cfg.validate()?;
    let slack = 10.0 * cfg.tolerance;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut counted = 0;
    for (x, y) in pairs {
        let d0 = distance(x, y);
        if d0 == 0.0 {
            continue;
        }
        let gx = transport(field, x, t, cfg)?;
        let gy = transport(field, y, t, cfg)?;
        if let Some(time) = gx.escape_time.or(gy.escape_time) {
            return Err(FlowError::Escaped { time });
        }
        let lhs = if advance {
            let lx: Vec<f64> = gx.point.iter().zip(x).map(|(g, x)| g - x).collect();
            let ly: Vec<f64> = gy.point.iter().zip(y).map(|(g, y)| g - y).collect();
            distance(&lx, &ly)
        } else {
            distance(&gx.point, &gy.point)
        };
        worst_ratio = worst_ratio.max(lhs / d0);
        worst_excess = worst_excess.max(lhs - bound * d0);
        counted += 1;
    }
    Ok(EstimateReport {
        worst_ratio,
        bound,
        worst_excess,
        pairs: counted,
        slack,
        holds: worst_excess <= slack,
    })
}

/// `|γ_t(x) − γ_t(y)| ≤ e^{L|t|} |x − y|` over the given pairs.
pub fn check_gronwall<F: Field + ?Sized>(
    field: &F,
    pairs: &[(Vec<f64>, Vec<f64>)],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<EstimateReport, FlowError> {
    let l = declared_lipschitz(field)?;
    pairwise(field, pairs, t, cfg, libm::exp(l * libm::fabs(t)), false)
}

/// `|λ(x,t) − λ(y,t)| ≤ (e^{L|t|} − 1) |x − y|` with `λ(x,t) = γ_t(x) − x`.
pub fn check_advance_estimate<F: Field + ?Sized>(
    field: &F,
    pairs: &[(Vec<f64>, Vec<f64>)],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<EstimateReport, FlowError> {
    let l = declared_lipschitz(field)?;
    pairwise(field, pairs, t, cfg, libm::expm1(l * libm::fabs(t)), true)
}

/// `e^{n L |t|}`, the two-sided bound on `J_t`.
pub fn jacobian_bound<F: Field + ?Sized>(field: &F, t: f64) -> Result<f64, FlowError> {
    let l = declared_lipschitz(field)?;
    Ok(libm::exp(field.dimension() as f64 * l * libm::fabs(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Cuboid, Region, VectorField};
    use core::f64::consts::{E, FRAC_PI_2, LN_2};

    fn field1(src: &str, l: f64) -> VectorField {
        let r = Region::from_domain(Cuboid::cube(1, -10.0, 10.0).unwrap());
        VectorField::parse(src, r, &[src], Some(l)).unwrap()
    }

    fn rotation() -> VectorField {
        let r = Region::from_domain(Cuboid::cube(2, -3.0, 3.0).unwrap());
        VectorField::parse("rotation", r, &["-x1", "x0"], Some(1.0)).unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn flow_examples() {
        let s = flow_point(&field1("1", 0.0), &[0.0], 1.0, &cfg()).unwrap();
        assert!((s.gamma[0] - 1.0).abs() < 1e-12);
        assert!((s.advance[0] - 1.0).abs() < 1e-12);
        let s = flow_point(&field1("x0", 1.0), &[1.0], LN_2, &cfg()).unwrap();
        assert!((s.gamma[0] - 2.0).abs() < 1e-9);
        let s = flow_point(&field1("abs(x0)", 1.0), &[-1.0], 1.0, &cfg()).unwrap();
        assert!(
            (s.gamma[0] + (-1.0f64).exp()).abs() < 1e-9,
            "{}",
            s.gamma[0]
        );
        let s = flow_point(&rotation(), &[0.3, -0.2], 0.0, &cfg()).unwrap();
        assert_eq!(s.gamma, vec![0.3, -0.2]);
        assert_eq!(s.advance, vec![0.0, 0.0]);
        assert_eq!(s.jac_det, Some(1.0));
    }

    #[test]
    fn start_outside_is_an_error() {
        assert_eq!(
            transport(&field1("1", 0.0), &[10.0], 1.0, &cfg()),
            Err(FlowError::OutsideDomain)
        );
    }

    #[test]
    fn escape_time_is_bracketed() {
        // γ_t(0) = t leaves (−10, 10) at t = 10
        let end = transport(&field1("1", 0.0), &[0.0], 12.0, &cfg()).unwrap();
        let te = end.escape_time.unwrap();
        assert!((te - 10.0).abs() <= 1e-8, "{te}");
        assert!(end.point[0] < 10.0);
        // backwards as well
        let end = transport(&field1("1", 0.0), &[0.0], -12.0, &cfg()).unwrap();
        assert!((end.escape_time.unwrap() + 10.0).abs() <= 1e-8);
    }

    #[test]
    fn max_steps_reported() {
        let c = IntegratorConfig {
            max_steps: 5,
            ..cfg()
        };
        assert_eq!(
            transport(&field1("1", 0.0), &[0.0], 1.0, &c),
            Err(FlowError::MaxSteps { limit: 5 })
        );
    }

    #[test]
    fn jacobian_examples() {
        for mode in [JacobianMode::Variational, JacobianMode::ForwardDifference] {
            let c = IntegratorConfig {
                jacobian_mode: mode,
                ..cfg()
            };
            let m = jacobian_matrix(&rotation(), &[0.4, 0.1], FRAC_PI_2, &c).unwrap();
            let expected = [0.0, -1.0, 1.0, 0.0];
            for (a, b) in m.as_slice().iter().zip(expected) {
                assert!((a - b).abs() < 1e-6, "{mode:?}: {m:?}");
            }
            let m = jacobian_matrix(&field1("x0", 1.0), &[0.7], 1.0, &c).unwrap();
            assert!((m.get(0, 0) - E).abs() < 1e-6);
            let j = jacobian_det(&rotation(), &[0.4, 0.1], 2.3, &c).unwrap();
            assert!((j - 1.0).abs() < 1e-6);
        }
        assert_eq!(
            jacobian_matrix(&rotation(), &[0.1, 0.2], 0.0, &cfg()).unwrap(),
            Matrix::identity(2)
        );
        assert_eq!(
            jacobian_det(&rotation(), &[0.1, 0.2], 0.0, &cfg()).unwrap(),
            1.0
        );
    }

    #[test]
    fn scaling_jacobian_attains_upper_bound() {
        let f = field1("x0", 1.0);
        let j = jacobian_det(&f, &[0.5], 1.0, &cfg()).unwrap();
        let bound = jacobian_bound(&f, 1.0).unwrap();
        assert!((j - E).abs() < 1e-6);
        assert!((j - bound).abs() < 1e-6);
        assert!(j >= 1.0 / bound - 1e-6);
    }

    #[test]
    fn kink_is_flagged_for_jacobians() {
        let f = field1("abs(x0)", 1.0);
        // 0 is a fixed point on the kink
        assert_eq!(
            jacobian_det(&f, &[0.0], 0.5, &cfg()),
            Err(FlowError::NearKink)
        );
        let j = jacobian_det(&f, &[-0.5], 0.5, &cfg()).unwrap();
        assert!((j - (-0.5f64).exp()).abs() < 1e-6);
        let s = flow_point(&f, &[0.0], 0.5, &cfg()).unwrap();
        assert_eq!(s.jac_det, None);
    }

    #[test]
    fn jacobians_of_forward_and_backward_flows_are_inverse() {
        let r = Region::from_domain(Cuboid::cube(2, -3.0, 3.0).unwrap());
        let f = VectorField::parse(
            "swirl",
            r,
            &["sin(x1) + 0.2*x0", "cos(x0) - 0.3*x1"],
            Some(1.3),
        )
        .unwrap();
        let x = [0.2, -0.4];
        for t in [0.3, 0.8] {
            let g = transport(&f, &x, t, &cfg()).unwrap().point;
            let a = jacobian_det(&f, &x, t, &cfg()).unwrap();
            let b = jacobian_det(&f, &g, -t, &cfg()).unwrap();
            assert!((a * b - 1.0).abs() <= 10.0 * 1e-6, "{}", a * b);
        }
    }

    #[test]
    fn jacobian_cocycle() {
        let r = Region::from_domain(Cuboid::cube(2, -3.0, 3.0).unwrap());
        let f = VectorField::parse(
            "swirl",
            r,
            &["sin(x1) + 0.2*x0", "cos(x0) - 0.3*x1"],
            Some(1.3),
        )
        .unwrap();
        let c = cfg();
        let x = [0.1, 0.3];
        let t = 0.8;
        let whole = jacobian_det(&f, &x, t, &c).unwrap();
        for k in 1..=8 {
            let mut prod = 1.0;
            let mut y = x.to_vec();
            for _ in 0..k {
                prod *= jacobian_det(&f, &y, t / k as f64, &c).unwrap();
                y = transport(&f, &y, t / k as f64, &c).unwrap().point;
            }
            // the finite-difference DX limits agreement to ~fd_step²
            assert!(
                (whole - prod).abs() <= 10.0 * c.fd_step().powi(2) * k as f64,
                "{k}: {whole} {prod}"
            );
        }
    }

    #[test]
    fn gronwall_and_advance_examples() {
        let c = cfg();
        let pairs = vec![
            (vec![0.1], vec![0.4]),
            (vec![-1.0], vec![2.0]),
            (vec![0.5], vec![0.50001]),
        ];
        let tr = field1("1", 0.0);
        let g = check_gronwall(&tr, &pairs, 0.7, &c).unwrap();
        assert!((g.worst_ratio - 1.0).abs() < 1e-9 && g.holds);
        let a = check_advance_estimate(&tr, &pairs, 0.7, &c).unwrap();
        assert!(a.worst_ratio < 1e-9 && a.holds);

        let sc = field1("x0", 1.0);
        let g = check_gronwall(&sc, &pairs, 1.0, &c).unwrap();
        assert!((g.worst_ratio - E).abs() < 1e-8 && g.holds);
        let a = check_advance_estimate(&sc, &pairs, 1.0, &c).unwrap();
        assert!((a.worst_ratio - (E - 1.0)).abs() < 1e-8 && a.holds);
        let g = check_gronwall(&sc, &pairs, 0.0, &c).unwrap();
        assert_eq!(g.worst_ratio, 1.0);

        let circle: Vec<(Vec<f64>, Vec<f64>)> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.5;
                let b = a + 1.3;
                (vec![a.cos(), a.sin()], vec![b.cos(), b.sin()])
            })
            .collect();
        let a = check_advance_estimate(&rotation(), &circle, FRAC_PI_2, &c).unwrap();
        assert!((a.worst_ratio - 2f64.sqrt()).abs() < 1e-8);
        assert!(a.holds && a.worst_ratio <= FRAC_PI_2.exp() - 1.0);
    }

    #[test]
    fn estimates_require_a_declared_constant() {
        let r = Region::from_domain(Cuboid::cube(1, -1.0, 1.0).unwrap());
        let f = VectorField::parse("anon", r, &["x0"], None).unwrap();
        assert!(matches!(
            check_gronwall(&f, &[], 1.0, &cfg()),
            Err(FlowError::MissingLipschitz(_))
        ));
    }

    #[test]
    fn substep_respects_log_two_cap() {
        let c = IntegratorConfig {
            base_step: 1.0,
            ..cfg()
        };
        assert!((c.step_for(&field1("4*x0", 4.0)) - LN_2 / 4.0).abs() < 1e-15);
        assert!(c.step_for(&field1("abs(x0)", 1.0)) <= c.tolerance.sqrt());
    }
}
