//! Operators along a flow acting on sampled functions: difference quotients
//! `Δ_t f`, means `M_t h`, the pullback `T_t f = f∘γ_t`, distributional
//! pairings and Lie residuals, plus cutoff fields `ρX`.
//!
//! Off-grid values come from multilinear interpolation. Nodes whose
//! trajectory leaves Ω before time `t` carry 0 and are flagged, following
//! the convention `Δ_t f = M_t f = 0` off the flow domain.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::EvalError;
use crate::field::{divergence_with, norm, Field, FieldError, Region, VectorField};
use crate::flow::{transport, FlowError, IntegratorConfig, Trajectory};
use crate::grid::{Bump, FlaggedFunction, GridError, SampledFunction};
use crate::par::map_indices;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalculusError {
    #[error("time step must be nonzero")]
    ZeroTime,
    #[error("quadrature needs at least one substep")]
    NoSubsteps,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("test function support must stay more than {margin} inside the domain")]
    Support { margin: f64 },
    #[error("trajectory leaves the domain at time {time}")]
    Escaped { time: f64 },
    #[error("function grid and field have different dimensions")]
    Dimension,
}

impl From<EvalError> for CalculusError {
    fn from(e: EvalError) -> Self {
        CalculusError::Field(e.into())
    }
}

/// Midpoint rule in time with `m` nodes at `(j − ½)t/m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureAlongFlow {
    substeps: usize,
}

impl QuadratureAlongFlow {
    pub fn new(substeps: usize) -> Result<Self, CalculusError> {
        if substeps == 0 {
            return Err(CalculusError::NoSubsteps);
        }
        Ok(Self { substeps })
    }

    /// `m = ceil(|t| / base_step)`, at least 1.
    pub fn for_time(t: f64, cfg: &IntegratorConfig) -> Self {
        let m = libm::ceil(libm::fabs(t) / cfg.base_step).max(1.0);
        Self {
            substeps: m as usize,
        }
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }
}

fn check_dimension<F: Field + ?Sized>(f: &SampledFunction, field: &F) -> Result<(), CalculusError> {
    if f.grid().dimension() != field.dimension() {
        return Err(CalculusError::Dimension);
    }
    Ok(())
}

/// Per-node result: `None` when the trajectory is not defined up to `t`.
fn node_map<F, G>(
    f: &SampledFunction,
    field: &F,
    cfg: &IntegratorConfig,
    visit: G,
) -> Result<FlaggedFunction, CalculusError>
where
    F: Field + ?Sized,
    G: Fn(usize, &[f64]) -> Result<Option<f64>, CalculusError> + Sync,
{
    check_dimension(f, field)?;
    let grid = f.grid();
    let results = map_indices(grid.len(), cfg.threads, |k| {
        let x = grid.node(k);
        visit(k, &x)
    });
    let mut values = Vec::with_capacity(results.len());
    let mut flags = Vec::with_capacity(results.len());
    for r in results {
        match r? {
            Some(v) => {
                values.push(v);
                flags.push(false);
            }
            None => {
                values.push(0.0);
                flags.push(true);
            }
        }
    }
    Ok(FlaggedFunction {
        function: SampledFunction::from_values(grid.clone(), values)?,
        flags,
    })
}

/// `γ_t(x)` or `None` if `x ∉ Γ_t`.
fn endpoint<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<Vec<f64>>, CalculusError> {
    match transport(field, x, t, cfg) {
        Ok(end) if end.escape_time.is_none() => Ok(Some(end.point)),
        Ok(_) | Err(FlowError::OutsideDomain) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// `Δ_t f = (f∘γ_t − f) / t` at every node.
pub fn difference_quotient<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<FlaggedFunction, CalculusError> {
    if t == 0.0 {
        return Err(CalculusError::ZeroTime);
    }
    cfg.validate()?;
    node_map(f, field, cfg, |k, x| {
        Ok(endpoint(field, x, t, cfg)?.map(|y| (f.value_at(&y) - f.values()[k]) / t))
    })
}

/// `(1/t) ∫_0^t h(γ_s x) ds` by the midpoint rule, or `None` when the
/// trajectory leaves Ω before time `t`.
pub fn mean_at<F: Field + ?Sized>(
    h: &SampledFunction,
    field: &F,
    x: &[f64],
    t: f64,
    quad: QuadratureAlongFlow,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>, CalculusError> {
    if t == 0.0 {
        return Ok(Some(h.value_at(x)));
    }
    let mut traj = match Trajectory::new(field, x, cfg) {
        Ok(tr) => tr,
        Err(FlowError::OutsideDomain) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let m = quad.substeps;
    let mut acc = 0.0;
    for j in 0..m {
        if !traj.advance_to((j as f64 + 0.5) * t / m as f64)? {
            return Ok(None);
        }
        acc += h.value_at(traj.state());
    }
    if !traj.advance_to(t)? {
        return Ok(None);
    }
    Ok(Some(acc / m as f64))
}

/// `M_t h` at every node; `M_0 h = h`.
pub fn mean_operator<F: Field + ?Sized>(
    h: &SampledFunction,
    field: &F,
    t: f64,
    quad: QuadratureAlongFlow,
    cfg: &IntegratorConfig,
) -> Result<FlaggedFunction, CalculusError> {
    cfg.validate()?;
    if t == 0.0 {
        check_dimension(h, field)?;
        return Ok(FlaggedFunction {
            flags: vec![false; h.grid().len()],
            function: h.clone(),
        });
    }
    node_map(h, field, cfg, |_, x| mean_at(h, field, x, t, quad, cfg))
}

/// `T_t f = f∘γ_t`, extended by zero off `Γ_t`.
pub fn pullback<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<FlaggedFunction, CalculusError> {
    cfg.validate()?;
    if t == 0.0 {
        check_dimension(f, field)?;
        return Ok(FlaggedFunction {
            flags: vec![false; f.grid().len()],
            function: f.clone(),
        });
    }
    node_map(f, field, cfg, |_, x| {
        Ok(endpoint(field, x, t, cfg)?.map(|y| f.value_at(&y)))
    })
}

/// `−∫ f Xu − ∫ f u div X`, the action of the distribution `Xf` on `u`.
/// `u` must sit more than `h_div` inside Ω and inside the grid box.
pub fn distributional_pairing<F: Field + ?Sized>(
    f: &SampledFunction,
    field: &F,
    u: &Bump,
    h_div: f64,
) -> Result<f64, CalculusError> {
    check_dimension(f, field)?;
    if !(h_div > 0.0 && h_div.is_finite()) {
        return Err(FieldError::BadStep(h_div).into());
    }
    if !field
        .region()
        .domain()
        .contains_ball(u.center(), u.radius(), h_div)
    {
        return Err(CalculusError::Support { margin: h_div });
    }
    if !f.grid().bounds().contains_ball(u.center(), u.radius(), 0.0) {
        return Err(GridError::Support.into());
    }
    let n = field.dimension();
    let mut grad = vec![0.0; n];
    let mut x_val = vec![0.0; n];
    let mut scratch = vec![0.0; 3 * n];
    let mut acc = 0.0;
    let mut failure = None;
    f.for_each_in_support(u, |_, x, fx| {
        if failure.is_some() {
            return;
        }
        u.gradient_into(x, &mut grad);
        if let Err(e) = field.eval_into(x, &mut x_val) {
            failure = Some(CalculusError::from(e));
            return;
        }
        let xu: f64 = grad.iter().zip(&x_val).map(|(a, b)| a * b).sum();
        match divergence_with(field, x, h_div, &mut scratch) {
            Ok(div) => acc += fx * (xu + u.value(x) * div),
            Err(e) => failure = Some(e.into()),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(-acc * f.grid().cell_volume())
}

/// `f(γ_t x) − f(x) − ∫_0^t g(γ_s x) ds`, zero iff `g` is the Lie derivative
/// of `f` along this trajectory (up to quadrature).
pub fn lie_residual<F: Field + ?Sized>(
    f: &SampledFunction,
    g: &SampledFunction,
    field: &F,
    x: &[f64],
    t: f64,
    quad: QuadratureAlongFlow,
    cfg: &IntegratorConfig,
) -> Result<f64, CalculusError> {
    check_dimension(f, field)?;
    check_dimension(g, field)?;
    cfg.validate()?;
    let mut traj = Trajectory::new(field, x, cfg)?;
    let m = quad.substeps;
    let mut integral = 0.0;
    for j in 0..m {
        if !traj.advance_to((j as f64 + 0.5) * t / m as f64)? {
            return Err(CalculusError::Escaped {
                time: traj.escape_time().unwrap_or(traj.time()),
            });
        }
        integral += g.value_at(traj.state());
    }
    if !traj.advance_to(t)? {
        return Err(CalculusError::Escaped {
            time: traj.escape_time().unwrap_or(traj.time()),
        });
    }
    integral *= t / m as f64;
    Ok(f.value_at(traj.state()) - f.value_at(x) - integral)
}

/// `ρX` for a nonnegative bump `ρ`; compactly supported in Ω, hence complete.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffField {
    name: String,
    base: VectorField,
    cutoff: Bump,
    lipschitz: Option<f64>,
}

impl CutoffField {
    pub fn base(&self) -> &VectorField {
        &self.base
    }

    pub fn cutoff(&self) -> &Bump {
        &self.cutoff
    }
}

impl Field for CutoffField {
    fn name(&self) -> &str {
        &self.name
    }

    fn region(&self) -> &Region {
        self.base.region()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let rho = self.cutoff.value(x);
        if rho == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return Ok(());
        }
        self.base.eval_into(x, out)?;
        out.iter_mut().for_each(|o| *o *= rho);
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn is_smooth(&self) -> bool {
        self.base.is_smooth()
    }
}

/// Upper bound for `sup |X|` over the closed ball: the largest sampled value
/// on a lattice plus `L` times the covering radius of the lattice.
fn sup_norm_on_ball(base: &VectorField, ball: &Bump, l: f64) -> Result<f64, CalculusError> {
    let n = base.dimension();
    let per_axis: usize = match n {
        1 => 257,
        2 => 65,
        3 => 17,
        _ => 5,
    };
    let spacing = 2.0 * ball.radius() / (per_axis - 1) as f64;
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best: f64 = 0.0;
    loop {
        for i in 0..n {
            x[i] = ball.center()[i] - ball.radius() + spacing * idx[i] as f64;
        }
        base.eval_into(&x, &mut v)?;
        best = best.max(norm(&v));
        let mut axis = 0;
        loop {
            if axis == n {
                let cover = 0.5 * spacing * libm::sqrt(n as f64);
                return Ok(best + l * cover);
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Builds `ρX` with `ρ` the standard bump on the given ball, which must lie in Ω.
/// The declared constant is `L_ρ sup|X| + sup ρ · L` (product rule), with
/// `sup ρ = 1`.
pub fn make_cutoff_field(
    base: &VectorField,
    center: &[f64],
    radius: f64,
) -> Result<CutoffField, CalculusError> {
    let cutoff = Bump::new(center.to_vec(), radius)?;
    if !base.region().domain().contains_ball(center, radius, 0.0) {
        return Err(CalculusError::Support { margin: 0.0 });
    }
    let lipschitz = match base.lipschitz() {
        Some(l) => Some(cutoff.gradient_bound() * sup_norm_on_ball(base, &cutoff, l)? + l),
        None => None,
    };
    Ok(CutoffField {
        name: format!("cutoff({})", base.name()),
        base: base.clone(),
        cutoff,
        lipschitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::field::Cuboid;
    use crate::grid::Grid;

    fn line_field(src: &str, l: f64, lo: f64, hi: f64) -> VectorField {
        let r = Region::from_domain(Cuboid::cube(1, lo, hi).unwrap());
        VectorField::parse(src, r, &[src], Some(l)).unwrap()
    }

    fn sample(src: &str, lo: f64, hi: f64, res: usize) -> SampledFunction {
        let g = Grid::uniform(Cuboid::cube(1, lo, hi).unwrap(), res).unwrap();
        SampledFunction::sample(&Expression::parse(src, 1).unwrap(), g).unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn difference_quotient_examples() {
        let x = line_field("1", 0.0, -2.0, 2.0);
        let f = sample("x0^2", -2.0, 2.0, 400);
        let t = 0.1;
        let d = difference_quotient(&f, &x, t, &cfg()).unwrap();
        let cell = f.grid().max_cell();
        for k in 0..f.grid().len() {
            let node = f.grid().node(k)[0];
            if node + t < 2.0 - cell {
                assert!(!d.flags[k]);
                assert!((d.function.values()[k] - (2.0 * node + t)).abs() <= cell * cell / t);
            } else if node + t >= 2.0 {
                assert!(d.flags[k]);
                assert_eq!(d.function.values()[k], 0.0);
            }
        }
        let f = sample("abs(x0)", -1.0, 1.0, 8);
        let d = difference_quotient(&f, &line_field("1", 0.0, -1.0, 1.0), 0.1, &cfg()).unwrap();
        // node 0.625 (the grid's 0.75 sits on the boundary layer)
        assert!((d.function.values()[6] - 1.0).abs() < 1e-9);
        let c = sample("3", -1.0, 1.0, 50);
        let d = difference_quotient(&c, &line_field("x0", 1.0, -1.0, 1.0), 0.2, &cfg()).unwrap();
        assert!(d.function.values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(
            difference_quotient(&c, &line_field("1", 0.0, -1.0, 1.0), 0.0, &cfg()),
            Err(CalculusError::ZeroTime)
        );
    }

    #[test]
    fn mean_operator_examples() {
        let x = line_field("1", 0.0, -1.0, 1.0);
        let h = sample("x0 - 0.3*x0^2", -1.0, 1.0, 40);
        let m0 = mean_operator(&h, &x, 0.0, QuadratureAlongFlow::new(3).unwrap(), &cfg()).unwrap();
        assert_eq!(m0.function, h);
        let one = sample("1", -1.0, 1.0, 40);
        let t = 0.3;
        let m = mean_operator(
            &one,
            &x,
            t,
            QuadratureAlongFlow::for_time(t, &cfg()),
            &cfg(),
        )
        .unwrap();
        for (v, flag) in m.function.values().iter().zip(&m.flags) {
            if !flag {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        assert!(m.flagged_count() > 0);
        // sign averaged over a trajectory centred on the jump
        let sign = sample("x0/abs(x0)", -1.0, 1.0, 2000);
        for m in [4, 16, 64] {
            let q = QuadratureAlongFlow::new(m).unwrap();
            let v = mean_at(&sign, &x, &[-0.1], 0.2, q, &cfg())
                .unwrap()
                .unwrap();
            assert!(v.abs() <= 2.0 / m as f64, "{m}: {v}");
        }
    }

    #[test]
    fn pullback_examples() {
        let x = line_field("1", 0.0, -2.0, 2.0);
        let f = sample("x0", -2.0, 2.0, 200);
        assert_eq!(pullback(&f, &x, 0.0, &cfg()).unwrap().function, f);
        let p = pullback(&f, &x, 0.5, &cfg()).unwrap();
        for k in 0..f.grid().len() {
            let node = f.grid().node(k)[0];
            if node + 0.5 < 2.0 - f.grid().max_cell() {
                assert!((p.function.values()[k] - (node + 0.5)).abs() < 1e-9);
            }
        }
        // ‖T_t f‖ ≤ e^{nL|t|} ‖f‖ for the scaling field
        let s = line_field("x0", 1.0, -2.0, 2.0);
        let f = sample("abs(x0)", -2.0, 2.0, 400);
        let p = pullback(&f, &s, 1.0, &cfg()).unwrap();
        assert!(p.function.l1_norm(None) <= 1f64.exp() * f.l1_norm(None) + 1e-9);
    }

    #[test]
    fn pairing_examples() {
        let x = line_field("1", 0.0, -1.0, 1.0);
        let u = Bump::new(vec![0.1], 0.5).unwrap();
        let c = sample("2.5", -1.0, 1.0, 200);
        assert!(distributional_pairing(&c, &x, &u, 1e-4).unwrap().abs() < 1e-3);
        let sq = sample("x0^2", -1.0, 1.0, 200);
        let want = sample("2*x0", -1.0, 1.0, 200).pair(&u).unwrap();
        assert!((distributional_pairing(&sq, &x, &u, 1e-4).unwrap() - want).abs() < 1e-3);
        let u0 = Bump::new(vec![0.0], 0.5).unwrap();
        let ab = sample("abs(x0)", -1.0, 1.0, 200);
        let want = sample("x0/abs(x0)", -1.0, 1.0, 200).pair(&u0).unwrap();
        assert!((distributional_pairing(&ab, &x, &u0, 1e-4).unwrap() - want).abs() < 1e-3);
        // scaling field: div X = 1 enters the pairing
        let s = line_field("x0", 1.0, -1.0, 1.0);
        let want = sample("2*x0^2", -1.0, 1.0, 400).pair(&u).unwrap();
        let sq = sample("x0^2", -1.0, 1.0, 400);
        assert!((distributional_pairing(&sq, &s, &u, 1e-4).unwrap() - want).abs() < 1e-3);
        let wide = Bump::new(vec![0.5], 0.5).unwrap();
        assert_eq!(
            distributional_pairing(&c, &x, &wide, 1e-4),
            Err(CalculusError::Support { margin: 1e-4 })
        );
    }

    #[test]
    fn lie_residual_examples() {
        let x = line_field("1", 0.0, -2.0, 2.0);
        let f = sample("x0^2", -2.0, 2.0, 2000);
        let g = sample("2*x0", -2.0, 2.0, 2000);
        let q = QuadratureAlongFlow::new(32).unwrap();
        for (p, t) in [(-1.0, 0.5), (0.3, 1.2), (0.1, -0.7)] {
            let r = lie_residual(&f, &g, &x, &[p], t, q, &cfg()).unwrap();
            assert!(r.abs() < 1e-5, "{p} {t}: {r}");
        }
        let f = sample("abs(x0)", -2.0, 2.0, 2000);
        let g = sample("x0/abs(x0)", -2.0, 2.0, 2000);
        let r = lie_residual(
            &f,
            &g,
            &x,
            &[-0.5],
            1.0,
            QuadratureAlongFlow::new(100).unwrap(),
            &cfg(),
        )
        .unwrap();
        assert!(r.abs() < 1e-3, "{r}");
        let zero = sample("0", -2.0, 2.0, 2000);
        let r = lie_residual(&f, &zero, &x, &[0.5], 0.5, q, &cfg()).unwrap();
        assert!(r.abs() > 0.4);
        assert!(matches!(
            lie_residual(&f, &g, &x, &[1.5], 1.0, q, &cfg()),
            Err(CalculusError::Escaped { .. })
        ));
    }

    #[test]
    fn cutoff_examples() {
        let r = Region::from_domain(Cuboid::cube(2, -1.0, 1.0).unwrap());
        let base = VectorField::parse("d0", r, &["1", "0"], Some(0.0)).unwrap();
        let c = make_cutoff_field(&base, &[0.2, 0.0], 0.5).unwrap();
        let mut out = [0.0; 2];
        c.eval_into(&[0.2, 0.0], &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
        c.eval_into(&[0.9, 0.0], &mut out).unwrap();
        assert_eq!(out, [0.0, 0.0]);
        let end = transport(&c, &[-0.6, 0.4], 3.0, &cfg()).unwrap();
        assert_eq!(end.point, vec![-0.6, 0.4]);
        // declared constant dominates the sampled quotients
        let l = c.lipschitz().unwrap();
        assert!((l - c.cutoff().gradient_bound()).abs() < 1e-12);
        assert!(crate::field::estimate_lipschitz(&c, 4000, 7).is_ok());
        assert_eq!(
            make_cutoff_field(&base, &[0.8, 0.0], 0.5),
            Err(CalculusError::Support { margin: 0.0 })
        );
    }

    #[test]
    fn commutation_is_exact_for_the_square() {
        // Δ_t x² = 2x + t and M_h(2x + t) = 2x + h + t along ∂x0
        let x = line_field("1", 0.0, -2.0, 2.0);
        let f = sample("x0^2", -2.0, 2.0, 800);
        let (t, h) = (0.05, 0.2);
        let dt = difference_quotient(&f, &x, t, &cfg()).unwrap();
        let dh = difference_quotient(&f, &x, h, &cfg()).unwrap();
        let q = |s| QuadratureAlongFlow::for_time(s, &cfg());
        let a = mean_operator(&dt.function, &x, h, q(h), &cfg()).unwrap();
        let b = mean_operator(&dh.function, &x, t, q(t), &cfg()).unwrap();
        let sub = Cuboid::cube(1, -1.0, 1.0).unwrap();
        assert!(a.function.l1_distance(&b.function, Some(&sub)).unwrap() < 1e-4);
        for k in 0..f.grid().len() {
            let node = f.grid().node(k)[0];
            if sub.contains(&[node]) {
                assert!((a.function.values()[k] - (2.0 * node + t + h)).abs() < 1e-4);
            }
        }
    }

    #[cfg(feature = "std")]
    #[test]
    fn thread_count_does_not_change_results() {
        let x = line_field("x0 + 0.2", 1.0, -2.0, 2.0);
        let f = sample("sin(3*x0)", -2.0, 2.0, 333);
        let one = difference_quotient(&f, &x, 0.3, &cfg()).unwrap();
        let many = difference_quotient(
            &f,
            &x,
            0.3,
            &IntegratorConfig {
                threads: 5,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(one, many);
    }
}
