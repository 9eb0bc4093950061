//! Tensor grids of cell midpoints, sampled functions and smooth bumps.
//!
//! Values live at cell midpoints, row-major with the last axis fastest.
//! Off-grid evaluation is multilinear between midpoints, constant in the
//! half-cell layer along the boundary, and zero outside the open box.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{EvalError, Expression};
use crate::field::Cuboid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("resolution has {got} axes, box has {expected}")]
    AxisCount { expected: usize, got: usize },
    #[error("resolution along axis {axis} is {got}, at least 2 required")]
    Resolution { axis: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("evaluation failed at node {index}: {source}")]
    Eval { index: usize, source: EvalError },
    #[error("sampled functions live on different grids")]
    Mismatch,
    #[error("test function support is not inside the grid box")]
    Support,
    #[error("sub-box has the wrong dimension")]
    SubDimension,
    #[error("bump radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

/// Midpoint grid over an open box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Cuboid,
    resolution: Vec<usize>,
    cell: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(bounds: Cuboid, resolution: Vec<usize>) -> Result<Self, GridError> {
        let n = bounds.dimension();
        if resolution.len() != n {
            return Err(GridError::AxisCount {
                expected: n,
                got: resolution.len(),
            });
        }
        if let Some((axis, &got)) = resolution.iter().enumerate().find(|(_, &r)| r < 2) {
            return Err(GridError::Resolution { axis, got });
        }
        let cell = (0..n)
            .map(|i| bounds.width(i) / resolution[i] as f64)
            .collect();
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * resolution[i + 1];
        }
        let len = resolution.iter().product();
        Ok(Self {
            bounds,
            resolution,
            cell,
            strides,
            len,
        })
    }

    /// Same resolution along every axis.
    pub fn uniform(bounds: Cuboid, per_axis: usize) -> Result<Self, GridError> {
        let n = bounds.dimension();
        Self::new(bounds, vec![per_axis; n])
    }

    pub fn bounds(&self) -> &Cuboid {
        &self.bounds
    }

    pub fn dimension(&self) -> usize {
        self.bounds.dimension()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn cell(&self) -> &[f64] {
        &self.cell
    }

    /// Widest cell edge.
    pub fn max_cell(&self) -> f64 {
        self.cell.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.iter().product()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_into(&self, index: usize, out: &mut [f64]) {
        let mut rem = index;
        for axis in 0..self.dimension() {
            let i = rem / self.strides[axis];
            rem %= self.strides[axis];
            out[axis] = self.bounds.lower()[axis] + (i as f64 + 0.5) * self.cell[axis];
        }
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.node_into(index, &mut out);
        out
    }

    pub fn multi_index(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        self.strides
            .iter()
            .map(|s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    /// Multilinear interpolation of node `values` at `x`; zero outside the open box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        if !self.bounds.contains(x) {
            return 0.0;
        }
        let n = self.dimension();
        let mut base = 0usize;
        // (offset to the upper neighbour, weight of the upper neighbour) per axis
        let mut axes = [(0usize, 0.0f64); crate::expr::MAX_DIMENSION];
        for axis in 0..n {
            let r = self.resolution[axis];
            let u = (x[axis] - self.bounds.lower()[axis]) / self.cell[axis] - 0.5;
            let u = u.clamp(0.0, (r - 1) as f64);
            let i0 = (libm::floor(u) as usize).min(r - 2);
            base += i0 * self.strides[axis];
            axes[axis] = (self.strides[axis], u - i0 as f64);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base;
            for (axis, &(stride, frac)) in axes.iter().enumerate().take(n) {
                if corner >> axis & 1 == 1 {
                    w *= frac;
                    idx += stride;
                } else {
                    w *= 1.0 - frac;
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }
}

/// A function in L1 of the grid box, known at cell midpoints and extended by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ValueCount {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self, GridError> {
        Self::try_from_fn(grid, |x| Ok::<_, EvalError>(f(x)))
            .map_err(|(index, e)| GridError::Eval { index, source: e })
    }

    fn try_from_fn<E>(
        grid: Grid,
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    ) -> Result<Self, (usize, E)> {
        let mut node = vec![0.0; grid.dimension()];
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            grid.node_into(k, &mut node);
            values.push(f(&node).map_err(|e| (k, e))?);
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `expr` at every cell midpoint.
    pub fn sample(expr: &Expression, grid: Grid) -> Result<Self, GridError> {
        let s = Self::try_from_fn(grid, |x| expr.evaluate(x))
            .map_err(|(index, source)| GridError::Eval { index, source })?;
        Self::from_values(s.grid, s.values)
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Interpolated value at an arbitrary point.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::from_values(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::Mismatch);
        }
        Self::from_values(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Midpoint rule over the cells whose midpoint lies in `sub` (all cells when `None`).
    pub fn integrate(&self, sub: Option<&Cuboid>) -> f64 {
        self.weighted_sum(sub, |v| v)
    }

    pub fn l1_norm(&self, sub: Option<&Cuboid>) -> f64 {
        self.weighted_sum(sub, libm::fabs)
    }

    fn weighted_sum(&self, sub: Option<&Cuboid>, f: impl Fn(f64) -> f64) -> f64 {
        let vol = self.grid.cell_volume();
        match sub {
            None => self.values.iter().map(|&v| f(v)).sum::<f64>() * vol,
            Some(b) => {
                let mut node = vec![0.0; self.grid.dimension()];
                let mut acc = 0.0;
                for (k, &v) in self.values.iter().enumerate() {
                    self.grid.node_into(k, &mut node);
                    if b.contains(&node) {
                        acc += f(v);
                    }
                }
                acc * vol
            }
        }
    }

    /// `∫_sub |f − g|`.
    pub fn l1_distance(&self, other: &Self, sub: Option<&Cuboid>) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::Mismatch);
        }
        if sub.is_some_and(|b| b.dimension() != self.grid.dimension()) {
            return Err(GridError::SubDimension);
        }
        let vol = self.grid.cell_volume();
        let mut node = vec![0.0; self.grid.dimension()];
        let mut acc = 0.0;
        for (k, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            if let Some(s) = sub {
                self.grid.node_into(k, &mut node);
                if !s.contains(&node) {
                    continue;
                }
            }
            acc += libm::fabs(a - b);
        }
        Ok(acc * vol)
    }

    /// `∫ f u` by the midpoint rule.
    pub fn pair(&self, u: &Bump) -> Result<f64, GridError> {
        if !self
            .grid
            .bounds()
            .contains_ball(u.center(), u.radius(), 0.0)
        {
            return Err(GridError::Support);
        }
        let mut acc = 0.0;
        self.for_each_in_support(u, |_, x, v| acc += v * u.value(x));
        Ok(acc * self.grid.cell_volume())
    }

    /// Visits `(index, node, value)` for every node inside the open support ball of `u`.
    pub(crate) fn for_each_in_support(&self, u: &Bump, mut visit: impl FnMut(usize, &[f64], f64)) {
        let grid = &self.grid;
        let n = grid.dimension();
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for axis in 0..n {
            let to_index = |c: f64| (c - grid.bounds().lower()[axis]) / grid.cell()[axis] - 0.5;
            let a = libm::floor(to_index(u.center()[axis] - u.radius())).max(0.0) as usize;
            let b = (libm::ceil(to_index(u.center()[axis] + u.radius())) as usize)
                .min(grid.resolution()[axis] - 1);
            lo[axis] = a;
            hi[axis] = b.max(a);
        }
        let mut idx = lo.clone();
        let mut node = vec![0.0; n];
        loop {
            let k: usize = idx.iter().zip(&grid.strides).map(|(i, s)| i * s).sum();
            grid.node_into(k, &mut node);
            if u.in_support(&node) {
                visit(k, &node, self.values[k]);
            }
            let mut axis = n;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if idx[axis] < hi[axis] {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = lo[axis];
            }
        }
    }
}

/// A sampled function plus a per-node flag (escaped trajectory, stencil outside Ω, …).
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedFunction {
    pub function: SampledFunction,
    pub flags: Vec<bool>,
}

impl FlaggedFunction {
    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// The mollifier `u(x) = exp(1 − 1/(1 − |x−c|²/r²))` on the open ball, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    center: Vec<f64>,
    radius: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, GridError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GridError::BadRadius(radius));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(GridError::NonFinite { index: 0 });
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    fn scaled_sq(&self, x: &[f64]) -> f64 {
        let r2 = self.radius * self.radius;
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            / r2
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        self.scaled_sq(x) < 1.0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let q = self.scaled_sq(x);
        if q >= 1.0 {
            0.0
        } else {
            libm::exp(1.0 - 1.0 / (1.0 - q))
        }
    }

    /// Closed-form gradient `−u · 2(x−c) / (r²(1−q)²)`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let q = self.scaled_sq(x);
        if q >= 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let u = libm::exp(1.0 - 1.0 / (1.0 - q));
        let factor = -2.0 * u / (self.radius * self.radius * (1.0 - q) * (1.0 - q));
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = factor * (a - c);
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.gradient_into(x, &mut out);
        out
    }

    /// `sup |∇u|`, from the one-dimensional profile.
    pub fn gradient_bound(&self) -> f64 {
        // |∇u| = 2 s e^{1 − 1/(1−s²)} / (r (1−s²)²) with s = |x − c| / r
        let profile = |s: f64| {
            let q = s * s;
            2.0 * s * libm::exp(1.0 - 1.0 / (1.0 - q)) / ((1.0 - q) * (1.0 - q))
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        // unimodal on (0, 1): golden-section search
        let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if profile(a) < profile(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        profile(0.5 * (lo + hi)) / self.radius
    }

    /// The bump sampled on `grid`.
    pub fn sample(&self, grid: Grid) -> Result<SampledFunction, GridError> {
        SampledFunction::from_fn(grid, |x| self.value(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_grid(lo: f64, hi: f64, res: usize) -> Grid {
        Grid::uniform(Cuboid::cube(1, lo, hi).unwrap(), res).unwrap()
    }

    fn sample(src: &str, grid: Grid) -> SampledFunction {
        let e = Expression::parse(src, grid.dimension()).unwrap();
        SampledFunction::sample(&e, grid).unwrap()
    }

    #[test]
    fn sampling_uses_midpoints() {
        assert_eq!(sample("1", line_grid(-1.0, 1.0, 4)).values(), &[1.0; 4]);
        assert_eq!(sample("x0", line_grid(-1.0, 1.0, 2)).values(), &[-0.5, 0.5]);
        assert_eq!(
            sample("abs(x0)", line_grid(-1.0, 1.0, 4)).values(),
            &[0.75, 0.25, 0.25, 0.75]
        );
        assert!(matches!(
            Grid::uniform(Cuboid::cube(1, 0.0, 1.0).unwrap(), 1),
            Err(GridError::Resolution { .. })
        ));
        let e = Expression::parse("1 / x0", 1).unwrap();
        assert!(matches!(
            SampledFunction::sample(&e, line_grid(-1.0, 1.0, 3)),
            Err(GridError::Eval { index: 1, .. })
        ));
    }

    #[test]
    fn row_major_layout() {
        let g = Grid::new(
            Cuboid::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap(),
            vec![2, 3],
        )
        .unwrap();
        assert_eq!(g.node(0), vec![0.5, 0.5]);
        assert_eq!(g.node(1), vec![0.5, 1.5]);
        assert_eq!(g.node(3), vec![1.5, 0.5]);
        assert_eq!(g.multi_index(5), vec![1, 2]);
    }

    #[test]
    fn integration_examples() {
        assert_eq!(sample("1", line_grid(-1.0, 1.0, 10)).integrate(None), 2.0);
        assert!(sample("x0", line_grid(-1.0, 1.0, 10)).integrate(None).abs() < 1e-15);
        let q = sample("x0^2", line_grid(0.0, 1.0, 100)).integrate(None);
        assert!((q - 1.0 / 3.0).abs() < 1e-4);
        let sub = Cuboid::cube(1, -0.5, 0.5).unwrap();
        let s = sample("1", line_grid(-1.0, 1.0, 100)).integrate(Some(&sub));
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let g = line_grid(-1.0, 1.0, 50);
        let one = sample("1", g.clone());
        let zero = SampledFunction::zeros(g.clone());
        let sign = sample("x0/abs(x0)", g.clone());
        assert_eq!(one.l1_distance(&one, None).unwrap(), 0.0);
        assert!((one.l1_distance(&zero, None).unwrap() - 2.0).abs() < 1e-12);
        assert!((sign.l1_distance(&zero, None).unwrap() - 2.0).abs() < 1e-12);
        let other = sample("1", line_grid(-1.0, 1.0, 51));
        assert_eq!(one.l1_distance(&other, None), Err(GridError::Mismatch));
    }

    #[test]
    fn interpolation() {
        let g = line_grid(-1.0, 1.0, 4);
        let f = sample("x0", g);
        assert!((f.value_at(&[0.1]) - 0.1).abs() < 1e-15);
        // constant in the boundary half-cell, zero outside
        assert_eq!(f.value_at(&[0.9]), 0.75);
        assert_eq!(f.value_at(&[1.0]), 0.0);
        assert_eq!(f.value_at(&[-1.5]), 0.0);

        let g2 = Grid::uniform(Cuboid::cube(2, -1.0, 1.0).unwrap(), 8).unwrap();
        let f2 = sample("2*x0 - x1 + x0*x1", g2);
        let p = [0.13, -0.41];
        assert!((f2.value_at(&p) - (2.0 * 0.13 + 0.41 - 0.13 * 0.41)).abs() < 1e-14);
    }

    #[test]
    fn bump_properties() {
        let u = Bump::new(vec![0.0], 1.0).unwrap();
        assert_eq!(u.value(&[0.0]), 1.0);
        assert_eq!(u.value(&[1.0]), 0.0);
        assert_eq!(u.value(&[-2.0]), 0.0);
        // analytic gradient against central differences
        for &x in &[-0.7, -0.2, 0.35, 0.8] {
            let h = 1e-6;
            let fd = (u.value(&[x + h]) - u.value(&[x - h])) / (2.0 * h);
            assert!((u.gradient(&[x])[0] - fd).abs() < 1e-6);
        }
        let g = line_grid(-1.0, 1.0, 20000);
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            worst = worst.max(u.gradient(&g.node(k))[0].abs());
        }
        assert!((u.gradient_bound() - worst).abs() < 1e-6 * worst);
    }

    #[test]
    fn pairing_examples() {
        let g = line_grid(-1.5, 1.5, 600);
        let u = Bump::new(vec![0.0], 1.0).unwrap();
        assert_eq!(SampledFunction::zeros(g.clone()).pair(&u).unwrap(), 0.0);
        let one = sample("1", g.clone());
        // fine-grid oracle for ∫_{-1}^{1} e^{1-1/(1-x²)} dx
        let fine = line_grid(-1.0, 1.0, 200_000);
        let oracle: f64 =
            (0..fine.len()).map(|k| u.value(&fine.node(k))).sum::<f64>() * fine.cell_volume();
        // adaptive-quadrature value of the same integral, frozen
        assert!((oracle - 1.206_900_322_437_874).abs() < 1e-9, "{oracle}");
        // same cell width as resolution 400 on (-1, 1)
        assert!((one.pair(&u).unwrap() - oracle).abs() < 2e-3);
        let on_400 = sample("1", line_grid(-1.0, 1.0, 400));
        let uu = u.sample(g).unwrap();
        assert!(uu.pair(&u).unwrap() > 0.0);
        assert_eq!(on_400.pair(&u), Err(GridError::Support));
    }
}
