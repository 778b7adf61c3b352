//! Reference numerics for the limiting processes.
//!
//! Contents: the one-dimensional Skorohod reflection map on grid paths,
//! samplers for reflected and Walsh Brownian motion, closed-form killed and
//! reflected transition laws, a Crank-Nicolson solver for the survival
//! probability of an RBM in `[0, eps)`, and quadrature evaluation of the Walsh
//! semigroup.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::model::WbmParams;
use crate::rng::RandomStream;

/// Spatial grid size of the survival solver.
pub const PDE_GRID_POINTS: usize = 512;

/// Agreement required between successive time refinements of the survival solver.
pub const PDE_TOLERANCE: f64 = 1e-6;

const PDE_MAX_REFINEMENTS: usize = 14;

const QUAD_TOLERANCE: f64 = 1e-10;
const QUAD_MAX_DEPTH: usize = 40;
const QUAD_PANELS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("survival solver did not converge: last refinement changed v by {change:e}")]
    NonConvergedPDE { change: f64 },
    #[error("adaptive quadrature failed to reach tolerance on [{a}, {b}]")]
    QuadratureTolerance { a: f64, b: f64 },
    #[error("point {0:?} is not on a coordinate axis")]
    NotOnAxes(Vec<f64>),
}

/// Uniformly sampled path; each grid point holds `dim` values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    pub t0: f64,
    pub dt: f64,
    pub dim: usize,
    data: Vec<f64>,
}

impl GridPath {
    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Self {
        GridPath { t0, dt, dim: 1, data: values }
    }

    /// Builds a path from row-major data holding `dim` values per grid point.
    pub fn from_rows(t0: f64, dt: f64, dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "data length must be a multiple of dim");
        GridPath { t0, dt, dim, data }
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Values of a scalar path.
    pub fn values(&self) -> &[f64] {
        debug_assert_eq!(self.dim, 1);
        &self.data
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    /// Writes `t,v1..vN` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("v{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for (k, row) in self.rows().enumerate() {
            let vals: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{},{}", self.time(k), vals.join(","))?;
        }
        Ok(())
    }
}

/// One-dimensional Skorohod map: returns the reflected path and the boundary term.
pub fn skorohod(phi: &GridPath) -> (GridPath, GridPath) {
    assert_eq!(phi.dim, 1, "skorohod map acts on scalar paths");
    let mut reflected = Vec::with_capacity(phi.len());
    let mut boundary = Vec::with_capacity(phi.len());
    let mut running_min = 0.0_f64;
    for &v in phi.values() {
        running_min = running_min.min(v);
        reflected.push(v - running_min);
        boundary.push(-running_min);
    }
    (GridPath::scalar(phi.t0, phi.dt, reflected), GridPath::scalar(phi.t0, phi.dt, boundary))
}

fn check_positive(name: &str, v: f64) -> Result<(), DiffusionError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DiffusionError::BadParameter(format!("{name} = {v} must be positive")))
    }
}

fn grid_steps(horizon: f64, dt: f64) -> Result<usize, DiffusionError> {
    check_positive("dt", dt)?;
    if !(horizon >= 0.0) {
        return Err(DiffusionError::BadParameter(format!("horizon = {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Exact grid samples of the `(b, sigma)`-RBM, plus whether 0 was reached in each step.
///
/// Each step draws the Brownian increment and then the minimum of the Brownian
/// bridge over the step, so the reflection is that of the continuous path.
fn rbm_steps(
    b: f64,
    sigma: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut RandomStream,
) -> Result<(Vec<f64>, Vec<bool>), DiffusionError> {
    check_positive("sigma", sigma)?;
    if !(x0 >= 0.0) {
        return Err(DiffusionError::BadParameter(format!("x0 = {x0} must be nonnegative")));
    }
    let steps = grid_steps(horizon, dt)?;
    let (mean, sd) = (b * dt, sigma * dt.sqrt());
    let var = sd * sd;
    let mut values = Vec::with_capacity(steps + 1);
    let mut touched = Vec::with_capacity(steps + 1);
    let mut x = x0;
    values.push(x);
    touched.push(x0 == 0.0);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        let inc = mean + sd * z;
        let u: f64 = rng.random();
        let min = 0.5 * (inc - (inc * inc - 2.0 * var * (1.0 - u).ln()).sqrt());
        let hit = x + min <= 0.0;
        x = if hit { inc - min } else { x + inc };
        values.push(x);
        touched.push(hit);
    }
    Ok((values, touched))
}

/// Brownian motion with drift `b` and scale `sigma` started at `x0`, reflected at 0.
///
/// Grid values are exact samples of the continuous process.
pub fn rbm_path(
    b: f64,
    sigma: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut RandomStream,
) -> Result<GridPath, DiffusionError> {
    let (values, _) = rbm_steps(b, sigma, x0, horizon, dt, rng)?;
    Ok(GridPath::scalar(0.0, dt, values))
}

fn gaussian_density(z: f64, var: f64) -> f64 {
    (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `exp(a) * P(Z > z)` without overflow for large `a` and `z`.
fn exp_times_upper_tail(a: f64, z: f64) -> f64 {
    if z < 8.0 {
        return a.exp() * upper_tail(z);
    }
    // Mills ratio expansion
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    (a - 0.5 * z2).exp() / (z * (2.0 * std::f64::consts::PI).sqrt()) * series
}

/// Arguments of a transition-kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelQuery {
    pub b: f64,
    pub sigma: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl KernelQuery {
    fn check(&self) -> Result<(), DiffusionError> {
        check_positive("t", self.t)?;
        check_positive("sigma", self.sigma)?;
        if !(self.x >= 0.0 && self.y >= 0.0) {
            return Err(DiffusionError::BadParameter(format!("x = {}, y = {} must be >= 0", self.x, self.y)));
        }
        Ok(())
    }
}

/// Transition density of `(b, sigma)`-BM killed at 0 (image method with a drift tilt).
pub fn killed_kernel(query: KernelQuery) -> Result<f64, DiffusionError> {
    query.check()?;
    let KernelQuery { b, sigma, t, x, y } = query;
    let s2 = sigma * sigma;
    let var = s2 * t;
    let tilt = (b * (y - x) / s2 - b * b * t / (2.0 * s2)).exp();
    Ok((tilt * (gaussian_density(y - x, var) - gaussian_density(y + x, var))).max(0.0))
}

/// `P_x(zeta > t)`: mass of the killed kernel.
pub fn killed_mass(b: f64, sigma: f64, t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = sigma * t.sqrt();
    let s2 = sigma * sigma;
    let lower = upper_tail(-(x + b * t) / s);
    // exp(-2bx/sigma^2) * Phi((-x + bt)/s)
    let image = exp_times_upper_tail(-2.0 * b * x / s2, (x - b * t) / s);
    (lower - image).clamp(0.0, 1.0)
}

/// Transition density of the `(b, sigma)`-RBM.
pub fn reflected_kernel(query: KernelQuery) -> Result<f64, DiffusionError> {
    query.check()?;
    let KernelQuery { b, sigma, t, x, y } = query;
    let s2 = sigma * sigma;
    let s = sigma * t.sqrt();
    let var = s2 * t;
    let a = 2.0 * b * y / s2;
    let zp = (y + x + b * t) / s;
    let mut density =
        gaussian_density(y - x - b * t, var) + (a - 0.5 * zp * zp).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    density -= 2.0 * b / s2 * exp_times_upper_tail(a, zp);
    Ok(density.max(0.0))
}

/// `P_x(rho(t) <= y)` for the `(b, sigma)`-RBM.
pub fn reflected_cdf(b: f64, sigma: f64, t: f64, x: f64, y: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    let s = sigma * t.sqrt();
    let s2 = sigma * sigma;
    let direct = 1.0 - upper_tail((y - x - b * t) / s);
    let image = exp_times_upper_tail(2.0 * b * y / s2, (y + x + b * t) / s);
    (direct - image).clamp(0.0, 1.0)
}

/// Tridiagonal solve (Thomas algorithm); `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Grid values of `v(., s)` on `[0, eps]` using `steps` time steps.
///
/// Crank-Nicolson with two half-size implicit Euler start-up steps to damp the
/// corner discontinuity at `x = eps`.
fn survival_grid(b: f64, sigma: f64, eps: f64, s: f64, steps: usize) -> Vec<f64> {
    let m = PDE_GRID_POINTS;
    let dx = eps / (m - 1) as f64;
    let unknowns = m - 1; // v at x = eps is held at 0
    let diff = 0.5 * sigma * sigma / (dx * dx);
    let adv = b / (2.0 * dx);
    // operator rows: L v_j = lo v_{j-1} + di v_j + up v_{j+1}
    let mut lo = vec![diff - adv; unknowns];
    let di = vec![-2.0 * diff; unknowns];
    let mut up = vec![diff + adv; unknowns];
    // Neumann at 0 through the ghost value v_{-1} = v_1
    up[0] = 2.0 * diff;
    lo[0] = 0.0;
    let apply = |v: &[f64], j: usize| {
        let left = if j > 0 { v[j - 1] } else { 0.0 };
        let right = if j + 1 < unknowns { v[j + 1] } else { 0.0 };
        lo[j] * left + di[j] * v[j] + up[j] * right
    };

    let mut v = vec![1.0; unknowns];
    let dt = s / steps as f64;
    let step = |v: &mut Vec<f64>, h: f64, theta: f64| {
        let rhs_coef = h * (1.0 - theta);
        let mut rhs: Vec<f64> = (0..unknowns).map(|j| v[j] + rhs_coef * apply(v, j)).collect();
        let l: Vec<f64> = lo.iter().map(|x| -h * theta * x).collect();
        let d: Vec<f64> = di.iter().map(|x| 1.0 - h * theta * x).collect();
        let u: Vec<f64> = up.iter().map(|x| -h * theta * x).collect();
        solve_tridiagonal(&l, &d, &u, &mut rhs);
        *v = rhs;
    };
    let startup = steps.min(1);
    for _ in 0..startup {
        step(&mut v, 0.5 * dt, 1.0);
        step(&mut v, 0.5 * dt, 1.0);
    }
    for _ in startup..steps {
        step(&mut v, dt, 0.5);
    }
    v.push(0.0);
    v
}

fn interpolate(grid: &[f64], eps: f64, x: f64) -> f64 {
    let dx = eps / (grid.len() - 1) as f64;
    let pos = (x / dx).min((grid.len() - 1) as f64);
    let k = (pos.floor() as usize).min(grid.len() - 2);
    let w = pos - k as f64;
    grid[k] * (1.0 - w) + grid[k + 1] * w
}

/// `v(x, s) = P_x(tau(eps) > s)` for the `(b, sigma)`-RBM on `[0, eps]`.
pub fn rbm_survival(b: f64, sigma: f64, eps: f64, x: f64, s: f64) -> Result<f64, DiffusionError> {
    check_positive("sigma", sigma)?;
    check_positive("eps", eps)?;
    if !(0.0..=eps).contains(&x) {
        return Err(DiffusionError::BadParameter(format!("x = {x} outside [0, {eps}]")));
    }
    if !(s >= 0.0) {
        return Err(DiffusionError::BadParameter(format!("s = {s} must be >= 0")));
    }
    if x >= eps {
        return Ok(0.0);
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let dx = eps / (PDE_GRID_POINTS - 1) as f64;
    let mut steps = ((s / dx).ceil() as usize).max(2);
    let mut coarse = interpolate(&survival_grid(b, sigma, eps, s, steps), eps, x);
    let mut change = f64::INFINITY;
    for _ in 0..PDE_MAX_REFINEMENTS {
        steps *= 2;
        let fine = interpolate(&survival_grid(b, sigma, eps, s, steps), eps, x);
        change = (fine - coarse).abs();
        if change <= PDE_TOLERANCE {
            return Ok(fine.clamp(0.0, 1.0));
        }
        coarse = fine;
    }
    Err(DiffusionError::NonConvergedPDE { change })
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64, DiffusionError> {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(DiffusionError::QuadratureTolerance { a, b });
    }
    Ok(adaptive_simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?)
}

/// Adaptive Simpson integral of `f` over `[a, b]`, split into equal panels first.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64, DiffusionError> {
    let width = (b - a) / QUAD_PANELS as f64;
    let mut total = 0.0;
    for k in 0..QUAD_PANELS {
        let (lo, hi) = (a + k as f64 * width, a + (k + 1) as f64 * width);
        let (flo, fhi) = (f(lo), f(hi));
        let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
        total +=
            adaptive_simpson(f, lo, flo, hi, fhi, m, fm, whole, QUAD_TOLERANCE / QUAD_PANELS as f64, QUAD_MAX_DEPTH)?;
    }
    Ok(total)
}

/// Splits a point of the coordinate axes into radius and axis (axis 0 at the origin).
pub fn polar_on_axes(x: &[f64]) -> Result<(f64, usize), DiffusionError> {
    let mut nonzero = x.iter().enumerate().filter(|(_, &v)| v != 0.0);
    match (nonzero.next(), nonzero.next()) {
        (None, _) => Ok((0.0, 0)),
        (Some((i, &v)), None) if v > 0.0 => Ok((v, i)),
        _ => Err(DiffusionError::NotOnAxes(x.to_vec())),
    }
}

/// `E_x[f(xi(t))]` for the Walsh Brownian motion, with `f(i, rho)` the value at `rho e_i`.
///
/// Evaluated as `Pi^+_t fbar(rho0) + Pi^0_t (f_theta - fbar)(rho0)` by quadrature
/// against the reflected and killed kernels.
pub fn wbm_semigroup<F>(f: F, t: f64, x0: &[f64], params: &WbmParams) -> Result<f64, DiffusionError>
where
    F: Fn(usize, f64) -> f64,
{
    check_positive("t", t)?;
    if x0.len() != params.dim() {
        return Err(DiffusionError::BadParameter(format!("x0 has {} coordinates, q has {}", x0.len(), params.dim())));
    }
    let (rho0, theta) = polar_on_axes(x0)?;
    let (b, sigma) = (params.b, params.sigma);
    let fbar = |y: f64| params.q.iter().enumerate().map(|(i, q)| q * f(i, y)).sum::<f64>();
    let upper = rho0 + b.abs() * t + 12.0 * sigma * t.sqrt();
    let reflected = |y: f64| fbar(y) * reflected_kernel(KernelQuery { b, sigma, t, x: rho0, y }).unwrap_or(0.0);
    let mut value = integrate(&reflected, 0.0, upper)?;
    if rho0 > 0.0 {
        let killed =
            |y: f64| (f(theta, y) - fbar(y)) * killed_kernel(KernelQuery { b, sigma, t, x: rho0, y }).unwrap_or(0.0);
        value += integrate(&killed, 0.0, upper)?;
    }
    Ok(value)
}

fn draw_axis(q: &[f64], rng: &mut RandomStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    q.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A start of a fresh excursion from 0 seen on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Renewal {
    /// Grid index of the first point after the radial part touched 0.
    pub step: usize,
    pub axis: usize,
}

/// Sampled Walsh Brownian motion with the axis renewals that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WbmPath {
    pub path: GridPath,
    pub renewals: Vec<Renewal>,
}

impl WbmPath {
    /// Axes drawn at the renewals; i.i.d. with law `q`.
    pub fn excursion_axes(&self) -> Vec<usize> {
        self.renewals.iter().map(|r| r.axis).collect()
    }
}

/// Walsh Brownian motion on the coordinate axes started at `x0`.
///
/// The radial part is sampled exactly on the grid. Whenever it reaches 0 inside
/// a step, the excursion straddling the next grid point gets a fresh axis from `q`.
pub fn wbm_path(
    params: &WbmParams,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut RandomStream,
) -> Result<WbmPath, DiffusionError> {
    if x0.len() != params.dim() {
        return Err(DiffusionError::BadParameter(format!("x0 has {} coordinates, q has {}", x0.len(), params.dim())));
    }
    let (rho0, mut axis) = polar_on_axes(x0)?;
    let (radial, touched) = rbm_steps(params.b, params.sigma, rho0, horizon, dt, rng)?;
    let n = params.dim();
    let mut data = vec![0.0; radial.len() * n];
    let mut renewals = Vec::new();
    for (k, (&rho, &hit)) in radial.iter().zip(&touched).enumerate() {
        if k > 0 && hit {
            axis = draw_axis(&params.q, rng);
            renewals.push(Renewal { step: k, axis });
        }
        data[k * n + axis] = rho;
    }
    Ok(WbmPath { path: GridPath::from_rows(0.0, dt, n, data), renewals })
}

/// Radial part `|xi|` of a path on the axes.
pub fn radial_part(path: &GridPath) -> GridPath {
    GridPath::scalar(path.t0, path.dt, path.rows().map(|row| row.iter().sum()).collect())
}
