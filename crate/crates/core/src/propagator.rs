//! The Cauchy problem `X' = A(t) X`, `X(0) = I`.
//!
//! Integration is classical fourth-order Runge-Kutta with step doubling.
//! Inverses are never computed by matrix inversion: the right-sided equation
//! `Y' = -Y A` is integrated alongside, which keeps `Y = X^{-1}` exactly
//! invertible in structure. The defect of the dense output is sampled with a
//! quintic Hermite interpolant through the step-doubling midpoints.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMat};
use crate::path::OperatorPath;

/// Valid range for the integration tolerance.
pub const TOL_RANGE: (f64, f64) = (1e-13, 1e-3);

/// Target spacing of the output grid.
const OUTPUT_STEP: f64 = 0.05;

/// A propagator sampled on a uniform grid containing `t = 0`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    path: OperatorPath,
    times: Vec<f64>,
    values: Vec<CMat>,
    inverses: Vec<CMat>,
    /// Index of `t = 0` in `times`.
    origin: usize,
    tol: f64,
    max_local_error: f64,
    max_defect: f64,
}

impl Trajectory {
    pub fn path(&self) -> &OperatorPath {
        &self.path
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn value(&self, i: usize) -> &CMat {
        &self.values[i]
    }

    pub fn inverse(&self, i: usize) -> &CMat {
        &self.inverses[i]
    }

    pub fn window(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn grid_step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Largest accepted local error estimate.
    pub fn max_local_error(&self) -> f64 {
        self.max_local_error
    }

    /// Largest sampled defect `|X' - A X|` of the dense output.
    pub fn max_defect(&self) -> f64 {
        self.max_defect
    }

    /// Largest `|X(t) X(t)^{-1} - I|` over the grid.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.path.dim();
        let id = CMat::identity(n, n);
        self.values
            .iter()
            .zip(&self.inverses)
            .map(|(x, y)| (x * y - &id).norm())
            .fold(0.0, f64::max)
    }

    /// Index of the grid node at time `t` (must be on the grid).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.grid_step();
        let (lo, hi) = self.window();
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(Error::OutOfWindow { t, lo, hi });
        }
        let i = ((t - lo) / h).round() as usize;
        if (self.times[i] - t).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("time {t} is not a grid node")));
        }
        Ok(i)
    }
}

/// Integrate the pair `X' = A X`, `Y' = -Y A` from the identity at `t = 0`
/// over a window `[a, b]` containing 0, to the requested tolerance.
pub fn propagate(path: &OperatorPath, window: (f64, f64), tol: f64) -> Result<Trajectory> {
    let (a, b) = window;
    if !(tol > TOL_RANGE.0 && tol < TOL_RANGE.1) {
        return Err(Error::InvalidInput(format!(
            "tolerance must lie in ({:.0e}, {:.0e})",
            TOL_RANGE.0, TOL_RANGE.1
        )));
    }
    if !(a <= 0.0 && b >= 0.0 && b > a) {
        return Err(Error::InvalidInput(format!(
            "window [{a}, {b}] must contain 0 with positive length"
        )));
    }
    let n = path.dim();
    let span = b - a;
    let h_out = OUTPUT_STEP.min(span / 8.0);
    let left = ((-a) / h_out).ceil() as usize;
    let mut right = (b / h_out).ceil() as usize;
    // keep the interval count a multiple of four for the Simpson consumers
    while !(left + right).is_multiple_of(4) {
        right += 1;
    }
    let m = left + right;
    let times: Vec<f64> = (0..=m).map(|i| (i as i64 - left as i64) as f64 * h_out).collect();

    let id = CMat::identity(n, n);
    let mut values = vec![CMat::zeros(0, 0); m + 1];
    let mut inverses = vec![CMat::zeros(0, 0); m + 1];
    values[left] = id.clone();
    inverses[left] = id.clone();

    let mut stats = StepStats::default();
    let sup_a = path.sup_norm();

    // forward sweep
    let mut state = (id.clone(), id.clone());
    for i in left..m {
        state = march(path, times[i], times[i + 1], state, tol, span, sup_a, &mut stats)?;
        values[i + 1] = state.0.clone();
        inverses[i + 1] = state.1.clone();
    }
    // backward sweep
    let mut state = (id.clone(), id);
    for i in (0..left).rev() {
        state = march(path, times[i + 1], times[i], state, tol, span, sup_a, &mut stats)?;
        values[i] = state.0.clone();
        inverses[i] = state.1.clone();
    }

    Ok(Trajectory {
        path: path.clone(),
        times,
        values,
        inverses,
        origin: left,
        tol,
        max_local_error: stats.max_error,
        max_defect: stats.max_defect,
    })
}

/// Fixed-step RK4 endpoint value of `X' = A X` over `[0, t]`; no error
/// control. Intended for convergence studies.
pub fn flow_to_fixed_step(path: &OperatorPath, t: f64, h: f64) -> Result<CMat> {
    if h <= 0.0 {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let n = path.dim();
    let id = CMat::identity(n, n);
    let steps = ((t.abs() / h).ceil() as usize).max(1);
    let step = t / steps as f64;
    let mut x = id.clone();
    let mut y = id;
    let mut s = 0.0;
    for _ in 0..steps {
        let (xn, yn) = rk4_pair(path, s, step, &x, &y);
        x = xn;
        y = yn;
        s += step;
    }
    Ok(x)
}

/// The propagator and its inverse at a single time, integrated from 0.
pub fn flow_to(path: &OperatorPath, t: f64, tol: f64) -> Result<(CMat, CMat)> {
    let n = path.dim();
    let id = CMat::identity(n, n);
    if t == 0.0 {
        return Ok((id.clone(), id));
    }
    let mut stats = StepStats::default();
    let span = t.abs().max(1.0);
    let sup_a = path.sup_norm();
    march(path, 0.0, t, (id.clone(), id), tol, span, sup_a, &mut stats)
}

#[derive(Default)]
struct StepStats {
    max_error: f64,
    max_defect: f64,
}

/// March the pair from `t0` to `t1` (either direction) with adaptive RK4.
#[allow(clippy::too_many_arguments)]
fn march(
    path: &OperatorPath,
    t0: f64,
    t1: f64,
    state: (CMat, CMat),
    tol: f64,
    span: f64,
    sup_a: f64,
    stats: &mut StepStats,
) -> Result<(CMat, CMat)> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let (mut x, mut y) = state;
    let mut h = dir * ((t1 - t0).abs().min(0.25 / (1.0 + sup_a)));
    let min_h = 1e-12 * span;
    while (t1 - t) * dir > 1e-14 * span {
        if h.abs() < min_h {
            return Err(Error::StepUnderflow { t });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        // never step across an interpolation kink of the path
        if let Some(kink) = path.next_sample_time(t, dir > 0.0) {
            if (t + h - kink) * dir > 1e-13 && (kink - t) * dir > 1e-13 {
                h = kink - t;
            }
        }
        // one full step against two half steps
        let (x_full, y_full) = rk4_pair(path, t, h, &x, &y);
        let (x_h1, y_h1) = rk4_pair(path, t, h / 2.0, &x, &y);
        let (x_h2, y_h2) = rk4_pair(path, t + h / 2.0, h / 2.0, &x_h1, &y_h1);
        let scale = x_h2.norm().max(y_h2.norm()).max(1.0);
        let err = (&x_h2 - &x_full).norm().max((&y_h2 - &y_full).norm()) / 15.0;
        // kink-clamped steps can be arbitrarily short; their per-length
        // budget must not chase the estimate below the roundoff floor
        let budget = (tol * (h.abs() / span) * scale).max(50.0 * f64::EPSILON * scale);
        if err <= budget {
            let defect = hermite_defect(path, t, h, &x, &x_h1, &x_h2);
            let defect_cap = 8.0 * tol * (1.0 + sup_a) * scale;
            // near roundoff the defect estimate is dominated by noise; the
            // quintic Hermite weights amplify value noise by a couple of
            // hundred before the 1/h differentiation
            let noise_floor = 400.0 * f64::EPSILON * scale / h.abs();
            if defect <= defect_cap || defect <= noise_floor {
                t += h;
                x = x_h2;
                y = y_h2;
                stats.max_error = stats.max_error.max(err);
                stats.max_defect = stats.max_defect.max(defect);
                let grow = (budget / err.max(1e-300)).powf(0.2).clamp(0.5, 3.0);
                h *= 0.9 * grow;
                continue;
            }
        }
        h /= 2.0;
    }
    Ok((x, y))
}

fn rk4_pair(path: &OperatorPath, t: f64, h: f64, x: &CMat, y: &CMat) -> (CMat, CMat) {
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5, 0.0);
    let sixth = C64::new(1.0 / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    let a1 = path.eval(t);
    let a2 = path.eval(t + h / 2.0);
    let a4 = path.eval(t + h);

    let k1 = &a1 * x;
    let k2 = &a2 * &(x + &k1 * (hc * half));
    let k3 = &a2 * &(x + &k2 * (hc * half));
    let k4 = &a4 * &(x + &k3 * hc);
    let x_next = x + (k1 + k2 * two + k3 * two + k4) * (hc * sixth);

    let l1 = -(y * &a1);
    let l2 = -((y + &l1 * (hc * half)) * &a2);
    let l3 = -((y + &l2 * (hc * half)) * &a2);
    let l4 = -((y + &l3 * hc) * &a4);
    let y_next = y + (l1 + l2 * two + l3 * two + l4) * (hc * sixth);

    (x_next, y_next)
}

/// Coefficient matrix turning the six Hermite conditions at u = 0, 1/2, 1
/// into monomial coefficients; computed once.
fn hermite_basis() -> &'static [[f64; 6]; 6] {
    static BASIS: OnceLock<[[f64; 6]; 6]> = OnceLock::new();
    BASIS.get_or_init(|| {
        // rows: p(0), p'(0), p(1/2), p'(1/2), p(1), p'(1) in monomials u^k
        let mut v = nalgebra::DMatrix::<f64>::zeros(6, 6);
        for k in 0..6usize {
            let kf = k as f64;
            let u = 0.5_f64;
            v[(0, k)] = if k == 0 { 1.0 } else { 0.0 };
            v[(1, k)] = if k == 1 { 1.0 } else { 0.0 };
            v[(2, k)] = u.powi(k as i32);
            v[(3, k)] = if k == 0 { 0.0 } else { kf * u.powi(k as i32 - 1) };
            v[(4, k)] = 1.0;
            v[(5, k)] = kf;
        }
        let inv = v.try_inverse().expect("Hermite basis is invertible");
        let mut out = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                out[i][j] = inv[(i, j)];
            }
        }
        out
    })
}

/// Defect `|H'(t) - A(t) H(t)|` of the quintic Hermite dense output through
/// `(t, t + h/2, t + h)`, sampled at the quarter points.
fn hermite_defect(path: &OperatorPath, t: f64, h: f64, x0: &CMat, xm: &CMat, x1: &CMat) -> f64 {
    let basis = hermite_basis();
    let hc = C64::new(h, 0.0);
    let d0 = path.eval(t) * x0 * hc;
    let dm = path.eval(t + h / 2.0) * xm * hc;
    let d1 = path.eval(t + h) * x1 * hc;
    let conditions = [x0, &d0, xm, &dm, x1, &d1];
    // monomial coefficients c_k = sum_j inv[k][j] * condition_j
    let n = x0.nrows();
    let mut coeffs: Vec<CMat> = Vec::with_capacity(6);
    for k in 0..6 {
        let mut c = CMat::zeros(n, n);
        for (j, cond) in conditions.iter().enumerate() {
            let w = basis[k][j];
            if w != 0.0 {
                c += *cond * C64::new(w, 0.0);
            }
        }
        coeffs.push(c);
    }
    let mut worst = 0.0_f64;
    for &u in &[0.25_f64, 0.75] {
        let mut p = CMat::zeros(n, n);
        let mut dp = CMat::zeros(n, n);
        for (k, c) in coeffs.iter().enumerate() {
            let kf = k as f64;
            p += c * C64::new(u.powi(k as i32), 0.0);
            if k > 0 {
                dp += c * C64::new(kf * u.powi(k as i32 - 1), 0.0);
            }
        }
        let defect = (dp / hc - path.eval(t + u * h) * p).norm();
        worst = worst.max(defect);
    }
    worst
}

/// Residual of the cocycle identity `X_{A(.+s)}(t) X_A(s) = X_A(t + s)`;
/// the shifted propagator is freshly integrated.
pub fn cocycle_residual(traj: &Trajectory, s: f64, t: f64) -> Result<f64> {
    let (lo, hi) = traj.window();
    for point in [s, t + s] {
        if point < lo - 1e-9 || point > hi + 1e-9 {
            return Err(Error::OutOfWindow { t: point, lo, hi });
        }
    }
    let tol = traj.tol();
    let path = traj.path();
    let (x_s, _) = flow_to(path, s, tol)?;
    let (x_ts, _) = flow_to(path, t + s, tol)?;
    let shifted = path.shift(s);
    let (x_shift_t, _) = flow_to(&shifted, t, tol)?;
    Ok((x_shift_t * x_s - x_ts).norm())
}

/// Residual of the duality `(X_A^{-1})^* = X_{-A^*}` over the grid, with the
/// right-hand side freshly integrated.
pub fn dual_residual(traj: &Trajectory) -> Result<f64> {
    let dual_path = traj.path().negated_adjoint();
    let dual = propagate(&dual_path, traj.window(), traj.tol())?;
    let mut worst = 0.0_f64;
    for i in 0..traj.len() {
        let lhs = traj.inverse(i).adjoint();
        let rhs = dual.value(i);
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Exponential envelope fitted to a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialFit {
    /// Certified prefactor: inflated by the largest fit residual so the bound
    /// holds on every sampled pair.
    pub c: f64,
    /// Fitted rate per unit time.
    pub lambda: f64,
    pub max_residual: f64,
}

/// Least-squares fit of `log |X(t) X(s)^{-1}| ~ log c + lambda (t - s)` over
/// sampled ordered pairs `t >= s` of the grid.
pub fn fit_exponential_estimate(traj: &Trajectory) -> Result<ExponentialFit> {
    fit_exponential_on(traj, traj.window().0, traj.window().1)
}

/// Same fit restricted to grid times in `[from, to]`.
pub fn fit_exponential_on(traj: &Trajectory, from: f64, to: f64) -> Result<ExponentialFit> {
    let idx: Vec<usize> = (0..traj.len())
        .filter(|&i| traj.times()[i] >= from - 1e-12 && traj.times()[i] <= to + 1e-12)
        .collect();
    if idx.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 grid points for the exponential fit, got {}",
            idx.len()
        )));
    }
    let stride = (idx.len() / 40).max(1);
    let thin: Vec<usize> = idx.iter().copied().step_by(stride).collect();
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (a, &i) in thin.iter().enumerate() {
        for &j in thin.iter().skip(a) {
            let gap = traj.times()[j] - traj.times()[i];
            let norm = linalg::op_norm(&(traj.value(j) * traj.inverse(i)));
            if norm > 0.0 {
                rows.push((gap, norm.ln()));
            }
        }
    }
    // normal equations for [log c, lambda]
    let (mut s0, mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(d, y) in &rows {
        s0 += 1.0;
        s1 += d;
        s2 += d * d;
        b0 += y;
        b1 += d * y;
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() < 1e-12 {
        return Err(Error::InvalidInput("degenerate grid for the exponential fit".into()));
    }
    let log_c = (s2 * b0 - s1 * b1) / det;
    let lambda = (s0 * b1 - s1 * b0) / det;
    let max_residual = rows
        .iter()
        .map(|&(d, y)| y - (log_c + lambda * d))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentialFit { c: (log_c + max_residual.max(0.0)).exp(), lambda, max_residual })
}

/// Residual of the variation-of-constants identity between two paths.
#[derive(Debug, Clone, Copy)]
pub struct VocResidual {
    /// Max-norm gap between `X_B` and the integral representation.
    pub residual: f64,
    /// Richardson estimate of the quadrature error on the grid.
    pub quadrature_estimate: f64,
}

/// Check `X_B(t) = X_A(t) + int_0^t X_A(t) X_A(tau)^{-1} (B - A) X_B dtau`
/// by composite Simpson quadrature on the trajectory grid.
pub fn variation_of_constants_residual(
    a: &OperatorPath,
    b: &OperatorPath,
    window: (f64, f64),
    tol: f64,
) -> Result<VocResidual> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("paths have different dimensions".into()));
    }
    let ta = propagate(a, window, tol)?;
    let tb = propagate(b, window, tol)?;
    let n = a.dim();
    let m = ta.len();
    let h = ta.grid_step();
    let origin = ta.origin();

    // integrand W(tau) = X_A(tau)^{-1} (B - A)(tau) X_B(tau)
    let w: Vec<CMat> = (0..m)
        .map(|i| {
            let t = ta.times()[i];
            ta.inverse(i) * (b.eval(t) - a.eval(t)) * tb.value(i)
        })
        .collect();

    let simpson_to = |target: usize, stride: usize| -> CMat {
        // composite Simpson from the origin to `target` with the given stride
        let mut acc = CMat::zeros(n, n);
        let step = C64::new(stride as f64 * h / 3.0, 0.0);
        let (lo, hi, sign) = if target >= origin {
            (origin, target, 1.0)
        } else {
            (target, origin, -1.0)
        };
        let mut i = lo;
        while i + 2 * stride <= hi {
            acc += (&w[i] + &w[i + stride] * C64::new(4.0, 0.0) + &w[i + 2 * stride]) * step;
            i += 2 * stride;
        }
        acc * C64::new(sign, 0.0)
    };

    let mut residual = 0.0_f64;
    let mut quad = 0.0_f64;
    for i in (0..m).step_by(2) {
        let offset = i as i64 - origin as i64;
        if offset % 2 != 0 {
            continue;
        }
        let integral = simpson_to(i, 1);
        let rhs = ta.value(i) * (CMat::identity(n, n) + &integral);
        residual = residual.max((tb.value(i) - rhs).norm());
        if offset % 4 == 0 {
            let coarse = simpson_to(i, 2);
            quad = quad.max(
                ((&integral - coarse) * C64::new(linalg::op_norm(ta.value(i)), 0.0)).norm(),
            );
        }
    }
    Ok(VocResidual { residual, quadrature_estimate: quad })
}
