//! Stable and unstable subspaces of asymptotically hyperbolic paths, by two
//! independent constructions: backward transport of the limit spectral
//! subspace, and the graph operator obtained from the fixed-point equation
//! behind the dichotomy estimates.
//!
//! The fixed-point route works in coordinates adapted to the limit splitting.
//! Each Neumann iterate solves a pair of linear inhomogeneous equations, the
//! stable block forward in time, the unstable block backward, and the
//! iteration contracts precisely when the tail smallness certificate holds.

use crate::error::{Error, Result};
use crate::grassmann::{self, Subspace};
use crate::linalg::{self, C64, CMat};
use crate::path::OperatorPath;
use crate::propagator;
use crate::spectral::{self, Splitting};

/// Tail times are admissible when the remaining perturbation is below this
/// fraction of the contraction bound.
const CERTIFICATE_SAFETY: f64 = 0.9;

/// Re-orthonormalisation period of subspace transport.
const REORTH_STEP: f64 = 1.0;

/// Constants of the exponential dichotomy at the positive tail, measured for
/// the shifted path `A(. + shift)`.
#[derive(Debug, Clone)]
pub struct DichotomyData {
    /// Spectral splitting of `A(+inf)`.
    pub splitting_plus: Splitting,
    /// Spectral splitting of `A(-inf)` when that limit exists and is
    /// hyperbolic.
    pub splitting_minus: Option<Splitting>,
    /// Envelope constants of `exp(t A(+inf))` on the stable/unstable bundles.
    pub c: f64,
    pub lambda: f64,
    /// Largest spectral projector norm.
    pub projector_bound: f64,
    /// Tail shift after which the certificate is evaluated.
    pub shift: f64,
    /// `sup |A(t) - A(+inf)|` beyond the shift.
    pub h_norm: f64,
    /// Block norms of the perturbation beyond the shift.
    pub h_diag_minus: f64,
    pub h_diag_plus: f64,
    pub h_off_to_plus: f64,
    pub h_off_to_minus: f64,
    /// Perturbed decay rates; both must stay positive.
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// Contraction decay rate of the graph construction.
    pub nu: f64,
    /// `lambda / (M c (1 + sqrt c))`.
    pub smallness_bound: f64,
    pub smallness_satisfied: bool,
}

/// Graph operator of an evolved subspace over the limit splitting, in the
/// coordinates of the splitting bases.
#[derive(Debug, Clone)]
pub struct GraphOperator {
    pub matrix: CMat,
    pub norm: f64,
    pub time: f64,
}

fn limit_plus(path: &OperatorPath) -> Result<&CMat> {
    path.limit_plus()
        .ok_or_else(|| Error::InvalidInput("path carries no limit at +inf".into()))
}

/// Envelope constants `(c, lambda)` of a constant hyperbolic matrix:
/// `|exp(t A)| <= c e^{-lambda t}` on the stable bundle and the mirrored
/// bound on the unstable one, certified on a sampled horizon.
fn envelope_constants(a0: &CMat, split: &Splitting) -> (f64, f64) {
    let lambda = 0.75 * split.margin;
    let b_minus = split.stable_space();
    let b_plus = split.unstable_space();
    let horizon = (40.0 / split.margin).min(200.0);
    let steps = 400usize;
    let dt = horizon / steps as f64;
    let fwd = (a0 * C64::new(dt, 0.0)).exp();
    let bwd = (a0 * C64::new(-dt, 0.0)).exp();
    let mut wm = b_minus.basis().clone();
    let mut wp = b_plus.basis().clone();
    let mut c: f64 = 1.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let grow = (lambda * t).exp();
        if wm.ncols() > 0 {
            c = c.max(linalg::op_norm(&wm) * grow);
        }
        if wp.ncols() > 0 {
            c = c.max(linalg::op_norm(&wp) * grow);
        }
        wm = &fwd * wm;
        wp = &bwd * wp;
    }
    (1.05 * c, lambda)
}

/// Worst perturbation norm over the path tail `t >= shift`, including the
/// constant extension beyond the last sample. Piecewise-linear interpolation
/// attains its maximum at sample points.
fn tail_norm(path: &OperatorPath, a0: &CMat, shift: f64) -> f64 {
    let mut worst = linalg::op_norm(&(path.eval(shift) - a0));
    for &t in path.times().iter().filter(|&&t| t >= shift) {
        worst = worst.max(linalg::op_norm(&(path.eval(t) - a0)));
    }
    worst
}

/// Dichotomy constants for the smallest admissible tail shift.
pub fn dichotomy_data(path: &OperatorPath) -> Result<DichotomyData> {
    let a0 = limit_plus(path)?.clone();
    let split = spectral_projectors_checked(&a0)?;
    let split_minus = match path.limit_minus() {
        Some(m) => spectral::spectral_projectors(m).ok(),
        None => None,
    };
    let (c, lambda) = envelope_constants(&a0, &split);
    let m_bound = split.p_plus.norm().max(split.p_minus.norm());
    let smallness_bound = lambda / (m_bound * c * (1.0 + c.sqrt()));

    // candidate shifts: nonnegative sample times
    let (_, t_last) = path.domain();
    let mut chosen: Option<f64> = None;
    let mut candidates: Vec<f64> =
        path.times().iter().copied().filter(|&t| t >= 0.0).collect();
    if candidates.is_empty() {
        candidates.push(0.0);
    }
    candidates.push(t_last.max(0.0));
    for &tau in &candidates {
        let tail = tail_norm(path, &a0, tau);
        if tail <= CERTIFICATE_SAFETY * smallness_bound {
            chosen = Some(tau);
            break;
        }
    }
    let (shift, satisfied) = match chosen {
        Some(tau) => (tau, true),
        None => (t_last.max(0.0), false),
    };
    let h_norm = tail_norm(path, &a0, shift);

    // block norms of the perturbation beyond the shift
    let pp = split.p_plus.matrix();
    let pm = split.p_minus.matrix();
    let mut blocks = [0.0_f64; 4];
    let mut tail_times: Vec<f64> = path
        .times()
        .iter()
        .copied()
        .filter(|&t| t >= shift)
        .collect();
    tail_times.push(shift);
    for t in tail_times {
        let h = path.eval(t) - &a0;
        blocks[0] = blocks[0].max(linalg::op_norm(&(pm * &h * pm)));
        blocks[1] = blocks[1].max(linalg::op_norm(&(pp * &h * pp)));
        blocks[2] = blocks[2].max(linalg::op_norm(&(pp * &h * pm)));
        blocks[3] = blocks[3].max(linalg::op_norm(&(pm * &h * pp)));
    }
    let mu_minus = lambda - c * blocks[0];
    let mu_plus = lambda - c * blocks[1];
    let nu = if mu_plus > 0.0 {
        (mu_minus * mu_plus - c.powi(3) * blocks[2] * blocks[3]) / mu_plus
    } else {
        f64::NEG_INFINITY
    };
    Ok(DichotomyData {
        splitting_plus: split,
        splitting_minus: split_minus,
        c,
        lambda,
        projector_bound: m_bound,
        shift,
        h_norm,
        h_diag_minus: blocks[0],
        h_diag_plus: blocks[1],
        h_off_to_plus: blocks[2],
        h_off_to_minus: blocks[3],
        mu_minus,
        mu_plus,
        nu,
        smallness_bound,
        smallness_satisfied: satisfied,
    })
}

fn spectral_projectors_checked(a0: &CMat) -> Result<Splitting> {
    spectral::spectral_projectors(a0)
}

/// QR orthonormalisation that preserves the column count; transports stay
/// full rank because flows are invertible.
fn orth_columns(m: &CMat) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let q = qr.q();
    q.columns(0, m.ncols()).into_owned()
}

/// Transport the span of `basis` along the flow from `from_t` to `to_t`,
/// re-orthonormalising every unit of time.
fn transport_span(
    path: &OperatorPath,
    basis: &CMat,
    from_t: f64,
    to_t: f64,
    tol: f64,
) -> Result<CMat> {
    if basis.ncols() == 0 {
        return Ok(basis.clone());
    }
    let mut t = from_t;
    let mut b = basis.clone();
    let dir = if to_t >= from_t { 1.0 } else { -1.0 };
    while (to_t - t) * dir > 1e-12 {
        let step = REORTH_STEP.min((to_t - t) * dir);
        let target = t + dir * step;
        // flow of the shifted path over [0, +-step] applied to the basis
        let shifted = path.shift(t);
        let (phi, _) = propagator::flow_to(&shifted, dir * step, tol)?;
        b = orth_columns(&(phi * b));
        t = target;
    }
    Ok(b)
}

/// Stable space by backward transport of the limit stable subspace:
/// `W_T = X_A(T)^{-1} E^-(A(+inf))` for growing `T`, accepted at the first
/// Cauchy-in-`T` increment below `tol`.
pub fn stable_space_limit(path: &OperatorPath, horizon: f64, tol: f64) -> Result<Subspace> {
    stable_space_limit_detailed(path, horizon, tol).map(|d| d.subspace)
}

/// Limit-method result with its convergence and decay diagnostics.
#[derive(Debug, Clone)]
pub struct StableSpaceDetails {
    pub subspace: Subspace,
    /// Horizon at which the Cauchy test passed.
    pub accepted_at: f64,
    /// Last increment `delta_1(W_T, W_{T + step})`.
    pub increment: f64,
    /// Fitted decay rate of `|X_A(t)|` restricted to the subspace
    /// (negative means decay).
    pub decay_rate: f64,
}

pub fn stable_space_limit_detailed(
    path: &OperatorPath,
    horizon: f64,
    tol: f64,
) -> Result<StableSpaceDetails> {
    let a0 = limit_plus(path)?.clone();
    let h = spectral::is_hyperbolic(&a0)?;
    if !h.hyperbolic {
        return Err(Error::NotHyperbolic { margin: h.margin });
    }
    let split = spectral::spectral_projectors(&a0)?;
    let e_minus = split.stable_space();
    let n = path.dim();
    if e_minus.dim() == 0 {
        return Ok(StableSpaceDetails {
            subspace: Subspace::zero(n),
            accepted_at: 0.0,
            increment: 0.0,
            decay_rate: f64::NEG_INFINITY,
        });
    }
    let ode_tol = (tol * 1e-2).clamp(1e-12, 1e-6);

    // segment-wise backward transports, cached per unit interval
    let max_segments = horizon.ceil() as usize;
    let mut inverse_steps: Vec<CMat> = Vec::with_capacity(max_segments);
    let pull_back = |upto: usize, inverse_steps: &mut Vec<CMat>| -> Result<CMat> {
        while inverse_steps.len() < upto {
            let k = inverse_steps.len() as f64;
            let shifted = path.shift(k);
            let (_, inv) = propagator::flow_to(&shifted, 1.0, ode_tol)?;
            inverse_steps.push(inv);
        }
        let mut b = e_minus.basis().clone();
        for k in (0..upto).rev() {
            b = orth_columns(&(&inverse_steps[k] * b));
        }
        Ok(b)
    };

    let mut t = 4usize.min(max_segments.max(1));
    let mut previous = pull_back(t, &mut inverse_steps)?;
    let mut last_increment = f64::INFINITY;
    while t + 2 <= max_segments {
        t += 2;
        let current = pull_back(t, &mut inverse_steps)?;
        let w_prev = Subspace::from_orthonormal(previous.clone())?;
        let w_curr = Subspace::from_orthonormal(current.clone())?;
        last_increment = grassmann::delta1(&w_prev, &w_curr)?;
        if last_increment < tol {
            // downstream rank decisions must see the accuracy actually
            // achieved, not the construction default
            let accuracy = (10.0 * tol.max(last_increment)).clamp(1e-8, 1e-3);
            let subspace = w_curr.with_tol(accuracy);
            let decay_rate = decay_rate_on(path, subspace.basis(), t as f64, ode_tol)?;
            return Ok(StableSpaceDetails {
                subspace,
                accepted_at: t as f64,
                increment: last_increment,
                decay_rate,
            });
        }
        previous = current;
    }
    Err(Error::HorizonExhausted { horizon, increment: last_increment })
}

/// Least-squares decay rate of `log |X_A(t) B|` over `[0, upto]`.
fn decay_rate_on(path: &OperatorPath, basis: &CMat, upto: f64, tol: f64) -> Result<f64> {
    if basis.ncols() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let segments = (upto.ceil() as usize).clamp(2, 60);
    let mut b = basis.clone();
    let mut points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut log_norm = 0.0;
    for k in 0..segments {
        let shifted = path.shift(k as f64);
        let (phi, _) = propagator::flow_to(&shifted, 1.0, tol)?;
        b = &phi * b;
        let scale = linalg::op_norm(&b);
        if scale <= 0.0 {
            break;
        }
        // renormalise to keep magnitudes representable; accumulate the log
        log_norm += scale.ln();
        b /= C64::new(scale, 0.0);
        points.push(((k + 1) as f64, log_norm));
    }
    let m = points.len() as f64;
    let (mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &points {
        s1 += x;
        s2 += x * x;
        b0 += y;
        b1 += x * y;
    }
    let det = m * s2 - s1 * s1;
    Ok((m * b1 - s1 * b0) / det)
}

/// Unstable space via the reflection `W_A^u = W^s_{-A(-.)}`.
pub fn unstable_space(path: &OperatorPath, horizon: f64, tol: f64) -> Result<Subspace> {
    stable_space_limit(&path.reversed_negated(), horizon, tol)
}

/// Stable space through the graph operator: realise the fixed-point equation
/// of the dichotomy on a grid over the shifted tail, run the Neumann series
/// to convergence, and pull the graph back to time zero.
///
/// Returns the subspace together with the graph operator at the tail shift.
pub fn stable_space_graph(
    path: &OperatorPath,
    tol: f64,
) -> Result<(Subspace, GraphOperator)> {
    let data = dichotomy_data(path)?;
    if !data.smallness_satisfied {
        return Err(Error::CertificateViolated {
            h_norm: data.h_norm,
            bound: CERTIFICATE_SAFETY * data.smallness_bound,
        });
    }
    if data.mu_minus <= 0.0 || data.mu_plus <= 0.0 || data.nu <= 0.0 {
        return Err(Error::CertificateViolated {
            h_norm: data.h_norm,
            bound: data.smallness_bound,
        });
    }
    let n = path.dim();
    let split = &data.splitting_plus;
    let b_minus = split.stable_space().basis().clone();
    let b_plus = split.unstable_space().basis().clone();
    let k_minus = b_minus.ncols();
    let k_plus = b_plus.ncols();
    if k_minus == 0 {
        let graph = GraphOperator { matrix: CMat::zeros(k_plus, 0), norm: 0.0, time: data.shift };
        return Ok((Subspace::zero(n), graph));
    }

    // adapted coordinates: V = [B^- B^+]
    let mut v = CMat::zeros(n, n);
    v.view_mut((0, 0), (n, k_minus)).copy_from(&b_minus);
    v.view_mut((0, k_minus), (n, k_plus)).copy_from(&b_plus);
    let v_inv = linalg::inverse(&v)?;
    let shifted = path.shift(data.shift);
    let coords = |t: f64| -> CMat { &v_inv * shifted.eval(t) * &v };

    // cut where both the kernel decay and the remaining tail are negligible
    let (_, t_last) = path.domain();
    let sampled_extent = (t_last - data.shift).max(0.0);
    let t_cut = (sampled_extent + (25.0 / data.nu).min(40.0)).max(10.0 / data.nu);
    let h = 0.01_f64;
    let m = (t_cut / h).ceil() as usize;
    let half = 2 * m; // storage on the half grid
    let grid = |j: usize| -> f64 { j as f64 * h / 2.0 };

    // block extraction on the half grid
    let mut a_mm = Vec::with_capacity(half + 1);
    let mut a_pp = Vec::with_capacity(half + 1);
    let mut h_mp = Vec::with_capacity(half + 1);
    let mut h_pm = Vec::with_capacity(half + 1);
    for j in 0..=half {
        let at = coords(grid(j));
        a_mm.push(at.view((0, 0), (k_minus, k_minus)).into_owned());
        a_pp.push(at.view((k_minus, k_minus), (k_plus, k_plus)).into_owned());
        h_mp.push(at.view((0, k_minus), (k_minus, k_plus)).into_owned());
        h_pm.push(at.view((k_minus, 0), (k_plus, k_minus)).into_owned());
    }

    // Neumann iteration: all stable columns at once
    let mut x: Vec<CMat> = vec![CMat::zeros(k_minus, k_minus); half + 1];
    let mut y: Vec<CMat> = vec![CMat::zeros(k_plus, k_minus); half + 1];
    let series_tol = (tol / 4.0).max(1e-12);
    let max_iter = 400usize;
    let mut converged = false;
    let mut increment = f64::INFINITY;
    for _ in 0..max_iter {
        // x' = A__ x + H_-+ y, x(0) = I, forward
        let x_next = solve_forward(&a_mm, &h_mp, &y, h, CMat::identity(k_minus, k_minus));
        // y' = A_++ y + H_+- x, y(T) = 0, backward
        let y_next = solve_backward(&a_pp, &h_pm, &x, h, CMat::zeros(k_plus, k_minus));
        increment = 0.0_f64;
        for j in 0..=half {
            increment = increment.max((&x_next[j] - &x[j]).norm());
            increment = increment.max((&y_next[j] - &y[j]).norm());
        }
        x = x_next;
        y = y_next;
        if increment < series_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SeriesStagnation { iterations: max_iter, increment });
    }

    let s_matrix = y[0].clone();
    let graph = GraphOperator {
        norm: linalg::op_norm(&s_matrix),
        matrix: s_matrix.clone(),
        time: data.shift,
    };

    // graph basis in ambient coordinates, then pull back to time zero
    let mut graph_cols = CMat::zeros(n, k_minus);
    graph_cols.view_mut((0, 0), (k_minus, k_minus)).copy_from(&CMat::identity(k_minus, k_minus));
    graph_cols.view_mut((k_minus, 0), (k_plus, k_minus)).copy_from(&s_matrix);
    let ambient = &v * graph_cols;
    let at_shift = orth_columns(&ambient);
    let ode_tol = (tol * 1e-2).clamp(1e-12, 1e-6);
    let at_zero = transport_span(path, &at_shift, data.shift, 0.0, ode_tol)?;
    let accuracy = (10.0 * tol).clamp(1e-8, 1e-3);
    Ok((Subspace::from_orthonormal(at_zero)?.with_tol(accuracy), graph))
}

/// RK4 solve of `u' = A(t) u + F(t) w(t)` forward over the grid, where the
/// iterate `w` is known on the half grid and interpolated cubically at the
/// stage midpoints.
fn solve_forward(
    a: &[CMat],
    f: &[CMat],
    w: &[CMat],
    h: f64,
    initial: CMat,
) -> Vec<CMat> {
    let half = a.len() - 1;
    let m = half / 2;
    let mut out = Vec::with_capacity(half + 1);
    let mut u = initial;
    out.push(u.clone());
    for j in 0..2 * m {
        // one RK4 step of size h/2 from half-grid node j to j+1, with the
        // stage midpoint interpolated
        let hj = h / 2.0;
        let a0 = &a[j];
        let a1 = &a[j + 1];
        let am = interp_mid(a, j);
        let f0 = &f[j] * &w[j];
        let f1 = &f[j + 1] * &w[j + 1];
        let fm = interp_mid_product(f, w, j);
        u = rk4_forced(&u, a0, &am, a1, &f0, &fm, &f1, hj);
        out.push(u.clone());
    }
    out
}

fn solve_backward(
    a: &[CMat],
    f: &[CMat],
    w: &[CMat],
    h: f64,
    terminal: CMat,
) -> Vec<CMat> {
    let half = a.len() - 1;
    let mut out = vec![CMat::zeros(terminal.nrows(), terminal.ncols()); half + 1];
    let mut u = terminal;
    out[half] = u.clone();
    for j in (0..half).rev() {
        let hj = -h / 2.0;
        let a0 = &a[j + 1];
        let a1 = &a[j];
        let am = interp_mid(a, j);
        let f0 = &f[j + 1] * &w[j + 1];
        let f1 = &f[j] * &w[j];
        let fm = interp_mid_product(f, w, j);
        u = rk4_forced(&u, a0, &am, a1, &f0, &fm, &f1, hj);
        out[j] = u.clone();
    }
    out
}

/// Cubic interpolation of a grid sequence at the midpoint of `[j, j + 1]`.
fn interp_mid(values: &[CMat], j: usize) -> CMat {
    let last = values.len() - 1;
    if j == 0 || j + 2 > last {
        // fall back to linear at the boundary
        return (&values[j] + &values[j + 1]) * C64::new(0.5, 0.0);
    }
    // classic 4-point midpoint weights (-1, 9, 9, -1) / 16
    (&values[j - 1] * C64::new(-1.0, 0.0)
        + &values[j] * C64::new(9.0, 0.0)
        + &values[j + 1] * C64::new(9.0, 0.0)
        + &values[j + 2] * C64::new(-1.0, 0.0))
        / C64::new(16.0, 0.0)
}

fn interp_mid_product(f: &[CMat], w: &[CMat], j: usize) -> CMat {
    let products: Vec<CMat> = (j.saturating_sub(1)..=(j + 2).min(f.len() - 1))
        .map(|i| &f[i] * &w[i])
        .collect();
    if products.len() < 4 {
        return (&products[products.len() - 2] + &products[products.len() - 1])
            * C64::new(0.5, 0.0);
    }
    (&products[0] * C64::new(-1.0, 0.0)
        + &products[1] * C64::new(9.0, 0.0)
        + &products[2] * C64::new(9.0, 0.0)
        + &products[3] * C64::new(-1.0, 0.0))
        / C64::new(16.0, 0.0)
}

#[allow(clippy::too_many_arguments)]
fn rk4_forced(
    u: &CMat,
    a0: &CMat,
    am: &CMat,
    a1: &CMat,
    f0: &CMat,
    fm: &CMat,
    f1: &CMat,
    h: f64,
) -> CMat {
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5, 0.0);
    let two = C64::new(2.0, 0.0);
    let sixth = C64::new(1.0 / 6.0, 0.0);
    let k1 = a0 * u + f0;
    let k2 = am * (u + &k1 * (hc * half)) + fm;
    let k3 = am * (u + &k2 * (hc * half)) + fm;
    let k4 = a1 * (u + &k3 * hc) + f1;
    u + (k1 + k2 * two + k3 * two + k4) * (hc * sixth)
}

/// Graph operators of the evolved stable space and the evolved unstable
/// spectral subspace at time `t`:
/// `X_A(t) W^s = graph S(t)` over `E^-` and `X_A(t) E^+ = graph T(t)` over
/// `E^+`, both in the coordinates of the limit splitting.
pub fn graph_evolution(
    path: &OperatorPath,
    t: f64,
    horizon: f64,
    tol: f64,
) -> Result<(GraphOperator, GraphOperator)> {
    let a0 = limit_plus(path)?.clone();
    let split = spectral::spectral_projectors(&a0)?;
    let b_minus = split.stable_space().basis().clone();
    let b_plus = split.unstable_space().basis().clone();
    let (k_minus, k_plus) = (b_minus.ncols(), b_plus.ncols());
    let n = path.dim();
    let mut v = CMat::zeros(n, n);
    v.view_mut((0, 0), (n, k_minus)).copy_from(&b_minus);
    v.view_mut((0, k_minus), (n, k_plus)).copy_from(&b_plus);
    let v_inv = linalg::inverse(&v)?;
    let ode_tol = (tol * 1e-2).clamp(1e-12, 1e-6);

    let stable = stable_space_limit(path, horizon, tol)?;
    let s_of_t = if k_minus == 0 {
        GraphOperator { matrix: CMat::zeros(k_plus, 0), norm: 0.0, time: t }
    } else {
        let evolved = transport_span(path, stable.basis(), 0.0, t, ode_tol)?;
        graph_over(&v_inv, &evolved, k_minus, true, t)?
    };
    let t_of_t = if k_plus == 0 {
        GraphOperator { matrix: CMat::zeros(k_minus, 0), norm: 0.0, time: t }
    } else {
        let evolved = transport_span(path, &b_plus, 0.0, t, ode_tol)?;
        graph_over(&v_inv, &evolved, k_minus, false, t)?
    };
    Ok((s_of_t, t_of_t))
}

/// Decompose evolved columns in the adapted coordinates and express them as
/// a graph over the stable (`over_minus`) or unstable block.
fn graph_over(
    v_inv: &CMat,
    evolved: &CMat,
    k_minus: usize,
    over_minus: bool,
    time: f64,
) -> Result<GraphOperator> {
    let coords = v_inv * evolved;
    let k = coords.ncols();
    let top = coords.rows(0, k_minus).into_owned();
    let bottom = coords.rows(k_minus, coords.nrows() - k_minus).into_owned();
    let (denom, numer) = if over_minus { (top, bottom) } else { (bottom, top) };
    let cond = linalg::condition_estimate(&denom);
    if !cond.is_finite() || cond > 1e10 {
        return Err(Error::SingularBlock { cond });
    }
    let solved = linalg::solve_with_cap(&denom.transpose(), &numer.transpose(), 1e10)?;
    let matrix = solved.transpose();
    debug_assert_eq!(matrix.ncols(), k);
    Ok(GraphOperator { norm: linalg::op_norm(&matrix), matrix, time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cmat_from_rows;

    fn diag_path(f: impl Fn(f64) -> Vec<f64>, t0: f64, t1: f64, step: f64) -> OperatorPath {
        let probe = f(0.0);
        let n = probe.len();
        let make = move |t: f64| {
            let d = f(t);
            CMat::from_fn(n, n, |i, j| {
                if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) }
            })
        };
        let limit_minus = make(t0 - 1e6);
        let limit_plus = make(t1 + 1e6);
        OperatorPath::from_fn(make, t0, t1, step)
            .unwrap()
            .with_limits(limit_minus, limit_plus)
            .unwrap()
    }

    #[test]
    fn constant_hyperbolic_stable_space() {
        let p = diag_path(|_| vec![-1.0, 1.0], -4.0, 4.0, 0.5);
        let w = stable_space_limit(&p, 20.0, 1e-8).unwrap();
        assert!(w.approx_eq(&Subspace::coordinate(2, &[0])));
    }

    #[test]
    fn tanh_diag_stable_space() {
        // A(t) = diag(tanh t, -tanh t): solutions (cosh x1, sech x2)
        let p = diag_path(|t| vec![t.tanh(), -t.tanh()], -20.0, 20.0, 0.02);
        let w = stable_space_limit(&p, 18.0, 1e-8).unwrap();
        assert!(w.approx_eq(&Subspace::coordinate(2, &[1])));
        let u = unstable_space(&p, 18.0, 1e-8).unwrap();
        assert!(u.approx_eq(&Subspace::coordinate(2, &[1])));
    }

    #[test]
    fn scalar_tanh_unstable_space_is_zero() {
        let p = diag_path(|t| vec![t.tanh()], -18.0, 18.0, 0.02);
        let u = unstable_space(&p, 16.0, 1e-8).unwrap();
        assert_eq!(u.dim(), 0);
        // and the stable space is zero too: solutions grow like cosh
        let w = stable_space_limit(&p, 16.0, 1e-8).unwrap();
        assert_eq!(w.dim(), 0);
    }

    #[test]
    fn graph_method_constant_path_gives_zero_graph() {
        let p = diag_path(|_| vec![-1.0, 1.0], -4.0, 4.0, 0.5);
        let (w, g) = stable_space_graph(&p, 1e-8).unwrap();
        assert!(w.approx_eq(&Subspace::coordinate(2, &[0])));
        assert!(g.norm < 1e-10, "graph norm {}", g.norm);
    }

    #[test]
    fn graph_method_small_perturbation_bound() {
        // A(t) = A0 + eps K(t), K smooth and compactly supported
        let eps = 1e-3;
        let a0 = cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let bump = move |t: f64| {
            if t.abs() >= 1.0 {
                0.0
            } else {
                ((-1.0 / (1.0 - t * t)).exp()) * std::f64::consts::E
            }
        };
        let p = OperatorPath::from_fn(
            move |t| {
                &a0 + cmat_from_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]) * C64::new(eps * bump(t), 0.0)
            },
            -3.0,
            3.0,
            0.01,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let data = dichotomy_data(&p).unwrap();
        assert!(data.smallness_satisfied);
        let (_, g) = stable_space_graph(&p, 1e-8).unwrap();
        // Prop-tow-style envelope: |S| <= c^2 int e^{-nu tau} |H| dtau + slack
        let envelope = data.c * data.c * eps * 1.0 / data.nu + 1e-6;
        assert!(g.norm <= envelope, "graph norm {} vs envelope {envelope}", g.norm);
    }

    #[test]
    fn methods_agree_on_rotated_tanh_path() {
        // non-diagonal mixing with decaying off-diagonal tail
        let p = OperatorPath::from_fn(
            |t| {
                let s = t.tanh();
                let off = 0.05 / (1.0 + t * t);
                cmat_from_rows(2, 2, &[s, off, off, -s])
            },
            -24.0,
            24.0,
            0.02,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        )
        .unwrap();
        let w_limit = stable_space_limit(&p, 22.0, 1e-8).unwrap();
        let (w_graph, _) = stable_space_graph(&p, 1e-8).unwrap();
        let d = grassmann::delta1(&w_limit, &w_graph).unwrap();
        assert!(d <= 1e-6, "methods disagree by {d}");
    }

    #[test]
    fn duality_of_stable_spaces() {
        let p = OperatorPath::from_fn(
            |t| {
                let s = t.tanh();
                cmat_from_rows(2, 2, &[s, 0.2, 0.1, -1.0 - 0.3 * s])
            },
            -20.0,
            20.0,
            0.02,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.0, 0.2, 0.1, -0.7]),
            cmat_from_rows(2, 2, &[1.0, 0.2, 0.1, -1.3]),
        )
        .unwrap();
        let w = stable_space_limit(&p, 18.0, 1e-8).unwrap();
        let dual = p.negated_adjoint();
        let w_dual = stable_space_limit(&dual, 18.0, 1e-8).unwrap();
        let complement = w.orthogonal_complement();
        let d = grassmann::delta1(&w_dual, &complement).unwrap();
        assert!(d <= 1e-6, "duality defect {d}");
    }

    #[test]
    fn invariance_criterion_block_triangular() {
        // upper-triangular path keeps E^- = span{e1} invariant, so W^s = E^-
        let p = OperatorPath::from_fn(
            |t| cmat_from_rows(2, 2, &[-1.0 + 0.2 * t.tanh(), 0.3 / (1.0 + t * t), 0.0, 1.0]),
            -16.0,
            16.0,
            0.02,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.2, 0.0, 0.0, 1.0]),
            cmat_from_rows(2, 2, &[-0.8, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let w = stable_space_limit(&p, 14.0, 1e-9).unwrap();
        let d = grassmann::delta1(&w, &Subspace::coordinate(2, &[0])).unwrap();
        assert!(d <= 1e-8, "invariance defect {d}");
    }

    #[test]
    fn graph_evolution_decays_on_tanh_path() {
        let p = diag_path(|t| vec![-t.tanh(), t.tanh()], -26.0, 26.0, 0.02);
        // stable space is span{e1}; S(t) should decay along the flow
        let (s_near, _) = graph_evolution(&p, 2.0, 24.0, 1e-8).unwrap();
        let (s_far, t_far) = graph_evolution(&p, 20.0, 24.0, 1e-8).unwrap();
        assert!(s_far.norm <= s_near.norm + 1e-12);
        assert!(s_far.norm <= 1e-6, "S(20) = {}", s_far.norm);
        assert!(t_far.norm <= 1e-6, "T(20) = {}", t_far.norm);
    }

    #[test]
    fn constant_path_evolution_is_zero() {
        let p = diag_path(|_| vec![-1.0, 1.0], -4.0, 4.0, 0.5);
        let (s, t) = graph_evolution(&p, 3.0, 12.0, 1e-8).unwrap();
        assert!(s.norm < 1e-9);
        assert!(t.norm < 1e-9);
    }
}
