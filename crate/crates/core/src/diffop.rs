//! The operator `F_A u = u' - A(t) u` on decaying functions, discretised on
//! a finite window by the implicit midpoint scheme with zero Dirichlet rows
//! at both ends.
//!
//! Kernel and cokernel dimensions are numerical rank decisions on the
//! assembled matrix and on the adjoint-side matrix (the same scheme for the
//! path `-A^H`). On large grids the small singular values come from inverse
//! subspace iteration with a block-tridiagonal Cholesky of the normal
//! equations rather than a dense SVD; the two backends agree and are tested
//! against each other.
//!
//! Green-kernel right inverses are applied through bundle-projected step
//! recursions: the forward part is re-projected onto the evolved stable
//! bundle and the backward part onto its complement at every step, which
//! keeps the `e^{lambda T}` growth of raw propagators out of the arithmetic.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grassmann::{self, Projector, Subspace};
use crate::invariant;
use crate::linalg::{self, C64, CMat, CVec};
use crate::path::OperatorPath;
use crate::propagator;
use crate::spectral;

/// Default relative rank tolerance for the assembled grid operator. The
/// numerical nullity of the scheme sits around `h^2` relative to the largest
/// singular value, a few decades below this cut, while genuine directions sit
/// a couple of decades above.
pub const GRID_RANK_TOL: f64 = 1e-4;

/// Default tail tolerance: the window must reach far enough that
/// `|A(t) - A(+-inf)|` is below this at the ends.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Above this column count the rank backend switches from dense SVD to
/// banded inverse iteration.
const DENSE_COLUMN_CAP: usize = 420;

/// The discretised operator on the window `[-T, T]`.
#[derive(Debug, Clone)]
pub struct GridOperator {
    path: OperatorPath,
    t_half: f64,
    h: f64,
    times: Vec<f64>,
    /// Interval blocks `(L_i, R_i)` of the midpoint rows
    /// `(u_{i+1} - u_i)/h - A(t_{i+1/2}) (u_i + u_{i+1})/2`.
    blocks: Vec<(CMat, CMat)>,
    dim: usize,
}

/// Outcome of the kernel/cokernel rank decisions.
#[derive(Debug, Clone)]
pub struct IndexReport {
    pub ker_dim: usize,
    pub coker_dim: usize,
    pub index: i64,
    /// Smallest of the two singular-value gap ratios at the rank cuts.
    pub gap_ratio: f64,
    /// Gap ratio at least 10 on both sides.
    pub reliable: bool,
    pub window: f64,
    pub grid_step: f64,
    /// `pair_index(W^s, W^u)` computed independently, when requested.
    pub pair_prediction: Option<i64>,
    pub pair_match: Option<bool>,
}

/// A vector-valued grid function on uniform times.
#[derive(Debug, Clone)]
pub struct GridFn {
    pub times: Vec<f64>,
    pub values: Vec<CVec>,
}

impl GridFn {
    pub fn sample(f: impl Fn(f64) -> CVec, a: f64, b: f64, h: f64) -> Result<Self> {
        if !(b > a && h > 0.0) {
            return Err(Error::InvalidInput("grid function needs b > a and h > 0".into()));
        }
        let m = ((b - a) / h).round() as usize;
        let times: Vec<f64> = (0..=m).map(|i| a + i as f64 * h).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Ok(GridFn { times, values })
    }

    pub fn zero_like(&self) -> Self {
        let n = self.values[0].nrows();
        GridFn {
            times: self.times.clone(),
            values: vec![CVec::zeros(n); self.times.len()],
        }
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn check_uniform(&self) -> Result<()> {
        if self.times.len() < 2 {
            return Err(Error::InvalidInput("grid function needs at least two nodes".into()));
        }
        let h = self.step();
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::InvalidInput("grid function must be uniform".into()));
            }
        }
        Ok(())
    }
}

/// Window half-width adequate for both the settling of the path onto its
/// limits and the decay of solutions: beyond the tail time plus two units,
/// and large enough that `e^{-margin T} < 1e-8` for the smaller limit
/// margin.
pub fn choose_window(path: &OperatorPath, tail_tol: f64) -> Result<f64> {
    let a_plus = path
        .limit_plus()
        .ok_or_else(|| Error::InvalidInput("path needs asymptotic limits".into()))?;
    let a_minus = path
        .limit_minus()
        .ok_or_else(|| Error::InvalidInput("path needs asymptotic limits".into()))?;
    let mut t_needed = 0.0_f64;
    for &t in path.times() {
        let limit = if t >= 0.0 { a_plus } else { a_minus };
        if linalg::op_norm(&(path.eval(t) - limit)) > tail_tol {
            t_needed = t_needed.max(t.abs());
        }
    }
    let mut margin = f64::INFINITY;
    for limit in [a_plus, a_minus] {
        let hyp = spectral::is_hyperbolic(limit)?;
        if !hyp.hyperbolic {
            return Err(Error::NotHyperbolic { margin: hyp.margin });
        }
        margin = margin.min(hyp.margin);
    }
    let decay_extent = (1e8_f64).ln() / margin;
    Ok((t_needed + 2.0).max(decay_extent).clamp(10.0, 60.0))
}

/// Assemble the midpoint discretisation of `F_A` on `[-T, T]` with step `h`.
pub fn assemble(path: &OperatorPath, t_half: f64, h: f64) -> Result<GridOperator> {
    assemble_with_tail_tol(path, t_half, h, DEFAULT_TAIL_TOL)
}

pub fn assemble_with_tail_tol(
    path: &OperatorPath,
    t_half: f64,
    h: f64,
    tail_tol: f64,
) -> Result<GridOperator> {
    let n = path.dim();
    for limit in [path.limit_minus(), path.limit_plus()] {
        let limit = limit
            .ok_or_else(|| Error::InvalidInput("path needs asymptotic limits".into()))?;
        let hyp = spectral::is_hyperbolic(limit)?;
        if !hyp.hyperbolic {
            return Err(Error::NotHyperbolic { margin: hyp.margin });
        }
    }
    let sup = path.sup_norm();
    let h_cap = (0.1_f64).min(1.0 / (4.0 * sup));
    if !(h > 0.0 && h <= h_cap + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "grid step {h} exceeds the cap {h_cap:.4} = min(0.1, 1/(4 sup|A|))"
        )));
    }
    // the window must reach beyond the tails
    let tail_plus = linalg::op_norm(&(path.eval(t_half) - path.limit_plus().unwrap()));
    let tail_minus = linalg::op_norm(&(path.eval(-t_half) - path.limit_minus().unwrap()));
    if tail_plus > tail_tol || tail_minus > tail_tol {
        return Err(Error::InvalidInput(format!(
            "window [-{t_half}, {t_half}] too small: tail residuals {tail_minus:.2e}, {tail_plus:.2e} above {tail_tol:.0e}"
        )));
    }
    let m = ((2.0 * t_half) / h).round() as usize;
    if m < 8 {
        return Err(Error::InvalidInput("window/step give fewer than 8 intervals".into()));
    }
    let times: Vec<f64> = (0..=m).map(|i| -t_half + i as f64 * h).collect();
    let id = CMat::identity(n, n);
    let inv_h = C64::new(1.0 / h, 0.0);
    let half = C64::new(0.5, 0.0);
    let blocks = (0..m)
        .map(|i| {
            let mid = path.eval(0.5 * (times[i] + times[i + 1]));
            let l = -(&id * inv_h) - &mid * half;
            let r = &id * inv_h - &mid * half;
            (l, r)
        })
        .collect();
    Ok(GridOperator { path: path.clone(), t_half, h, times, blocks, dim: n })
}

impl GridOperator {
    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_step(&self) -> f64 {
        self.h
    }

    pub fn window_half(&self) -> f64 {
        self.t_half
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn path(&self) -> &OperatorPath {
        &self.path
    }

    pub fn ncols(&self) -> usize {
        self.dim * self.node_count()
    }

    pub fn nrows(&self) -> usize {
        self.dim * (self.node_count() + 1)
    }

    /// Apply to a grid function flattened node-major.
    pub fn apply(&self, u: &CVec) -> CVec {
        let n = self.dim;
        let m = self.node_count();
        let mut out = CVec::zeros(self.nrows());
        for (i, (l, r)) in self.blocks.iter().enumerate() {
            let ui = u.rows(i * n, n);
            let uj = u.rows((i + 1) * n, n);
            let row = l * ui + r * uj;
            out.rows_mut(i * n, n).copy_from(&row);
        }
        // Dirichlet rows
        out.rows_mut((m - 1) * n, n).copy_from(&u.rows(0, n));
        out.rows_mut(m * n, n).copy_from(&u.rows((m - 1) * n, n));
        out
    }

    pub fn apply_adjoint(&self, v: &CVec) -> CVec {
        let n = self.dim;
        let m = self.node_count();
        let mut out = CVec::zeros(self.ncols());
        for (i, (l, r)) in self.blocks.iter().enumerate() {
            let vi = v.rows(i * n, n);
            let la = l.adjoint() * vi;
            let ra = r.adjoint() * vi;
            let mut left = out.rows_mut(i * n, n);
            left += la;
            let mut right = out.rows_mut((i + 1) * n, n);
            right += ra;
        }
        let mut first = out.rows_mut(0, n);
        first += v.rows((m - 1) * n, n);
        let mut last = out.rows_mut((m - 1) * n, n);
        last += v.rows(m * n, n);
        out
    }

    /// Dense assembly; intended for small grids and cross-checks.
    pub fn dense(&self) -> CMat {
        let n = self.dim;
        let m = self.node_count();
        let mut out = CMat::zeros(self.nrows(), self.ncols());
        for (i, (l, r)) in self.blocks.iter().enumerate() {
            out.view_mut((i * n, i * n), (n, n)).copy_from(l);
            out.view_mut((i * n, (i + 1) * n), (n, n)).copy_from(r);
        }
        for j in 0..n {
            out[((m - 1) * n + j, j)] = C64::new(1.0, 0.0);
            out[(m * n + j, (m - 1) * n + j)] = C64::new(1.0, 0.0);
        }
        out
    }

    fn sigma_max(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51
            * self.node_count() as u64
            + 7);
        let mut v = CVec::from_fn(self.ncols(), |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        v /= C64::new(v.norm(), 0.0);
        let mut sigma = 0.0;
        for _ in 0..40 {
            let w = self.apply_adjoint(&self.apply(&v));
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            sigma = norm.sqrt();
            v = w / C64::new(norm, 0.0);
        }
        sigma
    }

    /// Smallest singular values (up to `dim + 2` of them) with matching right
    /// singular vectors, and the largest singular value.
    pub fn small_singular_data(&self) -> Result<(Vec<f64>, Vec<CVec>, f64)> {
        if self.ncols() <= DENSE_COLUMN_CAP {
            let dense = self.dense();
            let f = linalg::svd_checked(&dense)?;
            let take = (self.dim + 2).min(f.sigma.len());
            let sigma_max = f.sigma.first().copied().unwrap_or(0.0);
            let mut sigmas = Vec::with_capacity(take);
            let mut vectors = Vec::with_capacity(take);
            for i in 0..take {
                let idx = f.sigma.len() - 1 - i;
                sigmas.push(f.sigma[idx]);
                vectors.push(f.v_t.row(idx).adjoint());
            }
            return Ok((sigmas, vectors, sigma_max));
        }
        self.small_singular_data_banded()
    }

    fn small_singular_data_banded(&self) -> Result<(Vec<f64>, Vec<CVec>, f64)> {
        let n = self.dim;
        let m = self.node_count();
        let sigma_max = self.sigma_max();
        let threshold = GRID_RANK_TOL * sigma_max;
        let mu = (0.01 * threshold).powi(2);

        // normal matrix M^H M + mu I, block tridiagonal
        let id = CMat::identity(n, n);
        let mut diag: Vec<CMat> = vec![CMat::zeros(n, n); m];
        let mut upper: Vec<CMat> = vec![CMat::zeros(n, n); m - 1];
        for (i, (l, r)) in self.blocks.iter().enumerate() {
            diag[i] += l.adjoint() * l;
            diag[i + 1] += r.adjoint() * r;
            upper[i] = l.adjoint() * r;
        }
        diag[0] += &id;
        diag[m - 1] += &id;
        for d in diag.iter_mut() {
            *d += &id * C64::new(mu, 0.0);
        }

        // block Cholesky/Thomas factorisation of the tridiagonal system
        let mut schur_inv: Vec<CMat> = Vec::with_capacity(m);
        for i in 0..m {
            let s = if i == 0 {
                diag[0].clone()
            } else {
                &diag[i] - upper[i - 1].adjoint() * &schur_inv[i - 1] * &upper[i - 1]
            };
            let inv = linalg::solve_with_cap(&s, &id, 1e15)
                .map_err(|_| Error::QuadratureFailure("normal-equation block is singular".into()))?;
            schur_inv.push(inv);
        }
        let solve_normal = |b: &CVec| -> CVec {
            let mut w: Vec<CVec> = Vec::with_capacity(m);
            for i in 0..m {
                let mut wi = b.rows(i * n, n).into_owned();
                if i > 0 {
                    wi -= upper[i - 1].adjoint() * (&schur_inv[i - 1] * &w[i - 1]);
                }
                w.push(wi);
            }
            let mut x = vec![CVec::zeros(n); m];
            x[m - 1] = &schur_inv[m - 1] * &w[m - 1];
            for i in (0..m - 1).rev() {
                let rhs = &w[i] - &upper[i] * &x[i + 1];
                x[i] = &schur_inv[i] * rhs;
            }
            let mut out = CVec::zeros(m * n);
            for i in 0..m {
                out.rows_mut(i * n, n).copy_from(&x[i]);
            }
            out
        };

        // inverse subspace iteration on the shifted normal matrix
        let k = n + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(0x6e);
        let mut basis: Vec<CVec> = (0..k)
            .map(|_| {
                CVec::from_fn(self.ncols(), |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        orthonormalise(&mut basis);
        for _ in 0..8 {
            let mut next: Vec<CVec> = basis.iter().map(&solve_normal).collect();
            orthonormalise(&mut next);
            basis = next;
        }

        // Rayleigh refinement through the thin SVD of M V
        let mut mv = CMat::zeros(self.nrows(), k);
        for (j, v) in basis.iter().enumerate() {
            mv.set_column(j, &self.apply(v));
        }
        let f = linalg::svd_checked(&mv)?;
        let mut sigmas = Vec::with_capacity(k);
        let mut vectors = Vec::with_capacity(k);
        for i in (0..f.sigma.len()).rev() {
            sigmas.push(f.sigma[i]);
            let coeff = f.v_t.row(i).adjoint();
            let mut vec = CVec::zeros(self.ncols());
            for (j, v) in basis.iter().enumerate() {
                vec += v * coeff[j];
            }
            vectors.push(vec);
        }
        Ok((sigmas, vectors, sigma_max))
    }

    /// Numerical nullity at the grid rank tolerance, with the gap ratio at
    /// the cut and the null vectors. The gap ratio is the smaller of the
    /// kept-over-discarded ratio and the squared distance of the nearest
    /// singular value from the threshold itself, so values straddling the
    /// cut are flagged even when the kept/discarded ratio looks wide.
    pub fn nullity(&self, rel_tol: f64) -> Result<(usize, f64, Vec<CVec>)> {
        let (sigmas, vectors, sigma_max) = self.small_singular_data()?;
        let threshold = rel_tol * sigma_max;
        let below: Vec<usize> =
            (0..sigmas.len()).filter(|&i| sigmas[i] <= threshold).collect();
        let count = below.len();
        let mut gap = if count == 0 {
            sigmas.first().map(|&s| s / threshold).unwrap_or(f64::INFINITY)
        } else if count < sigmas.len() {
            let largest_below = sigmas[count - 1];
            if largest_below == 0.0 {
                f64::INFINITY
            } else {
                sigmas[count] / largest_below
            }
        } else {
            // every probed direction is numerically null; should not happen
            // for these operators
            1.0
        };
        for &s in &sigmas {
            if s > 0.0 {
                let dist = (s / threshold).max(threshold / s);
                gap = gap.min(dist * dist);
            }
        }
        let null_vectors = below.into_iter().map(|i| vectors[i].clone()).collect();
        Ok((count, gap, null_vectors))
    }
}

/// Kernel/cokernel/index of the assembled operator by rank decisions on the
/// matrix and on its adjoint-side matrix, with the independent pair-index
/// prediction `ind(W^s, W^u)` attached.
pub fn numeric_index(op: &GridOperator) -> Result<IndexReport> {
    let mut report = numeric_index_raw(op, GRID_RANK_TOL)?;
    let horizon = op.window_half().max(8.0);
    let stable = invariant::stable_space_limit(op.path(), horizon, 1e-7)?;
    let unstable = invariant::unstable_space(op.path(), horizon, 1e-7)?;
    let pair = grassmann::pair_index(&stable, &unstable)?;
    report.pair_prediction = Some(pair.index);
    report.pair_match = Some(pair.index == report.index);
    Ok(report)
}

/// The rank decisions alone, without the pair prediction.
pub fn numeric_index_raw(op: &GridOperator, rel_tol: f64) -> Result<IndexReport> {
    let (ker, gap_k, _) = op.nullity(rel_tol)?;
    let adjoint_path = op.path().negated_adjoint();
    let adjoint_op = assemble_with_tail_tol(
        &adjoint_path,
        op.window_half(),
        op.grid_step(),
        f64::INFINITY,
    )?;
    let (coker, gap_c, _) = adjoint_op.nullity(rel_tol)?;
    let gap_ratio = gap_k.min(gap_c);
    Ok(IndexReport {
        ker_dim: ker,
        coker_dim: coker,
        index: ker as i64 - coker as i64,
        gap_ratio,
        reliable: gap_ratio >= 10.0,
        window: op.window_half(),
        grid_step: op.grid_step(),
        pair_prediction: None,
        pair_match: None,
    })
}

fn orthonormalise(vectors: &mut [CVec]) {
    for i in 0..vectors.len() {
        for j in 0..i {
            let proj = vectors[j].dotc(&vectors[i]);
            let prev = vectors[j].clone();
            vectors[i] -= prev * proj;
        }
        let norm = vectors[i].norm();
        if norm > 0.0 {
            vectors[i] /= C64::new(norm, 0.0);
        }
    }
}

/// Transported bundle data on a uniform grid: orthonormal bases of the
/// evolved stable bundle and of the evolved complement, the projectors onto
/// the first along the second, and the one-step flows.
struct BundleTransport {
    projectors: Vec<CMat>,
    flows: Vec<CMat>,
    flow_inverses: Vec<CMat>,
    /// Fitted growth rate of the stable bundle under the forward flow.
    stable_rate: f64,
}

fn transport_bundles(
    path: &OperatorPath,
    times: &[f64],
    p_s: &Projector,
    tol: f64,
) -> Result<BundleTransport> {
    let n = path.dim();
    let stable0 = p_s.range();
    let compl0 = p_s.kernel();
    let mut s_basis = stable0.basis().clone();
    let mut u_basis = compl0.basis().clone();
    let mut projectors = Vec::with_capacity(times.len());
    let mut flows = Vec::with_capacity(times.len() - 1);
    let mut flow_inverses = Vec::with_capacity(times.len() - 1);
    let mut stable_log = 0.0_f64;
    let mut stable_points: Vec<(f64, f64)> = vec![(times[0], 0.0)];

    let project = |s: &CMat, u: &CMat| -> Result<CMat> {
        if s.ncols() == 0 {
            return Ok(CMat::zeros(n, n));
        }
        if u.ncols() == 0 {
            return Ok(CMat::identity(n, n));
        }
        let sub_s = Subspace::from_orthonormal(s.clone())?;
        let sub_u = Subspace::from_orthonormal(u.clone())?;
        Ok(grassmann::projector_onto_along(&sub_s, &sub_u)?.matrix().clone())
    };

    projectors.push(project(&s_basis, &u_basis)?);
    for w in times.windows(2) {
        let shifted = path.shift(w[0]);
        let (phi, phi_inv) = propagator::flow_to(&shifted, w[1] - w[0], tol)?;
        if s_basis.ncols() > 0 {
            let moved = &phi * &s_basis;
            let scale = linalg::op_norm(&moved);
            stable_log += scale.max(1e-300).ln();
            s_basis = orth_cols(&moved);
            stable_points.push((w[1], stable_log));
        }
        if u_basis.ncols() > 0 {
            u_basis = orth_cols(&(&phi * &u_basis));
        }
        projectors.push(project(&s_basis, &u_basis)?);
        flows.push(phi);
        flow_inverses.push(phi_inv);
    }

    let stable_rate = fit_rate(&stable_points);
    Ok(BundleTransport { projectors, flows, flow_inverses, stable_rate })
}

fn orth_cols(m: &CMat) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    qr.q().columns(0, m.ncols()).into_owned()
}

fn fit_rate(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let m = points.len() as f64;
    let (mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        s1 += x;
        s2 += x * x;
        b0 += y;
        b1 += x * y;
    }
    let det = m * s2 - s1 * s1;
    if det.abs() < 1e-12 {
        return f64::NEG_INFINITY;
    }
    (m * b1 - s1 * b0) / det
}

/// Apply the half-line right inverse `R^+` with kernel
/// `X(t) [P_s 1_{tau<=t} - (I - P_s) 1_{tau>t}] X(tau)^{-1}` to a grid
/// function on `[0, T]` by trapezoid quadrature.
pub fn right_inverse_apply(
    path: &OperatorPath,
    p_s: &Projector,
    h_fn: &GridFn,
    tol: f64,
) -> Result<GridFn> {
    h_fn.check_uniform()?;
    if (h_fn.times[0]).abs() > 1e-12 {
        return Err(Error::InvalidInput("the half-line grid must start at t = 0".into()));
    }
    let transport = transport_bundles(path, &h_fn.times, p_s, tol)?;
    if p_s.rank() > 0 && transport.stable_rate > 1e-3 {
        return Err(Error::KernelEnvelope { rate: transport.stable_rate });
    }
    Ok(green_recursion(&transport, h_fn, true))
}

/// Apply the negative half-line right inverse `R^-` with kernel built from a
/// projector `P_u` onto the unstable space, to a grid function on `[-T, 0]`.
pub fn left_right_inverse_apply(
    path: &OperatorPath,
    p_u: &Projector,
    h_fn: &GridFn,
    tol: f64,
) -> Result<GridFn> {
    h_fn.check_uniform()?;
    if (h_fn.times.last().unwrap()).abs() > 1e-12 {
        return Err(Error::InvalidInput("the half-line grid must end at t = 0".into()));
    }
    // on the negative half line the complement of W^u decays forward and
    // W^u decays backward, so the roles of the two kernel parts swap
    let transport = transport_bundles(path, &h_fn.times, &p_u.complementary(), tol)?;
    if p_u.complementary().rank() > 0 && transport.stable_rate > 1e-3 {
        return Err(Error::KernelEnvelope { rate: transport.stable_rate });
    }
    Ok(green_recursion(&transport, h_fn, true))
}

/// Shared trapezoid recursion: forward sweep with the projected weight,
/// backward sweep with the complementary weight, both re-projected onto the
/// transported bundles at every step.
fn green_recursion(transport: &BundleTransport, h_fn: &GridFn, subtract_backward: bool) -> GridFn {
    let m = h_fn.times.len();
    let n = h_fn.values[0].nrows();
    let h = h_fn.step();
    let hw = C64::new(h / 2.0, 0.0);
    let id = CMat::identity(n, n);

    let q: &Vec<CMat> = &transport.projectors;
    let w_s: Vec<CVec> = (0..m).map(|i| &q[i] * &h_fn.values[i]).collect();
    let w_u: Vec<CVec> = (0..m).map(|i| (&id - &q[i]) * &h_fn.values[i]).collect();

    let mut forward = vec![CVec::zeros(n); m];
    for i in 0..m - 1 {
        let step = &transport.flows[i] * (&forward[i] + &w_s[i] * hw) + &w_s[i + 1] * hw;
        forward[i + 1] = &q[i + 1] * step;
    }
    let mut backward = vec![CVec::zeros(n); m];
    for i in (0..m - 1).rev() {
        let step = &transport.flow_inverses[i] * (&backward[i + 1] + &w_u[i + 1] * hw)
            + &w_u[i] * hw;
        backward[i] = (&id - &q[i]) * step;
    }
    let sign = if subtract_backward { -1.0 } else { 1.0 };
    let values = (0..m)
        .map(|i| &forward[i] + &backward[i] * C64::new(sign, 0.0))
        .collect();
    GridFn { times: h_fn.times.clone(), values }
}

/// Discrete defect `max_i |(u_{i+1} - u_i)/h - A(t_mid)(u_i + u_{i+1})/2 - h(t_mid)|`.
pub fn discrete_defect(path: &OperatorPath, u: &GridFn, h_fn: &GridFn) -> f64 {
    let h = u.step();
    let mut worst = 0.0_f64;
    for i in 0..u.times.len() - 1 {
        let mid = 0.5 * (u.times[i] + u.times[i + 1]);
        let du = (&u.values[i + 1] - &u.values[i]) / C64::new(h, 0.0);
        let au = path.eval(mid) * ((&u.values[i] + &u.values[i + 1]) * C64::new(0.5, 0.0));
        let fm = (&h_fn.values[i] + &h_fn.values[i + 1]) * C64::new(0.5, 0.0);
        worst = worst.max((du - au - fm).norm());
    }
    worst
}

/// Boundary maps `r^+ h = (R^+ h)(0)` and `r^- h = (R^- h)(0)`; the first
/// lands in the chosen complement of `W^s`, the second in the complement of
/// `W^u`.
pub fn boundary_maps(
    path: &OperatorPath,
    p_s: &Projector,
    p_u: &Projector,
    h_plus: &GridFn,
    h_minus: &GridFn,
    tol: f64,
) -> Result<(CVec, CVec)> {
    let r_plus = right_inverse_apply(path, p_s, h_plus, tol)?;
    let r_minus = left_right_inverse_apply(path, p_u, h_minus, tol)?;
    Ok((
        r_plus.values[0].clone(),
        r_minus.values.last().unwrap().clone(),
    ))
}

/// A compactly supported profile `h = phi . U^{-1} v` whose boundary map
/// `r^+ h` equals `(I - P_s) v`; the recipe behind the surjectivity of the
/// boundary maps. Retries a handful of bump centres before giving up.
pub fn surjectivity_witness(
    path: &OperatorPath,
    p_s: &Projector,
    v: &CVec,
    grid: &GridFn,
    tol: f64,
) -> Result<GridFn> {
    let n = path.dim();
    let h = grid.step();
    for (attempt, center) in [1.0_f64, 1.5, 2.0, 2.5, 3.0].iter().enumerate() {
        let width = 0.45;
        let bump = |t: f64| -> f64 {
            let s = (t - center) / width;
            if s.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - s * s)).exp() }
        };
        // U = - int phi(tau) X(tau)^{-1} dtau over the support
        let mut u_op = CMat::zeros(n, n);
        let steps = ((2.0 * width) / h).ceil() as usize * 2;
        let fine = (2.0 * width) / steps as f64;
        let mut tau = center - width;
        let mut prev: Option<CMat> = None;
        for _ in 0..=steps {
            let (_, x_inv) = propagator::flow_to(path, tau, tol)?;
            let term = x_inv * C64::new(bump(tau), 0.0);
            if let Some(p) = prev {
                u_op += (p + &term) * C64::new(fine / 2.0, 0.0);
            }
            prev = Some(term);
            tau += fine;
        }
        u_op = -u_op;
        match linalg::solve_with_cap(&u_op, &CMat::identity(n, n), 1e10) {
            Ok(u_inv) => {
                let coeff = &u_inv * v;
                let values = grid
                    .times
                    .iter()
                    .map(|&t| &coeff * C64::new(bump(t), 0.0))
                    .collect();
                let h_fn = GridFn { times: grid.times.clone(), values };
                // verify the recipe before handing it out
                let r = right_inverse_apply(path, p_s, &h_fn, tol)?;
                let got = &r.values[0];
                let want = (CMat::identity(n, n) - p_s.matrix()) * v;
                if (got - &want).norm() <= 1e-5 * (1.0 + want.norm()) {
                    return Ok(h_fn);
                }
            }
            Err(_) if attempt + 1 < 5 => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::QuadratureFailure(
        "no bump centre produced an invertible witness operator".into(),
    ))
}

/// Outcome of the range-membership test.
#[derive(Debug, Clone)]
pub struct RangeMembership {
    pub member: bool,
    /// Distance of `r^+ h - r^- h` to `W^s + W^u`.
    pub distance: f64,
    /// Reconstructed solution when `h` is in the range; its discrete defect.
    pub witness: Option<GridFn>,
    pub witness_defect: Option<f64>,
}

/// Test `h in Range F_A` by the boundary-map criterion
/// `r^+ h - r^- h in W^s + W^u`, and glue a solution when it holds.
pub fn range_membership(path: &OperatorPath, h_fn: &GridFn, tol: f64) -> Result<RangeMembership> {
    h_fn.check_uniform()?;
    let t_half = -h_fn.times[0];
    if (h_fn.times.last().unwrap() - t_half).abs() > 1e-9 {
        return Err(Error::InvalidInput("range test expects a symmetric grid".into()));
    }
    let origin = h_fn
        .times
        .iter()
        .position(|&t| t.abs() < 1e-9)
        .ok_or_else(|| Error::InvalidInput("grid must contain t = 0".into()))?;

    let horizon = t_half.max(8.0);
    let stable = invariant::stable_space_limit(path, horizon, 1e-8)?;
    let unstable = invariant::unstable_space(path, horizon, 1e-8)?;
    let n = path.dim();
    let p_s = orthogonal_projector_onto(&stable, n)?;
    let p_u = orthogonal_projector_onto(&unstable, n)?;

    let h_plus = GridFn {
        times: h_fn.times[origin..].to_vec(),
        values: h_fn.values[origin..].to_vec(),
    };
    let h_minus = GridFn {
        times: h_fn.times[..=origin].to_vec(),
        values: h_fn.values[..=origin].to_vec(),
    };
    let (r_plus, r_minus) = boundary_maps(path, &p_s, &p_u, &h_plus, &h_minus, tol)?;
    let w = &r_plus - &r_minus;
    let sum = stable.sum(&unstable)?;
    let distance = grassmann::dist_point(&w, &sum)?;
    let member = distance <= tol * (1.0 + w.norm());
    if !member {
        return Ok(RangeMembership { member, distance, witness: None, witness_defect: None });
    }

    // glue: pick u0 in W^s, v0 in W^u with u0 - v0 = r^- h - r^+ h
    let (ks, ku) = (stable.dim(), unstable.dim());
    let mut pairing = CMat::zeros(n, ks + ku);
    pairing.view_mut((0, 0), (n, ks)).copy_from(stable.basis());
    pairing
        .view_mut((0, ks), (n, ku))
        .copy_from(&(-unstable.basis().clone()));
    let target = -&w;
    let coeffs = least_squares(&pairing, &target);
    let u0 = stable.basis() * coeffs.rows(0, ks).into_owned();
    let v0 = unstable.basis() * coeffs.rows(ks, ku).into_owned();

    // homogeneous parts, transported with re-projection onto the bundles
    let r_plus_fn = right_inverse_apply(path, &p_s, &h_plus, tol)?;
    let r_minus_fn = left_right_inverse_apply(path, &p_u, &h_minus, tol)?;
    let fwd = transport_bundles(path, &h_plus.times, &p_s, tol)?;
    let bwd = transport_bundles(path, &h_minus.times, &p_u.complementary(), tol)?;

    let mp = h_plus.times.len();
    let mut values = vec![CVec::zeros(n); h_fn.times.len()];
    let mut z = u0.clone();
    for i in 0..mp {
        values[origin + i] = &r_plus_fn.values[i] + &z;
        if i + 1 < mp {
            z = &fwd.projectors[i + 1] * (&fwd.flows[i] * z);
        }
    }
    let mm = h_minus.times.len();
    let mut z = v0.clone();
    for i in (0..mm).rev() {
        values[i] = &r_minus_fn.values[i] + &z;
        if i > 0 {
            let id = CMat::identity(n, n);
            let q = &id - &bwd.projectors[i - 1];
            z = q * (&bwd.flow_inverses[i - 1] * z);
        }
    }
    // the two expressions at t = 0 differ by the residual of the splitting
    values[origin] = (&r_plus_fn.values[0] + &u0
        + r_minus_fn.values.last().unwrap()
        + &v0)
        * C64::new(0.5, 0.0);
    let witness = GridFn { times: h_fn.times.clone(), values };
    let defect = discrete_defect(path, &witness, h_fn);
    Ok(RangeMembership {
        member,
        distance,
        witness: Some(witness),
        witness_defect: Some(defect),
    })
}

fn orthogonal_projector_onto(s: &Subspace, n: usize) -> Result<Projector> {
    if s.dim() == 0 {
        Projector::new(CMat::zeros(n, n))
    } else {
        Projector::new(s.orthogonal_projector())
    }
}

fn least_squares(a: &CMat, b: &CVec) -> CVec {
    linalg::pseudo_solve(a, b, 1e-12).expect("least squares")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cmat_from_rows;

    fn scalar_path(f: impl Fn(f64) -> f64 + Copy, extent: f64, step: f64) -> OperatorPath {
        OperatorPath::from_fn(
            move |t| CMat::from_element(1, 1, C64::new(f(t), 0.0)),
            -extent,
            extent,
            step,
        )
        .unwrap()
        .with_limits(
            CMat::from_element(1, 1, C64::new(f(-1e9), 0.0)),
            CMat::from_element(1, 1, C64::new(f(1e9), 0.0)),
        )
        .unwrap()
    }

    fn tanh_diag(extent: f64, step: f64) -> OperatorPath {
        OperatorPath::from_fn(
            |t| cmat_from_rows(2, 2, &[t.tanh(), 0.0, 0.0, -t.tanh()]),
            -extent,
            extent,
            step,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        )
        .unwrap()
    }

    #[test]
    fn zero_scalar_path_has_trivial_numerical_kernel() {
        // A == 0 is not hyperbolic at the tails, so assembly must refuse it
        let p = scalar_path(|_| 0.0, 4.0, 0.5);
        assert!(matches!(assemble(&p, 4.0, 0.1), Err(Error::NotHyperbolic { .. })));
    }

    #[test]
    fn scalar_tanh_index_is_minus_one() {
        let p = scalar_path(|t| t.tanh(), 18.0, 0.02);
        let op = assemble(&p, 16.0, 0.05).unwrap();
        let r = numeric_index(&op).unwrap();
        assert_eq!((r.ker_dim, r.coker_dim, r.index), (0, 1, -1));
        assert!(r.reliable, "gap ratio {}", r.gap_ratio);
        assert_eq!(r.pair_prediction, Some(-1));
        assert_eq!(r.pair_match, Some(true));
    }

    #[test]
    fn reversed_scalar_tanh_index_is_plus_one() {
        let p = scalar_path(|t| -t.tanh(), 18.0, 0.02);
        let op = assemble(&p, 16.0, 0.05).unwrap();
        let r = numeric_index(&op).unwrap();
        assert_eq!((r.ker_dim, r.coker_dim, r.index), (1, 0, 1));
        assert!(r.reliable);
    }

    #[test]
    fn tanh_diagonal_index_is_zero() {
        let p = tanh_diag(18.0, 0.02);
        let op = assemble(&p, 16.0, 0.05).unwrap();
        let r = numeric_index(&op).unwrap();
        assert_eq!((r.ker_dim, r.coker_dim, r.index), (1, 1, 0));
        assert_eq!(r.pair_prediction, Some(0));
    }

    #[test]
    fn discrete_kernel_matches_sech_samples() {
        let p = scalar_path(|t| -t.tanh(), 18.0, 0.005);
        let op = assemble(&p, 16.0, 0.005).unwrap();
        let (count, _, vectors) = op.nullity(GRID_RANK_TOL).unwrap();
        assert_eq!(count, 1);
        let v = &vectors[0];
        // compare against normalised sech samples
        let mut sech = CVec::from_fn(op.node_count(), |i, _| {
            C64::new(1.0 / op.times()[i].cosh(), 0.0)
        });
        sech /= C64::new(sech.norm(), 0.0);
        let phase = sech.dotc(v);
        let aligned = v * (phase.conj() / C64::new(phase.norm(), 0.0));
        let rel = (&aligned - &sech).norm() / sech.norm();
        assert!(rel <= 1e-4, "relative kernel error {rel}");
    }

    #[test]
    fn dense_and_banded_backends_agree() {
        let p = tanh_diag(14.0, 0.05);
        // column count just above the dense cap exercises the banded path
        let op_banded = assemble(&p, 12.0, 0.05).unwrap();
        assert!(op_banded.ncols() > DENSE_COLUMN_CAP);
        let (sig_b, _, max_b) = op_banded.small_singular_data_banded().unwrap();
        let dense = op_banded.dense();
        let mut sv: Vec<f64> = dense.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, s) in sig_b.iter().take(3).enumerate() {
            assert!(
                (s - sv[i]).abs() <= 1e-6 * max_b.max(1.0),
                "sigma_{i}: banded {s:.3e} vs dense {:.3e}",
                sv[i]
            );
        }
    }

    #[test]
    fn right_inverse_scalar_stable_case() {
        // A == -1, W^s = R, P_s = 1: h = e^{-t} gives u = t e^{-t}
        let p = scalar_path(|_| -1.0, 20.0, 0.5);
        let p_s = Projector::new(CMat::identity(1, 1)).unwrap();
        let grid = GridFn::sample(
            |t| CVec::from_element(1, C64::new((-t).exp(), 0.0)),
            0.0,
            30.0,
            0.005,
        )
        .unwrap();
        let u = right_inverse_apply(&p, &p_s, &grid, 1e-10).unwrap();
        let mut worst = 0.0_f64;
        for (i, &t) in u.times.iter().enumerate() {
            let expected = t * (-t).exp();
            worst = worst.max((u.values[i][0].re - expected).abs());
        }
        assert!(worst <= 1e-5, "max pointwise error {worst}");
        let defect = discrete_defect(&p, &u, &grid);
        assert!(defect <= 1e-5, "defect {defect}");
    }

    #[test]
    fn right_inverse_scalar_unstable_case() {
        // A == +1, W^s = {0}, P_s = 0: h = e^{-t} gives u = -e^{-t}/2
        let p = scalar_path(|_| 1.0, 20.0, 0.5);
        let p_s = Projector::new(CMat::zeros(1, 1)).unwrap();
        let grid = GridFn::sample(
            |t| CVec::from_element(1, C64::new((-t).exp(), 0.0)),
            0.0,
            30.0,
            0.005,
        )
        .unwrap();
        let u = right_inverse_apply(&p, &p_s, &grid, 1e-10).unwrap();
        let mut worst = 0.0_f64;
        for (i, &t) in u.times.iter().enumerate() {
            let expected = -(-t).exp() / 2.0;
            worst = worst.max((u.values[i][0].re - expected).abs());
        }
        // the truncation at T leaves an e^{-T} boundary layer; away from it
        // the closed form must match
        assert!(worst <= 1e-4, "max pointwise error {worst}");
        let interior: f64 = (0..u.times.len() - 600)
            .map(|i| (u.values[i][0].re + (-u.times[i]).exp() / 2.0).abs())
            .fold(0.0, f64::max);
        assert!(interior <= 1e-5, "interior error {interior}");
    }

    #[test]
    fn right_inverse_zero_input() {
        let p = scalar_path(|_| -1.0, 10.0, 0.5);
        let p_s = Projector::new(CMat::identity(1, 1)).unwrap();
        let grid = GridFn::sample(|_| CVec::zeros(1), 0.0, 10.0, 0.01).unwrap();
        let u = right_inverse_apply(&p, &p_s, &grid, 1e-9).unwrap();
        assert!(u.sup_norm() < 1e-14);
    }

    #[test]
    fn boundary_maps_scalar_conventions() {
        // A == -1: X_s = ker P_s = {0}, so r^+ always vanishes
        let p = scalar_path(|_| -1.0, 14.0, 0.5);
        let p_s = Projector::new(CMat::identity(1, 1)).unwrap();
        let p_u = Projector::new(CMat::zeros(1, 1)).unwrap();
        let h_plus = GridFn::sample(
            |t| CVec::from_element(1, C64::new((-(t - 2.0).powi(2)).exp(), 0.0)),
            0.0,
            12.0,
            0.01,
        )
        .unwrap();
        let h_minus = GridFn::sample(
            |t| CVec::from_element(1, C64::new((-(t + 2.0).powi(2)).exp(), 0.0)),
            -12.0,
            0.0,
            0.01,
        )
        .unwrap();
        let (r_p, _r_m) = boundary_maps(&p, &p_s, &p_u, &h_plus, &h_minus, 1e-9).unwrap();
        assert!(r_p.norm() < 1e-9, "r+ should land in the zero complement");

        // zero input gives zero boundary values
        let z_plus = h_plus.zero_like();
        let z_minus = h_minus.zero_like();
        let (rp, rm) = boundary_maps(&p, &p_s, &p_u, &z_plus, &z_minus, 1e-9).unwrap();
        assert!(rp.norm() < 1e-14 && rm.norm() < 1e-14);
    }

    #[test]
    fn surjectivity_witness_2d() {
        // constant diag(-1, 1): W^s = span e1, X_s = span e2; r+ surjects
        // onto span e2
        let p = OperatorPath::constant(cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]), -10.0, 10.0)
            .unwrap()
            .with_limits(
                cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
                cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            )
            .unwrap();
        let p_s = Projector::new(cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let grid = GridFn::sample(|_| CVec::zeros(2), 0.0, 12.0, 0.01).unwrap();
        let v = linalg::cvec_from_reals(&[0.0, 1.0]);
        let witness = surjectivity_witness(&p, &p_s, &v, &grid, 1e-9).unwrap();
        let r = right_inverse_apply(&p, &p_s, &witness, 1e-9).unwrap();
        assert!((&r.values[0] - &v).norm() <= 1e-5);
    }

    #[test]
    fn range_membership_round_trip() {
        // h = F_A u for decaying u must be recognised and recovered;
        // recovery is unique here because the kernel is trivial
        let p = OperatorPath::from_fn(
            |t| cmat_from_rows(2, 2, &[-1.0 + 0.3 * t.tanh(), 0.0, 0.0, 1.0 + 0.2 * t.tanh()]),
            -18.0,
            18.0,
            0.02,
        )
        .unwrap()
        .with_limits(
            cmat_from_rows(2, 2, &[-1.3, 0.0, 0.0, 0.8]),
            cmat_from_rows(2, 2, &[-0.7, 0.0, 0.0, 1.2]),
        )
        .unwrap();
        let h_step = 0.01;
        let u_exact = |t: f64| -> CVec {
            CVec::from_vec(vec![
                C64::new((-(t * t) / 4.0).exp(), 0.0),
                C64::new(0.5 * (-(t * t) / 5.0).exp(), 0.0),
            ])
        };
        let u_prime = |t: f64| -> CVec {
            CVec::from_vec(vec![
                C64::new((-t / 2.0) * (-(t * t) / 4.0).exp(), 0.0),
                C64::new(0.5 * (-2.0 * t / 5.0) * (-(t * t) / 5.0).exp(), 0.0),
            ])
        };
        let h_fn = GridFn::sample(
            |t| u_prime(t) - p.eval(t) * u_exact(t),
            -14.0,
            14.0,
            h_step,
        )
        .unwrap();
        let r = range_membership(&p, &h_fn, 1e-6).unwrap();
        assert!(r.member, "distance {}", r.distance);
        let witness = r.witness.unwrap();
        let mut worst = 0.0_f64;
        for (i, &t) in witness.times.iter().enumerate() {
            worst = worst.max((&witness.values[i] - u_exact(t)).norm());
        }
        assert!(worst <= 1e-4, "recovered solution error {worst}");

        // with a nontrivial kernel the recovery holds up to ker F_A: the
        // defect of the witness still vanishes
        let p2 = tanh_diag(18.0, 0.02);
        let h2 = GridFn::sample(
            |t| u_prime(t) - p2.eval(t) * u_exact(t),
            -14.0,
            14.0,
            h_step,
        )
        .unwrap();
        let r2 = range_membership(&p2, &h2, 1e-6).unwrap();
        assert!(r2.member, "distance {}", r2.distance);
        assert!(r2.witness_defect.unwrap() <= 1e-4);
    }

    #[test]
    fn range_membership_scalar_obstruction() {
        // A = tanh t: W^s + W^u = {0}, so a one-sided bump is not in range
        let p = scalar_path(|t| t.tanh(), 18.0, 0.02);
        let h_fn = GridFn::sample(
            |t| CVec::from_element(1, C64::new((-(t - 1.0).powi(2) * 4.0).exp(), 0.0)),
            -14.0,
            14.0,
            0.01,
        )
        .unwrap();
        let r = range_membership(&p, &h_fn, 1e-6).unwrap();
        assert!(!r.member, "distance {}", r.distance);
    }

    #[test]
    fn zero_function_is_in_range() {
        let p = tanh_diag(18.0, 0.02);
        let h_fn = GridFn::sample(|_| CVec::zeros(2), -14.0, 14.0, 0.01).unwrap();
        let r = range_membership(&p, &h_fn, 1e-6).unwrap();
        assert!(r.member);
        assert!(r.witness.unwrap().sup_norm() < 1e-9);
    }

    #[test]
    fn index_stable_under_refinement() {
        let p = tanh_diag(18.0, 0.02);
        let r1 = numeric_index_raw(&assemble(&p, 14.0, 0.1).unwrap(), GRID_RANK_TOL).unwrap();
        let r2 = numeric_index_raw(&assemble(&p, 14.0, 0.05).unwrap(), GRID_RANK_TOL).unwrap();
        let r3 = numeric_index_raw(&assemble(&p, 17.0, 0.1).unwrap(), GRID_RANK_TOL).unwrap();
        assert_eq!(r1.index, r2.index);
        assert_eq!(r1.index, r3.index);
        assert_eq!(r1.ker_dim, r2.ker_dim);
    }

    #[test]
    fn rejects_rotation_limit_path() {
        let rot = cmat_from_rows(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let p = OperatorPath::constant(rot.clone(), -10.0, 10.0)
            .unwrap()
            .with_limits(rot.clone(), rot)
            .unwrap();
        assert!(matches!(assemble(&p, 8.0, 0.1), Err(Error::NotHyperbolic { .. })));
    }
}
