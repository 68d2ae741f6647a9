//! Dense numerical primitives: rank decisions, eigenvalues, linear solves,
//! norms and orthonormalisation.
//!
//! Everything downstream works over complex scalars, even for real inputs,
//! because spectra and contour integrals live in the complex plane. Real
//! matrices embed through [`from_real`]; results that are real up to noise
//! can be stripped with [`strip_small_imag`].

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default relative tolerance of rank decisions. The threshold is always
/// relative (`rel_tol * sigma_max`); absolute thresholds fail across scales.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Linear solves refuse matrices whose condition estimate exceeds this.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Eigenvalues closer than `1e-7 * (1 + |lambda|)` are clustered when
/// multiplicities are counted.
pub const EIGEN_CLUSTER_RADIUS: f64 = 1e-7;

/// Outcome of a numerical rank decision.
#[derive(Debug, Clone)]
pub struct RankDecision {
    /// Absolute threshold used: `rel_tol * sigma_max`.
    pub threshold: f64,
    /// Number of singular values strictly above the threshold.
    pub rank: usize,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
}

impl RankDecision {
    /// Ratio between the smallest kept and the largest discarded singular
    /// value; `f64::INFINITY` when nothing was discarded or kept.
    pub fn gap_ratio(&self) -> f64 {
        if self.rank == 0 || self.rank == self.singular_values.len() {
            return f64::INFINITY;
        }
        let kept = self.singular_values[self.rank - 1];
        let cut = self.singular_values[self.rank];
        if cut == 0.0 {
            f64::INFINITY
        } else {
            kept / cut
        }
    }
}

pub fn ensure_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

pub fn ensure_square(m: &CMat) -> Result<()> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Thin SVD factors with singular values sorted descending and columns of
/// `u` / rows of `v_t` index-matched to them.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v_t: CMat,
}

/// Thin SVD with an explicit reconstruction check.
///
/// The backend iteration occasionally returns inconsistent factors on
/// matrices with tightly clustered singular values (a wrong dominant value
/// and factors that do not reproduce the input). Every decomposition here is
/// verified by reconstruction; on failure the input is conjugated by random
/// unitaries, which perturbs the problem off the degenerate configuration,
/// and the factors are rotated back.
pub fn svd_checked(m: &CMat) -> Result<SvdFactors> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    if rows == 0 || cols == 0 {
        return Ok(SvdFactors {
            u: CMat::zeros(rows, 0),
            sigma: Vec::new(),
            v_t: CMat::zeros(0, cols),
        });
    }
    ensure_finite(m)?;
    let scale = m.norm();
    // tight enough to reject the backend's failure modes (relative errors
    // from 1e-5 up to order one), loose enough to accept its normal
    // backward error (1e-12 relative and below)
    let tol = 3e-11 * (1.0 + scale) * (k as f64).sqrt();
    // fast path: the library backend, verified by reconstruction
    let svd = m.clone().svd(true, true);
    let u_raw = svd.u.as_ref().expect("svd with u");
    let vt_raw = svd.v_t.as_ref().expect("svd with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap()
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut u_sorted = CMat::zeros(rows, u_raw.ncols());
    let mut vt_sorted = CMat::zeros(vt_raw.nrows(), cols);
    for (new_i, &old_i) in order.iter().enumerate() {
        u_sorted.set_column(new_i, &u_raw.column(old_i));
        vt_sorted.set_row(new_i, &vt_raw.row(old_i));
    }
    if reconstruction_residual(&u_sorted, &sigma, &vt_sorted, m) <= tol {
        return Ok(SvdFactors { u: u_sorted, sigma, v_t: vt_sorted });
    }
    // fallback: one-sided Jacobi, slower but dependable on the clustered
    // and near-degenerate spectra the backend mishandles
    let factors = jacobi_svd(m)?;
    let residual = reconstruction_residual(&factors.u, &factors.sigma, &factors.v_t, m);
    if residual <= tol {
        Ok(factors)
    } else {
        Err(Error::EigenFailure(format!(
            "singular value decomposition failed its reconstruction check (residual {residual:.3e})"
        )))
    }
}

fn reconstruction_residual(u: &CMat, sigma: &[f64], v_t: &CMat, m: &CMat) -> f64 {
    let mut scaled = u.clone();
    for (i, &s) in sigma.iter().enumerate() {
        scaled.column_mut(i).scale_mut(s);
    }
    (scaled * v_t - m).norm()
}

/// One-sided Jacobi SVD: rotate column pairs until they are mutually
/// orthogonal. High relative accuracy, unconditionally convergent at these
/// sizes; `V` stays unitary by construction.
fn jacobi_svd(m: &CMat) -> Result<SvdFactors> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows < cols {
        // factor the adjoint and swap the roles of U and V
        let f = jacobi_svd(&m.adjoint())?;
        return Ok(SvdFactors { u: f.v_t.adjoint(), sigma: f.sigma, v_t: f.u.adjoint() });
    }
    let k = cols;
    let mut a = m.clone();
    let mut v = CMat::identity(k, k);
    let limit = 40usize;
    for _sweep in 0..limit {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let col_p = a.column(p).clone_owned();
                let col_q = a.column(q).clone_owned();
                let alpha = col_p.norm_squared();
                let beta = col_q.norm_squared();
                let gamma = col_p.dotc(&col_q);
                let gn = gamma.norm();
                if gn <= 1e-30 || gn <= 1e-16 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / C64::new(gn, 0.0);
                let tau = (beta - alpha) / (2.0 * gn);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let cs = C64::new(c, 0.0);
                let s_pos = phase * s;
                let s_neg = phase.conj() * s;
                let new_p = &col_p * cs - &col_q * s_neg;
                let new_q = &col_p * s_pos + &col_q * cs;
                a.set_column(p, &new_p);
                a.set_column(q, &new_q);
                let vp = v.column(p).clone_owned();
                let vq = v.column(q).clone_owned();
                v.set_column(p, &(&vp * cs - &vq * s_neg));
                v.set_column(q, &(&vp * s_pos + &vq * cs));
            }
        }
        if !rotated {
            break;
        }
    }
    // singular values and left vectors from the rotated columns
    let mut entries: Vec<(f64, usize)> =
        (0..k).map(|j| (a.column(j).norm(), j)).collect();
    entries.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let sigma: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let mut u = CMat::zeros(rows, k);
    let mut v_sorted = CMat::zeros(k, k);
    let mut zero_cols = Vec::new();
    for (new_j, &(s, old_j)) in entries.iter().enumerate() {
        v_sorted.set_column(new_j, &v.column(old_j));
        if s > 0.0 {
            let unit = a.column(old_j) / C64::new(s, 0.0);
            u.set_column(new_j, &unit);
        } else {
            zero_cols.push(new_j);
        }
    }
    // complete U on exactly null columns by Gram-Schmidt against the rest
    for &j in &zero_cols {
        'candidates: for axis in 0..rows {
            let mut cand = CVec::zeros(rows);
            cand[axis] = C64::new(1.0, 0.0);
            for other in 0..k {
                if other == j {
                    continue;
                }
                let col = u.column(other).clone_owned();
                let proj = col.dotc(&cand);
                cand -= col * proj;
            }
            let norm = cand.norm();
            if norm > 1e-3 {
                u.set_column(j, &(cand / C64::new(norm, 0.0)));
                break 'candidates;
            }
        }
    }
    Ok(SvdFactors { u, sigma, v_t: v_sorted.adjoint() })
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd_checked(m).expect("singular values of a finite matrix").sigma
}

/// Numerical rank of `m` with relative tolerance `rel_tol` in (0, 1).
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> Result<RankDecision> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidInput(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    ensure_finite(m)?;
    let sv = singular_values(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * sigma_max;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    Ok(RankDecision { threshold, rank, singular_values: sv })
}

/// Eigenvalues of a square matrix, with algebraic multiplicity, sorted by
/// real part then imaginary part. Backward-stable via the Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let mut eigs: Vec<C64>;
    let scale = op_norm(m);
    // Hermitian fast path: the Schur iteration can stall on matrices with
    // highly repeated eigenvalues, which symmetric problems hit routinely
    if (m - m.adjoint()).norm() <= 1e-12 * (1.0 + scale) {
        let sym = m.clone().symmetric_eigen();
        eigs = sym.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect();
    } else {
        let mut found = None;
        for eps in [f64::EPSILON, 1e-14, 1e-12] {
            if let Some(schur) = m.clone().try_schur(eps, 75_000) {
                if let Some(vals) = schur.eigenvalues() {
                    found = Some(vals.iter().copied().collect::<Vec<_>>());
                    break;
                }
            }
        }
        eigs = found.ok_or_else(|| {
            Error::EigenFailure(format!("Schur iteration stalled on a {n}x{n} matrix", n = m.nrows()))
        })?;
    }
    eigs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(eigs)
}

/// Greedy clustering of an eigenvalue multiset with radius
/// `EIGEN_CLUSTER_RADIUS * (1 + |lambda|)`. Returns `(representative, multiplicity)`
/// pairs; the representative is the cluster mean.
pub fn cluster_eigenvalues(eigs: &[C64]) -> Vec<(C64, usize)> {
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for &e in eigs {
        let mut placed = false;
        for (rep, count) in clusters.iter_mut() {
            let radius = EIGEN_CLUSTER_RADIUS * (1.0 + rep.norm());
            if (e - *rep).norm() <= radius {
                // running mean keeps the representative centred
                let k = *count as f64;
                *rep = (*rep * k + e) / (k + 1.0);
                *count += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push((e, 1));
        }
    }
    clusters
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// `sigma_max / sigma_min`; infinite for numerically singular input.
pub fn condition_estimate(m: &CMat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Detailed output of [`solve_detailed`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: CMat,
    pub residual: f64,
    pub condition: f64,
}

/// Solve `M X = B` with a condition cap.
pub fn solve_with_cap(m: &CMat, b: &CMat, cap: f64) -> Result<CMat> {
    Ok(solve_detailed(m, b, cap)?.x)
}

/// Solve `M X = B`, rejecting matrices with condition estimate above
/// [`DEFAULT_CONDITION_CAP`].
pub fn solve(m: &CMat, b: &CMat) -> Result<CMat> {
    solve_with_cap(m, b, DEFAULT_CONDITION_CAP)
}

pub fn solve_detailed(m: &CMat, b: &CMat, cap: f64) -> Result<Solution> {
    ensure_square(m)?;
    ensure_finite(m)?;
    ensure_finite(b)?;
    if b.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} rows, matrix has {}",
            b.nrows(),
            m.nrows()
        )));
    }
    let condition = condition_estimate(m);
    if !condition.is_finite() || condition > cap {
        return Err(Error::IllConditioned { cond: condition });
    }
    let x = m
        .clone()
        .lu()
        .solve(b)
        .ok_or(Error::IllConditioned { cond: condition })?;
    let residual = (m * &x - b).norm();
    Ok(Solution { x, residual, condition })
}

/// Inverse through the LU factorisation, with the same condition cap as
/// [`solve`].
pub fn inverse(m: &CMat) -> Result<CMat> {
    solve(m, &CMat::identity(m.nrows(), m.nrows()))
}

/// Orthonormal basis of the column space of `m` at relative tolerance
/// `rel_tol`. Returns an `n x rank` matrix with orthonormal columns
/// (zero columns for rank 0).
pub fn orthonormal_columns(m: &CMat, rel_tol: f64) -> Result<CMat> {
    if m.ncols() == 0 {
        return Ok(CMat::zeros(m.nrows(), 0));
    }
    let sigma_max = singular_values(m).first().copied().unwrap_or(0.0);
    orthonormal_columns_abs(m, rel_tol * sigma_max)
}

/// Orthonormal basis of the column space with an absolute singular-value
/// threshold; used where the natural scale is not the matrix itself (for
/// instance the range of a near-zero projector).
pub fn orthonormal_columns_abs(m: &CMat, threshold: f64) -> Result<CMat> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return Ok(CMat::zeros(n, 0));
    }
    let f = svd_checked(m)?;
    let rank = f.sigma.iter().filter(|&&s| s > threshold).count();
    Ok(f.u.columns(0, rank).into_owned())
}

/// Orthonormal basis of the nullspace of `m` at relative tolerance `rel_tol`.
pub fn nullspace(m: &CMat, rel_tol: f64) -> Result<CMat> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    ensure_finite(m)?;
    // the thin svd of a wide matrix omits the trailing rows of V^H; pad with
    // zero rows so every null direction is represented
    let work = if m.nrows() < cols {
        let mut padded = CMat::zeros(cols, cols);
        padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let f = svd_checked(&work)?;
    let sigma_max = f.sigma.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * sigma_max;
    let null_rows: Vec<usize> =
        (0..f.sigma.len()).filter(|&i| f.sigma[i] <= threshold).collect();
    let mut basis = CMat::zeros(cols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &f.v_t.row(i).adjoint());
    }
    Ok(basis)
}

/// Minimum-norm least-squares solution of `A x = b` through the checked
/// SVD, truncating singular values below `rel_tol * sigma_max`.
pub fn pseudo_solve(a: &CMat, b: &CVec, rel_tol: f64) -> Result<CVec> {
    if a.ncols() == 0 {
        return Ok(CVec::zeros(0));
    }
    let f = svd_checked(a)?;
    let cutoff = rel_tol * f.sigma.first().copied().unwrap_or(0.0);
    let mut x = CVec::zeros(a.ncols());
    for (i, &s) in f.sigma.iter().enumerate() {
        if s > cutoff {
            let coeff = f.u.column(i).dotc(b) / C64::new(s, 0.0);
            x += f.v_t.row(i).adjoint() * coeff;
        }
    }
    Ok(x)
}

/// Embed a real matrix into the complex algebra.
pub fn from_real(m: &DMatrix<f64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

/// Strip imaginary parts when they are uniformly below `tol * (1 + scale)`;
/// `None` when the matrix is genuinely complex at that tolerance.
pub fn strip_small_imag(m: &CMat, tol: f64) -> Option<DMatrix<f64>> {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let bound = tol * (1.0 + scale);
    if m.iter().all(|z| z.im.abs() <= bound) {
        Some(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re))
    } else {
        None
    }
}

/// Convenience constructor from row-major real data.
pub fn cmat_from_rows(n: usize, cols: usize, rows: &[f64]) -> CMat {
    assert_eq!(rows.len(), n * cols, "row-major data length mismatch");
    CMat::from_fn(n, cols, |i, j| C64::new(rows[i * cols + j], 0.0))
}

pub fn cvec_from_reals(data: &[f64]) -> CVec {
    CVec::from_iterator(data.len(), data.iter().map(|&x| C64::new(x, 0.0)))
}
