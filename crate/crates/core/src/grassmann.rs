//! Subspace geometry: metrics on the Grassmannian, the minimum gap,
//! projectors onto/along, Fredholm pairs, relative dimension and projector
//! conjugation.
//!
//! Subspaces carry an orthonormal basis. In the Euclidean norm the disc
//! metric `rho` coincides with `rho1` (the nearest point of the unit disc of
//! `Z` to a point of the unit disc of `Y` is its orthogonal projection, which
//! never leaves the disc), and the sphere metric has the closed form
//! `rho_S(Y, Z) = sqrt(2 - 2 * min |Pi_Z y|)` over unit `y` in `Y`, so all
//! four metrics reduce to singular value computations.

use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMat, CVec, DEFAULT_RANK_TOL};
use crate::spectral;

/// A linear subspace of `C^n`, stored as an orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: CMat,
    tol: f64,
}

impl Subspace {
    /// Build from arbitrary spanning columns; the basis is orthonormalised
    /// and the dimension decided at relative tolerance `rel_tol`.
    pub fn from_columns(cols: &CMat, rel_tol: f64) -> Result<Self> {
        if cols.nrows() == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        let basis = linalg::orthonormal_columns(cols, rel_tol)?;
        Ok(Subspace { ambient: cols.nrows(), basis, tol: rel_tol })
    }

    /// Wrap an already orthonormal basis; fails when `basis^H basis` deviates
    /// from the identity by more than 1e-10.
    pub fn from_orthonormal(basis: CMat) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        let k = basis.ncols();
        let gram = basis.adjoint() * &basis;
        if (gram - CMat::identity(k, k)).norm() > 1e-10 {
            return Err(Error::InvalidInput("columns are not orthonormal".into()));
        }
        Ok(Subspace { ambient: basis.nrows(), basis, tol: DEFAULT_RANK_TOL })
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace { ambient, basis: CMat::zeros(ambient, 0), tol: DEFAULT_RANK_TOL }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { ambient, basis: CMat::identity(ambient, ambient), tol: DEFAULT_RANK_TOL }
    }

    /// Span of the given standard basis vectors.
    pub fn coordinate(ambient: usize, axes: &[usize]) -> Self {
        let mut basis = CMat::zeros(ambient, axes.len());
        for (k, &j) in axes.iter().enumerate() {
            basis[(j, k)] = C64::new(1.0, 0.0);
        }
        Subspace { ambient, basis, tol: DEFAULT_RANK_TOL }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Attach the accuracy at which this subspace was computed; rank
    /// decisions involving it (intersections, pair indices) use this.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Orthogonal projector `B B^H`.
    pub fn orthogonal_projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// Euclidean orthogonal complement. This realises the annihilator, which
    /// is legitimate because the ambient space is an inner-product space.
    pub fn orthogonal_complement(&self) -> Subspace {
        let p = CMat::identity(self.ambient, self.ambient) - self.orthogonal_projector();
        // absolute threshold: the natural scale is 1, and for a full
        // subspace the residual matrix is pure roundoff
        let basis = linalg::orthonormal_columns_abs(&p, self.tol.max(1e-12))
            .expect("complement of a finite basis");
        Subspace { ambient: self.ambient, basis, tol: self.tol }
    }

    /// Image under an invertible map, re-orthonormalised.
    pub fn map(&self, t: &CMat) -> Result<Subspace> {
        if t.ncols() != self.ambient {
            return Err(Error::DimensionMismatch("operator does not act on the ambient space".into()));
        }
        Subspace::from_columns(&(t * &self.basis), self.tol)
    }

    pub fn intersection(&self, other: &Subspace) -> Result<Subspace> {
        same_ambient(self, other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Subspace::zero(self.ambient));
        }
        let mut joint = CMat::zeros(self.ambient, self.dim() + other.dim());
        joint.view_mut((0, 0), (self.ambient, self.dim())).copy_from(&self.basis);
        joint
            .view_mut((0, self.dim()), (self.ambient, other.dim()))
            .copy_from(&(-other.basis.clone()));
        let null = linalg::nullspace(&joint, self.tol.max(other.tol))?;
        if null.ncols() == 0 {
            return Ok(Subspace::zero(self.ambient));
        }
        let coeffs = null.rows(0, self.dim()).into_owned();
        Subspace::from_columns(&(&self.basis * coeffs), self.tol)
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        same_ambient(self, other)?;
        let mut joint = CMat::zeros(self.ambient, self.dim() + other.dim());
        joint.view_mut((0, 0), (self.ambient, self.dim())).copy_from(&self.basis);
        joint
            .view_mut((0, self.dim()), (self.ambient, other.dim()))
            .copy_from(&other.basis);
        Subspace::from_columns(&joint, self.tol.max(other.tol))
    }

    /// Subspace equality: `delta_1` below 1e-8.
    pub fn approx_eq(&self, other: &Subspace) -> bool {
        self.ambient == other.ambient
            && self.dim() == other.dim()
            && delta1(self, other).map(|d| d < 1e-8).unwrap_or(false)
    }
}

fn same_ambient(y: &Subspace, z: &Subspace) -> Result<()> {
    if y.ambient == z.ambient {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            y.ambient, z.ambient
        )))
    }
}

/// Distance from a point to a subspace: the norm of the component of `v`
/// orthogonal to `Z`.
pub fn dist_point(v: &CVec, z: &Subspace) -> Result<f64> {
    if v.nrows() != z.ambient {
        return Err(Error::DimensionMismatch(format!(
            "vector lives in dimension {}, subspace in {}",
            v.nrows(),
            z.ambient
        )));
    }
    let proj = z.basis() * (z.basis().adjoint() * v);
    Ok((v - proj).norm())
}

/// `rho_1(Y, Z)`: supremum of `dist(y, Z)` over the unit disc of `Y`; equals
/// the largest singular value of `(I - Pi_Z) B_Y`.
pub fn rho1(y: &Subspace, z: &Subspace) -> Result<f64> {
    same_ambient(y, z)?;
    if y.is_zero() {
        return Ok(0.0);
    }
    if z.is_zero() {
        return Ok(1.0);
    }
    let residual = y.basis() - z.basis() * (z.basis().adjoint() * y.basis());
    Ok(linalg::op_norm(&residual).min(1.0))
}

pub fn delta1(y: &Subspace, z: &Subspace) -> Result<f64> {
    Ok(rho1(y, z)?.max(rho1(z, y)?))
}

/// `rho(Y, Z)`: Hausdorff one-sided distance between unit discs. In the
/// Euclidean norm the nearest point of `D(Z)` to any `y` in `D(Y)` is the
/// orthogonal projection (a contraction keeps it inside the disc), so the
/// value coincides with `rho_1`.
pub fn rho_disc(y: &Subspace, z: &Subspace) -> Result<f64> {
    rho1(y, z)
}

pub fn delta(y: &Subspace, z: &Subspace) -> Result<f64> {
    Ok(rho_disc(y, z)?.max(rho_disc(z, y)?))
}

/// `rho_S(Y, Z)`: one-sided Hausdorff distance between unit spheres, with the
/// conventions `rho_S({0},{0}) = 0` and `rho_S(Y,{0}) = rho_S({0},Z) = 1`.
///
/// For unit `y` the nearest point of `S(Z)` gives
/// `dist(y, S(Z)) = sqrt(2 - 2 |Pi_Z y|)`, so the supremum is attained where
/// `|Pi_Z y|` is smallest: the least singular value of `B_Z^H B_Y` as a map
/// out of `Y` (zero when dim Y exceeds dim Z).
pub fn rho_sphere(y: &Subspace, z: &Subspace) -> Result<f64> {
    same_ambient(y, z)?;
    match (y.is_zero(), z.is_zero()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        _ => {}
    }
    let overlap = if y.dim() > z.dim() {
        0.0
    } else {
        let m = z.basis().adjoint() * y.basis();
        linalg::singular_values(&m).last().copied().unwrap_or(0.0)
    };
    let s = overlap.clamp(0.0, 1.0);
    // 2 sin(theta/2) written through sin(theta) = rho_1: the naive
    // sqrt(2 - 2 cos(theta)) loses half the digits near theta = 0
    let sin_theta = rho1(y, z)?;
    Ok(sin_theta * (2.0 / (1.0 + s)).sqrt())
}

pub fn delta_sphere(y: &Subspace, z: &Subspace) -> Result<f64> {
    Ok(rho_sphere(y, z)?.max(rho_sphere(z, y)?))
}

/// Value of the minimum gap; the infimum over `Y \ Z` is empty exactly when
/// `Y` is a nonzero subspace of `Z`, which has no defined value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gap {
    Value(f64),
    /// `Y` is nonzero and contained in `Z`: empty infimum.
    UndefinedEmptyInfimum,
}

impl Gap {
    pub fn value(self) -> Option<f64> {
        match self {
            Gap::Value(v) => Some(v),
            Gap::UndefinedEmptyInfimum => None,
        }
    }
}

/// Minimum gap `gamma(Y, Z) = inf dist(y, Z) / dist(y, Y n Z)` over
/// `y in Y \ Z`, with `gamma = 1` for `Y = {0}`.
///
/// Splitting `y = u + w` with `u in Y n Z` and `w` in the orthogonal
/// complement `W` of the intersection inside `Y` turns the quotient into
/// `dist(w, Z) / |w|`, minimised by the least singular value of
/// `(I - Pi_Z) B_W`.
pub fn gap(y: &Subspace, z: &Subspace) -> Result<Gap> {
    same_ambient(y, z)?;
    if y.is_zero() {
        return Ok(Gap::Value(1.0));
    }
    let inter = y.intersection(z)?;
    let w_cols = if inter.is_zero() {
        y.basis().clone()
    } else {
        let p_int = inter.orthogonal_projector();
        let resid = y.basis() - &p_int * y.basis();
        linalg::orthonormal_columns(&resid, y.tol)?
    };
    if w_cols.ncols() == 0 {
        return Ok(Gap::UndefinedEmptyInfimum);
    }
    let resid = if z.is_zero() {
        w_cols.clone()
    } else {
        &w_cols - z.basis() * (z.basis().adjoint() * &w_cols)
    };
    let sv = linalg::singular_values(&resid);
    Ok(Gap::Value(sv.last().copied().unwrap_or(0.0)))
}

/// Symmetrised gap: the minimum of the two directed gaps over the directions
/// where the infimum is nonempty; undefined only when `Y = Z != {0}`.
pub fn gap_min(y: &Subspace, z: &Subspace) -> Result<Gap> {
    let a = gap(y, z)?;
    let b = gap(z, y)?;
    Ok(match (a, b) {
        (Gap::Value(u), Gap::Value(v)) => Gap::Value(u.min(v)),
        (Gap::Value(u), Gap::UndefinedEmptyInfimum) => Gap::Value(u),
        (Gap::UndefinedEmptyInfimum, Gap::Value(v)) => Gap::Value(v),
        _ => Gap::UndefinedEmptyInfimum,
    })
}

/// A (possibly oblique) projector with its idempotency defect.
#[derive(Debug, Clone)]
pub struct Projector {
    matrix: CMat,
    idempotency_residual: f64,
}

impl Projector {
    pub fn new(matrix: CMat) -> Result<Self> {
        linalg::ensure_square(&matrix)?;
        linalg::ensure_finite(&matrix)?;
        let n = matrix.nrows();
        let norm = linalg::op_norm(&matrix);
        let residual = (&matrix * &matrix - &matrix).norm();
        if residual > 1e-8 * (1.0 + norm * norm) {
            return Err(Error::InvalidInput(format!(
                "matrix is not idempotent (residual {residual:.3e})"
            )));
        }
        // rank thresholds anchored at the projector scale, so that P ~ 0 or
        // P ~ I do not inflate the rank of the near-zero factor
        let anchor = DEFAULT_RANK_TOL * (1.0 + norm);
        let kernel = CMat::identity(n, n) - &matrix;
        let range_rank = linalg::singular_values(&matrix).iter().filter(|&&s| s > anchor).count();
        let kernel_rank = linalg::singular_values(&kernel).iter().filter(|&&s| s > anchor).count();
        if range_rank + kernel_rank != n {
            return Err(Error::InvalidInput(format!(
                "range rank {range_rank} and kernel rank {kernel_rank} do not sum to {n}"
            )));
        }
        Ok(Projector { matrix, idempotency_residual: residual })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn idempotency_residual(&self) -> f64 {
        self.idempotency_residual
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    pub fn rank(&self) -> usize {
        let anchor = DEFAULT_RANK_TOL * (1.0 + self.norm());
        linalg::singular_values(&self.matrix).iter().filter(|&&s| s > anchor).count()
    }

    pub fn range(&self) -> Subspace {
        let threshold = DEFAULT_RANK_TOL * (1.0 + self.norm());
        let basis = linalg::orthonormal_columns_abs(&self.matrix, threshold)
            .expect("projector range");
        Subspace::from_orthonormal(basis).expect("projector range basis")
    }

    pub fn kernel(&self) -> Subspace {
        let n = self.matrix.nrows();
        let complement = CMat::identity(n, n) - &self.matrix;
        let threshold = DEFAULT_RANK_TOL * (1.0 + self.norm());
        let basis = linalg::orthonormal_columns_abs(&complement, threshold)
            .expect("projector kernel");
        Subspace::from_orthonormal(basis).expect("projector kernel basis")
    }

    /// The complementary projector `I - P`.
    pub fn complementary(&self) -> Projector {
        let n = self.matrix.nrows();
        Projector {
            matrix: CMat::identity(n, n) - &self.matrix,
            idempotency_residual: self.idempotency_residual,
        }
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        &self.matrix * v
    }
}

/// The projector with range `X` and kernel `Y`, defined when `X + Y` spans
/// the ambient space with `dim X + dim Y = n`.
pub fn projector_onto_along(x: &Subspace, y: &Subspace) -> Result<Projector> {
    same_ambient(x, y)?;
    let n = x.ambient_dim();
    let kx = x.dim();
    let ky = y.dim();
    let mut joint = CMat::zeros(n, kx + ky);
    joint.view_mut((0, 0), (n, kx)).copy_from(x.basis());
    joint.view_mut((0, kx), (n, ky)).copy_from(y.basis());
    let rank = linalg::numerical_rank(&joint, x.tol().max(y.tol()))?.rank;
    if kx + ky != n || rank != n {
        return Err(Error::NotComplementary { rank, ambient: n });
    }
    // coefficients of the identity in the joint basis; P keeps the X block
    let coeffs = linalg::solve(&joint, &CMat::identity(n, n))?;
    let p = x.basis() * coeffs.rows(0, kx).into_owned();
    Projector::new(p)
}

/// Dimensions attached to a Fredholm pair of subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndexReport {
    pub dim_intersection: usize,
    pub codim_sum: usize,
    pub index: i64,
}

/// Fredholm index of the pair `(X, Y)`:
/// `dim(X n Y) - codim(X + Y)`, which is also the index of the pairing
/// operator `(x, y) -> x - y`; both routes are computed and must agree.
pub fn pair_index(x: &Subspace, y: &Subspace) -> Result<PairIndexReport> {
    same_ambient(x, y)?;
    let n = x.ambient_dim();
    let kx = x.dim();
    let ky = y.dim();
    let mut pairing = CMat::zeros(n, kx + ky);
    pairing.view_mut((0, 0), (n, kx)).copy_from(x.basis());
    pairing
        .view_mut((0, kx), (n, ky))
        .copy_from(&(-y.basis().clone()));
    let rank = if kx + ky == 0 {
        0
    } else {
        linalg::numerical_rank(&pairing, x.tol().max(y.tol()))?.rank
    };
    let dim_intersection = kx + ky - rank;
    let codim_sum = n - rank;
    let index = dim_intersection as i64 - codim_sum as i64;
    let pairing_index = (kx + ky) as i64 - n as i64;
    debug_assert_eq!(index, pairing_index, "pairing operator disagrees with dimension counts");
    Ok(PairIndexReport { dim_intersection, codim_sum, index })
}

/// Relative dimension of a commensurable pair; at finite dimension this is
/// `dim X - dim Y`.
pub fn relative_dimension(x: &Subspace, y: &Subspace) -> Result<i64> {
    same_ambient(x, y)?;
    Ok(x.dim() as i64 - y.dim() as i64)
}

/// Transitivity of the relative dimension against the pair index:
/// `ind(X, Z) = dim(X, Y) + ind(Y, Z)`.
pub fn transitivity_check(x: &Subspace, y: &Subspace, z: &Subspace) -> Result<bool> {
    let lhs = pair_index(x, z)?.index;
    let rhs = relative_dimension(x, y)? + pair_index(y, z)?.index;
    Ok(lhs == rhs)
}

/// Invertible `g` with `g p = q g`, built from
/// `L(q, p) = q p + (1 - q)(1 - p)` and the inverse square root `R` of
/// `1 - (p - q)^2`; requires `|p - q| < 1`.
pub fn conjugator(p: &Projector, q: &Projector) -> Result<CMat> {
    if p.ambient_dim() != q.ambient_dim() {
        return Err(Error::DimensionMismatch("projectors act on different spaces".into()));
    }
    let n = p.ambient_dim();
    let id = CMat::identity(n, n);
    let diff = p.matrix() - q.matrix();
    let norm = linalg::op_norm(&diff);
    if norm >= 1.0 - 1e-12 {
        return Err(Error::NotConjugable { norm });
    }
    let l = q.matrix() * p.matrix() + (&id - q.matrix()) * (&id - p.matrix());
    let s = &id - &diff * &diff;
    let r = spectral::inverse_sqrt(&s)?;
    let g = &l * &r;
    let defect = (&g * p.matrix() - q.matrix() * &g).norm();
    let scale = 1.0 + linalg::op_norm(&g);
    if defect > 1e-8 * scale {
        return Err(Error::QuadratureFailure(format!(
            "conjugation defect {defect:.3e} exceeds tolerance"
        )));
    }
    // g must be invertible; the solve also certifies the condition number
    linalg::solve(&g, &id)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cmat_from_rows;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn line(ambient: usize, angle: f64) -> Subspace {
        let mut col = CMat::zeros(ambient, 1);
        col[(0, 0)] = C64::new(angle.cos(), 0.0);
        col[(1, 0)] = C64::new(angle.sin(), 0.0);
        Subspace::from_columns(&col, 1e-10).unwrap()
    }

    #[test]
    fn dist_point_examples() {
        let e1 = linalg::cvec_from_reals(&[1.0, 0.0]);
        let span_e1 = Subspace::coordinate(2, &[0]);
        let span_e2 = Subspace::coordinate(2, &[1]);
        assert_abs_diff_eq!(dist_point(&e1, &span_e1).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dist_point(&e1, &span_e2).unwrap(), 1.0, epsilon = 1e-14);
        let tilted = line(2, PI / 6.0);
        assert_abs_diff_eq!(dist_point(&e1, &tilted).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dist_point_rejects_mismatch() {
        let v = linalg::cvec_from_reals(&[1.0, 0.0, 0.0]);
        let z = Subspace::coordinate(2, &[0]);
        assert!(dist_point(&v, &z).is_err());
    }

    #[test]
    fn metrics_vanish_on_equal_subspaces() {
        let y = line(2, 0.3);
        assert_abs_diff_eq!(rho1(&y, &y).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta1(&y, &y).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta(&y, &y).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_sphere(&y, &y).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn line_metrics_match_principal_angle() {
        let theta = PI / 3.0;
        let y = line(2, 0.0);
        let z = line(2, theta);
        assert_abs_diff_eq!(rho1(&y, &z).unwrap(), theta.sin(), epsilon = 1e-12);
        // chord between unit spheres: 2 sin(theta / 2)
        assert_abs_diff_eq!(
            rho_sphere(&y, &z).unwrap(),
            2.0 * (theta / 2.0).sin(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sphere_metric_conventions() {
        let zero = Subspace::zero(2);
        let y = line(2, 0.1);
        assert_abs_diff_eq!(rho_sphere(&zero, &zero).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rho_sphere(&zero, &y).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rho_sphere(&y, &zero).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sphere_metric_closed_form_matches_sampling() {
        // multi-start sampling oracle for the sup over the unit sphere of Y
        let y = Subspace::from_columns(
            &cmat_from_rows(4, 2, &[1.0, 0.0, 0.2, 1.0, 0.0, 0.3, 0.1, -0.4]),
            1e-10,
        )
        .unwrap();
        let z = Subspace::from_columns(
            &cmat_from_rows(4, 2, &[0.9, 0.1, -0.3, 1.0, 0.5, 0.2, 0.0, 0.7]),
            1e-10,
        )
        .unwrap();
        let closed = rho_sphere(&y, &z).unwrap();
        let mut best = 0.0_f64;
        let steps = 400;
        for i in 0..steps {
            for j in 0..steps / 20 {
                let a = 2.0 * PI * (i as f64) / steps as f64;
                let b = PI * (j as f64) / (steps / 20) as f64;
                let c = CVec::from_vec(vec![
                    C64::new(a.cos() * b.sin(), 0.0),
                    C64::new(a.sin() * b.sin(), 0.0),
                ]);
                let coeff = CVec::from_vec(vec![c[0], c[1]]);
                let point = y.basis() * coeff;
                let nrm = point.norm();
                if nrm < 1e-12 {
                    continue;
                }
                let unit = point / C64::new(nrm, 0.0);
                let proj = z.basis() * (z.basis().adjoint() * &unit);
                let pn = proj.norm();
                let dist = if pn < 1e-14 {
                    2.0_f64.sqrt()
                } else {
                    (&unit - proj / C64::new(pn, 0.0)).norm()
                };
                best = best.max(dist);
            }
        }
        assert!(best <= closed + 1e-9, "sampled {best} exceeds closed form {closed}");
        assert!(closed - best < 0.05, "sampling should approach the closed form");
    }

    #[test]
    fn gap_conventions_and_angle() {
        let zero = Subspace::zero(2);
        let z = line(2, 0.7);
        assert_eq!(gap(&zero, &z).unwrap(), Gap::Value(1.0));

        let y = line(2, 0.0);
        let tilted = line(2, PI / 6.0);
        match gap(&y, &tilted).unwrap() {
            Gap::Value(v) => assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12),
            _ => panic!("expected a value"),
        }

        // Y = Z nonzero: empty infimum
        assert_eq!(gap(&y, &y).unwrap(), Gap::UndefinedEmptyInfimum);
        assert_eq!(gap_min(&y, &y).unwrap(), Gap::UndefinedEmptyInfimum);
    }

    #[test]
    fn projector_onto_along_examples() {
        let x = Subspace::coordinate(2, &[0]);
        let y = Subspace::coordinate(2, &[1]);
        let p = projector_onto_along(&x, &y).unwrap();
        let expected = cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((p.matrix() - expected).norm() < 1e-12);

        // kernel spanned by e1 + e2
        let diag = Subspace::from_columns(&cmat_from_rows(2, 1, &[1.0, 1.0]), 1e-10).unwrap();
        let p = projector_onto_along(&x, &diag).unwrap();
        let expected = cmat_from_rows(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        assert!((p.matrix() - expected).norm() < 1e-12);

        assert!(matches!(
            projector_onto_along(&x, &x),
            Err(Error::NotComplementary { .. })
        ));
    }

    #[test]
    fn pair_index_examples() {
        let zero = Subspace::zero(3);
        let full = Subspace::full(3);
        let r = pair_index(&zero, &full).unwrap();
        assert_eq!((r.dim_intersection, r.codim_sum, r.index), (0, 0, 0));

        let x = Subspace::coordinate(4, &[0, 1]);
        let y = Subspace::coordinate(4, &[1, 2]);
        let r = pair_index(&x, &y).unwrap();
        assert_eq!((r.dim_intersection, r.codim_sum, r.index), (1, 1, 0));

        let f2 = Subspace::full(2);
        let r = pair_index(&f2, &f2).unwrap();
        assert_eq!((r.dim_intersection, r.codim_sum, r.index), (2, 0, 2));
    }

    #[test]
    fn relative_dimension_and_transitivity() {
        let x = Subspace::coordinate(3, &[0, 1]);
        let y = Subspace::coordinate(3, &[2]);
        let z = Subspace::coordinate(3, &[1, 2]);
        assert_eq!(relative_dimension(&x, &x).unwrap(), 0);
        assert_eq!(relative_dimension(&x, &y).unwrap(), 1);
        assert!(transitivity_check(&x, &y, &z).unwrap());
    }

    #[test]
    fn conjugator_identity_case() {
        let p = Projector::new(cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let g = conjugator(&p, &p).unwrap();
        assert!((g - CMat::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn conjugator_intertwines_rotated_projector() {
        let theta: f64 = 0.3;
        let p = Projector::new(cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let rot = cmat_from_rows(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let rot_inv = rot.transpose();
        let q = Projector::new(&rot * p.matrix() * rot_inv).unwrap();
        let g = conjugator(&p, &q).unwrap();
        let defect = (&g * p.matrix() - q.matrix() * &g).norm();
        assert!(defect <= 1e-9, "conjugation defect {defect}");
    }

    #[test]
    fn conjugator_rejects_distant_projectors() {
        let p = Projector::new(cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let q = Projector::new(cmat_from_rows(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(conjugator(&p, &q), Err(Error::NotConjugable { .. })));
    }

    #[test]
    fn nested_unequal_subspaces_have_rho1_at_least_one() {
        // Z strictly inside Y forces rho_1(Y, Z) = 1 unless Y = Z
        let y = Subspace::coordinate(3, &[0, 1]);
        let z = Subspace::coordinate(3, &[0]);
        assert!(rho1(&y, &z).unwrap() >= 1.0 - 1e-12);
    }
}
