//! Contour spectral calculus: hyperbolicity, spectral projectors, the
//! holomorphic functional calculus, the hyperbolic retraction and the
//! Leray-Schauder degree.
//!
//! Projectors are produced by trapezoidal resolvent quadrature. Rectangle
//! boundaries are reparametrised so that the speed vanishes to all orders at
//! the corners; this keeps the periodic trapezoid rule superalgebraically
//! convergent, which a naively parametrised rectangle would not be.

use crate::error::{Error, Result};
use crate::grassmann::{Projector, Subspace};
use crate::linalg::{self, C64, CMat, EIGEN_CLUSTER_RADIUS};

/// Default tolerance deciding hyperbolicity of the spectral margin.
pub const DEFAULT_HYPERBOLICITY_TOL: f64 = 1e-7;

/// Contours must keep this relative distance from the spectrum.
pub const CONTOUR_MARGIN: f64 = 1e-6;

/// Node count cap for the doubling quadrature loops.
pub const NODE_CAP: usize = 4096;

const IDEMPOTENCY_TARGET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourShape {
    Rectangle { re_min: f64, re_max: f64, im_min: f64, im_max: f64 },
    Circle { center: C64, radius: f64 },
}

/// A closed quadrature contour in the complex plane.
#[derive(Debug, Clone)]
pub struct Contour {
    shape: ContourShape,
    nodes: usize,
}

impl Contour {
    pub fn rectangle(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_max > re_min && im_max > im_min) {
            return Err(Error::InvalidInput("rectangle must have positive measure".into()));
        }
        Ok(Contour {
            shape: ContourShape::Rectangle { re_min, re_max, im_min, im_max },
            nodes: 64,
        })
    }

    pub fn circle(center: C64, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidInput("circle must have positive radius".into()));
        }
        Ok(Contour { shape: ContourShape::Circle { center, radius }, nodes: 64 })
    }

    /// Set the quadrature node count (even, at least 16).
    pub fn with_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes < 16 || !nodes.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "node count must be even and at least 16, got {nodes}"
            )));
        }
        self.nodes = nodes;
        Ok(self)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn shape(&self) -> ContourShape {
        self.shape
    }

    /// Distance from a point to the contour trace.
    pub fn distance_to(&self, z: C64) -> f64 {
        match self.shape {
            ContourShape::Circle { center, radius } => ((z - center).norm() - radius).abs(),
            ContourShape::Rectangle { re_min, re_max, im_min, im_max } => {
                let corners = [
                    C64::new(re_min, im_min),
                    C64::new(re_max, im_min),
                    C64::new(re_max, im_max),
                    C64::new(re_min, im_max),
                ];
                (0..4)
                    .map(|i| segment_distance(z, corners[i], corners[(i + 1) % 4]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Positively oriented trapezoid nodes `(z_i, w_i)` with
    /// `oint g(z) dz ~ sum_i w_i g(z_i)`.
    fn sample(&self, n: usize) -> Vec<(C64, C64)> {
        match self.shape {
            ContourShape::Circle { center, radius } => (0..n)
                .map(|k| {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let e = C64::new(theta.cos(), theta.sin());
                    let z = center + e * radius;
                    let dz = C64::new(0.0, 1.0) * e * radius
                        * (2.0 * std::f64::consts::PI / n as f64);
                    (z, dz)
                })
                .collect(),
            ContourShape::Rectangle { re_min, re_max, im_min, im_max } => {
                let corners = [
                    C64::new(re_min, im_min),
                    C64::new(re_max, im_min),
                    C64::new(re_max, im_max),
                    C64::new(re_min, im_max),
                ];
                let ds = 1.0 / n as f64;
                (0..n)
                    .map(|k| {
                        let s = k as f64 * ds;
                        // four edges of parameter length 1/4 each, traversed
                        // counterclockwise with corner-flattened speed
                        let edge = ((s * 4.0).floor() as usize).min(3);
                        let u = s * 4.0 - edge as f64;
                        let (w, wp) = flat_blend(u);
                        let a = corners[edge];
                        let b = corners[(edge + 1) % 4];
                        let z = a + (b - a) * w;
                        let dz = (b - a) * wp * 4.0 * ds;
                        (z, dz)
                    })
                    .collect()
            }
        }
    }
}

/// C-infinity monotone blend on [0, 1] whose derivatives all vanish at the
/// endpoints; returns `(w(u), w'(u))`.
fn flat_blend(u: f64) -> (f64, f64) {
    fn f(u: f64) -> f64 {
        if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() }
    }
    fn fp(u: f64) -> f64 {
        if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() / (u * u) }
    }
    let denom = f(u) + f(1.0 - u);
    let w = f(u) / denom;
    let wp = (fp(u) * f(1.0 - u) + f(u) * fp(1.0 - u)) / (denom * denom);
    (w, wp)
}

fn segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

/// Spectral margin of a square matrix.
#[derive(Debug, Clone, Copy)]
pub struct Hyperbolicity {
    /// `min |Re lambda|` over the spectrum.
    pub margin: f64,
    pub hyperbolic: bool,
}

/// Distance of the spectrum from the imaginary axis; hyperbolic when the
/// margin exceeds `tol`. Rejection is a value, not an error.
pub fn is_hyperbolic_with_tol(a: &CMat, tol: f64) -> Result<Hyperbolicity> {
    let eigs = linalg::eigenvalues(a)?;
    let margin = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    Ok(Hyperbolicity { margin, hyperbolic: margin > tol })
}

pub fn is_hyperbolic(a: &CMat) -> Result<Hyperbolicity> {
    is_hyperbolic_with_tol(a, DEFAULT_HYPERBOLICITY_TOL)
}

/// The pair of spectral projectors of a hyperbolic matrix.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub p_plus: Projector,
    pub p_minus: Projector,
    /// `min |Re lambda|` over the spectrum.
    pub margin: f64,
}

impl Splitting {
    /// Range of `P^-`: the stable spectral subspace.
    pub fn stable_space(&self) -> Subspace {
        self.p_minus.range()
    }

    /// Range of `P^+`: the unstable spectral subspace.
    pub fn unstable_space(&self) -> Subspace {
        self.p_plus.range()
    }
}

/// Spectral projectors of a hyperbolic matrix by resolvent quadrature over a
/// rectangle enclosing the right half of the spectrum. Node count doubles
/// until the idempotency residual drops below 1e-9.
pub fn spectral_projectors(a: &CMat) -> Result<Splitting> {
    linalg::ensure_square(a)?;
    let n = a.nrows();
    let eigs = linalg::eigenvalues(a)?;
    let margin = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if margin <= DEFAULT_HYPERBOLICITY_TOL {
        return Err(Error::NotHyperbolic { margin });
    }
    let plus_count = eigs.iter().filter(|z| z.re > 0.0).count();
    let id = CMat::identity(n, n);

    let p_plus = if plus_count == 0 {
        CMat::zeros(n, n)
    } else {
        let norm = linalg::op_norm(a);
        let contour = Contour::rectangle(
            margin / 2.0,
            norm + 1.0,
            -(norm + 1.0),
            norm + 1.0,
        )?;
        // the contour must stay clear of the whole spectrum
        check_contour_clearance(&contour, &eigs, norm)?;
        let mut nodes = 64;
        let mut result = None;
        while nodes <= NODE_CAP {
            let p = resolvent_integral(a, &contour, nodes)?;
            let residual = (&p * &p - &p).norm();
            if residual < IDEMPOTENCY_TARGET {
                result = Some(p);
                break;
            }
            nodes *= 2;
        }
        let mut p = result.ok_or_else(|| {
            Error::QuadratureFailure(format!(
                "idempotency residual still above {IDEMPOTENCY_TARGET:.0e} at {NODE_CAP} nodes"
            ))
        })?;
        // orientation calibration: the trace must count the enclosed
        // eigenvalues positively
        let trace = p.trace();
        if (trace.re + plus_count as f64).abs() < 0.5 {
            p = -p;
        } else if (trace.re - plus_count as f64).abs() >= 0.5 {
            return Err(Error::QuadratureFailure(format!(
                "projector trace {:.4} does not match the {} enclosed eigenvalues",
                trace.re, plus_count
            )));
        }
        p
    };

    let p_minus = &id - &p_plus;
    let norm_a = linalg::op_norm(a);
    let commutator = (a * &p_plus - &p_plus * a).norm();
    if commutator > 1e-8 * (1.0 + norm_a) * (1.0 + linalg::op_norm(&p_plus)) {
        return Err(Error::QuadratureFailure(format!(
            "projector does not commute with the matrix (residual {commutator:.3e})"
        )));
    }
    Ok(Splitting {
        p_plus: Projector::new(p_plus)?,
        p_minus: Projector::new(p_minus)?,
        margin,
    })
}

fn check_contour_clearance(contour: &Contour, eigs: &[C64], norm: f64) -> Result<()> {
    let required = CONTOUR_MARGIN * (1.0 + norm);
    for &e in eigs {
        let d = contour.distance_to(e);
        if d < required {
            return Err(Error::ContourTooClose { dist: d, required });
        }
    }
    Ok(())
}

/// `1/(2 pi i) * oint (z - A)^{-1} dz` on `nodes` trapezoid points.
fn resolvent_integral(a: &CMat, contour: &Contour, nodes: usize) -> Result<CMat> {
    weighted_resolvent_integral(a, contour, nodes, |_| C64::new(1.0, 0.0))
}

fn weighted_resolvent_integral(
    a: &CMat,
    contour: &Contour,
    nodes: usize,
    f: impl Fn(C64) -> C64,
) -> Result<CMat> {
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let mut acc = CMat::zeros(n, n);
    for (z, dz) in contour.sample(nodes) {
        let shifted = &id * z - a;
        let resolvent = shifted
            .lu()
            .solve(&id)
            .ok_or_else(|| Error::QuadratureFailure(format!("resolvent singular at z = {z}")))?;
        acc += resolvent * (f(z) * dz);
    }
    Ok(acc / C64::new(0.0, 2.0 * std::f64::consts::PI))
}

/// Holomorphic functional calculus `f(A)` over a user-supplied contour that
/// surrounds the spectrum inside the domain of `f`.
///
/// The orientation is self-calibrated: the quadrature of the constant
/// function must return `+I`, and the sign is flipped when it returns `-I`.
pub fn functional_calculus(
    a: &CMat,
    f: impl Fn(C64) -> C64,
    contour: &Contour,
) -> Result<CMat> {
    linalg::ensure_square(a)?;
    let n = a.nrows();
    let eigs = linalg::eigenvalues(a)?;
    let norm = linalg::op_norm(a);
    check_contour_clearance(contour, &eigs, norm)?;
    let id = CMat::identity(n, n);

    let mut nodes = contour.nodes().max(16);
    let mut previous: Option<CMat> = None;
    while nodes <= NODE_CAP {
        let calibration = resolvent_integral(a, contour, nodes)?;
        let sign = if (&calibration - &id).norm() <= 0.2 * (n as f64).sqrt() {
            1.0
        } else if (&calibration + &id).norm() <= 0.2 * (n as f64).sqrt() {
            -1.0
        } else {
            // winding not yet resolved at this node count
            previous = None;
            nodes *= 2;
            continue;
        };
        let value = weighted_resolvent_integral(a, contour, nodes, &f)? * C64::new(sign, 0.0);
        if let Some(prev) = &previous {
            if (&value - prev).norm() <= 1e-11 * (1.0 + value.norm()) {
                return Ok(value);
            }
        }
        previous = Some(value);
        nodes *= 2;
    }
    Err(Error::QuadratureFailure(format!(
        "functional calculus did not converge within {NODE_CAP} nodes"
    )))
}

/// `r(A) = P^+ - P^-`; an involution that fixes square roots of the identity.
pub fn hyperbolic_retraction(a: &CMat) -> Result<CMat> {
    let split = spectral_projectors(a)?;
    let r = split.p_plus.matrix() - split.p_minus.matrix();
    let defect = (&r * &r - CMat::identity(r.nrows(), r.ncols())).norm();
    if defect > 1e-8 * (1.0 + linalg::op_norm(&r).powi(2)) {
        return Err(Error::QuadratureFailure(format!(
            "retraction is not an involution (residual {defect:.3e})"
        )));
    }
    Ok(r)
}

/// Classical Leray-Schauder degree of a real invertible matrix:
/// `(-1)^m` with `m` the total algebraic multiplicity of real eigenvalues in
/// `(-inf, 0)`.
pub fn leray_schauder_degree(t: &CMat) -> Result<i32> {
    linalg::ensure_square(t)?;
    let scale = t.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if t.iter().any(|z| z.im.abs() > 1e-10 * (1.0 + scale)) {
        return Err(Error::InvalidInput("degree is defined for real matrices only".into()));
    }
    let sv = linalg::singular_values(t);
    let (hi, lo) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    if lo <= 1e-12 * hi {
        return Err(Error::IllConditioned { cond: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
    }
    let eigs = linalg::eigenvalues(t)?;
    let mut m = 0usize;
    for (rep, mult) in linalg::cluster_eigenvalues(&eigs) {
        let real_at_tol = rep.im.abs() <= EIGEN_CLUSTER_RADIUS * (1.0 + rep.norm());
        if real_at_tol && rep.re < 0.0 {
            m += mult;
        }
    }
    Ok(if m.is_multiple_of(2) { 1 } else { -1 })
}

/// Inverse square root of a matrix whose spectrum lies in the open right
/// half-plane, through the functional calculus on a circle around the
/// spectrum. Used by the projector conjugation.
pub fn inverse_sqrt(s: &CMat) -> Result<CMat> {
    linalg::ensure_square(s)?;
    let eigs = linalg::eigenvalues(s)?;
    let re_min = eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if re_min <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse square root needs spectrum in the right half-plane (min Re = {re_min:.3e})"
        )));
    }
    let re_max = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let center = C64::new(0.5 * (re_min + re_max), 0.0);
    let spread = eigs.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
    // the circle must enclose the spectrum but avoid the branch cut on
    // (-inf, 0]
    let radius_cap = 0.98 * center.re;
    let radius = (spread + 0.1 * (spread + center.re)).min(radius_cap);
    if radius <= spread {
        return Err(Error::ContourTooClose { dist: radius_cap - spread, required: 0.0 });
    }
    let contour = Contour::circle(center, radius)?;
    let r = functional_calculus(s, |z| C64::new(1.0, 0.0) / z.sqrt(), &contour)?;
    let defect = (&r * &r * s - CMat::identity(s.nrows(), s.ncols())).norm();
    if defect > 1e-8 * (1.0 + linalg::op_norm(s) * linalg::op_norm(&r).powi(2)) {
        return Err(Error::QuadratureFailure(format!(
            "inverse square root residual {defect:.3e}"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cmat_from_rows, CVec};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diag(entries: &[f64]) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(
            entries.len(),
            entries.iter().map(|&x| c(x, 0.0)),
        ))
    }

    #[test]
    fn hyperbolicity_margins() {
        let h = is_hyperbolic(&diag(&[1.0, -1.0])).unwrap();
        assert!(h.hyperbolic);
        assert_abs_diff_eq!(h.margin, 1.0, epsilon = 1e-12);

        let rot = cmat_from_rows(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let h = is_hyperbolic(&rot).unwrap();
        assert!(!h.hyperbolic);
        assert!(h.margin < 1e-10);

        // margin below the default tolerance is rejected
        let h = is_hyperbolic(&diag(&[1e-9, 2.0])).unwrap();
        assert!(!h.hyperbolic);
    }

    #[test]
    fn projectors_of_diagonal_matrix() {
        let split = spectral_projectors(&diag(&[2.0, -5.0])).unwrap();
        let expected = diag(&[1.0, 0.0]);
        assert!((split.p_plus.matrix() - expected).norm() < 1e-9);
        assert!(
            (split.p_plus.matrix() + split.p_minus.matrix() - CMat::identity(2, 2)).norm() < 1e-12
        );
    }

    #[test]
    fn projector_of_anti_triangular_matrix() {
        // [[0,3],[1,0]]: P+ = (A + sqrt(3) I) / (2 sqrt(3))
        let a = cmat_from_rows(2, 2, &[0.0, 3.0, 1.0, 0.0]);
        let split = spectral_projectors(&a).unwrap();
        let r = 3.0_f64.sqrt();
        let expected = cmat_from_rows(2, 2, &[0.5, r / 2.0, 1.0 / (2.0 * r), 0.5]);
        assert!((split.p_plus.matrix() - &expected).norm() < 1e-8);
    }

    #[test]
    fn projectors_reject_rotation() {
        let rot = cmat_from_rows(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(spectral_projectors(&rot), Err(Error::NotHyperbolic { .. })));
    }

    #[test]
    fn stable_only_spectrum_gives_zero_plus_projector() {
        let split = spectral_projectors(&diag(&[-1.0, -3.0])).unwrap();
        assert!(split.p_plus.matrix().norm() < 1e-12);
        assert_eq!(split.p_minus.rank(), 2);
    }

    #[test]
    fn functional_calculus_constant_is_identity() {
        let a = diag(&[1.0, 2.0]);
        let contour = Contour::circle(c(1.5, 0.0), 2.0).unwrap();
        let one = functional_calculus(&a, |_| c(1.0, 0.0), &contour).unwrap();
        assert!((one - CMat::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn functional_calculus_exponential_diagonal() {
        let a = diag(&[1.0, 2.0]);
        let contour = Contour::circle(c(1.5, 0.0), 1.2).unwrap();
        let e = functional_calculus(&a, |z| z.exp(), &contour).unwrap();
        let expected = diag(&[1.0_f64.exp(), 2.0_f64.exp()]);
        assert!((e - expected).norm() < 1e-9);
    }

    #[test]
    fn functional_calculus_square_root_example() {
        // f(z) = sqrt(1 + z) at A = 0.21 I gives 1.1 I
        let a = diag(&[0.21, 0.21]);
        let contour = Contour::circle(c(0.0, 0.0), 0.6).unwrap();
        let r = functional_calculus(&a, |z| (c(1.0, 0.0) + z).sqrt(), &contour).unwrap();
        assert!((r - diag(&[1.1, 1.1])).norm() < 1e-9);
    }

    #[test]
    fn functional_calculus_rejects_contour_through_spectrum() {
        let a = diag(&[1.0, 2.0]);
        let contour = Contour::circle(c(0.0, 0.0), 1.0).unwrap();
        assert!(matches!(
            functional_calculus(&a, |z| z, &contour),
            Err(Error::ContourTooClose { .. })
        ));
    }

    #[test]
    fn retraction_examples() {
        let r = hyperbolic_retraction(&diag(&[3.0, -7.0])).unwrap();
        assert!((&r - diag(&[1.0, -1.0])).norm() < 1e-9);

        // a square root of the identity is fixed: A = 2P - I
        let p = cmat_from_rows(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        let a = &p * c(2.0, 0.0) - CMat::identity(2, 2);
        let r = hyperbolic_retraction(&a).unwrap();
        assert!((&r - &a).norm() < 1e-8);

        let a = cmat_from_rows(2, 2, &[0.0, 3.0, 1.0, 0.0]);
        let r = hyperbolic_retraction(&a).unwrap();
        let s = 3.0_f64.sqrt();
        let expected = cmat_from_rows(2, 2, &[0.0, s, 1.0 / s, 0.0]);
        assert!((&r - &expected).norm() < 1e-8);
    }

    #[test]
    fn degree_examples() {
        assert_eq!(leray_schauder_degree(&CMat::identity(3, 3)).unwrap(), 1);
        assert_eq!(leray_schauder_degree(&diag(&[-1.0, 1.0, 1.0])).unwrap(), -1);
        assert_eq!(leray_schauder_degree(&diag(&[-2.0, -3.0])).unwrap(), 1);
        // rotation has no real eigenvalues
        let rot = cmat_from_rows(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(leray_schauder_degree(&rot).unwrap(), 1);
        // complex and singular inputs are rejected
        let mut complex = CMat::identity(2, 2);
        complex[(0, 1)] = c(0.0, 0.3);
        assert!(leray_schauder_degree(&complex).is_err());
        assert!(leray_schauder_degree(&diag(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn degree_matches_determinant_sign() {
        // deg(T) = sign(det T) for real invertible T
        let t = cmat_from_rows(3, 3, &[0.5, 1.0, 0.0, -2.0, 0.3, 1.0, 0.7, 0.0, -1.2]);
        let det = t.determinant();
        let expected = if det.re > 0.0 { 1 } else { -1 };
        assert_eq!(leray_schauder_degree(&t).unwrap(), expected);
    }

    #[test]
    fn inverse_sqrt_of_scaled_identity() {
        let s = diag(&[4.0, 4.0]);
        let r = inverse_sqrt(&s).unwrap();
        assert!((r - diag(&[0.5, 0.5])).norm() < 1e-9);
    }
}
