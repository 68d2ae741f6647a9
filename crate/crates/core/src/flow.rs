//! Spectral flow of paths of matrices with hyperbolic endpoints, the
//! patching constructor, and the end-to-end identity checks tying the flow
//! to the Fredholm index of `F_A`.
//!
//! At finite dimension every projector difference has finite rank, so the
//! lift in the definition of the flow has constant rank and the flow
//! collapses to the endpoint rank difference
//! `sf = rank P^+(A(1)) - rank P^+(A(0))`. That is the authoritative method;
//! the crossing ledger built from eigenvalue tracking is diagnostic and must
//! agree on every accepted path.

use crate::diffop::{self, IndexReport};
use crate::error::{Error, Result};
use crate::grassmann::{self, PairIndexReport, Subspace};
use crate::invariant;
use crate::linalg::{self, C64, CMat};
use crate::path::OperatorPath;
use crate::spectral;

/// Endpoint margins below this reject the path.
pub const ENDPOINT_MARGIN_TOL: f64 = 1e-7;

/// Crossing times are bisected to this width.
const CROSSING_TIME_TOL: f64 = 1e-9;

/// A detected imaginary-axis crossing.
#[derive(Debug, Clone)]
pub struct CrossingEvent {
    pub time: f64,
    pub eigenvalue: C64,
    /// `+1` when the real part increases through zero.
    pub direction: i32,
    pub multiplicity: usize,
}

/// Spectral flow computed by both methods.
#[derive(Debug, Clone)]
pub struct FlowReport {
    /// The authoritative value (projector-lift method).
    pub sf: i64,
    pub lift_value: i64,
    pub crossing_value: i64,
    pub crossings: Vec<CrossingEvent>,
    pub methods_agree: bool,
    /// Restriction half-width used for asymptotic paths.
    pub delta: Option<f64>,
}

fn plus_rank(a: &CMat) -> Result<(usize, f64)> {
    let eigs = linalg::eigenvalues(a)?;
    let margin = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let rank = eigs.iter().filter(|z| z.re > 0.0).count();
    Ok((rank, margin))
}

/// Spectral flow of a path on `[0, 1]` with hyperbolic endpoints.
pub fn spectral_flow(path: &OperatorPath) -> Result<FlowReport> {
    let (t0, t1) = path.domain();
    if (t0 - 0.0).abs() > 1e-9 || (t1 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "spectral flow expects a path on [0, 1], got [{t0}, {t1}]"
        )));
    }
    let (rank_start, margin_start) = plus_rank(&path.eval(0.0))?;
    let (rank_end, margin_end) = plus_rank(&path.eval(1.0))?;
    for margin in [margin_start, margin_end] {
        if margin <= ENDPOINT_MARGIN_TOL {
            return Err(Error::NotHyperbolic { margin });
        }
    }
    let lift_value = rank_end as i64 - rank_start as i64;
    let crossings = detect_crossings(path)?;
    let crossing_value: i64 = crossings
        .iter()
        .map(|c| c.direction as i64 * c.multiplicity as i64)
        .sum();
    Ok(FlowReport {
        sf: lift_value,
        lift_value,
        crossing_value,
        methods_agree: lift_value == crossing_value,
        crossings,
        delta: None,
    })
}

/// Track eigenvalues over a refining grid and bisect the sign changes of
/// their real parts.
fn detect_crossings(path: &OperatorPath) -> Result<Vec<CrossingEvent>> {
    let samples = 512usize;
    let eig_at = |t: f64| -> Result<Vec<C64>> { linalg::eigenvalues(&path.eval(t)) };
    // when a sample lands exactly on a crossing, nudge it so every node has
    // eigenvalues strictly off the axis
    let sample_at = |mut t: f64| -> Result<(f64, Vec<C64>)> {
        for _ in 0..8 {
            let eigs = eig_at(t)?;
            if eigs.iter().all(|z| z.re != 0.0) {
                return Ok((t, eigs));
            }
            t = (t + 2e-7).min(1.0 - 1e-9);
        }
        Ok((t, eig_at(t)?))
    };
    let mut events: Vec<CrossingEvent> = Vec::new();
    let (mut prev_t, mut prev) = sample_at(0.0)?;
    for k in 1..=samples {
        let (t, current) = sample_at(k as f64 / samples as f64)?;
        // two-stage matching through the midpoint reduces branch mix-ups
        let mid = eig_at(0.5 * (prev_t + t))?;
        let first = match_eigs(&prev, &mid);
        let second = match_eigs(&mid, &current);
        for (i, &j) in first.iter().enumerate() {
            let a = prev[i];
            let b = current[second[j]];
            if a.re * b.re < 0.0 {
                let event = bisect_crossing(path, prev_t, a, t, b)?;
                events.push(event);
            }
        }
        prev_t = t;
        prev = current;
    }
    // merge simultaneous same-direction crossings into multiplicities
    events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    let mut merged: Vec<CrossingEvent> = Vec::new();
    for e in events {
        match merged.last_mut() {
            Some(last)
                if (e.time - last.time).abs() <= 1e-6 && e.direction == last.direction =>
            {
                last.multiplicity += 1;
            }
            _ => merged.push(e),
        }
    }
    Ok(merged)
}

/// Greedy nearest-neighbour matching of two eigenvalue lists of equal
/// length; returns the permutation image of each left index.
fn match_eigs(from: &[C64], to: &[C64]) -> Vec<usize> {
    let n = from.len();
    let mut taken = vec![false; n];
    let mut image = vec![0usize; n];
    // pair greedily by increasing distance
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, &a) in from.iter().enumerate() {
        for (j, &b) in to.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut assigned = vec![false; n];
    for (_, i, j) in pairs {
        if !assigned[i] && !taken[j] {
            assigned[i] = true;
            taken[j] = true;
            image[i] = j;
        }
    }
    image
}

fn bisect_crossing(
    path: &OperatorPath,
    mut t_lo: f64,
    mut lam_lo: C64,
    mut t_hi: f64,
    mut lam_hi: C64,
) -> Result<CrossingEvent> {
    let direction = if lam_hi.re > lam_lo.re { 1 } else { -1 };
    while t_hi - t_lo > CROSSING_TIME_TOL {
        let t_mid = 0.5 * (t_lo + t_hi);
        let eigs = linalg::eigenvalues(&path.eval(t_mid))?;
        // follow the branch: nearest to the secant prediction
        let predict = (lam_lo + lam_hi) * C64::new(0.5, 0.0);
        let lam_mid = eigs
            .iter()
            .copied()
            .min_by(|a, b| {
                (a - predict).norm().partial_cmp(&(b - predict).norm()).unwrap()
            })
            .expect("nonempty spectrum");
        if lam_mid.re.signum() == lam_lo.re.signum() && lam_mid.re != 0.0 {
            t_lo = t_mid;
            lam_lo = lam_mid;
        } else {
            t_hi = t_mid;
            lam_hi = lam_mid;
        }
    }
    // transversality: the real part must actually move through the axis
    let slope = (lam_hi.re - lam_lo.re) / (t_hi - t_lo).max(CROSSING_TIME_TOL);
    if slope.abs() < 1e-4 {
        return Err(Error::UnresolvableCrossing { t: 0.5 * (t_lo + t_hi), tol: 1e-4 });
    }
    let time = 0.5 * (t_lo + t_hi);
    let eigenvalue = C64::new(0.0, 0.5 * (lam_lo.im + lam_hi.im));
    Ok(CrossingEvent { time, eigenvalue, direction, multiplicity: 1 })
}

/// Spectral flow of an asymptotically hyperbolic path on the line:
/// restrict to `[-delta, delta]` where the path is hyperbolic outside, then
/// compute the flow there. The result is checked to be independent of
/// enlarging `delta`.
pub fn spectral_flow_asymptotic(path: &OperatorPath) -> Result<FlowReport> {
    for limit in [path.limit_minus(), path.limit_plus()] {
        let limit =
            limit.ok_or_else(|| Error::InvalidInput("path needs asymptotic limits".into()))?;
        let hyp = spectral::is_hyperbolic(limit)?;
        if !hyp.hyperbolic {
            return Err(Error::NotHyperbolic { margin: hyp.margin });
        }
    }
    let (t0, t1) = path.domain();
    let extent = t0.abs().max(t1.abs()) + 1.0;
    let hyperbolic_outside = |delta: f64| -> Result<bool> {
        let mut ok = true;
        for &t in path.times().iter().filter(|&&t| t.abs() >= delta) {
            let h = spectral::is_hyperbolic(&path.eval(t))?;
            if !h.hyperbolic {
                ok = false;
                break;
            }
        }
        Ok(ok)
    };
    let mut delta = 1.0;
    let mut chosen = None;
    while delta <= extent {
        if hyperbolic_outside(delta)? {
            chosen = Some(delta);
            break;
        }
        delta *= 2.0;
    }
    let delta = chosen.ok_or(Error::NoAdmissibleDelta { delta: extent })?;

    let flow_at = |d: f64| -> Result<FlowReport> {
        let restricted = path.restrict(-d, d)?.rescaled_to_unit();
        spectral_flow(&restricted)
    };
    let mut report = flow_at(delta)?;
    // invariance under enlarging the restriction interval
    let delta2 = (2.0 * delta).min(extent);
    if delta2 > delta {
        let wider = flow_at(delta2)?;
        if wider.sf != report.sf {
            return Err(Error::IdentityViolation(format!(
                "sf changed from {} to {} when delta grew from {delta} to {delta2}",
                report.sf, wider.sf
            )));
        }
    }
    report.delta = Some(delta);
    Ok(report)
}

/// Catenation of two unit-interval paths with matching endpoints; the flow
/// additivity `sf(a * b) = sf(a) + sf(b)` is verified before returning.
pub fn catenate(a: &OperatorPath, b: &OperatorPath) -> Result<OperatorPath> {
    let joined = a.catenate(b)?;
    let sf_a = spectral_flow(&a.rescaled_to_unit())?.sf;
    let sf_b = spectral_flow(&b.rescaled_to_unit())?.sf;
    let sf_joined = spectral_flow(&joined)?.sf;
    if sf_joined != sf_a + sf_b {
        return Err(Error::IdentityViolation(format!(
            "catenation breaks additivity: {sf_joined} != {sf_a} + {sf_b}"
        )));
    }
    Ok(joined)
}

/// Smooth profile equal to 1 on `[-1/2, 1/2]` and -1 outside `(-1, 1)`.
fn patch_profile(t: f64) -> f64 {
    fn f(u: f64) -> f64 {
        if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() }
    }
    let u = 2.0 * (1.0 - t.abs());
    let step = f(u) / (f(u) + f(1.0 - u));
    2.0 * step - 1.0
}

/// Path whose stable space is `X` and unstable space is `Y`:
/// `A(t) = phi(t) P + (I - P)` for `t >= 0` and
/// `A(t) = phi(t)(I - Q) + Q` for `t < 0`, with orthogonal projectors `P`,
/// `Q` onto `X`, `Y` and the profile above. The limits are the involutions
/// `I - 2P` and `2Q - I`.
pub fn patch_path(x: &Subspace, y: &Subspace) -> Result<OperatorPath> {
    if x.ambient_dim() != y.ambient_dim() {
        return Err(Error::DimensionMismatch("subspaces live in different spaces".into()));
    }
    let n = x.ambient_dim();
    let id = CMat::identity(n, n);
    let p = x.orthogonal_projector();
    let q = y.orthogonal_projector();
    let p_c = &id - &p;
    let q_c = &id - &q;
    let sample = {
        let p = p.clone();
        let q = q.clone();
        let p_c = p_c.clone();
        let q_c = q_c.clone();
        move |t: f64| -> CMat {
            let phi = C64::new(patch_profile(t), 0.0);
            if t >= 0.0 {
                &p * phi + &p_c
            } else {
                &q_c * phi + &q
            }
        }
    };
    let limit_plus = &id - &p * C64::new(2.0, 0.0);
    let limit_minus = &q * C64::new(2.0, 0.0) - &id;
    OperatorPath::from_fn(sample, -2.0, 2.0, 0.01)?.with_limits(limit_minus, limit_plus)
}

/// Tunable knobs of the identity verification.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub ode_tol: f64,
    pub rank_tol: f64,
    pub tail_tol: f64,
    pub horizon: f64,
    /// Window half-width; chosen from the tails when absent.
    pub window: Option<f64>,
    /// Grid step; capped by `min(0.1, 1/(4 sup|A|))` when absent.
    pub grid_step: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            ode_tol: 1e-9,
            rank_tol: diffop::GRID_RANK_TOL,
            tail_tol: diffop::DEFAULT_TAIL_TOL,
            horizon: 30.0,
            window: None,
            grid_step: None,
        }
    }
}

/// The full identity suite for one asymptotically hyperbolic path:
/// `sf(A) = -ind F_A = -dim(E^-(+inf), E^-(-inf))` and
/// `ind F_A = ind(W^s, W^u)`.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub sf: FlowReport,
    pub index: IndexReport,
    pub relative_dimension: i64,
    pub pair: PairIndexReport,
    pub kernel_matches_intersection: bool,
    pub identities_hold: bool,
}

pub fn verify_identity(path: &OperatorPath, opts: &VerifyOptions) -> Result<IdentityReport> {
    let sf = spectral_flow_asymptotic(path)?;

    let split_plus = spectral::spectral_projectors(
        path.limit_plus().ok_or_else(|| Error::InvalidInput("missing +inf limit".into()))?,
    )?;
    let split_minus = spectral::spectral_projectors(
        path.limit_minus().ok_or_else(|| Error::InvalidInput("missing -inf limit".into()))?,
    )?;
    let relative_dimension = split_plus.p_minus.rank() as i64 - split_minus.p_minus.rank() as i64;

    let window = match opts.window {
        Some(w) => w,
        None => diffop::choose_window(path, opts.tail_tol)?,
    };
    let sup = path.sup_norm();
    let step_cap = (0.1_f64).min(1.0 / (4.0 * sup));
    let grid_step = opts.grid_step.unwrap_or(step_cap).min(step_cap);
    let op = diffop::assemble_with_tail_tol(path, window, grid_step, opts.tail_tol)?;
    let index = diffop::numeric_index_raw(&op, opts.rank_tol)?;

    let horizon = opts.horizon.max(window);
    let stable = invariant::stable_space_limit(path, horizon, 1e-7)?;
    let unstable = invariant::unstable_space(path, horizon, 1e-7)?;
    let pair = grassmann::pair_index(&stable, &unstable)?;
    let mut index = index;
    index.pair_prediction = Some(pair.index);
    index.pair_match = Some(pair.index == index.index);

    let intersection = stable.intersection(&unstable)?;
    let kernel_matches_intersection = intersection.dim() == index.ker_dim;

    let identities_hold = index.index == pair.index
        && sf.sf == -index.index
        && relative_dimension == index.index
        && kernel_matches_intersection;
    Ok(IdentityReport {
        sf,
        index,
        relative_dimension,
        pair,
        kernel_matches_intersection,
        identities_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cmat_from_rows;

    fn scalar_unit_path(f: impl Fn(f64) -> f64, samples: usize) -> OperatorPath {
        let times: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
        let mats = times
            .iter()
            .map(|&t| CMat::from_element(1, 1, C64::new(f(t), 0.0)))
            .collect();
        OperatorPath::from_samples(times, mats).unwrap()
    }

    fn tanh_line_path(n_signs: &[f64], extent: f64) -> OperatorPath {
        let signs = n_signs.to_vec();
        let n = signs.len();
        let make = move |t: f64| {
            CMat::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(signs[i] * t.tanh(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        let lm = make(-1e9);
        let lp = make(1e9);
        OperatorPath::from_fn(make, -extent, extent, 0.02)
            .unwrap()
            .with_limits(lm, lp)
            .unwrap()
    }

    #[test]
    fn constant_hyperbolic_path_has_zero_flow() {
        let p = scalar_unit_path(|_| 1.0, 8);
        let r = spectral_flow(&p).unwrap();
        assert_eq!(r.sf, 0);
        assert!(r.methods_agree);
        assert!(r.crossings.is_empty());
    }

    #[test]
    fn scalar_up_crossing_has_flow_one() {
        let p = scalar_unit_path(|t| (std::f64::consts::PI * (t - 0.5)).tanh(), 512);
        let r = spectral_flow(&p).unwrap();
        assert_eq!(r.sf, 1);
        assert!(r.methods_agree);
        assert_eq!(r.crossings.len(), 1);
        assert!((r.crossings[0].time - 0.5).abs() < 1e-6);
        assert_eq!(r.crossings[0].direction, 1);
    }

    #[test]
    fn opposite_crossings_cancel() {
        let p = OperatorPath::from_fn(
            |t| {
                let s = 6.0 * (t - 0.5);
                cmat_from_rows(2, 2, &[s.tanh(), 0.0, 0.0, -s.tanh()])
            },
            0.0,
            1.0,
            1.0 / 512.0,
        )
        .unwrap();
        let r = spectral_flow(&p).unwrap();
        assert_eq!(r.sf, 0);
        assert!(r.methods_agree, "crossing ledger sums to {}", r.crossing_value);
    }

    #[test]
    fn rejects_non_hyperbolic_endpoint() {
        let p = scalar_unit_path(|t| t - 1.0, 16);
        assert!(matches!(spectral_flow(&p), Err(Error::NotHyperbolic { .. })));
    }

    #[test]
    fn asymptotic_scalar_tanh() {
        let p = tanh_line_path(&[1.0], 18.0);
        let r = spectral_flow_asymptotic(&p).unwrap();
        assert_eq!(r.sf, 1);
        assert!(r.methods_agree);
        assert!(r.delta.is_some());
    }

    #[test]
    fn asymptotic_flow_independent_of_delta() {
        let p = tanh_line_path(&[1.0], 18.0);
        // manual check at three restriction widths
        for delta in [2.0, 4.0, 8.0] {
            let restricted = p.restrict(-delta, delta).unwrap().rescaled_to_unit();
            assert_eq!(spectral_flow(&restricted).unwrap().sf, 1);
        }
        let constant = OperatorPath::constant(
            CMat::from_element(1, 1, C64::new(2.0, 0.0)),
            -5.0,
            5.0,
        )
        .unwrap()
        .with_limits(
            CMat::from_element(1, 1, C64::new(2.0, 0.0)),
            CMat::from_element(1, 1, C64::new(2.0, 0.0)),
        )
        .unwrap();
        assert_eq!(spectral_flow_asymptotic(&constant).unwrap().sf, 0);
    }

    #[test]
    fn catenation_additivity() {
        let up = scalar_unit_path(|t| (8.0 * (t - 0.5)).tanh(), 256);
        let down = scalar_unit_path(|t| -(8.0 * (t - 0.5)).tanh(), 256);
        // up then its reversal: 0 = 1 + (-1)
        let joined = catenate(&up, &down).unwrap();
        assert_eq!(spectral_flow(&joined).unwrap().sf, 0);

        // mismatched endpoints must be rejected
        let a = scalar_unit_path(|t| (8.0 * (t - 0.5)).tanh() - 2.0, 256);
        let b = scalar_unit_path(|t| (8.0 * (t - 0.5)).tanh() + 2.0, 256);
        assert!(catenate(&a, &b).is_err());

        // a chainable pair: -1 -> 1 followed by 1 -> 3 carries one crossing
        let e = scalar_unit_path(|t| 2.0 * t - 1.0, 64);
        let f = scalar_unit_path(|t| 2.0 * t + 1.0, 64);
        let joined = catenate(&e, &f).unwrap();
        assert_eq!(spectral_flow(&joined).unwrap().sf, 1);
    }

    #[test]
    fn patch_path_recovers_subspaces() {
        let x = Subspace::coordinate(2, &[0]);
        let y = Subspace::coordinate(2, &[1]);
        let p = patch_path(&x, &y).unwrap();
        let w_s = invariant::stable_space_limit(&p, 16.0, 1e-8).unwrap();
        let w_u = invariant::unstable_space(&p, 16.0, 1e-8).unwrap();
        assert!(grassmann::delta1(&w_s, &x).unwrap() <= 1e-6);
        assert!(grassmann::delta1(&w_u, &y).unwrap() <= 1e-6);
    }

    #[test]
    fn patch_path_degenerate_pairs() {
        // X = Y = span{e1}: both spaces recovered, pair index 0
        let x = Subspace::coordinate(2, &[0]);
        let p = patch_path(&x, &x).unwrap();
        let w_s = invariant::stable_space_limit(&p, 16.0, 1e-8).unwrap();
        let w_u = invariant::unstable_space(&p, 16.0, 1e-8).unwrap();
        assert!(grassmann::delta1(&w_s, &x).unwrap() <= 1e-6);
        assert!(grassmann::delta1(&w_u, &x).unwrap() <= 1e-6);
        let pair = grassmann::pair_index(&w_s, &w_u).unwrap();
        assert_eq!(pair.index, 0);

        // X = R^2, Y = {0}
        let full = Subspace::full(2);
        let zero = Subspace::zero(2);
        let p = patch_path(&full, &zero).unwrap();
        let w_s = invariant::stable_space_limit(&p, 16.0, 1e-8).unwrap();
        let w_u = invariant::unstable_space(&p, 16.0, 1e-8).unwrap();
        assert_eq!(w_s.dim(), 2);
        assert_eq!(w_u.dim(), 0);
    }

    #[test]
    fn verify_identity_scalar_tanh() {
        let p = tanh_line_path(&[1.0], 18.0);
        let r = verify_identity(&p, &VerifyOptions::default()).unwrap();
        assert_eq!(r.sf.sf, 1);
        assert_eq!(r.index.index, -1);
        assert_eq!(r.relative_dimension, -1);
        assert_eq!(r.pair.index, -1);
        assert!(r.identities_hold);
    }

    #[test]
    fn verify_identity_tanh_diagonal() {
        let p = tanh_line_path(&[1.0, -1.0], 18.0);
        let r = verify_identity(&p, &VerifyOptions::default()).unwrap();
        assert_eq!(r.sf.sf, 0);
        assert_eq!(r.index.index, 0);
        assert_eq!((r.index.ker_dim, r.index.coker_dim), (1, 1));
        assert!(r.identities_hold);
    }

    #[test]
    fn homotopy_invariance_fixed_endpoints() {
        // interpolate two paths sharing endpoints; sf constant along s
        let base = |t: f64| (6.0 * (t - 0.5)).tanh();
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = scalar_unit_path(
                |t| base(t) + s * 0.4 * (std::f64::consts::PI * t).sin(),
                512,
            );
            assert_eq!(spectral_flow(&p).unwrap().sf, 1, "homotopy parameter {s}");
        }
    }
}
