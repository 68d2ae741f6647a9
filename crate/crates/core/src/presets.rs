//! Named example paths and the seeded random battery used by the CLI and
//! the verification suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow;
use crate::grassmann::Subspace;
use crate::invariant;
use crate::linalg::{self, C64, CMat};
use crate::path::OperatorPath;

/// Sampling step used by the generated paths.
const SAMPLE_STEP: f64 = 0.02;

/// `A(t) = diag(tanh t, -tanh t)`: one decaying and one growing direction.
pub fn tanh_diag() -> OperatorPath {
    let make = |t: f64| {
        CMat::from_fn(2, 2, |i, j| {
            if i != j {
                C64::new(0.0, 0.0)
            } else if i == 0 {
                C64::new(t.tanh(), 0.0)
            } else {
                C64::new(-t.tanh(), 0.0)
            }
        })
    };
    OperatorPath::from_fn(make, -18.0, 18.0, SAMPLE_STEP)
        .expect("static preset")
        .with_limits(make(-1e9), make(1e9))
        .expect("static preset limits")
}

/// Scalar `A(t) = tanh t`: the canonical index -1 example.
pub fn scalar_tanh() -> OperatorPath {
    let make = |t: f64| CMat::from_element(1, 1, C64::new(t.tanh(), 0.0));
    OperatorPath::from_fn(make, -18.0, 18.0, SAMPLE_STEP)
        .expect("static preset")
        .with_limits(make(-1e9), make(1e9))
        .expect("static preset limits")
}

/// Time reversal of [`scalar_tanh`]: index +1.
pub fn scalar_tanh_reversed() -> OperatorPath {
    let make = |t: f64| CMat::from_element(1, 1, C64::new(-t.tanh(), 0.0));
    OperatorPath::from_fn(make, -18.0, 18.0, SAMPLE_STEP)
        .expect("static preset")
        .with_limits(make(-1e9), make(1e9))
        .expect("static preset limits")
}

/// Constant planar rotation with the given angular speed; the limits are
/// not hyperbolic, so this path exercises the rejection branches.
pub fn rotation(angle: f64) -> OperatorPath {
    let a = linalg::cmat_from_rows(2, 2, &[0.0, angle, -angle, 0.0]);
    OperatorPath::constant(a.clone(), -10.0, 10.0)
        .expect("static preset")
        .with_limits(a.clone(), a)
        .expect("static preset limits")
}

/// One battery member.
pub struct BatteryPath {
    pub id: String,
    pub kind: &'static str,
    pub path: OperatorPath,
}

/// Random orthonormal basis of a `k`-dimensional subspace of `R^n`.
pub fn random_subspace(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Subspace {
    if k == 0 {
        return Subspace::zero(n);
    }
    loop {
        let cols = CMat::from_fn(n, k, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        if let Ok(s) = Subspace::from_columns(&cols, 1e-8) {
            if s.dim() == k {
                return s;
            }
        }
    }
}

/// Random real orthogonal matrix through the QR factorisation.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    loop {
        let m = CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        let qr = m.qr();
        let q = qr.q();
        if linalg::condition_estimate(&q) < 10.0 {
            return q;
        }
    }
}

/// Diagonal tanh data: rates, amplitudes and offsets with hyperbolic limits
/// of margin at least 0.35.
struct DiagonalData {
    rates: Vec<f64>,
    amps: Vec<f64>,
    offsets: Vec<f64>,
}

fn random_diagonal_data(rng: &mut ChaCha8Rng, n: usize) -> DiagonalData {
    let mut rates = Vec::with_capacity(n);
    let mut amps = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            let rate = rng.random_range(0.6..2.0);
            let amp = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = rng.random_range(-0.4..0.4);
            let plus: f64 = amp + offset;
            let minus: f64 = -amp + offset;
            if plus.abs() >= 0.35 && minus.abs() >= 0.35 {
                rates.push(rate);
                amps.push(amp);
                offsets.push(offset);
                break;
            }
        }
    }
    DiagonalData { rates, amps, offsets }
}

fn diagonal_path(data: &DiagonalData, extent: f64) -> OperatorPath {
    let n = data.rates.len();
    let rates = data.rates.clone();
    let amps = data.amps.clone();
    let offsets = data.offsets.clone();
    let make = move |t: f64| {
        CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(amps[i] * (rates[i] * t).tanh() + offsets[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    let lm = make(-1e9);
    let lp = make(1e9);
    OperatorPath::from_fn(make, -extent, extent, SAMPLE_STEP)
        .expect("diagonal battery path")
        .with_limits(lm, lp)
        .expect("diagonal battery limits")
}

/// Smooth compactly supported scalar profile on `(-2, 2)`.
fn bump(t: f64) -> f64 {
    let s = t / 2.0;
    if s.abs() >= 1.0 {
        0.0
    } else {
        ((-1.0 / (1.0 - s * s)).exp()) * std::f64::consts::E
    }
}

/// A stable/unstable pair whose smallest nonzero principal angle falls in
/// this window is numerically tangent: not an intersection, but too close to
/// one for rank decisions at fixed tolerances. Such members are redrawn.
fn numerically_tangent(path: &OperatorPath) -> bool {
    let check = || -> Result<bool> {
        let ws = invariant::stable_space_limit(path, 40.0, 1e-7)?;
        let wu = invariant::unstable_space(path, 40.0, 1e-7)?;
        if ws.dim() == 0 || wu.dim() == 0 {
            return Ok(false);
        }
        let overlaps = linalg::singular_values(&(ws.basis().adjoint() * wu.basis()));
        Ok(overlaps
            .iter()
            .any(|&c| c < 1.0 - 1e-10 && c > 1.0 - 2e-3))
    };
    check().unwrap_or(true)
}

/// Deterministic battery of asymptotically hyperbolic paths mixing
/// diagonal, rotated-frame, patched and randomly perturbed members.
/// Members whose stable/unstable pair is numerically tangent are redrawn;
/// the identities they satisfy are not resolvable at desk tolerances.
pub fn random_battery(seed: u64, count: usize, max_dim: usize) -> Result<Vec<BatteryPath>> {
    if max_dim == 0 {
        return Err(Error::InvalidInput("battery needs max_dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let member = draw_member(&mut rng, idx, max_dim)?;
        out.push(member);
    }
    Ok(out)
}

fn draw_member(rng: &mut ChaCha8Rng, idx: usize, max_dim: usize) -> Result<BatteryPath> {
    for _attempt in 0..12 {
        let candidate = draw_candidate(rng, idx, max_dim)?;
        if !numerically_tangent(&candidate.path) {
            return Ok(candidate);
        }
    }
    Err(Error::InvalidInput(format!(
        "battery member {idx} kept drawing numerically tangent pairs"
    )))
}

fn draw_candidate(rng: &mut ChaCha8Rng, idx: usize, max_dim: usize) -> Result<BatteryPath> {
    {
        let n = rng.random_range(1..=max_dim.min(6));
        let kind_pick = idx % 4;
        let member = match kind_pick {
            0 => {
                let data = random_diagonal_data(rng, n);
                let extent = 16.0 / data.rates.iter().cloned().fold(f64::INFINITY, f64::min);
                BatteryPath {
                    id: format!("diag-{idx:03}"),
                    kind: "diagonal",
                    path: diagonal_path(&data, extent.clamp(14.0, 30.0)),
                }
            }
            1 => {
                let data = random_diagonal_data(rng, n);
                let extent = (16.0
                    / data.rates.iter().cloned().fold(f64::INFINITY, f64::min))
                .clamp(14.0, 30.0);
                let q = random_orthogonal(rng, n);
                let diag = diagonal_path(&data, extent);
                let qi = q.adjoint();
                let path = diag.map_samples(|m| &q * m * &qi);
                BatteryPath { id: format!("rot-{idx:03}"), kind: "rotated", path }
            }
            2 => {
                let kx = rng.random_range(0..=n);
                let ky = rng.random_range(0..=n);
                let x = random_subspace(rng, n, kx);
                let y = random_subspace(rng, n, ky);
                BatteryPath {
                    id: format!("patch-{idx:03}"),
                    kind: "patched",
                    path: flow::patch_path(&x, &y)?,
                }
            }
            _ => {
                let data = random_diagonal_data(rng, n);
                let extent = (16.0
                    / data.rates.iter().cloned().fold(f64::INFINITY, f64::min))
                .clamp(14.0, 30.0);
                let eps = rng.random_range(1e-3..0.15);
                let k = CMat::from_fn(n, n, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), 0.0)
                });
                let scale = eps / linalg::op_norm(&k).max(1e-12);
                let base = diagonal_path(&data, extent);
                let path = OperatorPath::from_fn(
                    |t| base.eval(t) + &k * C64::new(scale * bump(t), 0.0),
                    -extent,
                    extent,
                    SAMPLE_STEP,
                )?
                .with_limits(
                    base.limit_minus().unwrap().clone(),
                    base.limit_plus().unwrap().clone(),
                )?;
                BatteryPath { id: format!("pert-{idx:03}"), kind: "perturbed", path }
            }
        };
        Ok(member)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_deterministic() {
        let a = random_battery(7, 6, 4).unwrap();
        let b = random_battery(7, 6, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.path.dim(), y.path.dim());
            let (t0, _) = x.path.domain();
            assert!((x.path.eval(t0 + 0.37) - y.path.eval(t0 + 0.37)).norm() < 1e-15);
        }
        let c = random_battery(8, 6, 4).unwrap();
        let differs = a
            .iter()
            .zip(&c)
            .any(|(x, y)| x.path.dim() != y.path.dim()
                || (x.path.eval(0.3) - y.path.eval(0.3)).norm() > 1e-12);
        assert!(differs, "different seeds should give different batteries");
    }

    #[test]
    fn battery_members_have_hyperbolic_limits() {
        for member in random_battery(3, 8, 6).unwrap() {
            for limit in [
                member.path.limit_minus().unwrap(),
                member.path.limit_plus().unwrap(),
            ] {
                let h = crate::spectral::is_hyperbolic(limit).unwrap();
                assert!(h.hyperbolic, "{}: margin {}", member.id, h.margin);
                assert!(h.margin >= 0.3, "{}: margin {}", member.id, h.margin);
            }
        }
    }

    #[test]
    fn preset_rotation_is_not_hyperbolic() {
        let p = rotation(1.0);
        let h = crate::spectral::is_hyperbolic(p.limit_plus().unwrap()).unwrap();
        assert!(!h.hyperbolic);
    }
}
