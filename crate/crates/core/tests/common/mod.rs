//! Shared oracles and generators for the integration suites. Everything here
//! is independent of the implementation paths it is used to check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use specflow::grassmann::Subspace;
use specflow::linalg::{self, C64, CMat};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_real_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0))
}

/// Random subspace of dimension `k` with a real orthonormal basis.
pub fn random_subspace(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Subspace {
    if k == 0 {
        return Subspace::zero(n);
    }
    loop {
        let cols = random_real_matrix(rng, n).columns(0, k).into_owned();
        if let Ok(s) = Subspace::from_columns(&cols, 1e-10) {
            if s.dim() == k {
                return s;
            }
        }
    }
}

/// Hyperbolic test matrix with well-separated eigenvalues and a
/// well-conditioned eigenbasis, so the eigenvector oracle below is accurate
/// far beyond the comparison tolerances.
pub fn random_tame_hyperbolic(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    loop {
        let a = random_real_matrix(rng, n);
        let Ok(eigs) = linalg::eigenvalues(&a) else { continue };
        let margin = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
        if margin < 0.1 {
            continue;
        }
        let mut separated = true;
        for i in 0..eigs.len() {
            for j in 0..i {
                if (eigs[i] - eigs[j]).norm() < 0.05 {
                    separated = false;
                }
            }
        }
        if !separated {
            continue;
        }
        if let Some((_, cond)) = eigen_basis(&a) {
            if cond <= 300.0 {
                return a;
            }
        }
    }
}

/// Eigenvector basis of a matrix with simple spectrum: one nullspace vector
/// of `A - lambda I` per eigenvalue. Returns the basis and its condition
/// estimate, or `None` when any eigenvalue is defective at this tolerance.
pub fn eigen_basis(a: &CMat) -> Option<(Vec<(C64, CMat)>, f64)> {
    let n = a.nrows();
    let eigs = linalg::eigenvalues(a).ok()?;
    let clusters = linalg::cluster_eigenvalues(&eigs);
    let id = CMat::identity(n, n);
    let mut pairs = Vec::new();
    let mut v = CMat::zeros(n, n);
    let mut col = 0usize;
    for (lambda, mult) in clusters {
        let shifted = a - &id * lambda;
        let null = linalg::nullspace(&shifted, 1e-9).ok()?;
        if null.ncols() != mult {
            return None;
        }
        for j in 0..mult {
            v.set_column(col, &null.column(j));
            col += 1;
        }
        pairs.push((lambda, null));
    }
    if col != n {
        return None;
    }
    let cond = linalg::condition_estimate(&v);
    Some((pairs, cond))
}

/// Independent eigenprojector-sum oracle for the positive spectral
/// projector: `V diag(1_{Re > 0}) V^{-1}` with `V` an eigenvector basis.
pub fn eigenprojector_plus_oracle(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let (pairs, _) = eigen_basis(a)?;
    let mut v = CMat::zeros(n, n);
    let mut selector = CMat::zeros(n, n);
    let mut col = 0usize;
    for (lambda, basis) in &pairs {
        for j in 0..basis.ncols() {
            v.set_column(col, &basis.column(j));
            if lambda.re > 0.0 {
                selector[(col, col)] = C64::new(1.0, 0.0);
            }
            col += 1;
        }
    }
    let v_inv = linalg::solve_with_cap(&v, &CMat::identity(n, n), 1e12).ok()?;
    Some(&v * selector * v_inv)
}
