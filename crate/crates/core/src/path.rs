//! Time-sampled operator paths `t -> A(t)` with piecewise-linear
//! interpolation and optional asymptotic limits.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// A continuous path of square matrices, represented by samples at strictly
/// increasing times. Evaluation is piecewise linear between samples and
/// constant beyond the first/last sample; the asymptotic limits `A(-inf)`,
/// `A(+inf)` are carried separately and the distance between the terminal
/// samples and the limits is recorded as the tail residual.
#[derive(Debug, Clone)]
pub struct OperatorPath {
    dim: usize,
    times: Vec<f64>,
    samples: Vec<CMat>,
    limit_minus: Option<CMat>,
    limit_plus: Option<CMat>,
}

impl OperatorPath {
    pub fn from_samples(times: Vec<f64>, samples: Vec<CMat>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("a path needs at least two samples".into()));
        }
        if times.len() != samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times vs {} samples",
                times.len(),
                samples.len()
            )));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("sample times must be strictly increasing".into()));
        }
        if !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidInput("sample times must be finite".into()));
        }
        let dim = samples[0].nrows();
        if dim == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        for m in &samples {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "all samples must be {dim}x{dim}, found {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            linalg::ensure_finite(m)?;
        }
        Ok(OperatorPath { dim, times, samples, limit_minus: None, limit_plus: None })
    }

    /// Attach asymptotic limits `A(-inf)` and `A(+inf)`.
    pub fn with_limits(mut self, minus: CMat, plus: CMat) -> Result<Self> {
        for m in [&minus, &plus] {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(Error::DimensionMismatch("limit matrix has wrong dimension".into()));
            }
            linalg::ensure_finite(m)?;
        }
        self.limit_minus = Some(minus);
        self.limit_plus = Some(plus);
        Ok(self)
    }

    /// Sample a closure uniformly on `[t0, t1]` with spacing at most `step`.
    pub fn from_fn(f: impl Fn(f64) -> CMat, t0: f64, t1: f64, step: f64) -> Result<Self> {
        if !(t1 > t0 && step > 0.0) {
            return Err(Error::InvalidInput("need t1 > t0 and a positive step".into()));
        }
        let count = ((t1 - t0) / step).ceil() as usize + 1;
        let count = count.max(2);
        let times: Vec<f64> = (0..count)
            .map(|i| t0 + (t1 - t0) * i as f64 / (count - 1) as f64)
            .collect();
        let samples: Vec<CMat> = times.iter().map(|&t| f(t)).collect();
        OperatorPath::from_samples(times, samples)
    }

    pub fn constant(a: CMat, t0: f64, t1: f64) -> Result<Self> {
        OperatorPath::from_samples(vec![t0, t1], vec![a.clone(), a])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sampled time range.
    pub fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn limit_minus(&self) -> Option<&CMat> {
        self.limit_minus.as_ref()
    }

    pub fn limit_plus(&self) -> Option<&CMat> {
        self.limit_plus.as_ref()
    }

    /// The next sample time strictly beyond `t` in the given direction, if
    /// any. Integrators align steps with these so the right-hand side stays
    /// smooth within every step.
    pub fn next_sample_time(&self, t: f64, forward: bool) -> Option<f64> {
        if forward {
            let idx = self.times.partition_point(|&s| s <= t + 1e-13);
            self.times.get(idx).copied()
        } else {
            let idx = self.times.partition_point(|&s| s < t - 1e-13);
            idx.checked_sub(1).map(|i| self.times[i])
        }
    }

    /// Piecewise-linear evaluation, constant beyond the sampled range.
    pub fn eval(&self, t: f64) -> CMat {
        let times = &self.times;
        if t <= times[0] {
            return self.samples[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.samples.last().unwrap().clone();
        }
        let idx = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.samples[i].clone(),
            Err(i) => i,
        };
        let (t0, t1) = (times[idx - 1], times[idx]);
        let w = (t - t0) / (t1 - t0);
        &self.samples[idx - 1] * crate::linalg::C64::new(1.0 - w, 0.0)
            + &self.samples[idx] * crate::linalg::C64::new(w, 0.0)
    }

    /// `sup_t |A(t)|` over samples and limits (operator 2-norm).
    pub fn sup_norm(&self) -> f64 {
        let mut sup = self
            .samples
            .iter()
            .map(linalg::op_norm)
            .fold(0.0, f64::max);
        for l in [&self.limit_minus, &self.limit_plus].into_iter().flatten() {
            sup = sup.max(linalg::op_norm(l));
        }
        sup
    }

    /// `|A(t_last) - A(+inf)|`, when the limit is present.
    pub fn tail_residual_plus(&self) -> Option<f64> {
        self.limit_plus
            .as_ref()
            .map(|l| (self.samples.last().unwrap() - l).norm())
    }

    pub fn tail_residual_minus(&self) -> Option<f64> {
        self.limit_minus
            .as_ref()
            .map(|l| (&self.samples[0] - l).norm())
    }

    /// The shifted path `A(. + s)`.
    pub fn shift(&self, s: f64) -> Self {
        OperatorPath {
            dim: self.dim,
            times: self.times.iter().map(|t| t - s).collect(),
            samples: self.samples.clone(),
            limit_minus: self.limit_minus.clone(),
            limit_plus: self.limit_plus.clone(),
        }
    }

    /// `-A(-t)`: the path whose stable space at `+inf` is the unstable space
    /// of `A` at `-inf`.
    pub fn reversed_negated(&self) -> Self {
        let mut times: Vec<f64> = self.times.iter().map(|t| -t).collect();
        let mut samples: Vec<CMat> = self.samples.iter().map(|m| -m).collect();
        times.reverse();
        samples.reverse();
        OperatorPath {
            dim: self.dim,
            times,
            samples,
            limit_minus: self.limit_plus.as_ref().map(|m| -m),
            limit_plus: self.limit_minus.as_ref().map(|m| -m),
        }
    }

    /// `-A(t)^H`, the generator of the inverse-adjoint propagator.
    pub fn negated_adjoint(&self) -> Self {
        OperatorPath {
            dim: self.dim,
            times: self.times.clone(),
            samples: self.samples.iter().map(|m| -m.adjoint()).collect(),
            limit_minus: self.limit_minus.as_ref().map(|m| -m.adjoint()),
            limit_plus: self.limit_plus.as_ref().map(|m| -m.adjoint()),
        }
    }

    /// Apply a matrix transform to every sample and limit.
    pub fn map_samples(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        OperatorPath {
            dim: self.dim,
            times: self.times.clone(),
            samples: self.samples.iter().map(&f).collect(),
            limit_minus: self.limit_minus.as_ref().map(&f),
            limit_plus: self.limit_plus.as_ref().map(&f),
        }
    }

    /// Restrict to `[a, b]`, resampled so the endpoints are exact samples.
    /// The result carries no asymptotic limits.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::InvalidInput("restriction needs a < b".into()));
        }
        let mut times = vec![a];
        times.extend(self.times.iter().copied().filter(|&t| t > a && t < b));
        times.push(b);
        let samples = times.iter().map(|&t| self.eval(t)).collect();
        OperatorPath::from_samples(times, samples)
    }

    /// Affine time reparametrisation onto `[0, 1]`.
    pub fn rescaled_to_unit(&self) -> Self {
        let (a, b) = self.domain();
        let len = b - a;
        OperatorPath {
            dim: self.dim,
            times: self.times.iter().map(|t| (t - a) / len).collect(),
            samples: self.samples.clone(),
            limit_minus: self.limit_minus.clone(),
            limit_plus: self.limit_plus.clone(),
        }
    }

    /// Catenate two paths on `[0, 1]`: the result traverses `self` on
    /// `[0, 1/2]` and `other` on `[1/2, 1]`. Endpoints must match within
    /// 1e-10.
    pub fn catenate(&self, other: &OperatorPath) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch("catenation of different dimensions".into()));
        }
        let a = self.rescaled_to_unit();
        let b = other.rescaled_to_unit();
        let gap = (a.samples.last().unwrap() - &b.samples[0]).norm();
        if gap > 1e-10 {
            return Err(Error::EndpointMismatch { gap });
        }
        let mut times: Vec<f64> = a.times.iter().map(|t| t / 2.0).collect();
        let mut samples = a.samples.clone();
        for (t, s) in b.times.iter().zip(&b.samples).skip(1) {
            times.push(0.5 + t / 2.0);
            samples.push(s.clone());
        }
        OperatorPath::from_samples(times, samples)
    }
}
