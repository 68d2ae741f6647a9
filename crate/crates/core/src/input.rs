//! JSON path specifications accepted by the CLI and the C interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::Subspace;
use crate::linalg::{self, CMat};
use crate::path::OperatorPath;
use crate::{flow, presets};

/// A path description: either explicit samples or a named preset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub dim: usize,
    pub kind: PathKind,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathKind {
    Samples(SampleSpec),
    Preset(PresetSpec),
}

/// Explicit real samples, row-major, with optional asymptotic limits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub times: Vec<f64>,
    pub matrices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_minus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_plus: Option<Vec<f64>>,
}

/// Preset selector with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PresetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Spanning vectors of the stable target of a patch path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_y: Option<Vec<Vec<f64>>>,
}

impl PathSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PathSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("cannot parse path spec: {e}")))?;
        if spec.dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path spec serialises")
    }

    /// Materialise the operator path.
    pub fn build(&self) -> Result<OperatorPath> {
        match &self.kind {
            PathKind::Samples(s) => {
                let mats = s
                    .matrices
                    .iter()
                    .map(|rows| matrix_from_rows(self.dim, rows))
                    .collect::<Result<Vec<_>>>()?;
                let mut path = OperatorPath::from_samples(s.times.clone(), mats)?;
                match (&s.limit_minus, &s.limit_plus) {
                    (Some(lm), Some(lp)) => {
                        path = path.with_limits(
                            matrix_from_rows(self.dim, lm)?,
                            matrix_from_rows(self.dim, lp)?,
                        )?;
                    }
                    (None, None) => {}
                    _ => {
                        return Err(Error::InvalidInput(
                            "provide both limits or neither".into(),
                        ))
                    }
                }
                Ok(path)
            }
            PathKind::Preset(p) => build_preset(self.dim, p),
        }
    }
}

fn matrix_from_rows(dim: usize, rows: &[f64]) -> Result<CMat> {
    if rows.len() != dim * dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix needs {} entries for dim {dim}, got {}",
            dim * dim,
            rows.len()
        )));
    }
    Ok(linalg::cmat_from_rows(dim, dim, rows))
}

fn subspace_from_vectors(dim: usize, vectors: &[Vec<f64>]) -> Result<Subspace> {
    if vectors.is_empty() {
        return Ok(Subspace::zero(dim));
    }
    let mut cols = CMat::zeros(dim, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "subspace vector {j} has length {}, expected {dim}",
                v.len()
            )));
        }
        for (i, &x) in v.iter().enumerate() {
            cols[(i, j)] = crate::linalg::C64::new(x, 0.0);
        }
    }
    Subspace::from_columns(&cols, 1e-10)
}

fn build_preset(dim: usize, p: &PresetSpec) -> Result<OperatorPath> {
    match p.name.as_str() {
        "scalar-tanh" => {
            require_dim(dim, 1, &p.name)?;
            Ok(presets::scalar_tanh())
        }
        "scalar-tanh-reversed" => {
            require_dim(dim, 1, &p.name)?;
            Ok(presets::scalar_tanh_reversed())
        }
        "tanh-diag" => {
            require_dim(dim, 2, &p.name)?;
            Ok(presets::tanh_diag())
        }
        "rotation" => {
            require_dim(dim, 2, &p.name)?;
            Ok(presets::rotation(p.angle.unwrap_or(1.0)))
        }
        "patch" => {
            let x = subspace_from_vectors(
                dim,
                p.subspace_x
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("patch needs subspace_x".into()))?,
            )?;
            let y = subspace_from_vectors(
                dim,
                p.subspace_y
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("patch needs subspace_y".into()))?,
            )?;
            flow::patch_path(&x, &y)
        }
        "random-battery" => Err(Error::InvalidInput(
            "random-battery describes a family; use the verify subcommand".into(),
        )),
        other => Err(Error::InvalidInput(format!("unknown preset '{other}'"))),
    }
}

fn require_dim(got: usize, want: usize, name: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "preset '{name}' has dimension {want}, spec says {got}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_spec_round_trip() {
        let spec = PathSpec {
            dim: 2,
            kind: PathKind::Samples(SampleSpec {
                times: vec![-1.0, 0.0, 1.0],
                matrices: vec![
                    vec![1.0, 0.0, 0.0, -1.0],
                    vec![0.5, 0.1, 0.1, -0.5],
                    vec![-1.0, 0.0, 0.0, 1.0],
                ],
                limit_minus: Some(vec![1.0, 0.0, 0.0, -1.0]),
                limit_plus: Some(vec![-1.0, 0.0, 0.0, 1.0]),
            }),
        };
        let text = spec.to_json();
        let parsed = PathSpec::from_json(&text).unwrap();
        assert_eq!(spec, parsed);
        let path = parsed.build().unwrap();
        assert_eq!(path.dim(), 2);
        assert!((path.eval(0.0)[(0, 0)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn preset_spec_builds() {
        let spec = PathSpec {
            dim: 1,
            kind: PathKind::Preset(PresetSpec {
                name: "scalar-tanh".into(),
                seed: None,
                angle: None,
                count: None,
                subspace_x: None,
                subspace_y: None,
            }),
        };
        let path = spec.build().unwrap();
        assert_eq!(path.dim(), 1);
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(PathSpec::from_json("{").is_err());
        assert!(PathSpec::from_json("{\"dim\": 0, \"kind\": {\"preset\": {\"name\": \"x\"}}}").is_err());
        let bad = PathSpec {
            dim: 2,
            kind: PathKind::Samples(SampleSpec {
                times: vec![0.0, 1.0],
                matrices: vec![vec![1.0], vec![1.0]],
                limit_minus: None,
                limit_plus: None,
            }),
        };
        assert!(bad.build().is_err());
    }

    #[test]
    fn patch_preset_builds_from_subspace_data() {
        let spec = PathSpec {
            dim: 2,
            kind: PathKind::Preset(PresetSpec {
                name: "patch".into(),
                seed: None,
                angle: None,
                count: None,
                subspace_x: Some(vec![vec![1.0, 0.0]]),
                subspace_y: Some(vec![vec![0.0, 1.0]]),
            }),
        };
        let path = spec.build().unwrap();
        assert_eq!(path.dim(), 2);
        // limits are the expected involutions
        let lp = path.limit_plus().unwrap();
        assert!((lp - linalg::cmat_from_rows(2, 2, &[-1.0, 0.0, 0.0, 1.0])).norm() < 1e-12);
    }
}
