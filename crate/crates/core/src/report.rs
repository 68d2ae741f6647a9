//! JSON report payloads emitted by the CLI.
//!
//! Reports are deterministic for identical inputs; the only volatile field is
//! the timestamp, which is isolated in the `meta` header so consumers can
//! compare the `result` subtree byte for byte.

use serde::{Deserialize, Serialize};

use crate::diffop::IndexReport;
use crate::flow::{FlowReport, IdentityReport};
use crate::linalg::CMat;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
}

impl Meta {
    pub fn now() -> Self {
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Meta {
            tool: "specflow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub meta: Meta,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(result: T) -> Self {
        Report { meta: Meta::now(), result }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Dense matrix payload, split into real and imaginary parts (row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixDto {
    pub fn from_cmat(m: &CMat) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixDto { rows, cols, re, im }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectorResult {
    pub margin: f64,
    pub rank_plus: usize,
    pub rank_minus: usize,
    pub p_plus: MatrixDto,
    pub p_minus: MatrixDto,
    pub idempotency_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StableResult {
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub stable_basis: MatrixDto,
    pub unstable_basis: MatrixDto,
    /// Graph operator of the stable space over the limit splitting, when the
    /// smallness certificate admits the graph construction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_matrix: Option<MatrixDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_shift: Option<f64>,
    /// Agreement between the limit and graph constructions, when both ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods_delta1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexResult {
    pub ker: usize,
    pub coker: usize,
    pub index: i64,
    pub gap_ratio: f64,
    pub reliable: bool,
    pub window: f64,
    pub grid_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_index: Option<i64>,
    #[serde(rename = "match", skip_serializing_if = "Option::is_none")]
    pub pair_match: Option<bool>,
}

impl IndexResult {
    pub fn from_report(r: &IndexReport) -> Self {
        IndexResult {
            ker: r.ker_dim,
            coker: r.coker_dim,
            index: r.index,
            gap_ratio: r.gap_ratio,
            reliable: r.reliable,
            window: r.window,
            grid_step: r.grid_step,
            pair_index: r.pair_prediction,
            pair_match: r.pair_match,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingDto {
    pub time: f64,
    pub imag: f64,
    pub direction: i32,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfResult {
    pub sf: i64,
    pub methods_agree: bool,
    pub lift: i64,
    pub crossing_sum: i64,
    pub crossings: Vec<CrossingDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl SfResult {
    pub fn from_report(r: &FlowReport) -> Self {
        SfResult {
            sf: r.sf,
            methods_agree: r.methods_agree,
            lift: r.lift_value,
            crossing_sum: r.crossing_value,
            crossings: r
                .crossings
                .iter()
                .map(|c| CrossingDto {
                    time: c.time,
                    imag: c.eigenvalue.im,
                    direction: c.direction,
                    multiplicity: c.multiplicity,
                })
                .collect(),
            delta: r.delta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityResult {
    pub sf: i64,
    pub index: i64,
    pub ker: usize,
    pub coker: usize,
    pub pair_index: i64,
    pub relative_dimension: i64,
    pub kernel_matches_intersection: bool,
    pub identities_hold: bool,
}

impl IdentityResult {
    pub fn from_report(r: &IdentityReport) -> Self {
        IdentityResult {
            sf: r.sf.sf,
            index: r.index.index,
            ker: r.index.ker_dim,
            coker: r.index.coker_dim,
            pair_index: r.pair.index,
            relative_dimension: r.relative_dimension,
            kernel_matches_intersection: r.kernel_matches_intersection,
            identities_hold: r.identities_hold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyItem {
    pub id: String,
    pub kind: String,
    pub dim: usize,
    #[serde(flatten)]
    pub identity: IdentityResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyResult {
    pub total: usize,
    pub passes: usize,
    pub failures: Vec<String>,
    pub items: Vec<VerifyItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoItem {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoResult {
    pub items: Vec<DemoItem>,
    pub all_pass: bool,
}
