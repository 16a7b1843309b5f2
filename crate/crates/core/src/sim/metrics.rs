use serde::{Deserialize, Serialize};

use super::WindowRecord;
use crate::model::HelperId;

/// System-wide sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t_s: f64,
    pub server_load_kbps: f64,
    pub intrinsic_deficit_kbps: f64,
    pub total_contribution_kbps: f64,
    pub demand_kbps: f64,
    pub supply_kbps: f64,
    pub users: usize,
    pub helpers: usize,
    pub edges: usize,
    pub chokes: u64,
    pub aborts: u64,
}

/// Per-helper sample: allocated upload, prices and storage split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperRow {
    pub t_s: f64,
    pub helper: HelperId,
    pub sum_x_kbps: f64,
    pub lambda: f64,
    pub mu: f64,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    /// Digest of the catalog and population sections only.
    pub population_digest: String,
    pub code_version: String,
    pub videos: usize,
}

/// Everything one run emits. `windows` and the trace fields are in-memory
/// diagnostics and are not part of the CSV contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub meta: RunMeta,
    pub rows: Vec<MetricsRow>,
    pub helper_rows: Vec<HelperRow>,
    #[serde(skip)]
    pub windows: Vec<WindowRecord>,
    #[serde(skip)]
    pub events: u64,
    #[serde(skip)]
    pub trace_digest: String,
}

impl MetricsLog {
    /// Rows with `t_s` in `[from, to]`.
    pub fn rows_between(&self, from: f64, to: f64) -> impl Iterator<Item = &MetricsRow> {
        self.rows
            .iter()
            .filter(move |r| r.t_s >= from && r.t_s <= to)
    }

    /// f rows of one helper in time order.
    pub fn helper_series(&self, helper: HelperId) -> impl Iterator<Item = &HelperRow> {
        self.helper_rows.iter().filter(move |r| r.helper == helper)
    }

    pub fn horizon(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t_s)
    }
}
