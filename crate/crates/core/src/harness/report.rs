use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{MetricsLog, MetricsRow};

/// Default steady-state window: the last fifth of the run.
pub const DEFAULT_TAIL: f64 = 0.2;

/// `[from, to]` covering the last `fraction` of the sampled span.
pub fn tail_window(log: &MetricsLog, fraction: f64) -> Result<(f64, f64)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction must be in (0, 1], got {fraction}"
        )));
    }
    let (Some(first), Some(last)) = (log.rows.first(), log.rows.last()) else {
        return Err(Error::Empty("metrics rows"));
    };
    let to = last.t_s;
    Ok((to - fraction * (to - first.t_s), to))
}

pub fn mean_of(rows: &[&MetricsRow], column: impl Fn(&MetricsRow) -> f64) -> f64 {
    rows.iter().map(|r| column(r)).sum::<f64>() / rows.len() as f64
}

fn tail_rows(log: &MetricsLog, fraction: f64) -> Result<(f64, f64, Vec<&MetricsRow>)> {
    let (from, to) = tail_window(log, fraction)?;
    let rows: Vec<&MetricsRow> = log.rows_between(from, to).collect();
    Ok((from, to, rows))
}

/// Mean server load over the tail window.
pub fn tail_mean_load(log: &MetricsLog, fraction: f64) -> Result<f64> {
    let (_, _, rows) = tail_rows(log, fraction)?;
    Ok(mean_of(&rows, |r| r.server_load_kbps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub horizon_s: f64,
    pub tail_fraction: f64,
    pub window_from_s: f64,
    pub window_to_s: f64,
    pub window_rows: usize,
    pub mean_server_load_kbps: f64,
    pub mean_intrinsic_deficit_kbps: f64,
    pub mean_contribution_kbps: f64,
    /// Mean load minus mean deficit.
    pub gap_kbps: f64,
    /// Gap relative to the mean deficit.
    pub gap_pct: f64,
    pub final_server_load_kbps: f64,
    pub final_intrinsic_deficit_kbps: f64,
    pub chokes: u64,
    pub aborts: u64,
    pub chokes_per_s: f64,
}

impl Summary {
    pub fn of(log: &MetricsLog, tail: f64) -> Result<Self> {
        let (from, to, rows) = tail_rows(log, tail)?;
        let last = log.rows.last().expect("tail_rows checked");
        let load = mean_of(&rows, |r| r.server_load_kbps);
        let deficit = mean_of(&rows, |r| r.intrinsic_deficit_kbps);
        let horizon = log.horizon();
        Ok(Self {
            scenario: log.meta.scenario.clone(),
            seed: log.meta.seed,
            config_digest: log.meta.config_digest.clone(),
            horizon_s: horizon,
            tail_fraction: tail,
            window_from_s: from,
            window_to_s: to,
            window_rows: rows.len(),
            mean_server_load_kbps: load,
            mean_intrinsic_deficit_kbps: deficit,
            mean_contribution_kbps: mean_of(&rows, |r| r.total_contribution_kbps),
            gap_kbps: load - deficit,
            gap_pct: if deficit.abs() > 0.0 {
                100.0 * (load - deficit) / deficit.abs()
            } else {
                f64::NAN
            },
            final_server_load_kbps: last.server_load_kbps,
            final_intrinsic_deficit_kbps: last.intrinsic_deficit_kbps,
            chokes: last.chokes,
            aborts: last.aborts,
            chokes_per_s: if horizon > 0.0 {
                last.chokes as f64 / horizon
            } else {
                0.0
            },
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "config_digest: {}", self.config_digest);
        let _ = writeln!(s, "horizon_s: {}", self.horizon_s);
        let _ = writeln!(
            s,
            "tail window: [{}, {}] s ({} rows, fraction {})",
            self.window_from_s, self.window_to_s, self.window_rows, self.tail_fraction
        );
        let _ = writeln!(s, "mean server load kbps: {}", self.mean_server_load_kbps);
        let _ = writeln!(
            s,
            "mean intrinsic deficit kbps: {}",
            self.mean_intrinsic_deficit_kbps
        );
        let _ = writeln!(s, "mean contribution kbps: {}", self.mean_contribution_kbps);
        let _ = writeln!(
            s,
            "gap to deficit: {:.1} kbps ({:.2}%)",
            self.gap_kbps, self.gap_pct
        );
        let _ = writeln!(
            s,
            "final server load kbps: {} (deficit {})",
            self.final_server_load_kbps, self.final_intrinsic_deficit_kbps
        );
        let _ = writeln!(
            s,
            "chokes: {} ({:.3}/s), aborted: {}",
            self.chokes, self.chokes_per_s, self.aborts
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tail_fraction: f64,
    pub mean_a_kbps: f64,
    pub mean_b_kbps: f64,
    /// (a − b) / a.
    pub reduction: f64,
}

impl Comparison {
    pub fn render(&self, a: &str, b: &str) -> String {
        format!(
            "tail fraction: {}\na ({a}) mean server load kbps: {}\nb ({b}) mean server load kbps: {}\nreduction (a-b)/a: {:.2}%\n",
            self.tail_fraction,
            self.mean_a_kbps,
            self.mean_b_kbps,
            100.0 * self.reduction
        )
    }
}

/// Tail-mean server loads of two runs over the same catalog and population.
pub fn compare_runs(a: &MetricsLog, b: &MetricsLog, tail: f64) -> Result<Comparison> {
    if a.meta.population_digest != b.meta.population_digest {
        return Err(Error::InvalidArgument(
            "runs use different catalogs or populations".into(),
        ));
    }
    let mean_a = tail_mean_load(a, tail)?;
    let mean_b = tail_mean_load(b, tail)?;
    if mean_a <= 0.0 {
        return Err(Error::InvalidArgument(
            "baseline run has no server load to reduce".into(),
        ));
    }
    Ok(Comparison {
        tail_fraction: tail,
        mean_a_kbps: mean_a,
        mean_b_kbps: mean_b,
        reduction: (mean_a - mean_b) / mean_a,
    })
}
