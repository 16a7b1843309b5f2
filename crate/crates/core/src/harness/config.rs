use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocator::AllocatorConfig;
use crate::error::{Error, Result};
use crate::model::{VideoCatalog, VideoSpec};
use crate::topology::{ChokeParams, PolicyRegistry};

/// A simulation or analysis scenario. See `docs/scenario.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub horizon_s: f64,
    #[serde(default = "one")]
    pub sample_period_s: f64,
    #[serde(default = "yes")]
    pub topology_update: bool,
    #[serde(default)]
    pub population_mode: PopulationMode,
    #[serde(default)]
    pub clocks: ClockMode,
    pub catalog: CatalogConfig,
    pub users: UserConfig,
    pub helpers: HelperConfig,
    #[serde(default)]
    pub allocator: AllocatorConfig,
    #[serde(default)]
    pub choke: ChokeConfig,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default)]
    pub churn: Option<ChurnConfig>,
    #[serde(default, rename = "switch")]
    pub switches: Vec<SwitchConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMode {
    /// Category counts by largest-remainder rounding, then shuffled.
    #[default]
    Deterministic,
    /// Independent categorical draws per peer.
    Sampled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Every peer ticks on the same grid from t = 0.
    #[default]
    Synchronized,
    /// Each peer starts its clock at a uniform offset within its period.
    Asynchronous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    #[serde(default = "ten")]
    pub segment_s: f64,
    #[serde(default = "thirty")]
    pub buffer_time_s: f64,
    pub videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub rate_kbps: f64,
    #[serde(default = "hour")]
    pub duration_s: f64,
    /// Share of users watching, in percent.
    pub fraction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub count: usize,
    /// Inclusive range for the uniform per-peer neighbor cap.
    pub max_neighbors: [usize; 2],
    #[serde(default = "unit_period")]
    pub update_periods_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelperConfig {
    pub count: usize,
    pub max_neighbors: [usize; 2],
    #[serde(default = "unit_period")]
    pub update_periods_s: Vec<f64>,
    /// Upload capacity categories, kbps.
    pub upload: Vec<Category>,
    /// Storage capacity categories, MB.
    pub storage: Vec<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub value: f64,
    pub fraction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChokeConfig {
    pub kappa: f64,
    pub tau: f64,
    pub policy: String,
}

impl Default for ChokeConfig {
    fn default() -> Self {
        let p = ChokeParams::default();
        Self {
            kappa: p.kappa,
            tau: p.tau,
            policy: "soft_worst".into(),
        }
    }
}

impl ChokeConfig {
    pub fn params(&self) -> ChokeParams {
        ChokeParams {
            kappa: self.kappa,
            tau: self.tau,
        }
    }
}

/// Fixed per-direction link delay drawn uniformly when a link is created.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayConfig {
    pub min_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChurnConfig {
    /// Mean gap between arrivals; each arrival brings one user and one helper.
    pub arrival_mean_s: f64,
    pub lifetime_mean_s: f64,
    pub stop_time_s: f64,
}

/// Users changing video at `at_s`. Either list `users` or name a
/// `from_video`; targets are assigned round-robin in user id order.
/// Videos are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub at_s: f64,
    #[serde(default)]
    pub users: Vec<u32>,
    #[serde(default)]
    pub from_video: Option<usize>,
    pub to_videos: Vec<usize>,
    /// Helper whose storage reaction is of interest.
    #[serde(default)]
    pub monitor_helper: Option<u32>,
}

/// Settings for `analyze` on tiny scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Chain jumps to simulate.
    pub transitions: usize,
    /// Oracle grid resolution for U(c).
    pub resolution: u32,
    /// Allocator ticks used to settle link rates per configuration.
    pub allocator_ticks: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            transitions: 100_000,
            resolution: 200,
            allocator_ticks: 20_000,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn ten() -> f64 {
    10.0
}
fn thirty() -> f64 {
    30.0
}
fn hour() -> f64 {
    3600.0
}
fn unit_period() -> Vec<f64> {
    vec![1.0]
}

fn invalid(field: &str, why: impl std::fmt::Display) -> Error {
    Error::InvalidScenario(format!("{field}: {why}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn check_fractions(field: &str, fractions: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut n = 0;
    for f in fractions {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(invalid(field, format!("fraction {f} is negative")));
        }
        total += f;
        n += 1;
    }
    if n == 0 {
        return Err(invalid(field, "no categories"));
    }
    if (total / 100.0 - 1.0).abs() > 1e-9 {
        return Err(invalid(
            field,
            format!("fractions sum to {total}%, not 100%"),
        ));
    }
    Ok(())
}

fn check_caps(field: &str, caps: [usize; 2]) -> Result<()> {
    if caps[0] < 1 || caps[0] > caps[1] {
        return Err(invalid(
            field,
            format!("range [{}, {}] needs 1 ≤ lo ≤ hi", caps[0], caps[1]),
        ));
    }
    Ok(())
}

fn check_periods(field: &str, periods: &[f64]) -> Result<()> {
    if periods.is_empty() {
        return Err(invalid(field, "empty set"));
    }
    periods.iter().try_for_each(|&p| positive(field, p))
}

impl ScenarioConfig {
    /// Parses TOML text and validates it.
    pub fn from_toml(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse("empty scenario".into()));
        }
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        positive("horizon_s", self.horizon_s)?;
        positive("sample_period_s", self.sample_period_s)?;

        let c = &self.catalog;
        if c.videos.is_empty() {
            return Err(invalid("catalog.videos", "no videos"));
        }
        for (i, v) in c.videos.iter().enumerate() {
            positive(&format!("catalog.videos[{i}].rate_kbps"), v.rate_kbps)?;
            positive(&format!("catalog.videos[{i}].duration_s"), v.duration_s)?;
        }
        check_fractions(
            "catalog.videos.fraction_pct",
            c.videos.iter().map(|v| v.fraction_pct),
        )?;
        positive("catalog.segment_s", c.segment_s)?;
        positive("catalog.buffer_time_s", c.buffer_time_s)?;
        let segments = c.buffer_time_s / c.segment_s;
        if (segments - segments.round()).abs() > 1e-9 {
            return Err(invalid(
                "catalog.buffer_time_s",
                "must be a whole number of segments",
            ));
        }

        check_caps("users.max_neighbors", self.users.max_neighbors)?;
        check_periods("users.update_periods_s", &self.users.update_periods_s)?;
        check_caps("helpers.max_neighbors", self.helpers.max_neighbors)?;
        check_periods("helpers.update_periods_s", &self.helpers.update_periods_s)?;
        for (field, cats) in [
            ("helpers.upload", &self.helpers.upload),
            ("helpers.storage", &self.helpers.storage),
        ] {
            for cat in cats {
                positive(&format!("{field}.value"), cat.value)?;
            }
            check_fractions(field, cats.iter().map(|c| c.fraction_pct))?;
        }

        self.allocator
            .steps
            .validate()
            .map_err(|e| invalid("allocator.steps", e))?;
        self.allocator
            .scale
            .validate()
            .map_err(|e| invalid("allocator.scale", e))?;
        // κ = 0 is accepted here so analysis can target the uniform
        // distribution; the simulator insists on κ > 0.
        if !(self.choke.kappa >= 0.0 && self.choke.kappa.is_finite()) {
            return Err(invalid("choke.kappa", "must be finite and ≥ 0"));
        }
        if !(self.choke.tau > 0.0 && self.choke.tau.is_finite()) {
            return Err(invalid("choke.tau", "must be finite and > 0"));
        }
        PolicyRegistry::default()
            .get(&self.choke.policy)
            .map_err(|e| invalid("choke.policy", e))?;

        let d = self.delay;
        if !(d.min_s >= 0.0 && d.min_s <= d.max_s && d.max_s.is_finite()) {
            return Err(invalid("delay", "needs 0 ≤ min_s ≤ max_s"));
        }

        if let Some(ch) = &self.churn {
            positive("churn.arrival_mean_s", ch.arrival_mean_s)?;
            positive("churn.lifetime_mean_s", ch.lifetime_mean_s)?;
            if !(ch.stop_time_s >= 0.0) {
                return Err(invalid("churn.stop_time_s", "must be non-negative"));
            }
        }

        let videos = c.videos.len();
        for (i, s) in self.switches.iter().enumerate() {
            let field = format!("switch[{i}]");
            if !(s.at_s > 0.0 && s.at_s <= self.horizon_s) {
                return Err(invalid(
                    &field,
                    format!("at_s {} is outside (0, {}]", s.at_s, self.horizon_s),
                ));
            }
            match (s.users.is_empty(), s.from_video) {
                (true, None) | (false, Some(_)) => {
                    return Err(invalid(&field, "give exactly one of users or from_video"))
                }
                _ => {}
            }
            if let Some(m) = s.from_video {
                if !(1..=videos).contains(&m) {
                    return Err(invalid(&field, format!("unknown video {m}")));
                }
            }
            if s.to_videos.is_empty() {
                return Err(invalid(&field, "to_videos is empty"));
            }
            if let Some(&m) = s.to_videos.iter().find(|m| !(1..=videos).contains(m)) {
                return Err(invalid(&field, format!("unknown video {m}")));
            }
            if let Some(&u) = s
                .users
                .iter()
                .find(|&&u| u == 0 || u as usize > self.users.count)
            {
                return Err(invalid(&field, format!("unknown user {u}")));
            }
            if let Some(h) = s.monitor_helper {
                if h == 0 || h as usize > self.helpers.count {
                    return Err(invalid(&field, format!("unknown helper {h}")));
                }
            }
        }
        if self.analysis.transitions == 0 || self.analysis.resolution < 100 {
            return Err(invalid(
                "analysis",
                "needs transitions > 0 and resolution ≥ 100",
            ));
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<VideoCatalog> {
        self.catalog
            .videos
            .iter()
            .map(|v| VideoSpec::new(v.rate_kbps, v.duration_s))
            .collect::<Result<Vec<_>>>()
            .map(VideoCatalog::new)
    }

    /// SHA-256 of the canonical JSON form. Field order in the source file
    /// does not matter; any value change does.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Digest of what fixes the demand and supply side: catalog, user and
    /// helper sections and the population mode. Runs that differ only in
    /// dynamics settings share it.
    pub fn population_digest(&self) -> String {
        let canonical = serde_json::to_string(&(
            &self.catalog,
            &self.users,
            &self.helpers,
            self.population_mode,
        ))
        .expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml(&text)
}

const BUNDLED: &[(&str, &str)] = &[
    ("static_sync", include_str!("scenarios/static_sync.toml")),
    ("async_delay", include_str!("scenarios/async_delay.toml")),
    ("topology", include_str!("scenarios/topology.toml")),
    ("churn", include_str!("scenarios/churn.toml")),
    (
        "channel_switch",
        include_str!("scenarios/channel_switch.toml"),
    ),
    (
        "channel_switch_scarce",
        include_str!("scenarios/channel_switch_scarce.toml"),
    ),
    ("tiny_pair", include_str!("scenarios/tiny_pair.toml")),
    ("tiny_square", include_str!("scenarios/tiny_square.toml")),
    ("tiny_mixed", include_str!("scenarios/tiny_mixed.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidScenario(format!("no bundled scenario `{name}`")))?;
    ScenarioConfig::from_toml(text)
}

/// A path if one exists, otherwise a bundled scenario name.
pub fn resolve_scenario(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() {
        return load_scenario(path);
    }
    bundled_scenario(arg).map_err(|_| {
        Error::InvalidScenario(format!(
            "`{arg}` is neither a file nor a bundled scenario ({})",
            bundled_names().collect::<Vec<_>>().join(", ")
        ))
    })
}
