//! Scenario configuration: schema, presets, validation and the two file formats.
//!
//! The text format is flat `key = value` lines. Keys are dotted paths into the
//! schema (`sim.sample_time`), optionally under a `[section]` header; a handful of
//! short aliases (`T`, `N`, `N_r`, ...) are accepted. Values are JSON literals
//! (numbers, booleans, arrays, quoted strings) or bare words taken as strings.
//! `#` starts a comment. JSON input is a (possibly partial) nested object with
//! the same structure, or a run manifest whose `config` member is used.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::avoidance::FacetLayout;
use crate::kinematics::RotationConvention;
use crate::koopman::{Ridge, DEFAULT_BUFFER_CAPACITY, DEFAULT_DIVERGENCE_BOUND, OBSERVABLES_PER_COORD};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}unknown key `{key}`", line_prefix(*line))]
    UnknownKey { key: String, line: Option<usize> },

    #[error("{}bad value for `{key}`: {message}", line_prefix(*line))]
    Type { key: String, line: Option<usize>, message: String },

    #[error("invalid configuration: {field} {message}")]
    Invalid { field: String, message: String },

    #[error("unknown preset `{0}` (available: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleKind {
    None,
    /// `center + r (cos wt, sin wt, 0)`.
    Circular,
    /// Gerono lemniscate `center + a (sin wt, sin wt cos wt, 0)`.
    Lemniscate,
    /// Planar butterfly curve with a vertical oscillation.
    Butterfly3d,
    /// Two concentric rings of obstacles, each circling its own ring point.
    TwoRing,
}

/// Who measures obstacle positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observer {
    /// Every UAV measures every obstacle; noise grows with UAV-obstacle range.
    Uav,
    /// A fixed external system measures each obstacle once per step at zero range.
    Camera,
}

/// How per-UAV measurements feed the predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// One predictor per (UAV, obstacle).
    Independent,
    /// One predictor per obstacle fed the mean of the UAV measurements.
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Sampling time `T` (s).
    pub sample_time: f64,
    /// Prediction horizon `N` (steps).
    pub horizon: usize,
    /// Simulated time (s).
    pub duration: f64,
    /// Skip the controller: UAVs only observe and predict.
    pub prediction_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSection {
    pub count: usize,
    /// Encapsulating radius `r_rob` (m).
    pub radius: f64,
    pub v_bar: f64,
    pub w_bar: f64,
    /// Radius of the initial formation (m).
    pub init_radius: f64,
    /// Radius of the reference formation (m).
    pub ref_radius: f64,
    /// Cluster radius `r_cl` (m).
    pub cluster_radius: f64,
    /// Obstacles beyond this range are not constrained against (m).
    pub sensing_radius: f64,
    /// Restrict the controller to hover, in-plane translation and yaw modes.
    pub planar: bool,
    pub rotation: RotationConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub kind: ObstacleKind,
    pub count: usize,
    /// Encapsulating radius `r_obs` (m).
    pub radius: f64,
    /// Two-ring: ring radii for q = 1, 2 (m).
    pub ring_radii: Vec<f64>,
    /// Two-ring: radius of the small circle each obstacle covers (m).
    pub cover_radius: f64,
    /// Two-ring: angular rate along the covered circle (rad/s).
    pub angular_velocity: f64,
    /// Two-ring: initial angle on the covered circle (rad).
    pub initial_phase: f64,
    /// Circular / lemniscate / butterfly: size (radius, half-width, envelope) in m.
    pub scale: f64,
    /// Circular / lemniscate / butterfly: angular rate (rad/s).
    pub omega: f64,
    pub center: [f64; 3],
    /// Butterfly: amplitude of the vertical oscillation (m).
    pub z_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvoidanceSection {
    /// Facet count `gamma`.
    pub facets: usize,
    pub layout: FacetLayout,
    /// UAV-obstacle margin `delta` (m).
    pub obstacle_margin: f64,
    /// UAV-UAV margin `delta` (m).
    pub agent_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Base per-axis standard deviation (m).
    pub sigma0: f64,
    /// Range coefficient (1/m): std = sigma0 (1 + kappa * range).
    pub kappa: f64,
    pub observer: Observer,
    pub fusion: Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KoopmanSection {
    /// Tracked coordinates (2 or 3); `null` picks from the obstacle kind.
    pub dims: Option<usize>,
    pub buffer_capacity: usize,
    /// Samples required before fitting; `null` means `L + 1`.
    pub min_samples: Option<usize>,
    pub ridge: Ridge,
    pub divergence_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sim: SimSection,
    pub uav: UavSection,
    pub obstacles: ObstacleSection,
    pub avoidance: AvoidanceSection,
    pub noise: NoiseSection,
    pub koopman: KoopmanSection,
}

pub const PRESETS: &[&str] = &[
    "paper-avoidance",
    "prediction-circular",
    "prediction-figure-eight",
    "prediction-butterfly",
];

const R_ROB: f64 = 0.1125;

impl Default for ScenarioConfig {
    /// The four-UAV, eight-obstacle avoidance scenario.
    fn default() -> Self {
        Self {
            seed: 1,
            sim: SimSection { sample_time: 0.01, horizon: 4, duration: 35.0, prediction_only: false },
            uav: UavSection {
                count: 4,
                radius: R_ROB,
                v_bar: 0.2,
                w_bar: 0.6,
                init_radius: 3.5,
                ref_radius: 0.5,
                cluster_radius: 8.0 * R_ROB,
                sensing_radius: 16.0 * R_ROB,
                planar: true,
                rotation: RotationConvention::Standard,
            },
            obstacles: ObstacleSection {
                kind: ObstacleKind::TwoRing,
                count: 8,
                radius: R_ROB,
                ring_radii: vec![2.5, 1.5],
                cover_radius: 0.3,
                angular_velocity: 0.15,
                initial_phase: 0.0,
                scale: 1.0,
                omega: 0.5,
                center: [0.0; 3],
                z_amplitude: 0.3,
            },
            avoidance: AvoidanceSection {
                facets: crate::avoidance::DEFAULT_FACETS,
                layout: FacetLayout::Fibonacci,
                obstacle_margin: 0.015,
                agent_margin: 0.015,
            },
            noise: NoiseSection { sigma0: 0.001, kappa: 0.0, observer: Observer::Camera, fusion: Fusion::Independent },
            koopman: KoopmanSection {
                dims: None,
                buffer_capacity: DEFAULT_BUFFER_CAPACITY,
                min_samples: None,
                ridge: Ridge::AUTO,
                divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            },
        }
    }
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        match name {
            "paper-avoidance" | "default" => {}
            "prediction-circular" | "prediction-figure-eight" | "prediction-butterfly" => {
                c.sim.prediction_only = true;
                c.uav.count = 3;
                c.noise = NoiseSection {
                    sigma0: 0.01,
                    kappa: 0.05,
                    observer: Observer::Uav,
                    fusion: Fusion::Independent,
                };
                c.obstacles.count = 1;
                c.obstacles.center = [0.0; 3];
                match name {
                    "prediction-circular" => {
                        c.obstacles.kind = ObstacleKind::Circular;
                        c.obstacles.scale = 1.0;
                        c.obstacles.omega = 0.5;
                    }
                    "prediction-figure-eight" => {
                        c.obstacles.kind = ObstacleKind::Lemniscate;
                        c.obstacles.scale = 1.5;
                        c.obstacles.omega = 0.3;
                    }
                    _ => {
                        c.obstacles.kind = ObstacleKind::Butterfly3d;
                        c.obstacles.scale = 1.5;
                        c.obstacles.omega = 0.3;
                    }
                }
            }
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        }
        Ok(c)
    }

    /// Tracked coordinates for the Koopman dictionary.
    pub fn tracked_dims(&self) -> usize {
        self.koopman.dims.unwrap_or(match self.obstacles.kind {
            ObstacleKind::Butterfly3d => 3,
            _ => 2,
        })
    }

    /// Fills every `null` default with its concrete value.
    pub fn resolved(mut self) -> Self {
        let dims = self.tracked_dims();
        self.koopman.dims = Some(dims);
        self.koopman.min_samples.get_or_insert(OBSERVABLES_PER_COORD * dims + 1);
        self
    }

    /// Number of control steps; the trace holds one more record.
    pub fn steps(&self) -> usize {
        (self.sim.duration / self.sim.sample_time).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &str, message: impl Into<String>) -> ConfigError {
            ConfigError::Invalid { field: field.to_string(), message: message.into() }
        }
        fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(field, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(field, format!("must be non-negative and finite, got {v}")))
            }
        }

        positive("sim.sample_time", self.sim.sample_time)?;
        if self.sim.horizon == 0 {
            return Err(bad("sim.horizon", "must be at least 1"));
        }
        non_negative("sim.duration", self.sim.duration)?;
        if self.sim.duration / self.sim.sample_time > 1e8 {
            return Err(bad("sim.duration", "implies more than 1e8 steps"));
        }

        if self.uav.count == 0 {
            return Err(bad("uav.count", "must be at least 1"));
        }
        positive("uav.radius", self.uav.radius)?;
        positive("uav.v_bar", self.uav.v_bar)?;
        positive("uav.w_bar", self.uav.w_bar)?;
        positive("uav.init_radius", self.uav.init_radius)?;
        non_negative("uav.ref_radius", self.uav.ref_radius)?;
        positive("uav.cluster_radius", self.uav.cluster_radius)?;
        positive("uav.sensing_radius", self.uav.sensing_radius)?;

        let o = &self.obstacles;
        positive("obstacles.radius", o.radius)?;
        for (i, c) in o.center.iter().enumerate() {
            if !c.is_finite() {
                return Err(bad(&format!("obstacles.center[{i}]"), "must be finite"));
            }
        }
        match o.kind {
            ObstacleKind::None => {}
            ObstacleKind::TwoRing => {
                if o.count == 0 || !o.count.is_multiple_of(2) {
                    return Err(bad("obstacles.count", format!("two-ring needs a positive even count, got {}", o.count)));
                }
                if o.ring_radii.len() != 2 {
                    return Err(bad("obstacles.ring_radii", format!("needs 2 radii, got {}", o.ring_radii.len())));
                }
                for r in &o.ring_radii {
                    positive("obstacles.ring_radii", *r)?;
                }
                positive("obstacles.cover_radius", o.cover_radius)?;
                positive("obstacles.angular_velocity", o.angular_velocity)?;
                if !o.initial_phase.is_finite() {
                    return Err(bad("obstacles.initial_phase", "must be finite"));
                }
            }
            ObstacleKind::Circular | ObstacleKind::Lemniscate | ObstacleKind::Butterfly3d => {
                if o.count == 0 {
                    return Err(bad("obstacles.count", "must be at least 1"));
                }
                positive("obstacles.scale", o.scale)?;
                positive("obstacles.omega", o.omega)?;
                non_negative("obstacles.z_amplitude", o.z_amplitude)?;
            }
        }

        let a = &self.avoidance;
        if a.facets < 6 {
            return Err(bad("avoidance.facets", format!("must be at least 6, got {}", a.facets)));
        }
        if a.layout == FacetLayout::AxisAligned && a.facets != 6 {
            return Err(bad("avoidance.facets", "axis-aligned layout needs exactly 6"));
        }
        non_negative("avoidance.obstacle_margin", a.obstacle_margin)?;
        non_negative("avoidance.agent_margin", a.agent_margin)?;

        non_negative("noise.sigma0", self.noise.sigma0)?;
        non_negative("noise.kappa", self.noise.kappa)?;

        let k = &self.koopman;
        if let Some(d) = k.dims {
            if !(1..=3).contains(&d) {
                return Err(bad("koopman.dims", format!("must be 1, 2 or 3, got {d}")));
            }
        }
        if k.buffer_capacity < 2 {
            return Err(bad("koopman.buffer_capacity", "must be at least 2"));
        }
        if let Some(m) = k.min_samples {
            if m < 2 || m > k.buffer_capacity {
                return Err(bad("koopman.min_samples", format!("must lie in 2..=buffer_capacity, got {m}")));
            }
        }
        if let Ridge::Fixed(l) = k.ridge {
            non_negative("koopman.ridge", l)?;
        }
        positive("koopman.divergence_bound", k.divergence_bound)?;
        Ok(())
    }
}

const ALIASES: &[(&str, &str)] = &[
    ("T", "sim.sample_time"),
    ("N", "sim.horizon"),
    ("duration", "sim.duration"),
    ("N_r", "uav.count"),
    ("N_obs", "obstacles.count"),
    ("r_rob", "uav.radius"),
    ("r_obs", "obstacles.radius"),
    ("v_bar", "uav.v_bar"),
    ("w_bar", "uav.w_bar"),
    ("r_cl", "uav.cluster_radius"),
    ("r_sense", "uav.sensing_radius"),
    ("r_init", "uav.init_radius"),
    ("r_ref", "uav.ref_radius"),
    ("r_ring", "obstacles.ring_radii"),
    ("r_cov", "obstacles.cover_radius"),
    ("gamma", "avoidance.facets"),
];

fn canonical_key(key: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == key).map(|(_, k)| *k).unwrap_or(key)
}

/// Parses a value literal: JSON if it parses, otherwise the bare text as a string.
fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Layered configuration document: a JSON tree of a full, valid config that
/// accepts overrides only at paths that already exist.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    tree: Value,
}

impl ConfigBuilder {
    pub fn new(base: &ScenarioConfig) -> Self {
        Self { tree: serde_json::to_value(base).expect("config serializes") }
    }

    /// Sets one dotted key, checking that it exists and that the result still
    /// deserializes.
    pub fn set(&mut self, key: &str, value: Value, line: Option<usize>) -> Result<(), ConfigError> {
        let key = canonical_key(key.trim());
        let mut node = &mut self.tree;
        for part in key.split('.') {
            node = match node {
                Value::Object(map) if map.contains_key(part) => map.get_mut(part).expect("checked"),
                _ => return Err(ConfigError::UnknownKey { key: key.to_string(), line }),
            };
        }
        let previous = std::mem::replace(node, value);
        if let Err(e) = serde_json::from_value::<ScenarioConfig>(self.tree.clone()) {
            // Restore so the builder stays consistent for callers that recover.
            let mut node = &mut self.tree;
            for part in key.split('.') {
                node = node.get_mut(part).expect("path exists");
            }
            *node = previous;
            return Err(ConfigError::Type { key: key.to_string(), line, message: e.to_string() });
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Type {
            key: assignment.to_string(),
            line: None,
            message: "expected key=value".into(),
        })?;
        self.set(key.trim(), parse_value(value.trim()), None)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(ConfigError::Parse { line: line_no, message: format!("bad section name `{name}`") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Parse { line: line_no, message: "empty key".into() });
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            self.set(&full, parse_value(value.trim()), Some(line_no))?;
        }
        Ok(())
    }

    pub fn apply_json(&mut self, text: &str) -> Result<(), ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let Value::Object(mut map) = value else {
            return Err(ConfigError::Parse { line: 1, message: "top level must be an object".into() });
        };
        // A run manifest carries the resolved config under `config`.
        if let Some(Value::Object(cfg)) = map.remove("config") {
            map = cfg;
        }
        self.merge_object("", map)
    }

    fn merge_object(&mut self, prefix: &str, map: Map<String, Value>) -> Result<(), ConfigError> {
        for (k, v) in map {
            let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
            match v {
                Value::Object(inner) if self.is_object_at(&key) => self.merge_object(&key, inner)?,
                other => self.set(&key, other, None)?,
            }
        }
        Ok(())
    }

    fn is_object_at(&self, key: &str) -> bool {
        let mut node = &self.tree;
        for part in canonical_key(key).split('.') {
            match node.get(part) {
                Some(n) => node = n,
                None => return false,
            }
        }
        node.is_object()
    }

    /// Deserializes, fills defaults and validates.
    pub fn build(self) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_value(self.tree).map_err(|e| ConfigError::Type {
            key: "<root>".into(),
            line: None,
            message: e.to_string(),
        })?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses configuration text on top of `base`. Input starting with `{` is JSON.
pub fn parse_config_with_base(text: &str, base: &ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut b = ConfigBuilder::new(base);
    if text.trim_start().starts_with('{') {
        b.apply_json(text)?;
    } else {
        b.apply_text(text)?;
    }
    b.build()
}

/// Parses configuration text over the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_config_with_base(text, &ScenarioConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ScenarioConfig::default().resolved());
        assert_eq!(c.koopman.dims, Some(2));
        assert_eq!(c.koopman.min_samples, Some(13));
    }

    #[test]
    fn negative_sample_time_is_invalid() {
        let err = parse_config("T=-1").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "sim.sample_time"), "{err}");
    }

    #[test]
    fn avoidance_preset_values() {
        let c = ScenarioConfig::preset("paper-avoidance").unwrap();
        assert_eq!(c.sim.sample_time, 0.01);
        assert_eq!(c.sim.horizon, 4);
        assert_eq!(c.sim.duration, 35.0);
        assert_eq!(c.uav.count, 4);
        assert_eq!(c.obstacles.count, 8);
        assert_eq!(c.uav.radius, 0.1125);
        assert_eq!(c.obstacles.radius, 0.1125);
        assert_eq!(c.uav.v_bar, 0.2);
        assert_eq!(c.uav.w_bar, 0.6);
        assert!((c.uav.cluster_radius - 0.9).abs() < 1e-15);
        assert_eq!(c.uav.init_radius, 3.5);
        assert_eq!(c.uav.ref_radius, 0.5);
        assert_eq!(c.obstacles.ring_radii, vec![2.5, 1.5]);
        assert_eq!(c.obstacles.cover_radius, 0.3);
        assert_eq!(c.obstacles.angular_velocity, 0.15);
    }

    #[test]
    fn sections_aliases_and_comments() {
        let text = "# scenario\nseed = 42\nN = 3  # shorter horizon\n[obstacles]\nkind = circular\ncount = 1\ncenter = [1, 2, 0]\n[noise]\nobserver = \"uav\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.sim.horizon, 3);
        assert_eq!(c.obstacles.kind, ObstacleKind::Circular);
        assert_eq!(c.obstacles.center, [1.0, 2.0, 0.0]);
        assert_eq!(c.noise.observer, Observer::Uav);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("seed = 1\nsim.samples = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "sim.samples".into(), line: Some(2) });
    }

    #[test]
    fn type_error_reports_key() {
        let err = parse_config("sim.horizon = \"four\"").unwrap_err();
        assert!(matches!(err, ConfigError::Type { ref key, line: Some(1), .. } if key == "sim.horizon"), "{err}");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_config("just words"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[sim\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("= 3"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn json_partial_and_unknown() {
        let c = parse_config(r#"{"sim": {"horizon": 2}, "koopman": {"ridge": 0.0}}"#).unwrap();
        assert_eq!(c.sim.horizon, 2);
        assert_eq!(c.koopman.ridge, Ridge::Fixed(0.0));
        let err = parse_config(r#"{"sim": {"bogus": 1}}"#).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "sim.bogus".into(), line: None });
    }

    #[test]
    fn ridge_accepts_auto_and_numbers() {
        assert_eq!(parse_config("koopman.ridge = auto").unwrap().koopman.ridge, Ridge::AUTO);
        assert_eq!(parse_config("koopman.ridge = 1e-6").unwrap().koopman.ridge, Ridge::Fixed(1e-6));
        assert!(parse_config("koopman.ridge = -1").is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        for name in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap().resolved();
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(parse_config(&json).unwrap(), c);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(ScenarioConfig::preset("nope"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn butterfly_tracks_three_coordinates() {
        let c = ScenarioConfig::preset("prediction-butterfly").unwrap().resolved();
        assert_eq!(c.koopman.dims, Some(3));
        assert_eq!(c.koopman.min_samples, Some(19));
    }

    #[test]
    fn validation_catches_ring_mistakes() {
        assert!(parse_config("N_obs = 7").is_err());
        assert!(parse_config("r_ring = [2.5]").is_err());
        assert!(parse_config("avoidance.layout = axis-aligned").is_err());
        assert!(parse_config("avoidance.layout = axis-aligned\ngamma = 6").is_ok());
    }
}
