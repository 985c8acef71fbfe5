//! Key-value configuration files.
//!
//! Format: UTF-8 `key = value` lines, `#` starts a comment, blank lines are
//! skipped. Every key is optional and falls back to the documented default;
//! unknown keys are errors, as are duplicates (except the repeatable
//! `occlusion` key).

use std::collections::BTreeSet;
use std::fmt;

use crate::simulator::{CorruptionModel, OcclusionEvent, ScenarioSpec};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.msg),
            None => write!(f, "config: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

fn cerr(line: Option<usize>, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        msg: msg.into(),
    }
}

/// Parsed `key = value` pairs, in file order.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pairs: Vec<(String, String, usize)>,
    consumed: Vec<bool>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let eq = line
                .find('=')
                .ok_or_else(|| cerr(Some(no), "expected 'key = value'"))?;
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(cerr(Some(no), "empty key"));
            }
            pairs.push((key.to_string(), value.to_string(), no));
        }
        let consumed = vec![false; pairs.len()];
        Ok(KvFile { pairs, consumed })
    }

    /// Takes the single occurrence of `key`, if present. Duplicate
    /// occurrences are an error.
    pub fn take(&mut self, key: &str) -> Result<Option<(String, usize)>, ConfigError> {
        let mut found: Option<(String, usize)> = None;
        for (i, (k, v, line)) in self.pairs.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(cerr(Some(*line), format!("duplicate key '{key}'")));
                }
                found = Some((v.clone(), *line));
                self.consumed[i] = true;
            }
        }
        Ok(found)
    }

    /// Takes every occurrence of a repeatable key, in file order.
    pub fn take_all(&mut self, key: &str) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, (k, v, line)) in self.pairs.iter().enumerate() {
            if k == key {
                out.push((v.clone(), *line));
                self.consumed[i] = true;
            }
        }
        out
    }

    /// Errors if any key was never consumed by a typed loader.
    pub fn finish(&self) -> Result<(), ConfigError> {
        for (i, (k, _, line)) in self.pairs.iter().enumerate() {
            if !self.consumed[i] {
                return Err(cerr(Some(*line), format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.pairs.iter().map(|(k, _, _)| k.as_str()).collect()
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| {
        cerr(
            Some(line),
            format!("'{value}' is not a valid value for '{key}'"),
        )
    })
}

macro_rules! set_field {
    ($kv:expr, $key:literal, $slot:expr) => {
        if let Some((v, line)) = $kv.take($key)? {
            $slot = parse_num(&v, line, $key)?;
        }
    };
}

/// Loads tracker settings; every key optional, defaults as in
/// [`TrackerConfig::default`]. Keys: `thresholds` (comma-separated,
/// strictly decreasing), `alpha`, `beta`, `lambda_size`, `max_age`,
/// `tau_new`, `gate_factor`, `sentinel_cost`.
pub fn tracker_config_from_kv(kv: &mut KvFile) -> Result<TrackerConfig, ConfigError> {
    let mut cfg = TrackerConfig::default();
    if let Some((v, line)) = kv.take("thresholds")? {
        let mut ladder = Vec::new();
        for part in v.split(',') {
            ladder.push(parse_num::<f32>(part.trim(), line, "thresholds")?);
        }
        cfg.thresholds = ladder;
    }
    set_field!(kv, "alpha", cfg.alpha);
    set_field!(kv, "beta", cfg.beta);
    set_field!(kv, "lambda_size", cfg.lambda_size);
    set_field!(kv, "max_age", cfg.max_age);
    set_field!(kv, "tau_new", cfg.tau_new);
    set_field!(kv, "gate_factor", cfg.gate_factor);
    set_field!(kv, "sentinel_cost", cfg.sentinel_cost);
    cfg.validate().map_err(|e| cerr(None, e.to_string()))?;
    Ok(cfg)
}

/// Loads scenario settings. Keys: `objects`, `frames`, `arena_w`,
/// `arena_h`, `speed_min`, `speed_max`, `box_min`, `box_max`, `spawn_min`,
/// `spawn_max`, `despawn_min`, `despawn_max`, `occlusion` (repeatable,
/// `id:start:duration`), `occlusion_fade`, `jitter_std`, `seed`.
pub fn scenario_from_kv(kv: &mut KvFile) -> Result<ScenarioSpec, ConfigError> {
    let mut spec = ScenarioSpec::default();
    set_field!(kv, "objects", spec.num_objects);
    if let Some((v, line)) = kv.take("frames")? {
        spec.num_frames = parse_num(&v, line, "frames")?;
        // Unless windows are given explicitly, objects live the whole run.
        spec.despawn_window = (spec.num_frames, spec.num_frames);
    }
    set_field!(kv, "arena_w", spec.arena_w);
    set_field!(kv, "arena_h", spec.arena_h);
    set_field!(kv, "speed_min", spec.speed_range.0);
    set_field!(kv, "speed_max", spec.speed_range.1);
    set_field!(kv, "box_min", spec.box_size_range.0);
    set_field!(kv, "box_max", spec.box_size_range.1);
    set_field!(kv, "spawn_min", spec.spawn_window.0);
    set_field!(kv, "spawn_max", spec.spawn_window.1);
    set_field!(kv, "despawn_min", spec.despawn_window.0);
    set_field!(kv, "despawn_max", spec.despawn_window.1);
    set_field!(kv, "occlusion_fade", spec.occlusion_fade);
    set_field!(kv, "jitter_std", spec.jitter_std);
    set_field!(kv, "seed", spec.seed);
    for (v, line) in kv.take_all("occlusion") {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(cerr(Some(line), "occlusion must be 'id:start:duration'"));
        }
        spec.occlusions.push(OcclusionEvent {
            object_id: parse_num(parts[0].trim(), line, "occlusion id")?,
            start: parse_num(parts[1].trim(), line, "occlusion start")?,
            duration: parse_num(parts[2].trim(), line, "occlusion duration")?,
        });
    }
    spec.validate().map_err(|e| cerr(None, e.to_string()))?;
    Ok(spec)
}

/// Loads the detector corruption model (arena bounds come from the
/// scenario). Keys: `center_noise`, `size_noise`, `miss_rate`, `fp_rate`,
/// `clean_conf_mean`, `clean_conf_std`, `degraded_conf_mean`,
/// `degraded_conf_std`, `degrade_rate`, `degrade_dist`, `fp_box_min`,
/// `fp_box_max`, `det_seed`.
pub fn corruption_from_kv(
    kv: &mut KvFile,
    arena: (f32, f32),
    default_seed: u64,
) -> Result<CorruptionModel, ConfigError> {
    let mut model = CorruptionModel {
        arena_w: arena.0,
        arena_h: arena.1,
        seed: default_seed,
        ..Default::default()
    };
    set_field!(kv, "center_noise", model.center_noise_std);
    set_field!(kv, "size_noise", model.size_noise_std);
    set_field!(kv, "miss_rate", model.miss_rate);
    set_field!(kv, "fp_rate", model.fp_rate);
    set_field!(kv, "clean_conf_mean", model.clean_conf.0);
    set_field!(kv, "clean_conf_std", model.clean_conf.1);
    set_field!(kv, "degraded_conf_mean", model.degraded_conf.0);
    set_field!(kv, "degraded_conf_std", model.degraded_conf.1);
    set_field!(kv, "degrade_rate", model.degrade_rate);
    set_field!(kv, "degrade_dist", model.degrade_center_dist);
    set_field!(kv, "fp_box_min", model.fp_box_range.0);
    set_field!(kv, "fp_box_max", model.fp_box_range.1);
    set_field!(kv, "det_seed", model.seed);
    model.validate().map_err(|e| cerr(None, e.to_string()))?;
    Ok(model)
}

/// Settings for the fusion-statistics demo. Keys: `channels`, `height`,
/// `width`, `blobs`, `sigma`, `alpha_r`, `steps`, `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseStatsConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub blobs: usize,
    pub sigma: f32,
    pub alpha: f32,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FuseStatsConfig {
    fn default() -> Self {
        FuseStatsConfig {
            channels: 8,
            height: 24,
            width: 24,
            blobs: 4,
            sigma: 0.1,
            alpha: 0.5,
            steps: 3,
            seed: 0,
        }
    }
}

pub fn fuse_stats_from_kv(kv: &mut KvFile) -> Result<FuseStatsConfig, ConfigError> {
    let mut cfg = FuseStatsConfig::default();
    set_field!(kv, "channels", cfg.channels);
    set_field!(kv, "height", cfg.height);
    set_field!(kv, "width", cfg.width);
    set_field!(kv, "blobs", cfg.blobs);
    set_field!(kv, "sigma", cfg.sigma);
    set_field!(kv, "alpha_r", cfg.alpha);
    set_field!(kv, "steps", cfg.steps);
    set_field!(kv, "seed", cfg.seed);
    if cfg.channels == 0 || cfg.height == 0 || cfg.width == 0 || cfg.steps == 0 {
        return Err(cerr(None, "channels, height, width, steps must be >= 1"));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) || cfg.sigma.is_nan() || cfg.sigma < 0.0 {
        return Err(cerr(
            None,
            "alpha_r must lie in [0,1] and sigma must be >= 0",
        ));
    }
    Ok(cfg)
}
