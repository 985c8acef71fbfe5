//! Hierarchical multi-object tracker.
//!
//! Each frame follows predict / associate / update: constant-velocity
//! prediction, confidence-staged assignment over a descending threshold
//! ladder (high-confidence detections claim tracks first), EMA velocity
//! update on match, velocity decay and coasting while unmatched, spawn for
//! confident leftovers, termination past a maximum age.
//!
//! The association cost is squared center distance plus a scale penalty,
//! with hard class and distance gates realized as a large sentinel cost.

use crate::assignment::{solve_assignment, CostMatrix};
use crate::bbox::BBox;

/// One frame observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f32,
    pub class_id: i32,
}

/// Persistent object hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub id: u32,
    /// Box center; kept in sync with `bbox`.
    pub position: (f32, f32),
    /// Pixels per frame.
    pub velocity: (f32, f32),
    pub bbox: BBox,
    /// Consecutive unmatched frames since the last match (0 right after a
    /// match or spawn).
    pub age: u32,
    pub class_id: i32,
    pub score: f32,
    /// True when the current state was propagated by prediction rather than
    /// confirmed by a detection this frame.
    pub coasted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Strictly decreasing confidence ladder in (0,1).
    pub thresholds: Vec<f32>,
    /// EMA smoothing factor for velocity updates.
    pub alpha: f32,
    /// Velocity decay rate per unmatched frame.
    pub beta: f32,
    /// Weight of the scale-dissimilarity term.
    pub lambda_size: f32,
    /// Tracks older than this (consecutive unmatched frames) terminate.
    pub max_age: u32,
    /// Minimum score for spawning a new track.
    pub tau_new: f32,
    /// Gate: pairs with squared center distance above `gate_factor` times
    /// the track's box area are forbidden.
    pub gate_factor: f32,
    /// Cost assigned to forbidden pairs.
    pub sentinel_cost: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            thresholds: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            alpha: 0.7,
            beta: 0.1,
            lambda_size: 100.0,
            max_age: 30,
            tau_new: 0.7,
            gate_factor: 2.0,
            sentinel_cost: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid tracker config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.thresholds.is_empty() {
            return Err(ConfigError("threshold ladder is empty".into()));
        }
        for w in self.thresholds.windows(2) {
            if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Greater) {
                return Err(ConfigError(format!(
                    "thresholds must strictly decrease, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self
            .thresholds
            .iter()
            .any(|t| !t.is_finite() || *t <= 0.0 || *t >= 1.0)
        {
            return Err(ConfigError("thresholds must lie in (0,1)".into()));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return Err(ConfigError("alpha must lie in (0,1]".into()));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(ConfigError("beta must be >= 0".into()));
        }
        if self.lambda_size.is_nan() || self.lambda_size < 0.0 {
            return Err(ConfigError("lambda_size must be >= 0".into()));
        }
        if self.max_age == 0 {
            return Err(ConfigError("max_age must be >= 1".into()));
        }
        if !self.tau_new.is_finite() {
            return Err(ConfigError("tau_new must be finite".into()));
        }
        if self.gate_factor.is_nan() || self.gate_factor <= 0.0 {
            return Err(ConfigError("gate_factor must be > 0".into()));
        }
        if self.sentinel_cost.is_nan() || self.sentinel_cost <= 0.0 {
            return Err(ConfigError("sentinel_cost must be > 0".into()));
        }
        Ok(())
    }
}

/// Constant-velocity prediction: centers move by one velocity step, boxes
/// translate rigidly, sizes unchanged. Pure; the stored track state is the
/// caller's to keep.
pub fn predict_tracks(tracks: &[Track]) -> Vec<Track> {
    tracks
        .iter()
        .map(|t| {
            let (vx, vy) = t.velocity;
            Track {
                position: (t.position.0 + vx, t.position.1 + vy),
                bbox: t.bbox.translated(vx, vy),
                ..*t
            }
        })
        .collect()
}

/// Association cost between a detection and a predicted track:
/// squared center distance plus `lambda_size` times the relative area
/// difference. Class mismatches and gate violations get the sentinel.
pub fn compute_cost(
    detections: &[Detection],
    predicted: &[Track],
    cfg: &TrackerConfig,
) -> CostMatrix {
    CostMatrix::from_fn(
        detections.len(),
        predicted.len(),
        cfg.sentinel_cost,
        |di, ti| {
            let d = &detections[di];
            let t = &predicted[ti];
            if d.class_id != t.class_id {
                return cfg.sentinel_cost;
            }
            let (dx, dy) = d.bbox.center();
            let spatial = (dx as f64 - t.position.0 as f64).powi(2)
                + (dy as f64 - t.position.1 as f64).powi(2);
            let track_area = t.bbox.area() as f64;
            if spatial > cfg.gate_factor as f64 * track_area {
                return cfg.sentinel_cost;
            }
            let det_area = d.bbox.area() as f64;
            let size = (det_area - track_area).abs() / det_area.max(track_area);
            spatial + cfg.lambda_size as f64 * size
        },
    )
}

/// Match update: position snaps to the detection center, velocity is the
/// EMA of the old velocity and the displacement from the *stored*
/// (pre-prediction) position, age resets.
pub fn update_matched(track: &Track, detection: &Detection, cfg: &TrackerConfig) -> Track {
    let (px, py) = track.position;
    let (nx, ny) = detection.bbox.center();
    let alpha = cfg.alpha;
    Track {
        id: track.id,
        position: (nx, ny),
        velocity: (
            (1.0 - alpha) * track.velocity.0 + alpha * (nx - px),
            (1.0 - alpha) * track.velocity.1 + alpha * (ny - py),
        ),
        bbox: detection.bbox,
        age: 0,
        class_id: track.class_id,
        score: detection.score,
        coasted: false,
    }
}

/// Unmatched handling: age increments, velocity decays by
/// `max(0.5, 1 - beta * age)` (post-increment age), the track coasts one
/// decayed velocity step. Returns `None` once the age exceeds `max_age`.
pub fn handle_unmatched(track: &Track, cfg: &TrackerConfig) -> Option<Track> {
    let age = track.age + 1;
    if age > cfg.max_age {
        return None;
    }
    let factor = (1.0 - cfg.beta * age as f32).max(0.5);
    let vx = track.velocity.0 * factor;
    let vy = track.velocity.1 * factor;
    Some(Track {
        position: (track.position.0 + vx, track.position.1 + vy),
        velocity: (vx, vy),
        bbox: track.bbox.translated(vx, vy),
        age,
        coasted: true,
        ..*track
    })
}

/// Spawns one track per detection scoring above `tau_new`, with zero
/// velocity and fresh strictly increasing ids.
pub fn spawn_tracks(
    detections: &[&Detection],
    cfg: &TrackerConfig,
    next_id: &mut u32,
) -> Vec<Track> {
    let mut spawned = Vec::new();
    for d in detections {
        if d.score > cfg.tau_new {
            let id = *next_id;
            *next_id += 1;
            spawned.push(Track {
                id,
                position: d.bbox.center(),
                velocity: (0.0, 0.0),
                bbox: d.bbox,
                age: 0,
                class_id: d.class_id,
                score: d.score,
                coasted: false,
            });
        }
    }
    spawned
}

/// Sequential tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u32,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances one frame. `detections` must all belong to that frame.
    ///
    /// Surviving tracks keep their relative order; newly spawned tracks are
    /// appended in descending detection confidence.
    pub fn step(&mut self, detections: &[Detection]) -> &[Track] {
        // Sort by confidence, stabilized by input order.
        let mut dets: Vec<Detection> = detections.to_vec();
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));

        let predicted = predict_tracks(&self.tracks);
        let mut updated: Vec<Option<Track>> = vec![None; self.tracks.len()];
        let mut unmatched_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let mut unmatched_dets: Vec<usize> = (0..dets.len()).collect();

        for stage in 0..self.cfg.thresholds.len() {
            let tau = self.cfg.thresholds[stage];
            let stage_dets: Vec<usize> = unmatched_dets
                .iter()
                .copied()
                .filter(|&d| dets[d].score > tau)
                .collect();
            if stage_dets.is_empty() {
                continue;
            }
            if unmatched_tracks.is_empty() {
                break;
            }
            let stage_det_objs: Vec<Detection> = stage_dets.iter().map(|&d| dets[d]).collect();
            let stage_trk_objs: Vec<Track> =
                unmatched_tracks.iter().map(|&t| predicted[t]).collect();
            let costs = compute_cost(&stage_det_objs, &stage_trk_objs, &self.cfg);
            let matches = solve_assignment(&costs);

            let mut matched_dets = Vec::new();
            let mut matched_trks = Vec::new();
            for (ri, ci) in matches {
                let d_idx = stage_dets[ri];
                let t_idx = unmatched_tracks[ci];
                updated[t_idx] = Some(update_matched(&self.tracks[t_idx], &dets[d_idx], &self.cfg));
                matched_dets.push(d_idx);
                matched_trks.push(t_idx);
            }
            unmatched_dets.retain(|d| !matched_dets.contains(d));
            unmatched_tracks.retain(|t| !matched_trks.contains(t));
        }

        let spawn_candidates: Vec<&Detection> = unmatched_dets.iter().map(|&d| &dets[d]).collect();
        let spawned = spawn_tracks(&spawn_candidates, &self.cfg, &mut self.next_id);

        for &t_idx in &unmatched_tracks {
            updated[t_idx] = handle_unmatched(&self.tracks[t_idx], &self.cfg);
        }

        let mut next: Vec<Track> = updated.into_iter().flatten().collect();
        next.extend(spawned);
        self.tracks = next;
        &self.tracks
    }
}
