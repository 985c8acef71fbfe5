//! Deterministic synthetic tracking scenarios.
//!
//! `generate_scenario` produces ground-truth trajectories: constant-velocity
//! motion with optional positional jitter, reflected at the arena bounds so
//! boxes always stay inside. Objects exist between a spawn and a despawn
//! frame; during an occlusion window the box is absent, and for a few frames
//! on either side of a window the entry is marked partially visible.
//!
//! `corrupt_detections` turns ground truth into a detector-like stream:
//! boxes are independently dropped, jittered in center and size, and given a
//! confidence drawn from a "clean" distribution, or from a degraded one when
//! the entry is partially visible, heavily displaced, or randomly selected.
//! Poisson-distributed false positives are added per frame with degraded
//! confidence. Both stages are pure functions of (inputs, seed).

use std::collections::BTreeMap;
use std::fmt;

use crate::bbox::BBox;
use crate::metrics::{FrameAnnotations, GtEntry};
use crate::rng::Rng;
use crate::tracker::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError(pub String);

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario: {}", self.0)
    }
}

impl std::error::Error for ScenarioError {}

/// A span of frames `[start, start + duration)` during which one object's
/// ground-truth box is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionEvent {
    pub object_id: u32,
    pub start: u32,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub num_objects: usize,
    pub num_frames: u32,
    pub arena_w: f32,
    pub arena_h: f32,
    /// Speed magnitude range, pixels per frame.
    pub speed_range: (f32, f32),
    /// Box side-length range, pixels (width and height drawn independently).
    pub box_size_range: (f32, f32),
    /// Per-object entry frame drawn uniformly from this inclusive window.
    pub spawn_window: (u32, u32),
    /// Per-object exit frame drawn uniformly from this inclusive window;
    /// the object exists on frames [entry, exit).
    pub despawn_window: (u32, u32),
    pub occlusions: Vec<OcclusionEvent>,
    /// Frames adjacent to an occlusion window marked partially visible.
    pub occlusion_fade: u32,
    /// Std of per-frame positional jitter, pixels.
    pub jitter_std: f32,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            num_objects: 8,
            num_frames: 100,
            arena_w: 640.0,
            arena_h: 480.0,
            speed_range: (1.0, 3.0),
            box_size_range: (16.0, 32.0),
            spawn_window: (0, 0),
            despawn_window: (100, 100),
            occlusions: Vec::new(),
            occlusion_fade: 2,
            jitter_std: 0.0,
            seed: 0,
        }
    }
}

/// Visibility recorded for entries inside an occlusion fade margin.
pub const FADED_VISIBILITY: f32 = 0.3;

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.num_objects == 0 {
            return Err(ScenarioError("num_objects must be >= 1".into()));
        }
        if self.num_frames == 0 {
            return Err(ScenarioError("num_frames must be >= 1".into()));
        }
        if !(self.arena_w > 0.0 && self.arena_h > 0.0) {
            return Err(ScenarioError("arena dimensions must be positive".into()));
        }
        let (lo, hi) = self.speed_range;
        if !(0.0 <= lo && lo <= hi) {
            return Err(ScenarioError(format!("bad speed range {lo}..{hi}")));
        }
        let (lo, hi) = self.box_size_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(ScenarioError(format!("bad box size range {lo}..{hi}")));
        }
        if hi >= self.arena_w.min(self.arena_h) {
            return Err(ScenarioError("boxes must be smaller than the arena".into()));
        }
        if self.spawn_window.0 > self.spawn_window.1
            || self.despawn_window.0 > self.despawn_window.1
        {
            return Err(ScenarioError("windows must be lo <= hi".into()));
        }
        if self.spawn_window.1 > self.despawn_window.0 {
            return Err(ScenarioError(
                "spawn window must end before the despawn window starts".into(),
            ));
        }
        if self.despawn_window.1 > self.num_frames {
            return Err(ScenarioError("despawn window exceeds num_frames".into()));
        }
        if self.jitter_std.is_nan() || self.jitter_std < 0.0 {
            return Err(ScenarioError("jitter_std must be >= 0".into()));
        }
        for ev in &self.occlusions {
            if ev.object_id == 0 || ev.object_id as usize > self.num_objects {
                return Err(ScenarioError(format!(
                    "occlusion references unknown object {}",
                    ev.object_id
                )));
            }
            if ev.start + ev.duration > self.num_frames {
                return Err(ScenarioError(format!(
                    "occlusion {}..{} outside the frame range",
                    ev.start,
                    ev.start + ev.duration
                )));
            }
        }
        Ok(())
    }
}

/// Reflects `p` into [lo, hi], flipping `v`'s sign once per bounce.
fn reflect(mut p: f32, lo: f32, hi: f32, v: &mut f32) -> f32 {
    debug_assert!(lo <= hi);
    for _ in 0..64 {
        if p < lo {
            p = 2.0 * lo - p;
            *v = -*v;
        } else if p > hi {
            p = 2.0 * hi - p;
            *v = -*v;
        } else {
            return p;
        }
    }
    // Pathologically fast object; pin it inside.
    p.clamp(lo, hi)
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<FrameAnnotations, ScenarioError> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut gt = FrameAnnotations::default();
    for f in 0..spec.num_frames {
        gt.frames.insert(f, Vec::new());
    }

    for obj in 0..spec.num_objects {
        let id = obj as u32 + 1;
        let w = rng.uniform(spec.box_size_range.0 as f64, spec.box_size_range.1 as f64) as f32;
        let h = rng.uniform(spec.box_size_range.0 as f64, spec.box_size_range.1 as f64) as f32;
        let entry = rng.uniform_u32(spec.spawn_window.0, spec.spawn_window.1);
        let exit = rng.uniform_u32(spec.despawn_window.0, spec.despawn_window.1);
        let (x_lo, x_hi) = (w / 2.0, spec.arena_w - w / 2.0);
        let (y_lo, y_hi) = (h / 2.0, spec.arena_h - h / 2.0);
        let mut cx = rng.uniform(x_lo as f64, x_hi as f64) as f32;
        let mut cy = rng.uniform(y_lo as f64, y_hi as f64) as f32;
        let speed = rng.uniform(spec.speed_range.0 as f64, spec.speed_range.1 as f64);
        let angle = rng.uniform(0.0, std::f64::consts::TAU);
        let mut vx = (speed * angle.cos()) as f32;
        let mut vy = (speed * angle.sin()) as f32;

        let occluded = |f: u32| {
            spec.occlusions
                .iter()
                .any(|ev| ev.object_id == id && f >= ev.start && f < ev.start + ev.duration)
        };
        let faded = |f: u32| {
            spec.occlusions.iter().any(|ev| {
                ev.object_id == id
                    && ((f + spec.occlusion_fade >= ev.start && f < ev.start)
                        || (f >= ev.start + ev.duration
                            && f < ev.start + ev.duration + spec.occlusion_fade))
            })
        };

        for f in 0..spec.num_frames {
            if f >= entry && f < exit && !occluded(f) {
                gt.frames.get_mut(&f).unwrap().push(GtEntry {
                    id,
                    bbox: BBox::from_center(cx, cy, w, h),
                    class_id: 1,
                    visibility: if faded(f) { FADED_VISIBILITY } else { 1.0 },
                });
            }
            cx += vx;
            cy += vy;
            if spec.jitter_std > 0.0 {
                cx += rng.normal_f32() * spec.jitter_std;
                cy += rng.normal_f32() * spec.jitter_std;
            }
            cx = reflect(cx, x_lo, x_hi, &mut vx);
            cy = reflect(cy, y_lo, y_hi, &mut vy);
        }
    }
    Ok(gt)
}

/// Detector noise model applied to ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionModel {
    /// Std of the center jitter, pixels.
    pub center_noise_std: f32,
    /// Std of the relative size jitter.
    pub size_noise_std: f32,
    /// Probability of dropping a true box.
    pub miss_rate: f32,
    /// Expected false positives per frame (Poisson rate).
    pub fp_rate: f64,
    /// Confidence distribution (mean, std) for clean detections.
    pub clean_conf: (f32, f32),
    /// Confidence distribution (mean, std) for degraded detections and
    /// false positives.
    pub degraded_conf: (f32, f32),
    /// Probability that an otherwise clean detection is degraded anyway
    /// (stands in for blur, partial overlap and similar nuisances).
    pub degrade_rate: f32,
    /// Center displacement (pixels) beyond which a detection counts as
    /// heavily noised and draws the degraded confidence.
    pub degrade_center_dist: f32,
    /// Arena bounds for placing false positives.
    pub arena_w: f32,
    pub arena_h: f32,
    /// Side-length range for false-positive boxes.
    pub fp_box_range: (f32, f32),
    pub seed: u64,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        CorruptionModel {
            center_noise_std: 1.0,
            size_noise_std: 0.05,
            miss_rate: 0.05,
            fp_rate: 0.5,
            clean_conf: (0.9, 0.05),
            degraded_conf: (0.35, 0.1),
            degrade_rate: 0.0,
            degrade_center_dist: 3.0,
            arena_w: 640.0,
            arena_h: 480.0,
            fp_box_range: (16.0, 32.0),
            seed: 1,
        }
    }
}

impl CorruptionModel {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(ScenarioError("miss_rate must lie in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.degrade_rate) {
            return Err(ScenarioError("degrade_rate must lie in [0,1]".into()));
        }
        if self.fp_rate.is_nan() || self.fp_rate < 0.0 || self.fp_rate > 100.0 {
            // The Knuth sampler degenerates for large rates.
            return Err(ScenarioError("fp_rate must lie in [0, 100]".into()));
        }
        if self.center_noise_std.is_nan()
            || self.center_noise_std < 0.0
            || self.size_noise_std.is_nan()
            || self.size_noise_std < 0.0
        {
            return Err(ScenarioError("noise stds must be >= 0".into()));
        }
        if self.degrade_center_dist.is_nan() || self.degrade_center_dist < 0.0 {
            return Err(ScenarioError("degrade_center_dist must be >= 0".into()));
        }
        if !(self.arena_w > 0.0 && self.arena_h > 0.0) {
            return Err(ScenarioError("arena dimensions must be positive".into()));
        }
        let (lo, hi) = self.fp_box_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(ScenarioError(format!("bad fp box range {lo}..{hi}")));
        }
        Ok(())
    }
}

fn clamp_conf(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}

pub fn corrupt_detections(
    gt: &FrameAnnotations,
    model: &CorruptionModel,
) -> Result<BTreeMap<u32, Vec<Detection>>, ScenarioError> {
    model.validate()?;
    let mut rng = Rng::new(model.seed);
    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();

    for (&frame, entries) in &gt.frames {
        let dets = out.entry(frame).or_default();
        for e in entries {
            if rng.chance(model.miss_rate as f64) {
                continue;
            }
            let (dx, dy) = if model.center_noise_std > 0.0 {
                (
                    rng.normal_f32() * model.center_noise_std,
                    rng.normal_f32() * model.center_noise_std,
                )
            } else {
                (0.0, 0.0)
            };
            let (fw, fh) = if model.size_noise_std > 0.0 {
                (
                    (1.0 + rng.normal_f32() * model.size_noise_std).max(0.05),
                    (1.0 + rng.normal_f32() * model.size_noise_std).max(0.05),
                )
            } else {
                (1.0, 1.0)
            };
            let (cx, cy) = e.bbox.center();
            let bbox = BBox::from_center(cx + dx, cy + dy, e.bbox.w * fw, e.bbox.h * fh);
            let displaced = (dx * dx + dy * dy).sqrt() > model.degrade_center_dist;
            let degraded = e.visibility < 1.0 || displaced || rng.chance(model.degrade_rate as f64);
            let (mean, std) = if degraded {
                model.degraded_conf
            } else {
                model.clean_conf
            };
            let score = clamp_conf(mean + rng.normal_f32() * std);
            dets.push(Detection {
                frame,
                bbox,
                score,
                class_id: e.class_id,
            });
        }
        let fp_count = rng.poisson(model.fp_rate);
        for _ in 0..fp_count {
            let w = rng.uniform(model.fp_box_range.0 as f64, model.fp_box_range.1 as f64) as f32;
            let h = rng.uniform(model.fp_box_range.0 as f64, model.fp_box_range.1 as f64) as f32;
            let cx = rng.uniform((w / 2.0) as f64, (model.arena_w - w / 2.0) as f64) as f32;
            let cy = rng.uniform((h / 2.0) as f64, (model.arena_h - h / 2.0) as f64) as f32;
            let (mean, std) = model.degraded_conf;
            let score = clamp_conf(mean + rng.normal_f32() * std);
            dets.push(Detection {
                frame,
                bbox: BBox::from_center(cx, cy, w, h),
                score,
                class_id: 1,
            });
        }
    }
    Ok(out)
}
