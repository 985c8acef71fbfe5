//! Tracking evaluation (CLEAR + identity metrics) and feature-map
//! statistics.
//!
//! CLEAR scoring follows the usual per-frame convention: matches from the
//! previous frame persist while their IoU stays at or above the threshold,
//! the remainder is matched by minimum-cost assignment on `1 - IoU`, and
//! FP / FN / identity switches / fragmentations are accumulated per frame.
//! Identity scoring (IDF1) uses a single global trajectory-to-trajectory
//! assignment maximizing the total matched-frame count.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::bbox::BBox;
use crate::tensor::FeatureMap;

/// One ground-truth box. `visibility` is carried through from the gt file
/// (1.0 = fully visible); scoring ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub id: u32,
    pub bbox: BBox,
    pub class_id: i32,
    pub visibility: f32,
}

/// Ground truth for one sequence, frame -> entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameAnnotations {
    pub frames: BTreeMap<u32, Vec<GtEntry>>,
}

impl FrameAnnotations {
    pub fn total_boxes(&self) -> u64 {
        self.frames.values().map(|v| v.len() as u64).sum()
    }
}

/// One emitted hypothesis box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputBox {
    pub id: u32,
    pub bbox: BBox,
    pub score: f32,
}

/// Tracker output for one sequence, frame -> boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackOutput {
    pub frames: BTreeMap<u32, Vec<OutputBox>>,
}

impl TrackOutput {
    pub fn total_boxes(&self) -> u64 {
        self.frames.values().map(|v| v.len() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    /// The same id appears twice within one frame.
    DuplicateId {
        frame: u32,
        id: u32,
        which: &'static str,
    },
    InvalidThreshold(f64),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId { frame, id, which } => {
                write!(f, "duplicate {which} id {id} in frame {frame}")
            }
            Self::InvalidThreshold(t) => write!(f, "iou threshold {t} outside (0,1)"),
        }
    }
}

impl std::error::Error for MetricsError {}

/// Frame-level CLEAR counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClearScores {
    pub mota: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub matches: u64,
    pub gt_total: u64,
}

/// Trajectory-level identity counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdScores {
    pub idf1: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// Combined per-sequence (or aggregate) report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub clear: ClearScores,
    pub id: IdScores,
    pub hyp_total: u64,
}

impl MetricsReport {
    /// Sums counts across sequences and recomputes the ratio metrics.
    pub fn aggregate(reports: &[MetricsReport]) -> MetricsReport {
        let mut out = MetricsReport::default();
        for r in reports {
            out.clear.false_positives += r.clear.false_positives;
            out.clear.false_negatives += r.clear.false_negatives;
            out.clear.id_switches += r.clear.id_switches;
            out.clear.fragmentations += r.clear.fragmentations;
            out.clear.matches += r.clear.matches;
            out.clear.gt_total += r.clear.gt_total;
            out.id.idtp += r.id.idtp;
            out.id.idfp += r.id.idfp;
            out.id.idfn += r.id.idfn;
            out.hyp_total += r.hyp_total;
        }
        out.clear.mota = mota_from_counts(&out.clear);
        out.id.idf1 = idf1_from_counts(&out.id);
        out
    }
}

fn mota_from_counts(c: &ClearScores) -> f64 {
    if c.gt_total == 0 {
        return f64::NAN;
    }
    1.0 - (c.false_positives + c.false_negatives + c.id_switches) as f64 / c.gt_total as f64
}

fn idf1_from_counts(s: &IdScores) -> f64 {
    let denom = 2 * s.idtp + s.idfp + s.idfn;
    if denom == 0 {
        return f64::NAN;
    }
    2.0 * s.idtp as f64 / denom as f64
}

fn check_unique_ids(
    gt: &FrameAnnotations,
    hyp: &TrackOutput,
    iou_threshold: f64,
) -> Result<(), MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(MetricsError::InvalidThreshold(iou_threshold));
    }
    for (&frame, entries) in &gt.frames {
        let mut seen = std::collections::HashSet::new();
        for e in entries {
            if !seen.insert(e.id) {
                return Err(MetricsError::DuplicateId {
                    frame,
                    id: e.id,
                    which: "ground-truth",
                });
            }
        }
    }
    for (&frame, boxes) in &hyp.frames {
        let mut seen = std::collections::HashSet::new();
        for b in boxes {
            if !seen.insert(b.id) {
                return Err(MetricsError::DuplicateId {
                    frame,
                    id: b.id,
                    which: "hypothesis",
                });
            }
        }
    }
    Ok(())
}

/// CLEAR metrics at the given IoU threshold (a pair matches when
/// IoU >= threshold).
pub fn clear_metrics(
    gt: &FrameAnnotations,
    hyp: &TrackOutput,
    iou_threshold: f64,
) -> Result<ClearScores, MetricsError> {
    check_unique_ids(gt, hyp, iou_threshold)?;
    let mut scores = ClearScores {
        gt_total: gt.total_boxes(),
        ..Default::default()
    };

    // gt id -> hypothesis id of the last confirmed match (across frames).
    let mut last_match: HashMap<u32, u32> = HashMap::new();
    // gt id -> (was matched at some earlier presence, was matched at the
    // most recent presence). Drives fragmentation counting.
    let mut coverage: HashMap<u32, (bool, bool)> = HashMap::new();

    let frames: std::collections::BTreeSet<u32> =
        gt.frames.keys().chain(hyp.frames.keys()).copied().collect();
    let empty_gt: Vec<GtEntry> = Vec::new();
    let empty_hyp: Vec<OutputBox> = Vec::new();

    for frame in frames {
        let gts = gt.frames.get(&frame).unwrap_or(&empty_gt);
        let hyps = hyp.frames.get(&frame).unwrap_or(&empty_hyp);

        let mut gt_matched = vec![false; gts.len()];
        let mut hyp_matched = vec![false; hyps.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        // Continuity: keep last frame's correspondence while still valid.
        for (gi, g) in gts.iter().enumerate() {
            if let Some(&h_id) = last_match.get(&g.id) {
                if let Some(hi) = hyps.iter().position(|h| h.id == h_id) {
                    if !hyp_matched[hi] && g.bbox.iou(&hyps[hi].bbox) >= iou_threshold {
                        gt_matched[gi] = true;
                        hyp_matched[hi] = true;
                        pairs.push((gi, hi));
                    }
                }
            }
        }

        // Optimal assignment over the remainder on cost 1 - IoU.
        let free_gt: Vec<usize> = (0..gts.len()).filter(|&i| !gt_matched[i]).collect();
        let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_matched[i]).collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let sentinel = 1e9;
            let costs = CostMatrix::from_fn(free_gt.len(), free_hyp.len(), sentinel, |r, c| {
                let iou = gts[free_gt[r]].bbox.iou(&hyps[free_hyp[c]].bbox);
                if iou >= iou_threshold {
                    1.0 - iou
                } else {
                    sentinel
                }
            });
            for (r, c) in solve_assignment(&costs) {
                let gi = free_gt[r];
                let hi = free_hyp[c];
                gt_matched[gi] = true;
                hyp_matched[hi] = true;
                pairs.push((gi, hi));
            }
        }

        for &(gi, hi) in &pairs {
            let g_id = gts[gi].id;
            let h_id = hyps[hi].id;
            if let Some(&prev) = last_match.get(&g_id) {
                if prev != h_id {
                    scores.id_switches += 1;
                }
            }
            last_match.insert(g_id, h_id);
            scores.matches += 1;
        }

        scores.false_negatives += gt_matched.iter().filter(|&&m| !m).count() as u64;
        scores.false_positives += hyp_matched.iter().filter(|&&m| !m).count() as u64;

        // Fragmentations: a gt re-acquired after a coverage gap within its
        // own presence (absence frames do not end a run).
        for (gi, g) in gts.iter().enumerate() {
            let covered = gt_matched[gi];
            let entry = coverage.entry(g.id).or_insert((false, false));
            if covered && entry.0 && !entry.1 {
                scores.fragmentations += 1;
            }
            entry.0 |= covered;
            entry.1 = covered;
        }
    }

    scores.mota = mota_from_counts(&scores);
    Ok(scores)
}

/// Identity metrics: global bipartite matching between gt and hypothesis
/// trajectories maximizing the total number of IoU-overlapping frames.
pub fn idf1(
    gt: &FrameAnnotations,
    hyp: &TrackOutput,
    iou_threshold: f64,
) -> Result<IdScores, MetricsError> {
    check_unique_ids(gt, hyp, iou_threshold)?;

    let mut gt_traj: BTreeMap<u32, HashMap<u32, BBox>> = BTreeMap::new();
    for (&frame, entries) in &gt.frames {
        for e in entries {
            gt_traj.entry(e.id).or_default().insert(frame, e.bbox);
        }
    }
    let mut hyp_traj: BTreeMap<u32, HashMap<u32, BBox>> = BTreeMap::new();
    for (&frame, boxes) in &hyp.frames {
        for b in boxes {
            hyp_traj.entry(b.id).or_default().insert(frame, b.bbox);
        }
    }

    let gt_ids: Vec<u32> = gt_traj.keys().copied().collect();
    let hyp_ids: Vec<u32> = hyp_traj.keys().copied().collect();
    let gt_total = gt.total_boxes();
    let hyp_total = hyp.total_boxes();

    // overlap[g][h] = matched-frame count.
    let mut overlap = vec![vec![0u64; hyp_ids.len()]; gt_ids.len()];
    for (gi, g_id) in gt_ids.iter().enumerate() {
        let g_frames = &gt_traj[g_id];
        for (hi, h_id) in hyp_ids.iter().enumerate() {
            let h_frames = &hyp_traj[h_id];
            let mut m = 0u64;
            for (frame, g_box) in g_frames {
                if let Some(h_box) = h_frames.get(frame) {
                    if g_box.iou(h_box) >= iou_threshold {
                        m += 1;
                    }
                }
            }
            overlap[gi][hi] = m;
        }
    }

    // The matching runs at full cardinality on the smaller side, and
    // minimizing (M - overlap) with a constant M maximizes total overlap;
    // zero-overlap pairings contribute nothing and are harmless.
    let mut idtp = 0u64;
    if !gt_ids.is_empty() && !hyp_ids.is_empty() {
        let m_const = gt.frames.len().max(hyp.frames.len()) as f64 + 1.0;
        let costs = CostMatrix::from_fn(gt_ids.len(), hyp_ids.len(), f64::INFINITY, |r, c| {
            m_const - overlap[r][c] as f64
        });
        for (r, c) in solve_assignment(&costs) {
            idtp += overlap[r][c];
        }
    }

    let scores = IdScores {
        idtp,
        idfn: gt_total - idtp,
        idfp: hyp_total - idtp,
        idf1: 0.0,
    };
    Ok(IdScores {
        idf1: idf1_from_counts(&scores),
        ..scores
    })
}

/// Full evaluation of one sequence.
pub fn evaluate(
    gt: &FrameAnnotations,
    hyp: &TrackOutput,
    iou_threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        clear: clear_metrics(gt, hyp, iou_threshold)?,
        id: idf1(gt, hyp, iou_threshold)?,
        hyp_total: hyp.total_boxes(),
    })
}

/// Histogram/moment statistics of a feature map.
///
/// Values are min-max normalized to [0, 255]; the entropy is the base-2
/// Shannon entropy of the bin-count distribution, kurtosis is the Pearson
/// (non-excess) fourth standardized moment of the *raw* values, and
/// `noise_mean` averages normalized values inside [1, 50]. A constant map
/// normalizes to all zeros and reports kurtosis as undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub entropy_bits: f64,
    /// `None` when the map is constant (zero variance).
    pub kurtosis: Option<f64>,
    /// `None` when no normalized value lies in [1, 50].
    pub noise_mean: Option<f64>,
    pub mean_intensity: f64,
    pub std_dev: f64,
}

/// Normalized-intensity band averaged by `noise_mean`.
pub const DEFAULT_NOISE_BAND: (f64, f64) = (1.0, 50.0);

pub fn feature_stats(x: &FeatureMap, histogram_bins: usize) -> FeatureStats {
    feature_stats_with_band(x, histogram_bins, DEFAULT_NOISE_BAND)
}

pub fn feature_stats_with_band(
    x: &FeatureMap,
    histogram_bins: usize,
    noise_band: (f64, f64),
) -> FeatureStats {
    assert!(histogram_bins >= 1, "histogram needs at least one bin");
    assert!(noise_band.0 <= noise_band.1, "noise band must be lo <= hi");
    let n = x.data().len() as f64;

    // Raw-value moments for kurtosis.
    let raw_mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &v in x.data() {
        let d = v as f64 - raw_mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    let kurtosis = if m2 > 0.0 { Some(m4 / (m2 * m2)) } else { None };

    // Min-max normalization to [0, 255]; constant maps collapse to zero.
    let min = x.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let max = x.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let scale = if max > min { 255.0 / (max - min) } else { 0.0 };

    let mut counts = vec![0u64; histogram_bins];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut band_sum = 0.0;
    let mut band_n = 0u64;
    for &v in x.data() {
        let nv = (v as f64 - min) * scale;
        sum += nv;
        sum_sq += nv * nv;
        if (noise_band.0..=noise_band.1).contains(&nv) {
            band_sum += nv;
            band_n += 1;
        }
        let bin = ((nv * histogram_bins as f64 / 256.0) as usize).min(histogram_bins - 1);
        counts[bin] += 1;
    }
    let mean_intensity = sum / n;
    let var = (sum_sq / n - mean_intensity * mean_intensity).max(0.0);
    let entropy_bits = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();

    FeatureStats {
        entropy_bits,
        kurtosis,
        noise_mean: if band_n > 0 {
            Some(band_sum / band_n as f64)
        } else {
            None
        },
        mean_intensity,
        std_dev: var.sqrt(),
    }
}
