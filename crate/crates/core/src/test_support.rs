//! Independent oracles for verification suites. Compiled only with the
//! `test-support` feature; nothing here is used by the library itself, and
//! each oracle deliberately takes a different computational route than the
//! implementation it checks.

use crate::assignment::CostMatrix;
use crate::tensor::{ConvParams, FeatureMap};
use crate::tracker::{
    compute_cost, handle_unmatched, predict_tracks, spawn_tracks, update_matched, Detection, Track,
    TrackerConfig,
};

/// Reference convolution by im2col plus dense matmul, accumulated in f64.
pub fn conv2d_im2col(input: &FeatureMap, p: &ConvParams) -> FeatureMap {
    assert_eq!(input.channels(), p.in_channels);
    let out_h = input.height() + 2 * p.padding - p.kernel_h + 1;
    let out_w = input.width() + 2 * p.padding - p.kernel_w + 1;
    let patch = p.in_channels * p.kernel_h * p.kernel_w;
    let cols = out_h * out_w;

    // Column matrix: patch x cols, zero-padded gather.
    let mut col = vec![0.0f64; patch * cols];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let c_idx = oy * out_w + ox;
            let mut r_idx = 0;
            for ic in 0..p.in_channels {
                for ky in 0..p.kernel_h {
                    for kx in 0..p.kernel_w {
                        let iy = oy as isize + ky as isize - p.padding as isize;
                        let ix = ox as isize + kx as isize - p.padding as isize;
                        let v = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < input.height()
                            && (ix as usize) < input.width()
                        {
                            input.get(ic, iy as usize, ix as usize) as f64
                        } else {
                            0.0
                        };
                        col[r_idx * cols + c_idx] = v;
                        r_idx += 1;
                    }
                }
            }
        }
    }

    // Dense matmul: (out_channels x patch) * (patch x cols).
    let mut data = vec![0.0f32; p.out_channels * cols];
    for oc in 0..p.out_channels {
        for c_idx in 0..cols {
            let mut acc = p.bias[oc] as f64;
            for r_idx in 0..patch {
                acc += p.weights[oc * patch + r_idx] as f64 * col[r_idx * cols + c_idx];
            }
            data[oc * cols + c_idx] = acc as f32;
        }
    }
    FeatureMap::new(p.out_channels, out_h, out_w, data).unwrap()
}

/// Exhaustive minimum assignment cost over all injections of the smaller
/// side of the matrix.
pub fn brute_force_assignment_min(m: &CostMatrix) -> f64 {
    fn rec(
        get: &dyn Fn(usize, usize) -> f64,
        row: usize,
        rows: usize,
        cols: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut f64,
    ) {
        if row == rows {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                rec(get, row + 1, rows, cols, used, acc + get(row, c), best);
                used[c] = false;
            }
        }
    }
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    if m.rows() <= m.cols() {
        let get = |r: usize, c: usize| m.get(r, c);
        rec(
            &get,
            0,
            m.rows(),
            m.cols(),
            &mut vec![false; m.cols()],
            0.0,
            &mut best,
        );
    } else {
        let get = |r: usize, c: usize| m.get(c, r);
        rec(
            &get,
            0,
            m.cols(),
            m.rows(),
            &mut vec![false; m.rows()],
            0.0,
            &mut best,
        );
    }
    best
}

/// Flat single-stage tracker: one associate pass over all detections above
/// `tau`, then spawn, then unmatched handling. Built from the same public
/// primitives as the hierarchical tracker but without the stage loop; used
/// as the reference the k=1 ladder must reduce to.
#[derive(Debug, Clone)]
pub struct SingleStageTracker {
    pub cfg: TrackerConfig,
    pub tau: f32,
    tracks: Vec<Track>,
    next_id: u32,
}

impl SingleStageTracker {
    pub fn new(cfg: TrackerConfig, tau: f32) -> Self {
        SingleStageTracker {
            cfg,
            tau,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(&mut self, detections: &[Detection]) -> &[Track] {
        let mut dets: Vec<Detection> = detections.to_vec();
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));

        let predicted = predict_tracks(&self.tracks);
        let mut updated: Vec<Option<Track>> = vec![None; self.tracks.len()];

        let confident: Vec<usize> = (0..dets.len())
            .filter(|&d| dets[d].score > self.tau)
            .collect();
        let mut det_matched = vec![false; dets.len()];
        let mut trk_matched = vec![false; self.tracks.len()];

        if !confident.is_empty() && !self.tracks.is_empty() {
            let stage_dets: Vec<Detection> = confident.iter().map(|&d| dets[d]).collect();
            let costs = compute_cost(&stage_dets, &predicted, &self.cfg);
            for (ri, ci) in crate::assignment::solve_assignment(&costs) {
                let d_idx = confident[ri];
                updated[ci] = Some(update_matched(&self.tracks[ci], &dets[d_idx], &self.cfg));
                det_matched[d_idx] = true;
                trk_matched[ci] = true;
            }
        }

        let spawn_candidates: Vec<&Detection> = (0..dets.len())
            .filter(|&d| !det_matched[d])
            .map(|d| &dets[d])
            .collect();
        let spawned = spawn_tracks(&spawn_candidates, &self.cfg, &mut self.next_id);

        for t_idx in 0..self.tracks.len() {
            if !trk_matched[t_idx] {
                updated[t_idx] = handle_unmatched(&self.tracks[t_idx], &self.cfg);
            }
        }

        let mut next: Vec<Track> = updated.into_iter().flatten().collect();
        next.extend(spawned);
        self.tracks = next;
        &self.tracks
    }
}
