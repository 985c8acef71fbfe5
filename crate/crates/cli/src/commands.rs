use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use fusemot_core::config::{
    corruption_from_kv, fuse_stats_from_kv, scenario_from_kv, tracker_config_from_kv, KvFile,
};
use fusemot_core::metrics::{evaluate as score, feature_stats, OutputBox, TrackOutput};
use fusemot_core::mot_io;
use fusemot_core::rng::derive_seed;
use fusemot_core::simulator::{corrupt_detections, generate_scenario};
use fusemot_core::store::ParamStore;
use fusemot_core::synthetic::{cluttered_pair, enhance_pair};
use fusemot_core::tensor::FeatureMap;
use fusemot_core::tracker::{Detection, Tracker};

use crate::manifest::{self, Manifest};
use crate::opts::{self, expect_positionals};
use crate::report;

fn load_config(path: Option<&str>) -> Result<KvFile> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading config '{p}'"))?,
        None => String::new(),
    };
    KvFile::parse(&text).with_context(|| match path {
        Some(p) => format!("parsing config '{p}'"),
        None => "parsing config".to_string(),
    })
}

fn ensure_out_dir(dir: &str) -> Result<&Path> {
    let path = Path::new(dir);
    fs::create_dir_all(path).with_context(|| format!("creating output directory '{dir}'"))?;
    Ok(path)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn simulate(args: &[String]) -> Result<()> {
    let o = opts::parse(args)?;
    expect_positionals(&o, &[])?;
    let mut kv = load_config(o.config.as_deref())?;
    let mut spec = scenario_from_kv(&mut kv)?;
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    // The detector stream gets its own derived seed unless the config pins
    // `det_seed` explicitly.
    let model = corruption_from_kv(
        &mut kv,
        (spec.arena_w, spec.arena_h),
        derive_seed(spec.seed, 1, 0),
    )?;
    kv.finish()?;

    let gt = generate_scenario(&spec)?;
    let dets = corrupt_detections(&gt, &model)?;

    let dir = ensure_out_dir(o.out_dir())?;
    write_out(dir, "gt.txt", &mot_io::write_ground_truth(&gt))?;
    write_out(dir, "det.txt", &mot_io::write_detections(&dets))?;
    manifest::write(
        dir,
        &Manifest {
            command: "simulate",
            inputs: vec![],
            config: o.config.as_deref(),
            seed: Some(spec.seed),
            out: o.out_dir(),
        },
    )?;
    eprintln!(
        "simulate: {} objects, {} frames -> {}",
        spec.num_objects,
        spec.num_frames,
        dir.display()
    );
    Ok(())
}

pub fn track(args: &[String]) -> Result<()> {
    let o = opts::parse(args)?;
    expect_positionals(&o, &["det.txt"])?;
    let det_path = &o.positionals[0];
    let mut kv = load_config(o.config.as_deref())?;
    let cfg = tracker_config_from_kv(&mut kv)?;
    kv.finish()?;

    let text =
        fs::read_to_string(det_path).with_context(|| format!("reading detections '{det_path}'"))?;
    let dets = mot_io::parse_detections(&text)
        .with_context(|| format!("parsing detections '{det_path}'"))?;

    let mut tracker = Tracker::new(cfg)?;
    let mut out = TrackOutput::default();
    if let (Some(&first), Some(&last)) = (dets.keys().next(), dets.keys().next_back()) {
        let empty: Vec<Detection> = Vec::new();
        // Step through every frame in the span; gaps still age the tracks.
        for frame in first..=last {
            let frame_dets = dets.get(&frame).unwrap_or(&empty);
            let tracks = tracker.step(frame_dets);
            let boxes: Vec<OutputBox> = tracks
                .iter()
                .filter(|t| o.emit_coasted || !t.coasted)
                .map(|t| OutputBox {
                    id: t.id,
                    bbox: t.bbox,
                    score: t.score,
                })
                .collect();
            if !boxes.is_empty() {
                out.frames.insert(frame, boxes);
            }
        }
    }

    let dir = ensure_out_dir(o.out_dir())?;
    write_out(dir, "results.txt", &mot_io::write_results(&out))?;
    manifest::write(
        dir,
        &Manifest {
            command: "track",
            inputs: vec![det_path],
            config: o.config.as_deref(),
            seed: None,
            out: o.out_dir(),
        },
    )?;
    eprintln!(
        "track: {} frames, {} boxes -> {}",
        out.frames.len(),
        out.total_boxes(),
        dir.display()
    );
    Ok(())
}

pub fn evaluate(args: &[String]) -> Result<()> {
    let o = opts::parse(args)?;
    expect_positionals(&o, &["gt.txt", "results.txt"])?;
    let gt_path = &o.positionals[0];
    let res_path = &o.positionals[1];
    let iou = o.iou_threshold.unwrap_or(0.5);

    let gt_text =
        fs::read_to_string(gt_path).with_context(|| format!("reading ground truth '{gt_path}'"))?;
    let gt = mot_io::parse_ground_truth(&gt_text)
        .with_context(|| format!("parsing ground truth '{gt_path}'"))?;
    let res_text =
        fs::read_to_string(res_path).with_context(|| format!("reading results '{res_path}'"))?;
    let hyp = mot_io::parse_results(&res_text)
        .with_context(|| format!("parsing results '{res_path}'"))?;

    let report = score(&gt, &hyp, iou)?;
    let table = report::metrics_table(&report);
    print!("{table}");

    let dir = ensure_out_dir(o.out_dir())?;
    write_out(dir, "metrics.txt", &table)?;
    write_out(dir, "metrics.csv", &report::metrics_csv(&report))?;
    manifest::write(
        dir,
        &Manifest {
            command: "evaluate",
            inputs: vec![gt_path, res_path],
            config: o.config.as_deref(),
            seed: None,
            out: o.out_dir(),
        },
    )?;
    Ok(())
}

fn load_feature_map(path: &str) -> Result<FeatureMap> {
    let store = ParamStore::load(Path::new(path)).with_context(|| format!("reading '{path}'"))?;
    let (name, entry) = store
        .sole_entry()
        .with_context(|| format!("reading '{path}'"))?;
    if entry.shape.len() != 3 {
        bail!(
            "tensor '{name}' in '{path}' has shape {:?}, expected channels x height x width",
            entry.shape
        );
    }
    FeatureMap::new(
        entry.shape[0],
        entry.shape[1],
        entry.shape[2],
        entry.data.clone(),
    )
    .map_err(|e| anyhow::anyhow!("tensor '{name}' in '{path}': {e}"))
}

fn write_feature_map(dir: &Path, name: &str, map: &FeatureMap) -> Result<()> {
    let mut store = ParamStore::new();
    store
        .insert(
            "feature",
            vec![map.channels(), map.height(), map.width()],
            map.data().to_vec(),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let path = dir.join(name);
    store
        .save(&path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn fuse_stats(args: &[String]) -> Result<()> {
    let o = opts::parse(args)?;
    if !(o.positionals.is_empty() || o.positionals.len() == 2) {
        bail!("fuse-stats takes either no positional arguments or two .params files");
    }
    let mut kv = load_config(o.config.as_deref())?;
    let mut cfg = fuse_stats_from_kv(&mut kv)?;
    kv.finish()?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }

    let (rgb, thermal) = if o.positionals.len() == 2 {
        let rgb = load_feature_map(&o.positionals[0])?;
        let thermal = load_feature_map(&o.positionals[1])?;
        if rgb.shape() != thermal.shape() {
            bail!(
                "input maps disagree on shape: {:?} vs {:?}",
                rgb.shape(),
                thermal.shape()
            );
        }
        (rgb, thermal)
    } else {
        cluttered_pair(
            cfg.channels,
            cfg.height,
            cfg.width,
            cfg.blobs,
            derive_seed(cfg.seed, 0, 0),
        )?
    };

    let outputs = enhance_pair(&rgb, &thermal, &cfg)?;
    let before = feature_stats(&outputs.baseline, 256);
    let after = feature_stats(&outputs.enhanced, 256);
    let table = report::stats_table(&before, &after);
    print!("{table}");

    let dir = ensure_out_dir(o.out_dir())?;
    write_out(dir, "stats.txt", &table)?;
    write_out(dir, "stats.csv", &report::stats_csv(&before, &after))?;
    write_feature_map(dir, "fused.params", &outputs.fused)?;
    write_feature_map(dir, "enhanced.params", &outputs.enhanced)?;
    let inputs: Vec<&str> = o.positionals.iter().map(|s| s.as_str()).collect();
    manifest::write(
        dir,
        &Manifest {
            command: "fuse-stats",
            inputs,
            config: o.config.as_deref(),
            seed: Some(cfg.seed),
            out: o.out_dir(),
        },
    )?;
    Ok(())
}
