//! Synthetic inputs and weight sets for the fusion-statistics workflow.
//!
//! `cluttered_pair` builds two modality maps sharing a handful of strong
//! Gaussian target blobs over independent low-level clutter. The
//! "enhancing" weight sets implement a soft-threshold amplifier: each
//! refinement pass adds `gain * relu(x - theta)`, so activations above the
//! clutter floor grow across passes while the background stays put. Running
//! fusion plus refinement with these weights concentrates the value
//! distribution: entropy of the histogram drops and kurtosis rises relative
//! to the raw concatenated input.

use crate::config::FuseStatsConfig;
use crate::fusion::{fuse, FusionConfig, RefineNet};
use crate::refiner::{refiner_forward, NoiseMaskNet, RefineBlock, Refiner, RefinerConfig, TimeMlp};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{
    concat_channels, ConvParams, FeatureMap, LinearParams, NormParams, TensorError,
};

/// Clutter amplitude ceiling for generated maps.
const CLUTTER_LEVEL: f32 = 0.4;
/// Blob peak amplitude range before per-modality scaling.
const BLOB_AMP: (f64, f64) = (1.8, 3.0);
/// Soft-threshold for the fusion stage (above single-modality clutter).
const FUSE_THETA: f32 = 0.8;
/// Soft-threshold for the refinement stage (above summed clutter).
const REFINE_THETA: f32 = 2.0;
/// Residual gain per pass in both stages.
const ENHANCE_GAIN: f32 = 0.75;
/// Time embedding width used by the demo refiner.
const DEMO_TIME_DIM: usize = 8;

/// Two modality maps with shared target blobs and independent clutter.
pub fn cluttered_pair(
    channels: usize,
    height: usize,
    width: usize,
    blobs: usize,
    seed: u64,
) -> Result<(FeatureMap, FeatureMap), TensorError> {
    let mut rng = Rng::new(seed);
    struct Blob {
        cx: f64,
        cy: f64,
        radius: f64,
        amp_rgb: f64,
        amp_thermal: f64,
    }
    let blobs: Vec<Blob> = (0..blobs)
        .map(|_| {
            let amp = rng.uniform(BLOB_AMP.0, BLOB_AMP.1);
            Blob {
                cx: rng.uniform(2.0, width as f64 - 2.0),
                cy: rng.uniform(2.0, height as f64 - 2.0),
                radius: rng.uniform(1.2, 2.5),
                amp_rgb: amp * rng.uniform(0.7, 1.0),
                amp_thermal: amp * rng.uniform(0.7, 1.0),
            }
        })
        .collect();

    let render = |pick: fn(&Blob) -> f64, rng: &mut Rng| -> Result<FeatureMap, TensorError> {
        FeatureMap::from_fn(channels, height, width, |_, y, x| {
            let mut v = rng.uniform(0.0, CLUTTER_LEVEL as f64);
            for b in &blobs {
                let d2 = (x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2);
                v += pick(b) * (-d2 / (2.0 * b.radius * b.radius)).exp();
            }
            v as f32
        })
    };
    let rgb = render(|b| b.amp_rgb, &mut rng)?;
    let thermal = render(|b| b.amp_thermal, &mut rng)?;
    Ok((rgb, thermal))
}

/// Conv whose only nonzero taps map channel c to channel c at the kernel
/// center with weight `gain`; `in_channels` may exceed `out_channels`
/// (extra input channels are ignored).
fn center_tap_conv(
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    padding: usize,
    gain: f32,
) -> Result<ConvParams, TensorError> {
    let mut conv = ConvParams::zeros(out_channels, in_channels, kernel, kernel, padding)?;
    let mid = kernel / 2;
    for c in 0..out_channels {
        *conv.weight_mut(c, c, mid, mid) = gain;
    }
    Ok(conv)
}

/// Batch norm acting as `x - theta` per channel.
fn shift_norm(channels: usize, theta: f32) -> NormParams {
    NormParams {
        beta: vec![-theta; channels],
        ..NormParams::identity(channels)
    }
}

/// Residual net computing `gain * relu(x_self - theta)` per channel.
pub fn enhancing_fusion_net(
    channels: usize,
    theta: f32,
    gain: f32,
) -> Result<RefineNet, TensorError> {
    Ok(RefineNet {
        conv1: center_tap_conv(channels, 2 * channels, 3, 1, 1.0)?,
        bn1: shift_norm(channels, theta),
        bn2: NormParams::identity(channels),
        conv2: center_tap_conv(channels, channels, 3, 1, gain)?,
    })
}

/// Refiner whose blocks compute `gain * relu(x - theta)` with the attention
/// gate saturated open and a constant-half noise mask.
pub fn enhancing_refiner(
    channels: usize,
    steps: usize,
    theta: f32,
    gain: f32,
) -> Result<Refiner, TensorError> {
    let block = || -> Result<RefineBlock, TensorError> {
        let mut attn = ConvParams::zeros(channels, channels, 1, 1, 0)?;
        attn.bias = vec![12.0; channels];
        Ok(RefineBlock {
            conv1: center_tap_conv(channels, channels + DEMO_TIME_DIM, 3, 1, 1.0)?,
            bn: shift_norm(channels, theta),
            conv2: center_tap_conv(channels, channels, 3, 1, gain)?,
            attn,
        })
    };
    Ok(Refiner {
        time_mlp: TimeMlp {
            layer1: LinearParams::new(
                DEMO_TIME_DIM,
                1,
                vec![0.0; DEMO_TIME_DIM],
                vec![0.0; DEMO_TIME_DIM],
            )?,
            layer2: LinearParams::new(
                DEMO_TIME_DIM,
                DEMO_TIME_DIM,
                vec![0.0; DEMO_TIME_DIM * DEMO_TIME_DIM],
                vec![0.0; DEMO_TIME_DIM],
            )?,
        },
        mask: NoiseMaskNet::constant_half(channels)?,
        blocks: (0..steps).map(|_| block()).collect::<Result<Vec<_>, _>>()?,
    })
}

/// Outputs of the fusion-statistics workflow.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOutputs {
    /// Channel-wise concatenation of the two inputs (the unprocessed
    /// reference the statistics are compared against).
    pub baseline: FeatureMap,
    /// Fusion output.
    pub fused: FeatureMap,
    /// Fusion output after refinement.
    pub enhanced: FeatureMap,
}

/// Runs concatenation, fusion, and refinement over a given modality pair
/// with the enhancing weight set.
pub fn enhance_pair(
    rgb: &FeatureMap,
    thermal: &FeatureMap,
    cfg: &FuseStatsConfig,
) -> Result<EnhanceOutputs, TensorError> {
    let channels = rgb.channels();
    let baseline = concat_channels(rgb, thermal)?;
    let nets = (
        enhancing_fusion_net(channels, FUSE_THETA, ENHANCE_GAIN)?,
        enhancing_fusion_net(channels, FUSE_THETA, ENHANCE_GAIN)?,
    );
    let fusion_cfg = FusionConfig {
        steps: cfg.steps,
        sigma: cfg.sigma,
        base_seed: derive_seed(cfg.seed, 1, 0),
        noise_tags: (0, 1),
    };
    let fused = fuse(rgb, thermal, (&nets.0, &nets.1), &fusion_cfg)?;
    let refiner = enhancing_refiner(channels, cfg.steps, REFINE_THETA, ENHANCE_GAIN)?;
    let refiner_cfg = RefinerConfig {
        steps: cfg.steps,
        sigma: cfg.sigma,
        alpha: cfg.alpha,
        time_dim: DEMO_TIME_DIM,
        seed: derive_seed(cfg.seed, 2, 0),
        ..Default::default()
    };
    let enhanced = refiner_forward(&fused, &refiner, &refiner_cfg)?;
    Ok(EnhanceOutputs {
        baseline,
        fused,
        enhanced,
    })
}

/// Synthesizes a cluttered pair from the config seed and enhances it.
pub fn run_demo(cfg: &FuseStatsConfig) -> Result<EnhanceOutputs, TensorError> {
    let (rgb, thermal) = cluttered_pair(
        cfg.channels,
        cfg.height,
        cfg.width,
        cfg.blobs,
        derive_seed(cfg.seed, 0, 0),
    )?;
    enhance_pair(&rgb, &thermal, cfg)
}
