//! Time-conditioned iterative feature refinement.
//!
//! A fused feature map is perturbed once with adaptively scaled noise, passed
//! through a fixed number of refinement blocks (each conditioned on a
//! normalized timestep embedding and gated by a sigmoid attention map over
//! its own output), and finally blended with the original input:
//! `out = x + alpha * (x_S - x)`. `alpha = 0` returns the input bit-exactly,
//! `alpha = 1` returns the refined map.

use crate::fusion::{conv_from_store, conv_to_store, norm_from_store, norm_to_store};
use crate::rng::Rng;
use crate::store::{ParamStore, StoreError};
use crate::tensor::{
    activation, apply_activation, batch_norm, concat_channels, conv2d, gaussian_noise, linear,
    Activation, ConvParams, FeatureMap, LinearParams, NormParams, TensorError,
};

/// Two-layer perceptron with SiLU between the layers; input is the scalar
/// normalized timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMlp {
    pub layer1: LinearParams,
    pub layer2: LinearParams,
}

impl TimeMlp {
    pub fn seeded(time_dim: usize, seed: u64) -> Result<Self, TensorError> {
        let mut rng = Rng::new(seed);
        Ok(TimeMlp {
            layer1: LinearParams::seeded(time_dim, 1, &mut rng)?,
            layer2: LinearParams::seeded(time_dim, time_dim, &mut rng)?,
        })
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        self.layer1.validate()?;
        self.layer2.validate()?;
        if self.layer1.in_dim != 1 {
            return Err(TensorError::LengthMismatch {
                what: "time mlp layer1 input",
                expected: 1,
                got: self.layer1.in_dim,
            });
        }
        if self.layer2.in_dim != self.layer1.out_dim {
            return Err(TensorError::LengthMismatch {
                what: "time mlp layer2 input",
                expected: self.layer1.out_dim,
                got: self.layer2.in_dim,
            });
        }
        Ok(())
    }

    pub fn time_dim(&self) -> usize {
        self.layer2.out_dim
    }
}

/// Predicts per-pixel perturbation scales in (0,1) via a 1x1 conv and
/// sigmoid gate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMaskNet {
    pub conv: ConvParams,
}

impl NoiseMaskNet {
    pub fn seeded(channels: usize, seed: u64) -> Result<Self, TensorError> {
        let mut rng = Rng::new(seed);
        Ok(NoiseMaskNet {
            conv: ConvParams::seeded(1, channels, 1, 1, 0, &mut rng)?,
        })
    }

    /// Zero conv (bias 0): the mask is a constant 0.5 everywhere.
    pub fn constant_half(channels: usize) -> Result<Self, TensorError> {
        Ok(NoiseMaskNet {
            conv: ConvParams::zeros(1, channels, 1, 1, 0)?,
        })
    }
}

/// One refinement block: conv(C+d_t -> C, 3x3) -> bn -> relu ->
/// conv(C -> C, 3x3), multiplied by a sigmoid gate from a 1x1 conv over the
/// block output. The skip path is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineBlock {
    pub conv1: ConvParams,
    pub bn: NormParams,
    pub conv2: ConvParams,
    pub attn: ConvParams,
}

impl RefineBlock {
    pub fn seeded(channels: usize, time_dim: usize, seed: u64) -> Result<Self, TensorError> {
        let mut rng = Rng::new(seed);
        Ok(RefineBlock {
            conv1: ConvParams::seeded(channels, channels + time_dim, 3, 3, 1, &mut rng)?,
            bn: NormParams::identity(channels),
            conv2: ConvParams::seeded(channels, channels, 3, 3, 1, &mut rng)?,
            attn: ConvParams::seeded(channels, channels, 1, 1, 0, &mut rng)?,
        })
    }

    /// Block whose main path is identically zero, making the step an
    /// identity through the skip connection.
    pub fn zero_output(channels: usize, time_dim: usize, seed: u64) -> Result<Self, TensorError> {
        let mut b = Self::seeded(channels, time_dim, seed)?;
        b.conv2 = ConvParams::zeros(channels, channels, 3, 3, 1)?;
        Ok(b)
    }
}

/// Full refiner: shared time embedding, noise mask, and one block per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    pub time_mlp: TimeMlp,
    pub mask: NoiseMaskNet,
    pub blocks: Vec<RefineBlock>,
}

impl Refiner {
    pub fn seeded(
        channels: usize,
        time_dim: usize,
        steps: usize,
        seed: u64,
    ) -> Result<Self, TensorError> {
        let blocks = (0..steps)
            .map(|i| RefineBlock::seeded(channels, time_dim, seed.wrapping_add(1 + i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Refiner {
            time_mlp: TimeMlp::seeded(time_dim, seed)?,
            mask: NoiseMaskNet::seeded(channels, seed.wrapping_add(usize::MAX as u64))?,
            blocks,
        })
    }

    pub fn to_store(&self, store: &mut ParamStore) -> Result<(), StoreError> {
        linear_to_store(&self.time_mlp.layer1, store, "refiner.time.l1")?;
        linear_to_store(&self.time_mlp.layer2, store, "refiner.time.l2")?;
        conv_to_store(&self.mask.conv, store, "refiner.mask.conv")?;
        for (i, b) in self.blocks.iter().enumerate() {
            conv_to_store(&b.conv1, store, &format!("refiner.block{i}.conv1"))?;
            norm_to_store(&b.bn, store, &format!("refiner.block{i}.bn"))?;
            conv_to_store(&b.conv2, store, &format!("refiner.block{i}.conv2"))?;
            conv_to_store(&b.attn, store, &format!("refiner.block{i}.attn"))?;
        }
        Ok(())
    }

    pub fn from_store(store: &ParamStore, steps: usize) -> Result<Self, StoreError> {
        let mut blocks = Vec::with_capacity(steps);
        for i in 0..steps {
            blocks.push(RefineBlock {
                conv1: conv_from_store(store, &format!("refiner.block{i}.conv1"))?,
                bn: norm_from_store(store, &format!("refiner.block{i}.bn"))?,
                conv2: conv_from_store(store, &format!("refiner.block{i}.conv2"))?,
                attn: conv_from_store(store, &format!("refiner.block{i}.attn"))?,
            });
        }
        Ok(Refiner {
            time_mlp: TimeMlp {
                layer1: linear_from_store(store, "refiner.time.l1")?,
                layer2: linear_from_store(store, "refiner.time.l2")?,
            },
            mask: NoiseMaskNet {
                conv: conv_from_store(store, "refiner.mask.conv")?,
            },
            blocks,
        })
    }
}

fn linear_to_store(
    p: &LinearParams,
    store: &mut ParamStore,
    prefix: &str,
) -> Result<(), StoreError> {
    store.insert(
        &format!("{prefix}.weight"),
        vec![p.out_dim, p.in_dim],
        p.weights.clone(),
    )?;
    store.insert(&format!("{prefix}.bias"), vec![p.out_dim], p.bias.clone())
}

fn linear_from_store(store: &ParamStore, prefix: &str) -> Result<LinearParams, StoreError> {
    let entry = store.get_entry(&format!("{prefix}.weight"))?;
    if entry.shape.len() != 2 {
        return Err(StoreError::ShapeMismatch {
            name: format!("{prefix}.weight"),
            expected: vec![0, 0],
            got: entry.shape.clone(),
        });
    }
    let (out_dim, in_dim) = (entry.shape[0], entry.shape[1]);
    let weights = entry.data.clone();
    let bias = store.get(&format!("{prefix}.bias"), &[out_dim])?.to_vec();
    LinearParams::new(out_dim, in_dim, weights, bias).map_err(|e| StoreError::BadEntry {
        name: prefix.to_string(),
        msg: e.to_string(),
    })
}

/// Refinement hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerConfig {
    /// Number of refinement blocks applied.
    pub steps: usize,
    /// Nominal schedule length; exposed for callers that normalize an
    /// absolute step index to `[0,1]` before calling [`time_embedding`].
    pub total_steps: usize,
    /// Perturbation scale; 0 disables perturbation.
    pub sigma: f32,
    /// Blend weight in `[0,1]` between the input and the refined map.
    pub alpha: f32,
    /// Time embedding width; must match the MLP output.
    pub time_dim: usize,
    pub seed: u64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            steps: 3,
            total_steps: 1000,
            sigma: 0.1,
            alpha: 0.5,
            time_dim: 32,
            seed: 0,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.steps == 0 || self.total_steps == 0 {
            return Err(TensorError::InvalidValue {
                what: "refiner steps and total_steps must be >= 1",
            });
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(TensorError::InvalidValue {
                what: "refiner sigma must be finite and >= 0",
            });
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TensorError::InvalidValue {
                what: "refiner alpha must lie in [0,1]",
            });
        }
        if self.time_dim == 0 {
            return Err(TensorError::InvalidValue {
                what: "refiner time_dim must be >= 1",
            });
        }
        Ok(())
    }
}

/// Normalized timestep for each refinement step: `(S - i) / S` for
/// `i = 1..=S`, i.e. S=3 gives (2/3, 1/3, 0).
pub fn timestep_schedule(steps: usize) -> Vec<f32> {
    (1..=steps)
        .map(|i| (steps - i) as f32 / steps as f32)
        .collect()
}

/// Embeds a normalized timestep `t` in `[0,1]` as a `time_dim` vector.
pub fn time_embedding(t: f32, mlp: &TimeMlp) -> Result<Vec<f32>, TensorError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(TensorError::InvalidValue {
            what: "normalized timestep must lie in [0,1]",
        });
    }
    mlp.validate()?;
    let hidden = linear(&[t], &mlp.layer1)?;
    let hidden: Vec<f32> = hidden
        .iter()
        .map(|&v| apply_activation(v, Activation::Silu))
        .collect();
    linear(&hidden, &mlp.layer2)
}

/// Adds seeded Gaussian noise scaled per pixel by the mask network:
/// `x + sigma * m(x) * eps`, with `m` broadcast over channels.
pub fn adaptive_perturb(
    x: &FeatureMap,
    mask: &NoiseMaskNet,
    sigma: f32,
    seed: u64,
) -> Result<FeatureMap, TensorError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(TensorError::InvalidValue {
            what: "sigma must be finite and >= 0",
        });
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let m = conv2d(x, &mask.conv)?;
    if m.channels() != 1 || m.height() != x.height() || m.width() != x.width() {
        return Err(TensorError::InvalidShape {
            what: "noise mask conv must produce one spatial-preserving channel",
        });
    }
    let m = activation(&m, Activation::Sigmoid);
    let (c, h, w) = x.shape();
    let eps = gaussian_noise(c, h, w, seed)?;
    FeatureMap::from_fn(c, h, w, |ci, y, xi| {
        x.get(ci, y, xi) + sigma * m.get(0, y, xi) * eps.get(ci, y, xi)
    })
}

/// One refinement step: the time embedding is broadcast spatially,
/// concatenated onto the features, run through the main path, re-weighted by
/// the attention gate, and added to the identity skip.
pub fn refine_step(
    x_prev: &FeatureMap,
    block: &RefineBlock,
    mlp: &TimeMlp,
    t: f32,
) -> Result<FeatureMap, TensorError> {
    let emb = time_embedding(t, mlp)?;
    let emb_map = FeatureMap::broadcast_vector(&emb, x_prev.height(), x_prev.width())?;
    let z = concat_channels(x_prev, &emb_map)?;
    let y = conv2d(&z, &block.conv1)?;
    let y = batch_norm(&y, &block.bn)?;
    let y = activation(&y, Activation::Relu);
    let y = conv2d(&y, &block.conv2)?;
    let gate = activation(&conv2d(&y, &block.attn)?, Activation::Sigmoid);
    let main = y.zip(&gate, |a, g| a * g)?;
    main.add(x_prev)
}

/// Controlled residual blend `x + alpha * (x_refined - x)`. The endpoints
/// short-circuit so `alpha = 0` is the identity and `alpha = 1` returns
/// `x_refined` bit-exactly.
pub fn residual_blend(
    x: &FeatureMap,
    x_refined: &FeatureMap,
    alpha: f32,
) -> Result<FeatureMap, TensorError> {
    if x.shape() != x_refined.shape() {
        return Err(TensorError::SpatialMismatch {
            a: (x.height(), x.width()),
            b: (x_refined.height(), x_refined.width()),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TensorError::InvalidValue {
            what: "blend alpha must lie in [0,1]",
        });
    }
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    if alpha == 1.0 {
        return Ok(x_refined.clone());
    }
    x.zip(x_refined, |a, b| a + alpha * (b - a))
}

/// Full refinement: perturb once, run every block over the timestep
/// schedule, then blend with the input.
pub fn refiner_forward(
    x: &FeatureMap,
    refiner: &Refiner,
    cfg: &RefinerConfig,
) -> Result<FeatureMap, TensorError> {
    cfg.validate()?;
    if refiner.blocks.len() != cfg.steps {
        return Err(TensorError::LengthMismatch {
            what: "refiner blocks",
            expected: cfg.steps,
            got: refiner.blocks.len(),
        });
    }
    refiner.time_mlp.validate()?;
    if refiner.time_mlp.time_dim() != cfg.time_dim {
        return Err(TensorError::LengthMismatch {
            what: "time embedding width",
            expected: cfg.time_dim,
            got: refiner.time_mlp.time_dim(),
        });
    }
    let mut cur = adaptive_perturb(x, &refiner.mask, cfg.sigma, cfg.seed)?;
    for (block, t) in refiner.blocks.iter().zip(timestep_schedule(cfg.steps)) {
        cur = refine_step(&cur, block, &refiner.time_mlp, t)?;
    }
    residual_blend(x, &cur, cfg.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_noise;

    #[test]
    fn schedule_values() {
        assert_eq!(timestep_schedule(3), vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(timestep_schedule(1), vec![0.0]);
        let s4 = timestep_schedule(4);
        assert_eq!(s4, vec![0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn embedding_zero_weights_passes_bias() {
        let mlp = TimeMlp {
            layer1: LinearParams::new(4, 1, vec![0.0; 4], vec![0.0; 4]).unwrap(),
            layer2: LinearParams::new(3, 4, vec![0.0; 12], vec![1.0, 2.0, 3.0]).unwrap(),
        };
        assert_eq!(time_embedding(0.5, &mlp).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn embedding_length_and_range() {
        let mlp = TimeMlp::seeded(32, 5).unwrap();
        for t in [0.0, 0.25, 1.0] {
            assert_eq!(time_embedding(t, &mlp).unwrap().len(), 32);
        }
        assert!(time_embedding(1.5, &mlp).is_err());
        assert!(time_embedding(-0.1, &mlp).is_err());
    }

    #[test]
    fn perturb_sigma_zero_is_identity() {
        let x = gaussian_noise(3, 5, 5, 1).unwrap();
        let mask = NoiseMaskNet::seeded(3, 2).unwrap();
        assert_eq!(adaptive_perturb(&x, &mask, 0.0, 9).unwrap(), x);
    }

    #[test]
    fn perturb_zero_mask_conv_scales_by_half() {
        let x = gaussian_noise(2, 4, 4, 11).unwrap();
        let mask = NoiseMaskNet::constant_half(2).unwrap();
        let sigma = 0.2f32;
        let got = adaptive_perturb(&x, &mask, sigma, 77).unwrap();
        let eps = gaussian_noise(2, 4, 4, 77).unwrap();
        for ((&g, &xi), &e) in got.data().iter().zip(x.data()).zip(eps.data()) {
            let want = xi + sigma * 0.5 * e;
            assert!((g - want).abs() < 1e-6);
        }
    }

    #[test]
    fn perturb_is_deterministic() {
        let x = gaussian_noise(2, 4, 4, 21).unwrap();
        let mask = NoiseMaskNet::seeded(2, 22).unwrap();
        let a = adaptive_perturb(&x, &mask, 0.1, 5).unwrap();
        let b = adaptive_perturb(&x, &mask, 0.1, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, adaptive_perturb(&x, &mask, 0.1, 6).unwrap());
    }

    #[test]
    fn zeroed_block_is_identity_step() {
        let x = gaussian_noise(2, 5, 5, 31).unwrap();
        let mlp = TimeMlp::seeded(8, 32).unwrap();
        let block = RefineBlock::zero_output(2, 8, 33).unwrap();
        let out = refine_step(&x, &block, &mlp, 0.5).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn forced_gate_equals_ungated_main_path() {
        let x = gaussian_noise(2, 4, 4, 41).unwrap();
        let mlp = TimeMlp::seeded(4, 42).unwrap();
        let mut block = RefineBlock::seeded(2, 4, 43).unwrap();
        // Large positive bias saturates the sigmoid gate at 1.
        block.attn = ConvParams::new(2, 2, 1, 1, vec![0.0; 4], vec![60.0, 60.0], 0).unwrap();
        let got = refine_step(&x, &block, &mlp, 1.0 / 3.0).unwrap();
        let manual = {
            let emb = time_embedding(1.0 / 3.0, &mlp).unwrap();
            let emb_map = FeatureMap::broadcast_vector(&emb, 4, 4).unwrap();
            let z = concat_channels(&x, &emb_map).unwrap();
            let y = conv2d(&z, &block.conv1).unwrap();
            let y = batch_norm(&y, &block.bn).unwrap();
            let y = activation(&y, Activation::Relu);
            let y = conv2d(&y, &block.conv2).unwrap();
            y.add(&x).unwrap()
        };
        for (a, b) in got.data().iter().zip(manual.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn time_conditioning_reaches_output() {
        let x = gaussian_noise(2, 5, 5, 51).unwrap();
        let mlp = TimeMlp::seeded(8, 52).unwrap();
        let block = RefineBlock::seeded(2, 8, 53).unwrap();
        let a = refine_step(&x, &block, &mlp, 2.0 / 3.0).unwrap();
        let b = refine_step(&x, &block, &mlp, 0.75).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let x = gaussian_noise(2, 4, 4, 61).unwrap();
        let y = gaussian_noise(2, 4, 4, 62).unwrap();
        assert_eq!(residual_blend(&x, &y, 0.0).unwrap(), x);
        assert_eq!(residual_blend(&x, &y, 1.0).unwrap(), y);
    }

    #[test]
    fn blend_half_on_stub() {
        // If refinement produced x + 2 everywhere, alpha 0.5 gives x + 1.
        let x = gaussian_noise(1, 3, 3, 63).unwrap();
        let stub = x.map(|v| v + 2.0);
        let out = residual_blend(&x, &stub, 0.5).unwrap();
        for (o, xi) in out.data().iter().zip(x.data()) {
            assert!((o - (xi + 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn blend_is_affine_interpolation() {
        let x = gaussian_noise(2, 4, 4, 64).unwrap();
        let y = gaussian_noise(2, 4, 4, 65).unwrap();
        for alpha in [0.0f32, 0.25, 0.5, 1.0] {
            let out = residual_blend(&x, &y, alpha).unwrap();
            for ((o, xi), yi) in out.data().iter().zip(x.data()).zip(y.data()) {
                let want = xi + alpha * (yi - xi);
                assert!((o - want).abs() <= 1e-6, "alpha {alpha}");
            }
        }
        assert!(residual_blend(&x, &y, 1.5).is_err());
    }

    #[test]
    fn forward_alpha_zero_is_bit_exact_identity() {
        let x = gaussian_noise(2, 5, 5, 71).unwrap();
        let refiner = Refiner::seeded(2, 8, 3, 72).unwrap();
        let cfg = RefinerConfig {
            alpha: 0.0,
            time_dim: 8,
            ..Default::default()
        };
        assert_eq!(refiner_forward(&x, &refiner, &cfg).unwrap(), x);
    }

    #[test]
    fn skip_guarantee() {
        // All blocks zeroed: x_S is exactly the perturbed input, so the
        // output is x + alpha * sigma * m * eps; with sigma 0 it is x.
        let x = gaussian_noise(2, 4, 4, 81).unwrap();
        let blocks = (0..3)
            .map(|i| RefineBlock::zero_output(2, 8, 82 + i).unwrap())
            .collect::<Vec<_>>();
        let refiner = Refiner {
            time_mlp: TimeMlp::seeded(8, 85).unwrap(),
            mask: NoiseMaskNet::seeded(2, 86).unwrap(),
            blocks,
        };
        let cfg = RefinerConfig {
            sigma: 0.0,
            time_dim: 8,
            ..Default::default()
        };
        assert_eq!(refiner_forward(&x, &refiner, &cfg).unwrap(), x);

        let cfg = RefinerConfig {
            sigma: 0.3,
            alpha: 0.5,
            time_dim: 8,
            seed: 7,
            ..Default::default()
        };
        let got = refiner_forward(&x, &refiner, &cfg).unwrap();
        let perturbed = adaptive_perturb(&x, &refiner.mask, cfg.sigma, cfg.seed).unwrap();
        let want = residual_blend(&x, &perturbed, cfg.alpha).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn forward_validates_configuration() {
        let x = gaussian_noise(2, 4, 4, 91).unwrap();
        let refiner = Refiner::seeded(2, 8, 3, 92).unwrap();
        let bad_steps = RefinerConfig {
            steps: 4,
            time_dim: 8,
            ..Default::default()
        };
        assert!(refiner_forward(&x, &refiner, &bad_steps).is_err());
        let bad_dim = RefinerConfig {
            time_dim: 16,
            ..Default::default()
        };
        assert!(refiner_forward(&x, &refiner, &bad_dim).is_err());
    }

    #[test]
    fn forward_shape_preserved_and_deterministic() {
        let x = gaussian_noise(3, 6, 4, 95).unwrap();
        let refiner = Refiner::seeded(3, 8, 3, 96).unwrap();
        let cfg = RefinerConfig {
            time_dim: 8,
            seed: 3,
            ..Default::default()
        };
        let a = refiner_forward(&x, &refiner, &cfg).unwrap();
        let b = refiner_forward(&x, &refiner, &cfg).unwrap();
        assert_eq!(a.shape(), x.shape());
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn store_round_trip() {
        let refiner = Refiner::seeded(2, 8, 3, 101).unwrap();
        let mut store = ParamStore::new();
        refiner.to_store(&mut store).unwrap();
        let back = Refiner::from_store(&store, 3).unwrap();
        assert_eq!(back, refiner);
    }
}
