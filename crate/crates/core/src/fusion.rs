//! Iterative cross-modal harmonization.
//!
//! Two modality feature maps (RGB and thermal) are fused by repeating, for a
//! fixed number of steps, a perturb-then-refine round: each modality is
//! perturbed with seeded Gaussian noise, then corrected by a residual
//! predicted from the concatenation of its own perturbed features and the
//! *other* modality's previous-step features. After the final step the two
//! refined maps are summed into a single fused representation.
//!
//! With `sigma = 0` and zero final-conv weights the whole process reduces
//! bit-exactly to `x_rgb + x_t`.

use crate::rng::{derive_seed, Rng};
use crate::store::{ParamStore, StoreError};
use crate::tensor::{
    activation, batch_norm, concat_channels, conv2d, gaussian_noise, Activation, ConvParams,
    FeatureMap, NormParams, TensorError,
};

/// Residual refinement network: conv(2C->C, 3x3) -> bn -> relu -> bn ->
/// conv(C->C, 3x3), all spatial-preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineNet {
    pub conv1: ConvParams,
    pub bn1: NormParams,
    pub bn2: NormParams,
    pub conv2: ConvParams,
}

impl RefineNet {
    /// Randomly initialized net for `channels`-channel inputs.
    pub fn seeded(channels: usize, seed: u64) -> Result<Self, TensorError> {
        let mut rng = Rng::new(seed);
        Ok(RefineNet {
            conv1: ConvParams::seeded(channels, 2 * channels, 3, 3, 1, &mut rng)?,
            bn1: NormParams::identity(channels),
            bn2: NormParams::identity(channels),
            conv2: ConvParams::seeded(channels, channels, 3, 3, 1, &mut rng)?,
        })
    }

    /// Net whose residual is identically zero (final conv zeroed); the other
    /// layers are randomly initialized so the zero-output property does not
    /// depend on them.
    pub fn zero_residual(channels: usize, seed: u64) -> Result<Self, TensorError> {
        let mut net = Self::seeded(channels, seed)?;
        net.conv2 = ConvParams::zeros(channels, channels, 3, 3, 1)?;
        Ok(net)
    }

    pub fn validate(&self, channels: usize) -> Result<(), TensorError> {
        self.conv1.validate()?;
        self.conv2.validate()?;
        self.bn1.validate(self.conv1.out_channels)?;
        self.bn2.validate(self.conv1.out_channels)?;
        if self.conv1.in_channels != 2 * channels || self.conv1.out_channels != channels {
            return Err(TensorError::ChannelMismatch {
                expected: 2 * channels,
                got: self.conv1.in_channels,
            });
        }
        if self.conv2.in_channels != channels || self.conv2.out_channels != channels {
            return Err(TensorError::ChannelMismatch {
                expected: channels,
                got: self.conv2.in_channels,
            });
        }
        Ok(())
    }

    pub fn to_store(&self, store: &mut ParamStore, prefix: &str) -> Result<(), StoreError> {
        conv_to_store(&self.conv1, store, &format!("{prefix}.conv1"))?;
        norm_to_store(&self.bn1, store, &format!("{prefix}.bn1"))?;
        norm_to_store(&self.bn2, store, &format!("{prefix}.bn2"))?;
        conv_to_store(&self.conv2, store, &format!("{prefix}.conv2"))
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self, StoreError> {
        Ok(RefineNet {
            conv1: conv_from_store(store, &format!("{prefix}.conv1"))?,
            bn1: norm_from_store(store, &format!("{prefix}.bn1"))?,
            bn2: norm_from_store(store, &format!("{prefix}.bn2"))?,
            conv2: conv_from_store(store, &format!("{prefix}.conv2"))?,
        })
    }
}

pub(crate) fn conv_to_store(
    p: &ConvParams,
    store: &mut ParamStore,
    prefix: &str,
) -> Result<(), StoreError> {
    store.insert(
        &format!("{prefix}.weight"),
        vec![p.out_channels, p.in_channels, p.kernel_h, p.kernel_w],
        p.weights.clone(),
    )?;
    store.insert(
        &format!("{prefix}.bias"),
        vec![p.out_channels],
        p.bias.clone(),
    )?;
    store.insert_scalar(&format!("{prefix}.pad"), p.padding as f32)
}

pub(crate) fn conv_from_store(store: &ParamStore, prefix: &str) -> Result<ConvParams, StoreError> {
    let entry = store.get_entry(&format!("{prefix}.weight"))?;
    if entry.shape.len() != 4 {
        return Err(StoreError::ShapeMismatch {
            name: format!("{prefix}.weight"),
            expected: vec![0, 0, 0, 0],
            got: entry.shape.clone(),
        });
    }
    let (out_c, in_c, kh, kw) = (
        entry.shape[0],
        entry.shape[1],
        entry.shape[2],
        entry.shape[3],
    );
    let weights = entry.data.clone();
    let bias = store.get(&format!("{prefix}.bias"), &[out_c])?.to_vec();
    let padding = store.get_scalar(&format!("{prefix}.pad"))? as usize;
    ConvParams::new(out_c, in_c, kh, kw, weights, bias, padding).map_err(|e| StoreError::BadEntry {
        name: prefix.to_string(),
        msg: e.to_string(),
    })
}

pub(crate) fn norm_to_store(
    p: &NormParams,
    store: &mut ParamStore,
    prefix: &str,
) -> Result<(), StoreError> {
    let c = p.channels();
    store.insert(&format!("{prefix}.gamma"), vec![c], p.gamma.clone())?;
    store.insert(&format!("{prefix}.beta"), vec![c], p.beta.clone())?;
    store.insert(&format!("{prefix}.mean"), vec![c], p.running_mean.clone())?;
    store.insert(&format!("{prefix}.var"), vec![c], p.running_var.clone())?;
    store.insert_scalar(&format!("{prefix}.eps"), p.epsilon)
}

pub(crate) fn norm_from_store(store: &ParamStore, prefix: &str) -> Result<NormParams, StoreError> {
    let gamma = store.get_entry(&format!("{prefix}.gamma"))?;
    let c = gamma.shape[0];
    let gamma = gamma.data.clone();
    let beta = store.get(&format!("{prefix}.beta"), &[c])?.to_vec();
    let mean = store.get(&format!("{prefix}.mean"), &[c])?.to_vec();
    let var = store.get(&format!("{prefix}.var"), &[c])?.to_vec();
    let eps = store.get_scalar(&format!("{prefix}.eps"))?;
    NormParams::new(gamma, beta, mean, var, eps).map_err(|e| StoreError::BadEntry {
        name: prefix.to_string(),
        msg: e.to_string(),
    })
}

/// Canonical store prefixes for the two refinement networks.
pub const RGB_NET_PREFIX: &str = "cmdf.rgb";
pub const THERMAL_NET_PREFIX: &str = "cmdf.t";

/// Writes both refinement networks under the canonical prefixes.
pub fn nets_to_store(
    store: &mut ParamStore,
    rgb: &RefineNet,
    thermal: &RefineNet,
) -> Result<(), StoreError> {
    rgb.to_store(store, RGB_NET_PREFIX)?;
    thermal.to_store(store, THERMAL_NET_PREFIX)
}

/// Loads both refinement networks from the canonical prefixes.
pub fn nets_from_store(store: &ParamStore) -> Result<(RefineNet, RefineNet), StoreError> {
    Ok((
        RefineNet::from_store(store, RGB_NET_PREFIX)?,
        RefineNet::from_store(store, THERMAL_NET_PREFIX)?,
    ))
}

/// Fusion hyperparameters.
///
/// `noise_tags` names the per-modality noise streams; swapping the tags
/// together with the inputs and nets reproduces the mirrored computation
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Number of harmonization rounds.
    pub steps: usize,
    /// Perturbation scale; 0 disables perturbation entirely.
    pub sigma: f32,
    pub base_seed: u64,
    pub noise_tags: (u64, u64),
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            steps: 3,
            sigma: 0.1,
            base_seed: 0,
            noise_tags: (0, 1),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.steps == 0 {
            return Err(TensorError::InvalidValue {
                what: "fusion steps must be >= 1",
            });
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(TensorError::InvalidValue {
                what: "fusion sigma must be finite and >= 0",
            });
        }
        Ok(())
    }
}

/// Per-modality refined features after `step` harmonization rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    pub rgb: FeatureMap,
    pub thermal: FeatureMap,
    pub step: usize,
}

/// Noise seed for a given round and modality tag.
pub fn noise_seed(cfg: &FusionConfig, step: usize, tag: u64) -> u64 {
    derive_seed(cfg.base_seed, step as u64, tag)
}

/// Runs one modality's refinement network on `[x_self, x_other]` and returns
/// the residual correction only; the caller adds it.
pub fn refine_block(
    x_self: &FeatureMap,
    x_other: &FeatureMap,
    net: &RefineNet,
) -> Result<FeatureMap, TensorError> {
    if x_self.shape() != x_other.shape() {
        return Err(TensorError::SpatialMismatch {
            a: (x_self.height(), x_self.width()),
            b: (x_other.height(), x_other.width()),
        });
    }
    net.validate(x_self.channels())?;
    let cat = concat_channels(x_self, x_other)?;
    let y = conv2d(&cat, &net.conv1)?;
    let y = batch_norm(&y, &net.bn1)?;
    let y = activation(&y, Activation::Relu);
    let y = batch_norm(&y, &net.bn2)?;
    conv2d(&y, &net.conv2)
}

/// Advances the state by one perturb-and-refine round.
///
/// Both refinements read the *other* modality's previous-step (unperturbed)
/// features. Noise is resampled per round from a seed derived from
/// `(base_seed, round, modality tag)`.
pub fn harmonize_step(
    state: &FusionState,
    nets: (&RefineNet, &RefineNet),
    cfg: &FusionConfig,
) -> Result<FusionState, TensorError> {
    cfg.validate()?;
    let i = state.step + 1;
    if i > cfg.steps {
        return Err(TensorError::InvalidValue {
            what: "harmonize_step past the configured step count",
        });
    }
    if state.rgb.shape() != state.thermal.shape() {
        return Err(TensorError::SpatialMismatch {
            a: (state.rgb.height(), state.rgb.width()),
            b: (state.thermal.height(), state.thermal.width()),
        });
    }
    let perturb = |x: &FeatureMap, tag: u64| -> Result<FeatureMap, TensorError> {
        if cfg.sigma == 0.0 {
            return Ok(x.clone());
        }
        let (c, h, w) = x.shape();
        let eps = gaussian_noise(c, h, w, noise_seed(cfg, i, tag))?;
        x.add_scaled(&eps, cfg.sigma)
    };
    let rgb_tilde = perturb(&state.rgb, cfg.noise_tags.0)?;
    let thermal_tilde = perturb(&state.thermal, cfg.noise_tags.1)?;
    let rgb_next = rgb_tilde.add(&refine_block(&rgb_tilde, &state.thermal, nets.0)?)?;
    let thermal_next = thermal_tilde.add(&refine_block(&thermal_tilde, &state.rgb, nets.1)?)?;
    Ok(FusionState {
        rgb: rgb_next,
        thermal: thermal_next,
        step: i,
    })
}

/// Full fusion: initializes from the inputs, runs exactly `cfg.steps`
/// harmonization rounds, and returns the sum of both refined maps.
pub fn fuse(
    x_rgb: &FeatureMap,
    x_thermal: &FeatureMap,
    nets: (&RefineNet, &RefineNet),
    cfg: &FusionConfig,
) -> Result<FeatureMap, TensorError> {
    cfg.validate()?;
    if x_rgb.shape() != x_thermal.shape() {
        return Err(TensorError::SpatialMismatch {
            a: (x_rgb.height(), x_rgb.width()),
            b: (x_thermal.height(), x_thermal.width()),
        });
    }
    let mut state = FusionState {
        rgb: x_rgb.clone(),
        thermal: x_thermal.clone(),
        step: 0,
    };
    for _ in 0..cfg.steps {
        state = harmonize_step(&state, nets, cfg)?;
    }
    state.rgb.add(&state.thermal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_noise;

    fn cfg(steps: usize, sigma: f32, seed: u64) -> FusionConfig {
        FusionConfig {
            steps,
            sigma,
            base_seed: seed,
            noise_tags: (0, 1),
        }
    }

    #[test]
    fn zero_final_conv_gives_zero_residual() {
        let x = gaussian_noise(3, 6, 6, 1).unwrap();
        let y = gaussian_noise(3, 6, 6, 2).unwrap();
        let net = RefineNet::zero_residual(3, 7).unwrap();
        let r = refine_block(&x, &y, &net).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refine_block_matches_manual_composition() {
        let x = gaussian_noise(2, 5, 5, 3).unwrap();
        let y = gaussian_noise(2, 5, 5, 4).unwrap();
        let net = RefineNet::seeded(2, 11).unwrap();
        let got = refine_block(&x, &y, &net).unwrap();
        let manual = {
            let cat = concat_channels(&x, &y).unwrap();
            let z = conv2d(&cat, &net.conv1).unwrap();
            let z = batch_norm(&z, &net.bn1).unwrap();
            let z = activation(&z, Activation::Relu);
            let z = batch_norm(&z, &net.bn2).unwrap();
            conv2d(&z, &net.conv2).unwrap()
        };
        assert_eq!(got, manual);
    }

    #[test]
    fn refine_block_shape_contract() {
        let x = gaussian_noise(4, 3, 3, 5).unwrap();
        let y = gaussian_noise(4, 3, 3, 6).unwrap();
        let net = RefineNet::seeded(4, 9).unwrap();
        let r = refine_block(&x, &y, &net).unwrap();
        assert_eq!(r.shape(), x.shape());
        // Mismatched partner shape is rejected.
        let bad = gaussian_noise(4, 4, 3, 6).unwrap();
        assert!(refine_block(&x, &bad, &net).is_err());
    }

    #[test]
    fn sigma_zero_and_zero_nets_leave_state_unchanged() {
        let x = gaussian_noise(2, 4, 4, 1).unwrap();
        let y = gaussian_noise(2, 4, 4, 2).unwrap();
        let nets = (
            RefineNet::zero_residual(2, 3).unwrap(),
            RefineNet::zero_residual(2, 4).unwrap(),
        );
        let state = FusionState {
            rgb: x.clone(),
            thermal: y.clone(),
            step: 0,
        };
        let next = harmonize_step(&state, (&nets.0, &nets.1), &cfg(3, 0.0, 0)).unwrap();
        assert_eq!(next.rgb, x);
        assert_eq!(next.thermal, y);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn step_matches_manual_equations() {
        // sigma = 0 so the update is r_m' = r_m + D_m([r_m, r_n]).
        let x = gaussian_noise(2, 5, 5, 21).unwrap();
        let y = gaussian_noise(2, 5, 5, 22).unwrap();
        let d_rgb = RefineNet::seeded(2, 23).unwrap();
        let d_t = RefineNet::seeded(2, 24).unwrap();
        let state = FusionState {
            rgb: x.clone(),
            thermal: y.clone(),
            step: 0,
        };
        let next = harmonize_step(&state, (&d_rgb, &d_t), &cfg(1, 0.0, 0)).unwrap();
        let want_rgb = x.add(&refine_block(&x, &y, &d_rgb).unwrap()).unwrap();
        let want_t = y.add(&refine_block(&y, &x, &d_t).unwrap()).unwrap();
        assert_eq!(next.rgb, want_rgb);
        assert_eq!(next.thermal, want_t);
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let x = gaussian_noise(2, 4, 4, 31).unwrap();
        let y = gaussian_noise(2, 4, 4, 32).unwrap();
        let nets = (
            RefineNet::seeded(2, 33).unwrap(),
            RefineNet::seeded(2, 34).unwrap(),
        );
        let c = cfg(3, 0.1, 77);
        let a = fuse(&x, &y, (&nets.0, &nets.1), &c).unwrap();
        let b = fuse(&x, &y, (&nets.0, &nets.1), &c).unwrap();
        assert_eq!(a, b);
        // Different base seed changes the result.
        let d = fuse(&x, &y, (&nets.0, &nets.1), &cfg(3, 0.1, 78)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn degenerate_fusion_is_additive() {
        let x = gaussian_noise(3, 6, 6, 41).unwrap();
        let y = gaussian_noise(3, 6, 6, 42).unwrap();
        let nets = (
            RefineNet::zero_residual(3, 43).unwrap(),
            RefineNet::zero_residual(3, 44).unwrap(),
        );
        let f = fuse(&x, &y, (&nets.0, &nets.1), &cfg(3, 0.0, 0)).unwrap();
        let want = x.add(&y).unwrap();
        assert_eq!(f, want);
    }

    #[test]
    fn shape_preserved_for_any_step_count() {
        let x = gaussian_noise(2, 7, 5, 51).unwrap();
        let y = gaussian_noise(2, 7, 5, 52).unwrap();
        let nets = (
            RefineNet::seeded(2, 53).unwrap(),
            RefineNet::seeded(2, 54).unwrap(),
        );
        for steps in [1, 2, 4] {
            let f = fuse(&x, &y, (&nets.0, &nets.1), &cfg(steps, 0.1, 5)).unwrap();
            assert_eq!(f.shape(), x.shape());
            assert!(f.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn checkpoint_resume_equals_continuous_run() {
        let x = gaussian_noise(2, 5, 5, 61).unwrap();
        let y = gaussian_noise(2, 5, 5, 62).unwrap();
        let nets = (
            RefineNet::seeded(2, 63).unwrap(),
            RefineNet::seeded(2, 64).unwrap(),
        );
        let c = cfg(3, 0.1, 99);
        let mut full = FusionState {
            rgb: x.clone(),
            thermal: y.clone(),
            step: 0,
        };
        for _ in 0..3 {
            full = harmonize_step(&full, (&nets.0, &nets.1), &c).unwrap();
        }
        // Stop after two steps, snapshot, resume.
        let mut partial = FusionState {
            rgb: x,
            thermal: y,
            step: 0,
        };
        for _ in 0..2 {
            partial = harmonize_step(&partial, (&nets.0, &nets.1), &c).unwrap();
        }
        let snapshot = partial.clone();
        let resumed = harmonize_step(&snapshot, (&nets.0, &nets.1), &c).unwrap();
        assert_eq!(resumed.rgb, full.rgb);
        assert_eq!(resumed.thermal, full.thermal);
    }

    #[test]
    fn swapping_modalities_nets_and_streams_is_symmetric() {
        let x = gaussian_noise(2, 6, 6, 71).unwrap();
        let y = gaussian_noise(2, 6, 6, 72).unwrap();
        let d_rgb = RefineNet::seeded(2, 73).unwrap();
        let d_t = RefineNet::seeded(2, 74).unwrap();
        let forward = FusionConfig {
            steps: 3,
            sigma: 0.1,
            base_seed: 5,
            noise_tags: (0, 1),
        };
        let swapped = FusionConfig {
            noise_tags: (1, 0),
            ..forward.clone()
        };
        let f1 = fuse(&x, &y, (&d_rgb, &d_t), &forward).unwrap();
        let f2 = fuse(&y, &x, (&d_t, &d_rgb), &swapped).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn cross_guidance_wiring() {
        // With the thermal net zeroed and sigma = 0, the thermal path must
        // come out exactly as it went in, regardless of the RGB net.
        let x = gaussian_noise(2, 5, 5, 81).unwrap();
        let y = gaussian_noise(2, 5, 5, 82).unwrap();
        let d_rgb = RefineNet::seeded(2, 83).unwrap();
        let d_t = RefineNet::zero_residual(2, 84).unwrap();
        let c = cfg(3, 0.0, 0);
        let mut state = FusionState {
            rgb: x,
            thermal: y.clone(),
            step: 0,
        };
        for _ in 0..3 {
            state = harmonize_step(&state, (&d_rgb, &d_t), &c).unwrap();
        }
        assert_eq!(state.thermal, y);
        // With noise on, the thermal path is input plus the accumulated
        // noise only.
        let c = cfg(3, 0.1, 9);
        let mut state = FusionState {
            rgb: gaussian_noise(2, 5, 5, 85).unwrap(),
            thermal: y.clone(),
            step: 0,
        };
        for _ in 0..3 {
            state = harmonize_step(&state, (&d_rgb, &d_t), &c).unwrap();
        }
        let mut want = y;
        for i in 1..=3 {
            let eps = gaussian_noise(2, 5, 5, noise_seed(&c, i, c.noise_tags.1)).unwrap();
            want = want.add_scaled(&eps, c.sigma).unwrap();
        }
        assert_eq!(state.thermal, want);
    }

    #[test]
    fn invalid_config_rejected() {
        let x = gaussian_noise(1, 2, 2, 1).unwrap();
        let nets = (
            RefineNet::seeded(1, 2).unwrap(),
            RefineNet::seeded(1, 3).unwrap(),
        );
        assert!(fuse(&x, &x, (&nets.0, &nets.1), &cfg(0, 0.1, 0)).is_err());
        assert!(fuse(&x, &x, (&nets.0, &nets.1), &cfg(1, -0.5, 0)).is_err());
    }

    #[test]
    fn default_config_runs_exactly_three_rounds() {
        // fuse with the default step count must equal three explicit
        // harmonize_step advances, no more, no fewer.
        let x = gaussian_noise(2, 5, 5, 111).unwrap();
        let y = gaussian_noise(2, 5, 5, 112).unwrap();
        let nets = (
            RefineNet::seeded(2, 113).unwrap(),
            RefineNet::seeded(2, 114).unwrap(),
        );
        let c = FusionConfig {
            base_seed: 3,
            ..Default::default()
        };
        assert_eq!(c.steps, 3);
        let f = fuse(&x, &y, (&nets.0, &nets.1), &c).unwrap();
        let mut state = FusionState {
            rgb: x,
            thermal: y,
            step: 0,
        };
        for expected_step in 1..=3 {
            state = harmonize_step(&state, (&nets.0, &nets.1), &c).unwrap();
            assert_eq!(state.step, expected_step);
        }
        assert_eq!(f, state.rgb.add(&state.thermal).unwrap());
        // A fourth round is past the configured count.
        assert!(harmonize_step(&state, (&nets.0, &nets.1), &c).is_err());
    }

    #[test]
    fn store_round_trip() {
        let rgb = RefineNet::seeded(3, 91).unwrap();
        let thermal = RefineNet::seeded(3, 92).unwrap();
        let mut store = ParamStore::new();
        nets_to_store(&mut store, &rgb, &thermal).unwrap();
        assert!(store.names().any(|n| n == "cmdf.rgb.conv1.weight"));
        assert!(store.names().any(|n| n == "cmdf.t.conv2.bias"));
        // Bit-exact through the file encoding.
        let reloaded = ParamStore::from_bytes(&store.to_bytes()).unwrap();
        let (r2, t2) = nets_from_store(&reloaded).unwrap();
        assert_eq!(r2, rgb);
        assert_eq!(t2, thermal);
    }
}
