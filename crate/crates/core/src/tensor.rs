//! Minimal dense-tensor kernel: exactly the primitives the fusion pipeline
//! needs. All math is 32-bit float, stride-1 convolution with zero padding,
//! inference-mode batch normalization. Every operation is a pure function of
//! its inputs; identical inputs (including seeds) give bit-identical outputs.

use std::fmt;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Zero or otherwise unusable dimension.
    InvalidShape { what: &'static str },
    /// Backing buffer length does not match the declared shape.
    DataLength { expected: usize, got: usize },
    /// Input channel count does not match parameter expectations.
    ChannelMismatch { expected: usize, got: usize },
    /// Kernel does not fit in the padded input.
    KernelTooLarge {
        kernel: (usize, usize),
        padded: (usize, usize),
    },
    /// Two maps disagree on spatial dimensions.
    SpatialMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    /// A parameter vector has the wrong length.
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A scalar parameter is out of its valid range.
    InvalidValue { what: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidShape { what } => write!(f, "invalid shape: {what}"),
            Self::DataLength { expected, got } => {
                write!(
                    f,
                    "data length {got} does not match shape (expected {expected})"
                )
            }
            Self::ChannelMismatch { expected, got } => {
                write!(f, "channel mismatch: expected {expected}, got {got}")
            }
            Self::KernelTooLarge { kernel, padded } => write!(
                f,
                "kernel {}x{} larger than padded input {}x{}",
                kernel.0, kernel.1, padded.0, padded.1
            ),
            Self::SpatialMismatch { a, b } => {
                write!(f, "spatial dims differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)
            }
            Self::LengthMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            Self::InvalidValue { what } => write!(f, "invalid value: {what}"),
        }
    }
}

impl std::error::Error for TensorError {}

/// Dense rank-3 feature map in (channel, row, column) row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, TensorError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(TensorError::InvalidShape {
                what: "feature map dimensions must be positive",
            });
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self, TensorError> {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, TensorError> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Elementwise map, preserving shape.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> FeatureMap {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap, TensorError> {
        self.zip(other, |a, b| a + b)
    }

    /// self + scale * other, elementwise.
    pub fn add_scaled(&self, other: &FeatureMap, scale: f32) -> Result<FeatureMap, TensorError> {
        self.zip(other, |a, b| a + scale * b)
    }

    pub fn zip(
        &self,
        other: &FeatureMap,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<FeatureMap, TensorError> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(self, other));
        }
        Ok(FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Broadcasts a vector to a map with one constant-valued channel per entry.
    pub fn broadcast_vector(
        values: &[f32],
        height: usize,
        width: usize,
    ) -> Result<FeatureMap, TensorError> {
        if values.is_empty() {
            return Err(TensorError::InvalidShape {
                what: "broadcast vector must be non-empty",
            });
        }
        let mut data = Vec::with_capacity(values.len() * height * width);
        for &v in values {
            data.extend(std::iter::repeat_n(v, height * width));
        }
        Self::new(values.len(), height, width, data)
    }
}

fn shape_mismatch(a: &FeatureMap, b: &FeatureMap) -> TensorError {
    if a.channels != b.channels {
        TensorError::ChannelMismatch {
            expected: a.channels,
            got: b.channels,
        }
    } else {
        TensorError::SpatialMismatch {
            a: (a.height, a.width),
            b: (b.height, b.width),
        }
    }
}

/// Convolution weights, laid out `[out][in][kh][kw]` row-major. Stride is
/// fixed at 1; `padding` is symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        padding: usize,
    ) -> Result<Self, TensorError> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(TensorError::InvalidShape {
                what: "conv dimensions must be positive",
            });
        }
        let p = ConvParams {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            padding,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        Self::new(
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
            vec![0.0; out_channels],
            padding,
        )
    }

    /// Seeded init, uniform in [-k, k] with k = 1/sqrt(fan_in).
    pub fn seeded(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Result<Self, TensorError> {
        let fan_in = in_channels * kernel_h * kernel_w;
        let k = 1.0 / (fan_in as f64).sqrt();
        let n = out_channels * fan_in;
        let weights = (0..n).map(|_| rng.uniform(-k, k) as f32).collect();
        let bias = (0..out_channels)
            .map(|_| rng.uniform(-k, k) as f32)
            .collect();
        Self::new(
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            padding,
        )
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let expected = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != expected {
            return Err(TensorError::LengthMismatch {
                what: "conv weights",
                expected,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_channels {
            return Err(TensorError::LengthMismatch {
                what: "conv bias",
                expected: self.out_channels,
                got: self.bias.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn weight(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((oc * self.in_channels + ic) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    pub fn weight_mut(&mut self, oc: usize, ic: usize, ky: usize, kx: usize) -> &mut f32 {
        &mut self.weights[((oc * self.in_channels + ic) * self.kernel_h + ky) * self.kernel_w + kx]
    }
}

/// Inference-mode batch normalization parameters (stored statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl NormParams {
    pub fn new(
        gamma: Vec<f32>,
        beta: Vec<f32>,
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
        epsilon: f32,
    ) -> Result<Self, TensorError> {
        let p = NormParams {
            gamma,
            beta,
            running_mean,
            running_var,
            epsilon,
        };
        p.validate(p.gamma.len())?;
        Ok(p)
    }

    /// gamma 1, beta 0, mean 0, var 1: the identity transform (up to epsilon).
    pub fn identity(channels: usize) -> Self {
        NormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self, channels: usize) -> Result<(), TensorError> {
        for (what, v) in [
            ("norm gamma", &self.gamma),
            ("norm beta", &self.beta),
            ("norm running_mean", &self.running_mean),
            ("norm running_var", &self.running_var),
        ] {
            if v.len() != channels {
                return Err(TensorError::LengthMismatch {
                    what,
                    expected: channels,
                    got: v.len(),
                });
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(TensorError::InvalidValue {
                what: "norm epsilon must be a positive finite number",
            });
        }
        if self.running_var.iter().any(|&v| v < 0.0) {
            return Err(TensorError::InvalidValue {
                what: "norm running_var must be non-negative",
            });
        }
        Ok(())
    }
}

/// Affine layer weights, `[out][in]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LinearParams {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self, TensorError> {
        if out_dim == 0 || in_dim == 0 {
            return Err(TensorError::InvalidShape {
                what: "linear dimensions must be positive",
            });
        }
        let p = LinearParams {
            out_dim,
            in_dim,
            weights,
            bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn seeded(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Result<Self, TensorError> {
        let k = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..out_dim * in_dim)
            .map(|_| rng.uniform(-k, k) as f32)
            .collect();
        let bias = (0..out_dim).map(|_| rng.uniform(-k, k) as f32).collect();
        Self::new(out_dim, in_dim, weights, bias)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.weights.len() != self.out_dim * self.in_dim {
            return Err(TensorError::LengthMismatch {
                what: "linear weights",
                expected: self.out_dim * self.in_dim,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_dim {
            return Err(TensorError::LengthMismatch {
                what: "linear bias",
                expected: self.out_dim,
                got: self.bias.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Sigmoid,
}

#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn apply_activation(x: f32, kind: Activation) -> f32 {
    match kind {
        Activation::Relu => x.max(0.0),
        Activation::Silu => x * sigmoid_scalar(x),
        Activation::Sigmoid => sigmoid_scalar(x),
    }
}

/// Elementwise activation.
pub fn activation(input: &FeatureMap, kind: Activation) -> FeatureMap {
    input.map(|v| apply_activation(v, kind))
}

/// Direct stride-1 convolution with symmetric zero padding.
///
/// Output spatial dims are `input + 2*padding - kernel + 1`; a 3x3 kernel
/// with padding 1 preserves resolution.
pub fn conv2d(input: &FeatureMap, p: &ConvParams) -> Result<FeatureMap, TensorError> {
    p.validate()?;
    if input.channels() != p.in_channels {
        return Err(TensorError::ChannelMismatch {
            expected: p.in_channels,
            got: input.channels(),
        });
    }
    let padded_h = input.height() + 2 * p.padding;
    let padded_w = input.width() + 2 * p.padding;
    if p.kernel_h > padded_h || p.kernel_w > padded_w {
        return Err(TensorError::KernelTooLarge {
            kernel: (p.kernel_h, p.kernel_w),
            padded: (padded_h, padded_w),
        });
    }
    let out_h = padded_h - p.kernel_h + 1;
    let out_w = padded_w - p.kernel_w + 1;
    let mut out = FeatureMap::zeros(p.out_channels, out_h, out_w)?;
    let pad = p.padding as isize;
    for oc in 0..p.out_channels {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = p.bias[oc];
                for ic in 0..p.in_channels {
                    for ky in 0..p.kernel_h {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= input.height() as isize {
                            continue;
                        }
                        for kx in 0..p.kernel_w {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= input.width() as isize {
                                continue;
                            }
                            acc +=
                                p.weight(oc, ic, ky, kx) * input.get(ic, iy as usize, ix as usize);
                        }
                    }
                }
                out.set(oc, oy, ox, acc);
            }
        }
    }
    Ok(out)
}

/// Per-channel normalization with stored statistics:
/// `(x - mean_c) / sqrt(var_c + eps) * gamma_c + beta_c`.
pub fn batch_norm(input: &FeatureMap, p: &NormParams) -> Result<FeatureMap, TensorError> {
    p.validate(input.channels())?;
    let mut out = input.clone();
    for c in 0..input.channels() {
        let inv = 1.0 / (p.running_var[c] + p.epsilon).sqrt();
        let gamma = p.gamma[c];
        let beta = p.beta[c];
        let mean = p.running_mean[c];
        let plane = &mut out.data_mut()
            [c * input.height() * input.width()..(c + 1) * input.height() * input.width()];
        for v in plane {
            *v = (*v - mean) * inv * gamma + beta;
        }
    }
    Ok(out)
}

/// Channel-wise concatenation; `a`'s channels occupy the leading positions.
pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap, TensorError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(TensorError::SpatialMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    FeatureMap::new(a.channels() + b.channels(), a.height(), a.width(), data)
}

/// Affine transform `W x + b`.
pub fn linear(input: &[f32], p: &LinearParams) -> Result<Vec<f32>, TensorError> {
    p.validate()?;
    if input.len() != p.in_dim {
        return Err(TensorError::LengthMismatch {
            what: "linear input",
            expected: p.in_dim,
            got: input.len(),
        });
    }
    let mut out = Vec::with_capacity(p.out_dim);
    for o in 0..p.out_dim {
        let mut acc = p.bias[o];
        for (i, &x) in input.iter().enumerate() {
            acc += p.weights[o * p.in_dim + i] * x;
        }
        out.push(acc);
    }
    Ok(out)
}

/// I.i.d. standard-normal map, fully determined by the seed.
pub fn gaussian_noise(
    channels: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<FeatureMap, TensorError> {
    let mut rng = Rng::new(seed);
    FeatureMap::from_fn(channels, height, width, |_, _, _| rng.normal_f32())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, |_, _, _| 1.0).unwrap()
    }

    #[test]
    fn feature_map_rejects_bad_shapes() {
        assert!(FeatureMap::new(0, 2, 2, vec![]).is_err());
        assert!(FeatureMap::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(1, 2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn conv_all_ones_box_kernel() {
        // 1x3x3 ones, 3x3 ones kernel, padding 1: center sees 9 taps,
        // corners see 4, edges see 6.
        let input = ones(1, 3, 3);
        let p = ConvParams::new(1, 1, 3, 3, vec![1.0; 9], vec![0.0], 1).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.shape(), (1, 3, 3));
        assert_eq!(out.get(0, 1, 1), 9.0);
        assert_eq!(out.get(0, 0, 0), 4.0);
        assert_eq!(out.get(0, 2, 2), 4.0);
        assert_eq!(out.get(0, 0, 1), 6.0);
    }

    #[test]
    fn conv_zero_weights_gives_zero() {
        let input = gaussian_noise(2, 4, 5, 3).unwrap();
        let p = ConvParams::zeros(3, 2, 3, 3, 1).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_identity_1x1() {
        let input = gaussian_noise(1, 5, 4, 9).unwrap();
        let p = ConvParams::new(1, 1, 1, 1, vec![1.0], vec![0.0], 0).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv_spatial_algebra() {
        // 3x3 kernel, padding 1 preserves any size >= 1.
        for (h, w) in [(1, 1), (2, 5), (7, 3), (8, 8)] {
            let input = ones(2, h, w);
            let p = ConvParams::zeros(1, 2, 3, 3, 1).unwrap();
            let out = conv2d(&input, &p).unwrap();
            assert_eq!(out.shape(), (1, h, w));
        }
        // General shape rule.
        let input = ones(1, 6, 7);
        let p = ConvParams::zeros(1, 1, 3, 2, 2).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.shape(), (1, 6 + 4 - 3 + 1, 7 + 4 - 2 + 1));
    }

    #[test]
    fn conv_errors() {
        let input = ones(2, 3, 3);
        let p = ConvParams::zeros(1, 3, 3, 3, 1).unwrap();
        assert!(matches!(
            conv2d(&input, &p),
            Err(TensorError::ChannelMismatch {
                expected: 3,
                got: 2
            })
        ));
        let p = ConvParams::zeros(1, 2, 6, 6, 1).unwrap();
        assert!(matches!(
            conv2d(&input, &p),
            Err(TensorError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn batch_norm_identity() {
        let input = gaussian_noise(3, 4, 4, 17).unwrap();
        let mut p = NormParams::identity(3);
        p.epsilon = 1e-12;
        let out = batch_norm(&input, &p).unwrap();
        for (a, b) in input.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn batch_norm_hand_value() {
        // x=3, mean 1, var 4, gamma 2, beta 1: (3-1)/2*2+1 = 3.
        let input = FeatureMap::new(1, 1, 1, vec![3.0]).unwrap();
        let p = NormParams::new(vec![2.0], vec![1.0], vec![1.0], vec![4.0], 1e-9).unwrap();
        let out = batch_norm(&input, &p).unwrap();
        assert!((out.get(0, 0, 0) - 3.0).abs() < 1e-5);
    }

    #[test]
    fn batch_norm_zero_gamma_is_constant_beta() {
        let input = gaussian_noise(2, 3, 3, 23).unwrap();
        let p = NormParams::new(
            vec![0.0, 0.0],
            vec![5.0, -2.0],
            vec![0.3, 0.7],
            vec![1.0, 2.0],
            1e-5,
        )
        .unwrap();
        let out = batch_norm(&input, &p).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(out.get(0, y, x), 5.0);
                assert_eq!(out.get(1, y, x), -2.0);
            }
        }
    }

    #[test]
    fn batch_norm_length_mismatch() {
        let input = ones(2, 2, 2);
        let p = NormParams::identity(3);
        assert!(batch_norm(&input, &p).is_err());
    }

    #[test]
    fn activation_values() {
        let input = FeatureMap::new(1, 1, 4, vec![-1.0, 0.0, 1.0, 2.0]).unwrap();
        let relu = activation(&input, Activation::Relu);
        assert_eq!(relu.data(), &[0.0, 0.0, 1.0, 2.0]);
        let silu = activation(&input, Activation::Silu);
        assert_eq!(silu.get(0, 0, 1), 0.0);
        assert!((silu.get(0, 0, 2) - 0.731059).abs() < 1e-5);
        let sig = activation(&input, Activation::Sigmoid);
        assert!((sig.get(0, 0, 1) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn concat_layout() {
        let a = gaussian_noise(3, 4, 4, 1).unwrap();
        let b = gaussian_noise(5, 4, 4, 2).unwrap();
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.shape(), (8, 4, 4));
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(cat.get(0, y, x), a.get(0, y, x));
                assert_eq!(cat.get(3, y, x), b.get(0, y, x));
                assert_eq!(cat.get(7, y, x), b.get(4, y, x));
            }
        }
    }

    #[test]
    fn concat_spatial_mismatch() {
        let a = ones(3, 4, 4);
        let b = ones(3, 5, 4);
        assert!(matches!(
            concat_channels(&a, &b),
            Err(TensorError::SpatialMismatch { .. })
        ));
    }

    #[test]
    fn linear_cases() {
        // Identity.
        let p = LinearParams::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(linear(&[3.0, -4.0], &p).unwrap(), vec![3.0, -4.0]);
        // Hand value.
        let p = LinearParams::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(linear(&[1.0, 1.0], &p).unwrap(), vec![3.0, 7.0]);
        // Zero weights pass bias through.
        let p = LinearParams::new(1, 3, vec![0.0; 3], vec![5.0]).unwrap();
        assert_eq!(linear(&[9.0, 9.0, 9.0], &p).unwrap(), vec![5.0]);
        // Length mismatch.
        assert!(linear(&[1.0], &p).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let a = gaussian_noise(2, 8, 8, 99).unwrap();
        let b = gaussian_noise(2, 8, 8, 99).unwrap();
        assert_eq!(a, b);
        let c = gaussian_noise(2, 8, 8, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_moments() {
        let m = gaussian_noise(16, 250, 250, 4242).unwrap();
        let n = m.data().len() as f64;
        let mean: f64 = m.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = m
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn seeded_init_bounds() {
        let mut rng = Rng::new(5);
        let p = ConvParams::seeded(4, 3, 3, 3, 1, &mut rng).unwrap();
        let k = 1.0 / ((3 * 3 * 3) as f32).sqrt();
        assert!(p.weights.iter().all(|w| w.abs() <= k));
        let l = LinearParams::seeded(8, 16, &mut rng).unwrap();
        let k = 1.0 / (16.0f32).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= k));
    }

    #[test]
    fn ops_are_pure() {
        let input = gaussian_noise(2, 6, 6, 7).unwrap();
        let mut rng = Rng::new(11);
        let p = ConvParams::seeded(2, 2, 3, 3, 1, &mut rng).unwrap();
        let a = conv2d(&input, &p).unwrap();
        let b = conv2d(&input, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.is_finite()));
    }
}
