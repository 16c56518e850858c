//! Encoder, decoder and discriminator builders and their forward/backward passes.
//!
//! The default [`ArchSpec`] is the residual translation generator split at its
//! bottleneck: three downsampling convolutions and four residual blocks form the
//! encoder, five residual blocks and two upsampling layers form the decoder, and a
//! 70x70 patch discriminator scores realism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{DomainId, ImageTensor, LatentCode};
use crate::error::{Error, Result};
use crate::layers::{
    sequence_backward, sequence_forward, sequence_output_shape, Activation, Cache, Conv2d, ConvTranspose2d,
    InstanceNorm, Layer, Padding, Param,
};
use crate::tensor::{Real, Tensor};

pub const INIT_STD: f64 = 0.02;
pub const NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encoder,
    Decoder,
    Discriminator,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Encoder, Role::Decoder, Role::Discriminator];

    pub fn name(self) -> &'static str {
        match self {
            Role::Encoder => "encoder",
            Role::Decoder => "decoder",
            Role::Discriminator => "discriminator",
        }
    }
}

/// Positive rational channel multiplier. `1` gives 64/128/256 generator channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Width {
    pub num: usize,
    pub den: usize,
}

impl Width {
    pub const ONE: Width = Width { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("width multiplier {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    /// Parses `1`, `0.25` or `1/8`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse width multiplier `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Self::new(n, d);
        }
        let v: f64 = s.trim().parse().map_err(|_| bad())?;
        for den in [1usize, 2, 4, 8, 16, 32, 64] {
            let num = v * den as f64;
            if num >= 1.0 && (num - num.round()).abs() < 1e-9 {
                return Self::new(num.round() as usize, den);
            }
        }
        Err(bad())
    }

    pub fn scale(self, channels: usize) -> Result<usize> {
        let scaled = channels * self.num;
        if scaled % self.den != 0 || scaled < self.den {
            return Err(Error::Config(format!("width {}/{} does not divide {channels} channels", self.num, self.den)));
        }
        Ok(scaled / self.den)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Width {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    TransposedConv,
    ResidualBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channels {
    /// Multiplied by the width multiplier.
    Scaled(usize),
    /// Output heads (RGB, score) keep their channel count.
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Act {
    Relu,
    LeakyRelu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub channels: Channels,
    pub kernel: usize,
    pub stride: usize,
    pub norm: bool,
    pub activation: Option<Act>,
}

const fn desc(
    kind: LayerKind,
    channels: Channels,
    kernel: usize,
    stride: usize,
    norm: bool,
    activation: Option<Act>,
) -> LayerDesc {
    LayerDesc { kind, channels, kernel, stride, norm, activation }
}

const fn conv(n: usize, k: usize, s: usize, act: Act) -> LayerDesc {
    desc(LayerKind::Conv, Channels::Scaled(n), k, s, true, Some(act))
}

const fn resblk(n: usize) -> LayerDesc {
    desc(LayerKind::ResidualBlock, Channels::Scaled(n), 3, 1, true, Some(Act::Relu))
}

const fn dconv(n: usize) -> LayerDesc {
    desc(LayerKind::TransposedConv, Channels::Scaled(n), 4, 2, true, Some(Act::Relu))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub width: Width,
    pub image_channels: usize,
    pub encoder: Vec<LayerDesc>,
    pub decoder: Vec<LayerDesc>,
    pub discriminator: Vec<LayerDesc>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        use Act::*;
        Self {
            width: Width::ONE,
            image_channels: 3,
            encoder: vec![
                conv(64, 7, 1, Relu),
                conv(128, 3, 2, Relu),
                conv(256, 3, 2, Relu),
                resblk(256),
                resblk(256),
                resblk(256),
                resblk(256),
            ],
            decoder: vec![
                resblk(256),
                resblk(256),
                resblk(256),
                resblk(256),
                resblk(256),
                dconv(128),
                dconv(64),
                desc(LayerKind::Conv, Channels::Fixed(3), 7, 1, false, Some(Tanh)),
            ],
            discriminator: vec![
                desc(LayerKind::Conv, Channels::Scaled(64), 4, 2, false, Some(LeakyRelu)),
                conv(128, 4, 2, LeakyRelu),
                conv(256, 4, 2, LeakyRelu),
                conv(512, 4, 1, LeakyRelu),
                desc(LayerKind::Conv, Channels::Fixed(1), 4, 1, false, None),
            ],
        }
    }
}

/// Reflection padding for the wide 7x7 convolutions, zero padding of one elsewhere.
pub fn padding_for(kernel: usize) -> Padding {
    if kernel >= 7 {
        Padding::Reflect(kernel / 2)
    } else {
        Padding::Zero(1)
    }
}

impl ArchSpec {
    pub fn with_width(width: Width) -> Self {
        Self { width, ..Self::default() }
    }

    pub fn descriptors(&self, role: Role) -> &[LayerDesc] {
        match role {
            Role::Encoder => &self.encoder,
            Role::Decoder => &self.decoder,
            Role::Discriminator => &self.discriminator,
        }
    }

    pub fn input_channels(&self, role: Role) -> Result<usize> {
        match role {
            Role::Encoder | Role::Discriminator => Ok(self.image_channels),
            Role::Decoder => self.latent_channels(),
        }
    }

    /// Channel count of the encoder output.
    pub fn latent_channels(&self) -> Result<usize> {
        let mut c = self.image_channels;
        for d in &self.encoder {
            c = self.channels(d)?;
        }
        Ok(c)
    }

    pub fn channels(&self, d: &LayerDesc) -> Result<usize> {
        match d.channels {
            Channels::Scaled(n) => self.width.scale(n),
            Channels::Fixed(n) => Ok(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for role in Role::ALL {
            Network::<f32>::build(role, self)?;
        }
        Ok(())
    }

    /// Smallest square input (multiple of 4) the discriminator maps to a nonempty score map.
    pub fn min_discriminator_input(&self) -> Result<usize> {
        let net = Network::<f32>::build(Role::Discriminator, self)?;
        (4..=4096)
            .step_by(4)
            .find(|&s| net.output_shape([self.image_channels, s, s]).is_some())
            .ok_or_else(|| Error::Config("discriminator accepts no input up to 4096".into()))
    }
}

fn activation(act: Act) -> Activation {
    match act {
        Act::Relu => Activation::Relu,
        Act::LeakyRelu => Activation::LeakyRelu(LEAKY_SLOPE),
        Act::Tanh => Activation::Tanh,
    }
}

/// Parameter tensors in the same order as a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
    }
}

/// Saved activations of one traced forward pass.
pub struct Trace<T>(Vec<Cache<T>>);

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    role: Role,
    input_channels: usize,
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
}

struct Builder<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> Builder<T> {
    fn param(&mut self, name: String, shape: Vec<usize>, fill: T) -> usize {
        let len = shape.iter().product();
        self.params.push(Param { name, shape, data: vec![fill; len] });
        self.params.len() - 1
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Layer {
        let weight = self.param(format!("{prefix}.weight"), vec![cout, cin, k, k], T::zero());
        let bias = self.param(format!("{prefix}.bias"), vec![cout], T::zero());
        Layer::Conv(Conv2d {
            weight,
            bias,
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            stride,
            padding: padding_for(k),
        })
    }

    fn norm(&mut self, prefix: &str, channels: usize) -> Layer {
        let gamma = self.param(format!("{prefix}.gamma"), vec![channels], T::one());
        let beta = self.param(format!("{prefix}.beta"), vec![channels], T::zero());
        Layer::InstanceNorm(InstanceNorm { gamma, beta, channels, eps: NORM_EPS })
    }
}

impl<T: Real> Network<T> {
    /// Builds the layer graph with zero weights and identity normalization.
    pub fn build(role: Role, spec: &ArchSpec) -> Result<Self> {
        let input_channels = spec.input_channels(role)?;
        let mut b = Builder { params: Vec::new() };
        let mut layers = Vec::new();
        let mut cin = input_channels;
        for (i, d) in spec.descriptors(role).iter().enumerate() {
            let cout = spec.channels(d)?;
            let k = d.kernel;
            match d.kind {
                LayerKind::Conv => layers.push(b.conv(&format!("{i}.conv"), cin, cout, k, d.stride)),
                LayerKind::TransposedConv => {
                    let padding = 1;
                    let output_padding = (d.stride + 2 * padding).checked_sub(k).ok_or_else(|| {
                        Error::Config(format!("transposed conv k={k} s={} cannot upsample exactly", d.stride))
                    })?;
                    let weight = b.param(format!("{i}.deconv.weight"), vec![cin, cout, k, k], T::zero());
                    let bias = b.param(format!("{i}.deconv.bias"), vec![cout], T::zero());
                    layers.push(Layer::ConvTranspose(ConvTranspose2d {
                        weight,
                        bias,
                        in_channels: cin,
                        out_channels: cout,
                        kernel: k,
                        stride: d.stride,
                        padding,
                        output_padding,
                    }));
                }
                LayerKind::ResidualBlock => {
                    if cin != cout || d.stride != 1 {
                        return Err(Error::Config(format!(
                            "residual block {i} must preserve shape ({cin} -> {cout}, stride {})",
                            d.stride
                        )));
                    }
                    // conv-norm-relu-conv-norm; the block's listed norm/activation live inside.
                    let body = vec![
                        b.conv(&format!("{i}.block.0.conv"), cin, cout, k, 1),
                        b.norm(&format!("{i}.block.1.norm"), cout),
                        Layer::Activation(activation(d.activation.unwrap_or(Act::Relu))),
                        b.conv(&format!("{i}.block.3.conv"), cout, cout, k, 1),
                        b.norm(&format!("{i}.block.4.norm"), cout),
                    ];
                    layers.push(Layer::Residual(body));
                    cin = cout;
                    continue;
                }
            }
            if d.norm {
                layers.push(b.norm(&format!("{i}.norm"), cout));
            }
            if let Some(act) = d.activation {
                layers.push(Layer::Activation(activation(act)));
            }
            cin = cout;
        }
        Ok(Self { role, input_channels, layers, params: b.params })
    }

    /// Gaussian(0, 0.02) convolution weights, zero biases, identity normalization.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for p in &mut self.params {
            if p.name.ends_with(".weight") {
                p.data.iter_mut().for_each(|v| *v = T::from_f64_lossy(normal.sample(&mut rng)));
            } else if p.name.ends_with(".gamma") {
                p.data.fill(T::one());
            } else {
                p.data.fill(T::zero());
            }
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// `(name, shape)` list; equal for equal role and spec.
    pub fn inventory(&self) -> Vec<(String, Vec<usize>)> {
        self.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients { tensors: self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect() }
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        sequence_output_shape(&self.layers, input)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.input_channels || self.output_shape(x.shape()).is_none() {
            return Err(Error::shape(format!("{} cannot process input of shape {:?}", self.role.name(), x.shape())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        Ok(sequence_forward(&self.layers, &self.params, x, false).0)
    }

    pub fn forward_traced(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_input(x)?;
        let (y, caches) = sequence_forward(&self.layers, &self.params, x, true);
        Ok((y, Trace(caches.unwrap_or_default())))
    }

    /// Back-propagates `grad` (w.r.t. the traced output) and returns the input
    /// gradient. Parameter gradients are accumulated into `grads` when given;
    /// pass `None` for frozen networks.
    pub fn backward(&self, trace: &Trace<T>, grad: &Tensor<T>, grads: Option<&mut Gradients<T>>) -> Tensor<T> {
        sequence_backward(&self.layers, &self.params, &trace.0, grad, grads.map(|g| g.tensors.as_mut_slice()))
    }

    /// SHA-256 over parameter names and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for v in &p.data {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            role: self.role,
            input_channels: self.input_channels,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Patch realism scores, shape `(1, h', w')`, no terminal sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap<T = f32>(pub Tensor<T>);

impl<T: Real> ScoreMap<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn values(&self) -> &[T] {
        self.0.data()
    }
}

fn expect_role<T>(net: &Network<T>, role: Role) -> Result<()> {
    if net.role != role {
        return Err(Error::Config(format!("expected a {} network, got a {}", role.name(), net.role.name())));
    }
    Ok(())
}

pub fn encode<T: Real>(enc: &Network<T>, x: &ImageTensor<T>, source: DomainId) -> Result<LatentCode<T>> {
    expect_role(enc, Role::Encoder)?;
    Ok(LatentCode { data: enc.forward(x.tensor())?, source })
}

pub fn decode<T: Real>(dec: &Network<T>, h: &LatentCode<T>) -> Result<ImageTensor<T>> {
    expect_role(dec, Role::Decoder)?;
    ImageTensor::new(dec.forward(&h.data)?)
}

pub(crate) fn check_discriminator_input<T: Real>(d: &Network<T>, shape: [usize; 3]) -> Result<()> {
    expect_role(d, Role::Discriminator)?;
    let [_, h, w] = shape;
    if d.output_shape(shape).is_none() {
        let mut min = 4;
        while d.output_shape([3, min, min]).is_none() && min < 4096 {
            min += 4;
        }
        return Err(Error::InputTooSmall { height: h, width: w, min });
    }
    Ok(())
}

pub fn discriminate<T: Real>(d: &Network<T>, x: &ImageTensor<T>) -> Result<ScoreMap<T>> {
    check_discriminator_input(d, x.shape())?;
    Ok(ScoreMap(d.forward(x.tensor())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Layer arithmetic over the descriptor table, independent of the layer objects.
    fn oracle(spec: &ArchSpec, role: Role, [mut c, mut h, mut w]: [usize; 3]) -> Option<[usize; 3]> {
        for d in spec.descriptors(role) {
            let p = padding_for(d.kernel).amount();
            let out = spec.channels(d).ok()?;
            match d.kind {
                LayerKind::Conv => {
                    if h + 2 * p < d.kernel || w + 2 * p < d.kernel {
                        return None;
                    }
                    h = (h + 2 * p - d.kernel) / d.stride + 1;
                    w = (w + 2 * p - d.kernel) / d.stride + 1;
                }
                LayerKind::TransposedConv => {
                    h *= d.stride;
                    w *= d.stride;
                }
                LayerKind::ResidualBlock => {}
            }
            c = out;
        }
        Some([c, h, w])
    }

    fn random_image(shape: [usize; 3], seed: u64) -> ImageTensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = rand_distr::Uniform::new(-1.0f32, 1.0).unwrap();
        ImageTensor::new(Tensor::from_fn(shape, |_, _, _| u.sample(&mut rng))).unwrap()
    }

    #[test]
    fn default_spec_matches_layer_table() {
        let spec = ArchSpec::default();
        let enc = Network::<f32>::build(Role::Encoder, &spec).unwrap();
        let shapes: Vec<Vec<usize>> =
            enc.params().iter().filter(|p| p.name.ends_with("weight")).map(|p| p.shape.clone()).collect();
        assert_eq!(shapes[0], vec![64, 3, 7, 7]);
        assert_eq!(shapes[1], vec![128, 64, 3, 3]);
        assert_eq!(shapes[2], vec![256, 128, 3, 3]);
        assert_eq!(shapes.len(), 3 + 4 * 2);
        let res_blocks = |r: Role| spec.descriptors(r).iter().filter(|d| d.kind == LayerKind::ResidualBlock).count();
        assert_eq!((res_blocks(Role::Encoder), res_blocks(Role::Decoder)), (4, 5));
        let dec = Network::<f32>::build(Role::Decoder, &spec).unwrap();
        let dshapes: Vec<Vec<usize>> =
            dec.params().iter().filter(|p| p.name.ends_with("weight")).map(|p| p.shape.clone()).collect();
        assert_eq!(dshapes[10], vec![256, 128, 4, 4]);
        assert_eq!(dshapes[11], vec![128, 64, 4, 4]);
        assert_eq!(dshapes[12], vec![3, 64, 7, 7]);
        let disc = Network::<f32>::build(Role::Discriminator, &spec).unwrap();
        let channels: Vec<usize> =
            disc.params().iter().filter(|p| p.name.ends_with("weight")).map(|p| p.shape[0]).collect();
        assert_eq!(channels, vec![64, 128, 256, 512, 1]);
        // first discriminator layer has no normalization, the others do
        assert!(!disc.params().iter().any(|p| p.name.starts_with("0.norm")));
        assert!(disc.params().iter().any(|p| p.name.starts_with("1.norm")));
    }

    #[test]
    fn shapes_follow_layer_arithmetic() {
        for width in [Width::new(1, 8).unwrap(), Width::new(1, 4).unwrap(), Width::ONE] {
            let spec = ArchSpec::with_width(width);
            let enc = Network::<f32>::build(Role::Encoder, &spec).unwrap();
            let dec = Network::<f32>::build(Role::Decoder, &spec).unwrap();
            let disc = Network::<f32>::build(Role::Discriminator, &spec).unwrap();
            for s in [8, 16, 32, 64, 256] {
                let x = [3, s, s];
                let latent = enc.output_shape(x).unwrap();
                assert_eq!(Some(latent), oracle(&spec, Role::Encoder, x));
                assert_eq!(latent, [width.scale(256).unwrap(), s / 4, s / 4]);
                assert_eq!(dec.output_shape(latent), Some(x));
                assert_eq!(disc.output_shape(x), oracle(&spec, Role::Discriminator, x));
            }
        }
        let disc = Network::<f32>::build(Role::Discriminator, &ArchSpec::default()).unwrap();
        assert_eq!(disc.output_shape([3, 256, 256]), Some([1, 30, 30]));
        assert_eq!(disc.output_shape([3, 64, 64]), Some([1, 6, 6]));
        assert_eq!(disc.output_shape([3, 8, 8]), None);
        assert_eq!(ArchSpec::default().min_discriminator_input().unwrap(), 24);
    }

    #[test]
    fn encode_decode_round_trip_shape_and_range() {
        let spec = ArchSpec::with_width(Width::new(1, 8).unwrap());
        let mut enc = Network::<f32>::build(Role::Encoder, &spec).unwrap();
        let mut dec = Network::<f32>::build(Role::Decoder, &spec).unwrap();
        enc.init_weights(1);
        dec.init_weights(2);
        // large weights push tanh into saturation; the range must still hold
        for p in dec.params_mut() {
            p.data.iter_mut().for_each(|v| *v *= 50.0);
        }
        let x = random_image([3, 8, 8], 3);
        let h = encode(&enc, &x, DomainId::new(0, 2).unwrap()).unwrap();
        assert_eq!(h.data.shape(), [32, 2, 2]);
        let y = decode(&dec, &h).unwrap();
        assert_eq!(y.shape(), x.shape());
        let (lo, hi) = y.tensor().min_max();
        assert!(lo >= -1.0 && hi <= 1.0);
    }

    #[test]
    fn zero_weight_encoder_gives_zero_latent() {
        let spec = ArchSpec::with_width(Width::new(1, 8).unwrap());
        let enc = Network::<f32>::build(Role::Encoder, &spec).unwrap();
        let h = encode(&enc, &random_image([3, 16, 16], 9), DomainId::new(1, 2).unwrap()).unwrap();
        assert!(h.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discriminator_rejects_small_inputs_and_is_deterministic() {
        let spec = ArchSpec::with_width(Width::new(1, 8).unwrap());
        let mut d1 = Network::<f32>::build(Role::Discriminator, &spec).unwrap();
        d1.init_weights(5);
        let d2 = d1.clone();
        assert!(matches!(discriminate(&d1, &random_image([3, 8, 8], 0)), Err(Error::InputTooSmall { min: 24, .. })));
        let x = random_image([3, 64, 64], 4);
        let a = discriminate(&d1, &x).unwrap();
        let b = discriminate(&d2, &x).unwrap();
        assert_eq!(a.tensor().shape(), [1, 6, 6]);
        assert_eq!(a, b);
    }

    #[test]
    fn role_mismatch_is_rejected() {
        let spec = ArchSpec::with_width(Width::new(1, 8).unwrap());
        let dec = Network::<f32>::build(Role::Decoder, &spec).unwrap();
        assert!(encode(&dec, &random_image([3, 8, 8], 0), DomainId::new(0, 2).unwrap()).is_err());
    }

    #[test]
    fn init_is_seeded_gaussian() {
        let spec = ArchSpec::default();
        let mut a = Network::<f64>::build(Role::Decoder, &spec).unwrap();
        let mut b = a.clone();
        a.init_weights(11);
        b.init_weights(11);
        assert_eq!(a, b);
        b.init_weights(12);
        assert_ne!(a.fingerprint(), b.fingerprint());
        let weights: Vec<f64> =
            a.params().iter().filter(|p| p.name.ends_with(".weight")).flat_map(|p| p.data.iter().copied()).collect();
        assert!(weights.len() > 100_000);
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        let std = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / weights.len() as f64).sqrt();
        assert!(mean.abs() < 1e-3);
        assert!((std - INIT_STD).abs() < 0.1 * INIT_STD, "std {std}");
        assert!(a.params().iter().filter(|p| p.name.ends_with(".gamma")).all(|p| p.data.iter().all(|&g| g == 1.0)));
        assert!(a
            .params()
            .iter()
            .filter(|p| p.name.ends_with(".beta") || p.name.ends_with(".bias"))
            .all(|p| p.data.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn width_parsing() {
        assert_eq!(Width::parse("1/8").unwrap(), Width { num: 1, den: 8 });
        assert_eq!(Width::parse("0.25").unwrap(), Width { num: 1, den: 4 });
        assert_eq!(Width::parse("1").unwrap(), Width::ONE);
        assert!(Width::parse("0").is_err());
        assert!(ArchSpec::with_width(Width::new(1, 128).unwrap()).validate().is_err());
    }
}
