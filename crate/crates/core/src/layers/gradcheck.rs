//! Central finite differences against every layer's backward pass, in f64 on 8x8 maps.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn random(shape: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _| rng.random_range(-1.0..1.0))
}

fn param(name: &str, len: usize, rng: &mut ChaCha8Rng, around: f64) -> Param<f64> {
    Param {
        name: name.into(),
        shape: vec![len],
        data: (0..len).map(|_| around + rng.random_range(-0.5..0.5)).collect(),
    }
}

/// `<weights, layer(x)>`, a scalar with known upstream gradient `weights`.
fn probe(layer: &Layer, params: &[Param<f64>], x: &Tensor<f64>, weights: &Tensor<f64>) -> f64 {
    let (y, _) = layer.forward(params, x, false);
    y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

fn close(analytic: f64, numeric: f64, what: &str) {
    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
    assert!(err < TOL, "{what}: analytic {analytic} vs numeric {numeric}");
}

fn check(layer: Layer, mut params: Vec<Param<f64>>, input: [usize; 3], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(input, &mut rng);
    let out = layer.output_shape(input).expect("valid input");
    let weights = random(out, &mut rng);
    let (_, cache) = layer.forward(&params, &x, true);
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
    let dx = layer.backward(&params, &cache.unwrap(), &weights, Some(&mut grads));

    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let numeric =
            (probe(&layer, &params, &plus, &weights) - probe(&layer, &params, &minus, &weights)) / (2.0 * STEP);
        close(dx.data()[i], numeric, &format!("input[{i}]"));
    }
    for p in 0..params.len() {
        for i in 0..params[p].data.len() {
            let orig = params[p].data[i];
            params[p].data[i] = orig + STEP;
            let up = probe(&layer, &params, &x, &weights);
            params[p].data[i] = orig - STEP;
            let down = probe(&layer, &params, &x, &weights);
            params[p].data[i] = orig;
            close(grads[p][i], (up - down) / (2.0 * STEP), &format!("{}[{i}]", params[p].name));
        }
    }
}

fn conv(
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    padding: Padding,
    rng: &mut ChaCha8Rng,
) -> (Layer, Vec<Param<f64>>) {
    let params = vec![param("weight", cout * cin * k * k, rng, 0.0), param("bias", cout, rng, 0.0)];
    let layer =
        Layer::Conv(Conv2d { weight: 0, bias: 1, in_channels: cin, out_channels: cout, kernel: k, stride, padding });
    (layer, params)
}

#[test]
fn conv_strided_zero_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (layer, params) = conv(3, 4, 3, 2, Padding::Zero(1), &mut rng);
    check(layer, params, [3, 8, 8], 10);
}

#[test]
fn conv_reflect_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (layer, params) = conv(2, 3, 7, 1, Padding::Reflect(3), &mut rng);
    check(layer, params, [2, 8, 8], 11);
}

#[test]
fn conv_k4_patch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (layer, params) = conv(2, 2, 4, 1, Padding::Zero(1), &mut rng);
    check(layer, params, [2, 8, 8], 12);
}

#[test]
fn conv_unfolded_stride_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (layer, params) = conv(2, 9, 3, 1, Padding::Reflect(1), &mut rng);
    check(layer, params, [2, 8, 8], 16);
}

#[test]
fn transposed_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = vec![param("weight", 3 * 2 * 16, &mut rng, 0.0), param("bias", 2, &mut rng, 0.0)];
    let layer = Layer::ConvTranspose(ConvTranspose2d {
        weight: 0,
        bias: 1,
        in_channels: 3,
        out_channels: 2,
        kernel: 4,
        stride: 2,
        padding: 1,
        output_padding: 0,
    });
    check(layer, params, [3, 8, 8], 13);
}

#[test]
fn instance_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = vec![param("gamma", 3, &mut rng, 1.0), param("beta", 3, &mut rng, 0.0)];
    check(Layer::InstanceNorm(InstanceNorm { gamma: 0, beta: 1, channels: 3, eps: 1e-5 }), params, [3, 8, 8], 14);
}

#[test]
fn activations() {
    // random inputs never sit exactly on the kink, and the step is far smaller than any |x|
    for (i, act) in [Activation::Relu, Activation::LeakyRelu(0.2), Activation::Tanh].into_iter().enumerate() {
        check(Layer::Activation(act), Vec::new(), [2, 8, 8], 20 + i as u64);
    }
}

#[test]
fn residual_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = 2;
    let mut params = Vec::new();
    for name in ["c0.weight", "c0.bias", "n1.gamma", "n1.beta", "c3.weight", "c3.bias", "n4.gamma", "n4.beta"] {
        let len = if name.ends_with("weight") { c * c * 9 } else { c };
        params.push(param(name, len, &mut rng, if name.ends_with("gamma") { 1.0 } else { 0.0 }));
    }
    let conv = |w, b| {
        Layer::Conv(Conv2d {
            weight: w,
            bias: b,
            in_channels: c,
            out_channels: c,
            kernel: 3,
            stride: 1,
            padding: Padding::Zero(1),
        })
    };
    let body = vec![
        conv(0, 1),
        Layer::InstanceNorm(InstanceNorm { gamma: 2, beta: 3, channels: c, eps: 1e-5 }),
        Layer::Activation(Activation::Relu),
        conv(4, 5),
        Layer::InstanceNorm(InstanceNorm { gamma: 6, beta: 7, channels: c, eps: 1e-5 }),
    ];
    check(Layer::Residual(body), params, [c, 8, 8], 15);
}
