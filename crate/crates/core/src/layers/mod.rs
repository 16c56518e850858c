//! Differentiable building blocks with hand-written backward passes.

mod activation;
mod conv;
mod conv_transpose;
mod norm;
mod pad;

pub use activation::Activation;
pub use conv::{conv_out, Conv2d};
pub use conv_transpose::ConvTranspose2d;
pub use norm::InstanceNorm;
pub use pad::{pad, pad_backward, Padding};

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

/// A named, shaped parameter array owned by a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv2d),
    ConvTranspose(ConvTranspose2d),
    InstanceNorm(InstanceNorm),
    Activation(Activation),
    /// `x + body(x)`; the sum is not re-activated.
    Residual(Vec<Layer>),
}

pub(crate) enum Cache<T> {
    Conv(conv::ConvCache<T>),
    ConvTranspose(conv_transpose::ConvTransposeCache<T>),
    Norm(norm::NormCache<T>),
    Activation(Tensor<T>),
    Residual(Vec<Cache<T>>),
}

/// Split borrow of two distinct entries of a gradient list.
fn pair_mut<T>(grads: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = grads.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = grads.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

impl Layer {
    pub fn output_shape(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        match self {
            Layer::Conv(c) => c.output_shape(input),
            Layer::ConvTranspose(t) => t.output_shape(input),
            Layer::InstanceNorm(n) => (input[0] == n.channels).then_some(input),
            Layer::Activation(_) => Some(input),
            Layer::Residual(body) => {
                let out = sequence_output_shape(body, input)?;
                (out == input).then_some(out)
            }
        }
    }

    pub(crate) fn forward<T: Real>(
        &self,
        params: &[Param<T>],
        x: &Tensor<T>,
        keep: bool,
    ) -> (Tensor<T>, Option<Cache<T>>) {
        match self {
            Layer::Conv(c) => {
                let (y, cache) = c.forward(&params[c.weight].data, &params[c.bias].data, x, keep);
                (y, cache.map(Cache::Conv))
            }
            Layer::ConvTranspose(t) => {
                let (y, cache) = t.forward(&params[t.weight].data, &params[t.bias].data, x, keep);
                (y, cache.map(Cache::ConvTranspose))
            }
            Layer::InstanceNorm(n) => {
                let (y, cache) = n.forward(&params[n.gamma].data, &params[n.beta].data, x, keep);
                (y, cache.map(Cache::Norm))
            }
            Layer::Activation(a) => {
                let y = a.forward(x);
                let cache = keep.then(|| Cache::Activation(if a.saves_input() { x.clone() } else { y.clone() }));
                (y, cache)
            }
            Layer::Residual(body) => {
                let (mut y, caches) = sequence_forward(body, params, x, keep);
                y.add_assign(x);
                (y, caches.map(Cache::Residual))
            }
        }
    }

    pub(crate) fn backward<T: Real>(
        &self,
        params: &[Param<T>],
        cache: &Cache<T>,
        grad: &Tensor<T>,
        grads: Option<&mut [Vec<T>]>,
    ) -> Tensor<T> {
        match (self, cache) {
            (Layer::Conv(c), Cache::Conv(cache)) => {
                let pg = grads.map(|g| pair_mut(g, c.weight, c.bias));
                c.backward(&params[c.weight].data, cache, grad, pg)
            }
            (Layer::ConvTranspose(t), Cache::ConvTranspose(cache)) => {
                let pg = grads.map(|g| pair_mut(g, t.weight, t.bias));
                t.backward(&params[t.weight].data, cache, grad, pg)
            }
            (Layer::InstanceNorm(n), Cache::Norm(cache)) => {
                let pg = grads.map(|g| pair_mut(g, n.gamma, n.beta));
                n.backward(&params[n.gamma].data, cache, grad, pg)
            }
            (Layer::Activation(a), Cache::Activation(saved)) => a.backward(saved, grad),
            (Layer::Residual(body), Cache::Residual(caches)) => {
                let mut dx = sequence_backward(body, params, caches, grad, grads);
                dx.add_assign(grad);
                dx
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

pub fn sequence_output_shape(layers: &[Layer], input: [usize; 3]) -> Option<[usize; 3]> {
    layers.iter().try_fold(input, |shape, layer| layer.output_shape(shape))
}

pub(crate) fn sequence_forward<T: Real>(
    layers: &[Layer],
    params: &[Param<T>],
    x: &Tensor<T>,
    keep: bool,
) -> (Tensor<T>, Option<Vec<Cache<T>>>) {
    let mut caches = keep.then(|| Vec::with_capacity(layers.len()));
    let mut current = x.clone();
    for layer in layers {
        let (y, cache) = layer.forward(params, &current, keep);
        if let (Some(list), Some(cache)) = (caches.as_mut(), cache) {
            list.push(cache);
        }
        current = y;
    }
    (current, caches)
}

pub(crate) fn sequence_backward<T: Real>(
    layers: &[Layer],
    params: &[Param<T>],
    caches: &[Cache<T>],
    grad: &Tensor<T>,
    mut grads: Option<&mut [Vec<T>]>,
) -> Tensor<T> {
    let mut g = grad.clone();
    for (layer, cache) in layers.iter().zip(caches).rev() {
        g = layer.backward(params, cache, &g, grads.as_deref_mut());
    }
    g
}

#[cfg(test)]
mod gradcheck;
