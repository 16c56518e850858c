use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub(crate) fn forward<T: Real>(self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Relu => x.map(|v| v.max(T::zero())),
            Activation::LeakyRelu(slope) => {
                let s = T::from_f64_lossy(slope);
                x.map(|v| if v > T::zero() { v } else { v * s })
            }
            Activation::Tanh => x.map(|v| v.tanh()),
        }
    }

    /// Whether backward needs the layer input (`true`) or its output (`false`).
    pub(crate) fn saves_input(self) -> bool {
        matches!(self, Activation::LeakyRelu(_))
    }

    pub(crate) fn backward<T: Real>(self, saved: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
        let mut dx = grad.clone();
        match self {
            Activation::Relu => {
                for (d, &v) in dx.data_mut().iter_mut().zip(saved.data()) {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            Activation::LeakyRelu(slope) => {
                let s = T::from_f64_lossy(slope);
                for (d, &v) in dx.data_mut().iter_mut().zip(saved.data()) {
                    if v <= T::zero() {
                        *d *= s;
                    }
                }
            }
            Activation::Tanh => {
                for (d, &v) in dx.data_mut().iter_mut().zip(saved.data()) {
                    *d *= T::one() - v * v;
                }
            }
        }
        dx
    }
}
