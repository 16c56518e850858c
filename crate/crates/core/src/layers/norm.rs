use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

/// Per-sample, per-channel normalization with an affine output.
/// No running statistics: training and inference behave identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceNorm {
    pub gamma: usize,
    pub beta: usize,
    pub channels: usize,
    pub eps: f64,
}

pub(crate) struct NormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

impl InstanceNorm {
    pub(crate) fn forward<T: Real>(
        &self,
        gamma: &[T],
        beta: &[T],
        x: &Tensor<T>,
        keep: bool,
    ) -> (Tensor<T>, Option<NormCache<T>>) {
        let plane = x.plane();
        let n = T::from_usize(plane).expect("plane size");
        let eps = T::from_f64_lossy(self.eps);
        let mut normalized = x.clone();
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(self.channels);
        for (c, (xn, y)) in normalized.data_mut().chunks_mut(plane).zip(out.data_mut().chunks_mut(plane)).enumerate() {
            let mean = xn.iter().copied().sum::<T>() / n;
            let var = xn.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = (var + eps).sqrt().recip();
            for (a, b) in xn.iter_mut().zip(y.iter_mut()) {
                *a = (*a - mean) * inv;
                *b = gamma[c] * *a + beta[c];
            }
            inv_std.push(inv);
        }
        (out, keep.then_some(NormCache { normalized, inv_std }))
    }

    pub(crate) fn backward<T: Real>(
        &self,
        gamma: &[T],
        cache: &NormCache<T>,
        grad: &Tensor<T>,
        param_grads: Option<(&mut [T], &mut [T])>,
    ) -> Tensor<T> {
        let plane = grad.plane();
        let n = T::from_usize(plane).expect("plane size");
        let mut dx = Tensor::zeros(grad.shape());
        let mut pg = param_grads;
        for (c, ((g, xhat), d)) in grad
            .data()
            .chunks(plane)
            .zip(cache.normalized.data().chunks(plane))
            .zip(dx.data_mut().chunks_mut(plane))
            .enumerate()
        {
            let sum_g = g.iter().copied().sum::<T>();
            let sum_gx = g.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>();
            if let Some((dgamma, dbeta)) = pg.as_mut() {
                dgamma[c] += sum_gx;
                dbeta[c] += sum_g;
            }
            // d/dx of gamma * (x - mean) / std, with mean and std depending on x.
            let scale = gamma[c] * cache.inv_std[c] / n;
            for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(xhat) {
                *dv = scale * (n * gv - sum_g - xv * sum_gx);
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_has_zero_mean_unit_variance_per_channel() {
        let norm = InstanceNorm { gamma: 0, beta: 1, channels: 3, eps: 1e-5 };
        let x = Tensor::<f64>::from_fn([3, 6, 5], |c, y, xx| {
            (c as f64 + 1.0) * 4.0 + ((y * 5 + xx) as f64).sin() * (c as f64 + 0.5)
        });
        let (y, _) = norm.forward(&[1.0; 3], &[0.0; 3], &x, false);
        for c in 0..3 {
            let ch = y.channel(c);
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ch.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "variance {var}");
        }
    }
}
