use serde::{Deserialize, Serialize};

use super::pad::{pad, pad_backward, Padding};
use crate::tensor::{Real, Tensor};

/// Unfold `k x k` patches of a `[c, h, w]` map into a `(c*k*k) x (oh*ow)` matrix.
/// The caller guarantees `(oh - 1) * stride + k <= h` (same for width).
pub(crate) fn im2col<T: Real>(
    x: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    [oh, ow]: [usize; 2],
    cols: &mut [T],
) {
    let ohw = oh * ow;
    debug_assert!((oh - 1) * stride + k <= h && (ow - 1) * stride + k <= w);
    debug_assert_eq!(cols.len(), c * k * k * ohw);
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ci * k + ki) * k + kj) * ohw;
                for oy in 0..oh {
                    let src = (ci * h + oy * stride + ki) * w + kj;
                    let dst = row + oy * ow;
                    if stride == 1 {
                        cols[dst..dst + ow].copy_from_slice(&x[src..src + ow]);
                    } else {
                        for ox in 0..ow {
                            cols[dst + ox] = x[src + ox * stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add the columns back onto the `[c, h, w]` map.
pub(crate) fn col2im<T: Real>(
    cols: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    [oh, ow]: [usize; 2],
    x: &mut [T],
) {
    let ohw = oh * ow;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ci * k + ki) * k + kj) * ohw;
                for oy in 0..oh {
                    let dst = (ci * h + oy * stride + ki) * w + kj;
                    let src = row + oy * ow;
                    if stride == 1 {
                        for (d, &s) in x[dst..dst + ow].iter_mut().zip(&cols[src..src + ow]) {
                            *d += s;
                        }
                    } else {
                        for ox in 0..ow {
                            x[dst + ox * stride] += cols[src + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Output extent of a convolution, or `None` if the kernel does not fit.
pub fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: usize,
    pub bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

pub(crate) struct ConvCache<T> {
    /// Unfolded patches, or the padded input on the direct path.
    saved: Vec<T>,
    input_shape: [usize; 3],
    padded_shape: [usize; 3],
}

/// Below this many output channels a stride-1 convolution skips im2col: the
/// unfolded matrix would cost more memory traffic than the arithmetic it feeds.
const DIRECT_MAX_OUT: usize = 8;

// out[o] += sum over (c, ki, kj) of w * shifted input plane.
fn direct_forward<T: Real>(
    w: &[T],
    xp: &[T],
    [c, hp, wp]: [usize; 3],
    k: usize,
    out: &mut [T],
    [oc, oh, ow]: [usize; 3],
) {
    for o in 0..oc {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        for ci in 0..c {
            let src = &xp[ci * hp * wp..(ci + 1) * hp * wp];
            for ki in 0..k {
                for kj in 0..k {
                    let wv = w[((o * c + ci) * k + ki) * k + kj];
                    for y in 0..oh {
                        let row = &src[(y + ki) * wp + kj..(y + ki) * wp + kj + ow];
                        for (d, &v) in plane[y * ow..(y + 1) * ow].iter_mut().zip(row) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

impl Conv2d {
    pub fn output_shape(&self, [c, h, w]: [usize; 3]) -> Option<[usize; 3]> {
        if c != self.in_channels {
            return None;
        }
        let p = self.padding.amount();
        if matches!(self.padding, Padding::Reflect(_)) && (p >= h || p >= w) {
            return None;
        }
        let oh = conv_out(h, self.kernel, self.stride, p)?;
        let ow = conv_out(w, self.kernel, self.stride, p)?;
        (oh > 0 && ow > 0).then_some([self.out_channels, oh, ow])
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn direct(&self) -> bool {
        self.stride == 1 && self.out_channels < DIRECT_MAX_OUT
    }

    pub(crate) fn forward<T: Real>(
        &self,
        weight: &[T],
        bias: &[T],
        x: &Tensor<T>,
        keep: bool,
    ) -> (Tensor<T>, Option<ConvCache<T>>) {
        let [oc, oh, ow] =
            self.output_shape(x.shape()).unwrap_or_else(|| panic!("conv input {:?} invalid for {self:?}", x.shape()));
        let padded = pad(x, self.padding);
        let padded_shape = padded.shape();
        let ohw = oh * ow;
        let mut out = Tensor::zeros([oc, oh, ow]);
        let saved = if self.direct() {
            direct_forward(weight, padded.data(), padded_shape, self.kernel, out.data_mut(), [oc, oh, ow]);
            padded.into_vec()
        } else {
            let ckk = self.patch_len();
            let mut cols = vec![T::zero(); ckk * ohw];
            im2col(padded.data(), padded_shape, self.kernel, self.stride, [oh, ow], &mut cols);
            T::gemm(
                oc,
                ckk,
                ohw,
                T::one(),
                weight,
                (ckk as isize, 1),
                &cols,
                (ohw as isize, 1),
                T::zero(),
                out.data_mut(),
                (ohw as isize, 1),
            );
            cols
        };
        for (plane, &b) in out.data_mut().chunks_mut(ohw).zip(bias) {
            plane.iter_mut().for_each(|v| *v += b);
        }
        let cache = keep.then_some(ConvCache { saved, input_shape: x.shape(), padded_shape });
        (out, cache)
    }

    /// Returns the input gradient; accumulates `(d weight, d bias)` when given.
    pub(crate) fn backward<T: Real>(
        &self,
        weight: &[T],
        cache: &ConvCache<T>,
        grad: &Tensor<T>,
        param_grads: Option<(&mut [T], &mut [T])>,
    ) -> Tensor<T> {
        let [oc, oh, ow] = grad.shape();
        let ohw = oh * ow;
        let g = grad.data();
        let dpadded = if self.direct() {
            self.direct_backward(weight, cache, grad, param_grads)
        } else {
            let ckk = self.patch_len();
            if let Some((dw, db)) = param_grads {
                for (o, plane) in g.chunks(ohw).enumerate() {
                    db[o] += plane.iter().copied().sum::<T>();
                }
                T::gemm(
                    oc,
                    ohw,
                    ckk,
                    T::one(),
                    g,
                    (ohw as isize, 1),
                    &cache.saved,
                    (1, ohw as isize),
                    T::one(),
                    dw,
                    (ckk as isize, 1),
                );
            }
            let mut dcols = vec![T::zero(); ckk * ohw];
            T::gemm(
                ckk,
                oc,
                ohw,
                T::one(),
                weight,
                (1, ckk as isize),
                g,
                (ohw as isize, 1),
                T::zero(),
                &mut dcols,
                (ohw as isize, 1),
            );
            let mut dpadded = Tensor::zeros(cache.padded_shape);
            col2im(&dcols, cache.padded_shape, self.kernel, self.stride, [oh, ow], dpadded.data_mut());
            dpadded
        };
        pad_backward(&dpadded, self.padding, cache.input_shape)
    }

    fn direct_backward<T: Real>(
        &self,
        weight: &[T],
        cache: &ConvCache<T>,
        grad: &Tensor<T>,
        param_grads: Option<(&mut [T], &mut [T])>,
    ) -> Tensor<T> {
        let [oc, oh, ow] = grad.shape();
        let [c, hp, wp] = cache.padded_shape;
        let k = self.kernel;
        let g = grad.data();
        let xp = &cache.saved;
        if let Some((dw, db)) = param_grads {
            // Per-column partial sums keep the inner loop elementwise, so it vectorizes.
            let mut acc = vec![T::zero(); ow];
            for o in 0..oc {
                let go = &g[o * oh * ow..(o + 1) * oh * ow];
                db[o] += go.iter().copied().sum::<T>();
                for ci in 0..c {
                    let src = &xp[ci * hp * wp..(ci + 1) * hp * wp];
                    for ki in 0..k {
                        for kj in 0..k {
                            acc.fill(T::zero());
                            for y in 0..oh {
                                let row = &src[(y + ki) * wp + kj..(y + ki) * wp + kj + ow];
                                for ((a, &gv), &v) in acc.iter_mut().zip(&go[y * ow..(y + 1) * ow]).zip(row) {
                                    *a += gv * v;
                                }
                            }
                            dw[((o * c + ci) * k + ki) * k + kj] += acc.iter().copied().sum::<T>();
                        }
                    }
                }
            }
        }
        let mut dpadded = Tensor::zeros([c, hp, wp]);
        let dp = dpadded.data_mut();
        for o in 0..oc {
            let go = &g[o * oh * ow..(o + 1) * oh * ow];
            for ci in 0..c {
                let dst = &mut dp[ci * hp * wp..(ci + 1) * hp * wp];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = weight[((o * c + ci) * k + ki) * k + kj];
                        for y in 0..oh {
                            let row = &mut dst[(y + ki) * wp + kj..(y + ki) * wp + kj + ow];
                            for (d, &v) in row.iter_mut().zip(&go[y * ow..(y + 1) * ow]) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
        dpadded
    }
}
