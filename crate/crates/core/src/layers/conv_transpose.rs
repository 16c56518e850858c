use serde::{Deserialize, Serialize};

use super::conv::{col2im, im2col};
use crate::tensor::{Real, Tensor};

/// Fractionally-strided convolution. Weight layout is `[in, out, k, k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvTranspose2d {
    pub weight: usize,
    pub bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

pub(crate) struct ConvTransposeCache<T> {
    input: Tensor<T>,
}

impl ConvTranspose2d {
    fn out_extent(&self, size: usize) -> Option<usize> {
        if size == 0 {
            return None;
        }
        ((size - 1) * self.stride + self.kernel + self.output_padding).checked_sub(2 * self.padding).filter(|&n| n > 0)
    }

    pub fn output_shape(&self, [c, h, w]: [usize; 3]) -> Option<[usize; 3]> {
        if c != self.in_channels {
            return None;
        }
        Some([self.out_channels, self.out_extent(h)?, self.out_extent(w)?])
    }

    // Full scatter target before cropping `padding` from each border.
    fn canvas(&self, h: usize, oh: usize) -> usize {
        ((h - 1) * self.stride + self.kernel).max(self.padding + oh)
    }

    fn patch_len(&self) -> usize {
        self.out_channels * self.kernel * self.kernel
    }

    pub(crate) fn forward<T: Real>(
        &self,
        weight: &[T],
        bias: &[T],
        x: &Tensor<T>,
        keep: bool,
    ) -> (Tensor<T>, Option<ConvTransposeCache<T>>) {
        let [_, h, w] = x.shape();
        let [oc, oh, ow] = self
            .output_shape(x.shape())
            .unwrap_or_else(|| panic!("transposed conv input {:?} invalid for {self:?}", x.shape()));
        let hw = h * w;
        let okk = self.patch_len();
        let mut cols = vec![T::zero(); okk * hw];
        T::gemm(
            okk,
            self.in_channels,
            hw,
            T::one(),
            weight,
            (1, okk as isize),
            x.data(),
            (hw as isize, 1),
            T::zero(),
            &mut cols,
            (hw as isize, 1),
        );
        let (ch, cw) = (self.canvas(h, oh), self.canvas(w, ow));
        let mut canvas = vec![T::zero(); oc * ch * cw];
        col2im(&cols, [oc, ch, cw], self.kernel, self.stride, [h, w], &mut canvas);
        let p = self.padding;
        let mut out = Tensor::zeros([oc, oh, ow]);
        for (o, &b) in bias.iter().enumerate().take(oc) {
            for y in 0..oh {
                let src = (o * ch + y + p) * cw + p;
                let dst = (o * oh + y) * ow;
                for (d, &s) in out.data_mut()[dst..dst + ow].iter_mut().zip(&canvas[src..src + ow]) {
                    *d = s + b;
                }
            }
        }
        (out, keep.then(|| ConvTransposeCache { input: x.clone() }))
    }

    pub(crate) fn backward<T: Real>(
        &self,
        weight: &[T],
        cache: &ConvTransposeCache<T>,
        grad: &Tensor<T>,
        param_grads: Option<(&mut [T], &mut [T])>,
    ) -> Tensor<T> {
        let [ic, h, w] = cache.input.shape();
        let [oc, oh, ow] = grad.shape();
        let hw = h * w;
        let okk = self.patch_len();
        let (ch, cw) = (self.canvas(h, oh), self.canvas(w, ow));
        let p = self.padding;
        let g = grad.data();
        let mut gcanvas = vec![T::zero(); oc * ch * cw];
        for o in 0..oc {
            for y in 0..oh {
                let dst = (o * ch + y + p) * cw + p;
                let src = (o * oh + y) * ow;
                gcanvas[dst..dst + ow].copy_from_slice(&g[src..src + ow]);
            }
        }
        let mut gcols = vec![T::zero(); okk * hw];
        im2col(&gcanvas, [oc, ch, cw], self.kernel, self.stride, [h, w], &mut gcols);
        if let Some((dw, db)) = param_grads {
            for (o, plane) in g.chunks(oh * ow).enumerate() {
                db[o] += plane.iter().copied().sum::<T>();
            }
            T::gemm(
                ic,
                hw,
                okk,
                T::one(),
                cache.input.data(),
                (hw as isize, 1),
                &gcols,
                (1, hw as isize),
                T::one(),
                dw,
                (okk as isize, 1),
            );
        }
        let mut dx = Tensor::zeros([ic, h, w]);
        T::gemm(
            ic,
            okk,
            hw,
            T::one(),
            weight,
            (okk as isize, 1),
            &gcols,
            (hw as isize, 1),
            T::zero(),
            dx.data_mut(),
            (hw as isize, 1),
        );
        dx
    }
}
