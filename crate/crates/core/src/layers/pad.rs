use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

/// Spatial padding applied before a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

impl Padding {
    pub fn amount(self) -> usize {
        match self {
            Padding::Zero(p) | Padding::Reflect(p) => p,
        }
    }
}

// Mirror without repeating the edge, as in `[2 1 | 0 1 2 3 | 2 1]`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r));
    r as usize
}

pub fn pad<T: Real>(x: &Tensor<T>, padding: Padding) -> Tensor<T> {
    let p = padding.amount();
    if p == 0 {
        return x.clone();
    }
    let [c, h, w] = x.shape();
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    match padding {
        Padding::Zero(_) => {
            let mut out = Tensor::zeros([c, hp, wp]);
            let src = x.data();
            let dst = out.data_mut();
            for ci in 0..c {
                for y in 0..h {
                    let s = (ci * h + y) * w;
                    let d = (ci * hp + y + p) * wp + p;
                    dst[d..d + w].copy_from_slice(&src[s..s + w]);
                }
            }
            out
        }
        Padding::Reflect(_) => {
            assert!(p < h && p < w, "reflection pad {p} needs input wider than {p}");
            Tensor::from_fn([c, hp, wp], |ci, y, xx| {
                let sy = reflect(y as isize - p as isize, h);
                let sx = reflect(xx as isize - p as isize, w);
                x.get(ci, sy, sx)
            })
        }
    }
}

/// Gradient of [`pad`] with respect to its input.
pub fn pad_backward<T: Real>(grad: &Tensor<T>, padding: Padding, input_shape: [usize; 3]) -> Tensor<T> {
    let p = padding.amount();
    if p == 0 {
        return grad.clone();
    }
    let [c, h, w] = input_shape;
    let [_, hp, wp] = grad.shape();
    let mut out = Tensor::zeros(input_shape);
    let g = grad.data();
    let dst = out.data_mut();
    match padding {
        Padding::Zero(_) => {
            for ci in 0..c {
                for y in 0..h {
                    let s = (ci * hp + y + p) * wp + p;
                    let d = (ci * h + y) * w;
                    dst[d..d + w].copy_from_slice(&g[s..s + w]);
                }
            }
        }
        Padding::Reflect(_) => {
            for ci in 0..c {
                for y in 0..hp {
                    let sy = reflect(y as isize - p as isize, h);
                    for xx in 0..wp {
                        let sx = reflect(xx as isize - p as isize, w);
                        dst[(ci * h + sy) * w + sx] += g[(ci * hp + y) * wp + xx];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_mirrors_without_edge_repeat() {
        let x = Tensor::<f64>::from_vec([1, 1, 4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // Height 1 cannot be reflected, so pad a taller tensor and read the middle row.
        let tall = Tensor::<f64>::from_fn([1, 4, 4], |_, _, xx| x.get(0, 0, xx));
        let padded = pad(&tall, Padding::Reflect(2));
        let row: Vec<f64> = (0..8).map(|i| padded.get(0, 3, i)).collect();
        assert_eq!(row, vec![2.0, 1.0, 0.0, 1.0, 2.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <pad(x), g> == <x, pad_backward(g)> for any x, g.
        for padding in [Padding::Zero(1), Padding::Reflect(3)] {
            let x = Tensor::<f64>::from_fn([2, 5, 6], |c, y, xx| ((c * 31 + y * 7 + xx) as f64).sin());
            let px = pad(&x, padding);
            let g = Tensor::<f64>::from_fn(px.shape(), |c, y, xx| ((c * 13 + y * 3 + xx * 5) as f64).cos());
            let lhs: f64 = px.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let gx = pad_backward(&g, padding, x.shape());
            let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{padding:?}: {lhs} vs {rhs}");
        }
    }
}
