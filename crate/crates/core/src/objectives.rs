//! Adversarial, cycle-consistency and composite losses with their score/pixel gradients.
//!
//! Every reduction is a mean over elements, accumulated in `f64`.

use serde::{Deserialize, Serialize};

use crate::domain::{AdversarialLoss, ImageTensor, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::networks::ScoreMap;
use crate::tensor::{Real, Tensor};

/// Above this magnitude a loss component is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub fn check_component(name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { component: name.to_string(), value });
    }
    Ok(value)
}

fn check_scores<T: Real>(name: &str, s: &ScoreMap<T>) -> Result<()> {
    if let Some(bad) = s.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::Divergence { component: name.to_string(), value: bad.as_f64() });
    }
    Ok(())
}

// log(sigmoid(s)) and log(1 - sigmoid(s)) without overflow.
fn log_sigmoid(s: f64) -> f64 {
    -softplus(-s)
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Mean squared deviation from `target`, and its gradient w.r.t. the scores.
fn squared<T: Real>(scores: &ScoreMap<T>, target: f64) -> (f64, Tensor<T>) {
    let n = scores.values().len() as f64;
    let mut sum = 0.0;
    let grad = scores.tensor().map(|v| {
        let d = v.as_f64() - target;
        T::from_f64_lossy(2.0 * d / n)
    });
    for v in scores.values() {
        let d = v.as_f64() - target;
        sum += d * d;
    }
    (sum / n, grad)
}

/// Mean binary cross-entropy of sigmoid(scores) against `target`, and its gradient.
fn cross_entropy<T: Real>(scores: &ScoreMap<T>, target: f64) -> (f64, Tensor<T>) {
    let n = scores.values().len() as f64;
    let mut sum = 0.0;
    for v in scores.values() {
        let s = v.as_f64();
        sum -= target * log_sigmoid(s) + (1.0 - target) * log_sigmoid(-s);
    }
    let grad = scores.tensor().map(|v| T::from_f64_lossy((sigmoid(v.as_f64()) - target) / n));
    (sum / n, grad)
}

/// Generator-side adversarial loss on the scores of its fakes.
///
/// Least squares pulls fake scores toward `real_label`. The log-likelihood
/// variant is the minimax generator term `E[log(1 - D(G(z)))]`, generalized to
/// the configured fake label; it is non-positive.
pub fn adv_loss_generator_with_grad<T: Real>(
    scores_fake: &ScoreMap<T>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, Tensor<T>)> {
    check_scores("generator scores", scores_fake)?;
    Ok(match cfg.adv_variant {
        AdversarialLoss::LeastSquares => squared(scores_fake, cfg.real_label),
        AdversarialLoss::LogLikelihood => {
            let (v, g) = cross_entropy(scores_fake, cfg.fake_label);
            (-v, g.map(|x| -x))
        }
    })
}

pub fn adv_loss_generator<T: Real>(scores_fake: &ScoreMap<T>, cfg: &ObjectiveConfig) -> Result<f64> {
    adv_loss_generator_with_grad(scores_fake, cfg).map(|(v, _)| v)
}

/// Discriminator loss and the gradients w.r.t. the real and fake score maps.
pub fn adv_loss_discriminator_with_grad<T: Real>(
    scores_real: &ScoreMap<T>,
    scores_fake: &ScoreMap<T>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    check_scores("discriminator real scores", scores_real)?;
    check_scores("discriminator fake scores", scores_fake)?;
    let term = match cfg.adv_variant {
        AdversarialLoss::LeastSquares => squared,
        AdversarialLoss::LogLikelihood => cross_entropy,
    };
    let (real, g_real) = term(scores_real, cfg.real_label);
    let (fake, g_fake) = term(scores_fake, cfg.fake_label);
    Ok((real + fake, g_real, g_fake))
}

pub fn adv_loss_discriminator<T: Real>(
    scores_real: &ScoreMap<T>,
    scores_fake: &ScoreMap<T>,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    adv_loss_discriminator_with_grad(scores_real, scores_fake, cfg).map(|(v, _, _)| v)
}

/// Mean absolute difference and its (sub)gradient w.r.t. `reconstructed`.
pub fn cycle_loss_with_grad<T: Real>(x: &ImageTensor<T>, reconstructed: &ImageTensor<T>) -> Result<(f64, Tensor<T>)> {
    if x.shape() != reconstructed.shape() {
        return Err(Error::shape(format!("cycle loss between {:?} and {:?}", x.shape(), reconstructed.shape())));
    }
    let a = x.tensor().data();
    let b = reconstructed.tensor().data();
    let n = a.len() as f64;
    let sum: f64 = a.iter().zip(b).map(|(&p, &q)| (p.as_f64() - q.as_f64()).abs()).sum();
    let step = T::from_f64_lossy(1.0 / n);
    let grad: Vec<T> = a
        .iter()
        .zip(b)
        .map(|(&p, &q)| {
            if q > p {
                step
            } else if q < p {
                -step
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(x.shape(), grad)?))
}

pub fn cycle_loss<T: Real>(x: &ImageTensor<T>, reconstructed: &ImageTensor<T>) -> Result<f64> {
    cycle_loss_with_grad(x, reconstructed).map(|(v, _)| v)
}

/// One directional generator pass `X -> Y -> X`.
#[derive(Clone, Debug)]
pub struct PassArtifacts<T = f32> {
    pub x: ImageTensor<T>,
    /// `Decoder_Y(Encoder_X(x))`
    pub fake: ImageTensor<T>,
    /// `Decoder_X(Encoder_Y(fake))`
    pub reconstructed: ImageTensor<T>,
    /// `D_Y(fake)`
    pub scores_fake: ScoreMap<T>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionLoss {
    pub adversarial: f64,
    pub cycle: f64,
}

/// Generator objective of one iteration. `forward` is X->Y (adversarial term on
/// D_Y, cycle term on x); `backward` is Y->X.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv_forward: f64,
    pub adv_backward: f64,
    pub cycle: f64,
    pub total: f64,
    pub forward: DirectionLoss,
    pub backward: DirectionLoss,
}

impl LossReport {
    pub fn compose(forward: DirectionLoss, backward: DirectionLoss, lambda_cycle: f64) -> Self {
        let cycle = forward.cycle + backward.cycle;
        Self {
            adv_forward: forward.adversarial,
            adv_backward: backward.adversarial,
            cycle,
            total: forward.adversarial + backward.adversarial + lambda_cycle * cycle,
            forward,
            backward,
        }
    }

    pub fn check(&self) -> Result<()> {
        check_component("adv_forward", self.adv_forward)?;
        check_component("adv_backward", self.adv_backward)?;
        check_component("cycle", self.cycle)?;
        check_component("total", self.total)?;
        Ok(())
    }
}

pub fn direction_loss<T: Real>(pass: &PassArtifacts<T>, cfg: &ObjectiveConfig) -> Result<DirectionLoss> {
    Ok(DirectionLoss {
        adversarial: adv_loss_generator(&pass.scores_fake, cfg)?,
        cycle: cycle_loss(&pass.x, &pass.reconstructed)?,
    })
}

pub fn total_generator_loss<T: Real>(
    pass_xy: &PassArtifacts<T>,
    pass_yx: &PassArtifacts<T>,
    cfg: &ObjectiveConfig,
) -> Result<LossReport> {
    Ok(LossReport::compose(direction_loss(pass_xy, cfg)?, direction_loss(pass_yx, cfg)?, cfg.lambda_cycle))
}
