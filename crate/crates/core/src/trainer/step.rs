use crate::domain::{DomainId, ImageTensor, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::networks::{check_discriminator_input, Gradients, Network, Role, ScoreMap};
use crate::objectives::{
    adv_loss_discriminator_with_grad, adv_loss_generator_with_grad, check_component, cycle_loss_with_grad,
    DirectionLoss, LossReport, PassArtifacts,
};
use crate::registry::DomainRegistry;
use crate::tensor::{Real, Tensor};

/// Parameter gradients of the four generator halves touched by one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorGrads<T = f32> {
    pub encoder_x: Gradients<T>,
    pub decoder_x: Gradients<T>,
    pub encoder_y: Gradients<T>,
    pub decoder_y: Gradients<T>,
}

#[derive(Clone, Debug)]
pub struct GeneratorStep<T = f32> {
    pub report: LossReport,
    /// X -> Y -> X
    pub forward: PassArtifacts<T>,
    /// Y -> X -> Y
    pub backward: PassArtifacts<T>,
    pub grads: GeneratorGrads<T>,
}

fn finite_image<T: Real>(t: Tensor<T>, what: &str) -> Result<ImageTensor<T>> {
    if let Some(bad) = t.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Divergence { component: what.to_string(), value: bad.as_f64() });
    }
    ImageTensor::new(t)
}

struct Halves<'a, T> {
    enc_s: &'a Network<T>,
    dec_s: &'a Network<T>,
    enc_t: &'a Network<T>,
    dec_t: &'a Network<T>,
    disc_t: &'a Network<T>,
}

struct HalfGrads<'a, T> {
    enc_s: &'a mut Gradients<T>,
    dec_s: &'a mut Gradients<T>,
    enc_t: &'a mut Gradients<T>,
    dec_t: &'a mut Gradients<T>,
}

/// Forward and backward of one direction `s -> t -> s`, accumulating into `g`.
/// The discriminator of `t` is frozen: it only propagates gradient to its input.
fn direction<T: Real>(
    nets: &Halves<'_, T>,
    a: &ImageTensor<T>,
    cfg: &ObjectiveConfig,
    g: HalfGrads<'_, T>,
) -> Result<(PassArtifacts<T>, DirectionLoss)> {
    let (h, tr_enc_s) = nets.enc_s.forward_traced(a.tensor())?;
    let (fake, tr_dec_t) = nets.dec_t.forward_traced(&h)?;
    let fake = finite_image(fake, "fake")?;
    check_discriminator_input(nets.disc_t, fake.shape())?;
    let (h2, tr_enc_t) = nets.enc_t.forward_traced(fake.tensor())?;
    let (rec, tr_dec_s) = nets.dec_s.forward_traced(&h2)?;
    let rec = finite_image(rec, "reconstruction")?;
    let (scores, tr_disc) = nets.disc_t.forward_traced(fake.tensor())?;
    let scores = ScoreMap(scores);

    let (adversarial, g_scores) = adv_loss_generator_with_grad(&scores, cfg)?;
    let (cycle, g_rec) = cycle_loss_with_grad(a, &rec)?;
    let lambda = T::from_f64_lossy(cfg.lambda_cycle);
    let g_rec = g_rec.map(|v| v * lambda);

    let mut g_fake = nets.disc_t.backward(&tr_disc, &g_scores, None);
    let g_h2 = nets.dec_s.backward(&tr_dec_s, &g_rec, Some(g.dec_s));
    g_fake.add_assign(&nets.enc_t.backward(&tr_enc_t, &g_h2, Some(g.enc_t)));
    let g_h = nets.dec_t.backward(&tr_dec_t, &g_fake, Some(g.dec_t));
    nets.enc_s.backward(&tr_enc_s, &g_h, Some(g.enc_s));

    let pass = PassArtifacts { x: a.clone(), fake, reconstructed: rec, scores_fake: scores };
    Ok((pass, DirectionLoss { adversarial, cycle }))
}

/// Both generator passes of an iteration with gradients of the total
/// generator loss w.r.t. the four generator halves. Weights are not modified.
pub fn generator_pass<T: Real>(
    reg: &DomainRegistry<T>,
    x: &ImageTensor<T>,
    y: &ImageTensor<T>,
    dx: DomainId,
    dy: DomainId,
    cfg: &ObjectiveConfig,
) -> Result<GeneratorStep<T>> {
    if dx == dy {
        return Err(Error::Config(format!("pair ({dx}, {dy}) must name two different domains")));
    }
    let (mx, my) = (reg.domain(dx), reg.domain(dy));
    let mut grads = GeneratorGrads {
        encoder_x: mx.encoder.zero_grads(),
        decoder_x: mx.decoder.zero_grads(),
        encoder_y: my.encoder.zero_grads(),
        decoder_y: my.decoder.zero_grads(),
    };
    let xy = Halves {
        enc_s: &mx.encoder,
        dec_s: &mx.decoder,
        enc_t: &my.encoder,
        dec_t: &my.decoder,
        disc_t: &my.discriminator,
    };
    let (forward, loss_f) = direction(
        &xy,
        x,
        cfg,
        HalfGrads {
            enc_s: &mut grads.encoder_x,
            dec_s: &mut grads.decoder_x,
            enc_t: &mut grads.encoder_y,
            dec_t: &mut grads.decoder_y,
        },
    )?;
    let yx = Halves {
        enc_s: &my.encoder,
        dec_s: &my.decoder,
        enc_t: &mx.encoder,
        dec_t: &mx.decoder,
        disc_t: &mx.discriminator,
    };
    let (backward, loss_b) = direction(
        &yx,
        y,
        cfg,
        HalfGrads {
            enc_s: &mut grads.encoder_y,
            dec_s: &mut grads.decoder_y,
            enc_t: &mut grads.encoder_x,
            dec_t: &mut grads.decoder_x,
        },
    )?;
    let report = LossReport::compose(loss_f, loss_b, cfg.lambda_cycle);
    Ok(GeneratorStep { report, forward, backward, grads })
}

/// Discriminator loss on one real and one fake image of its own domain, and
/// the gradient w.r.t. that discriminator's parameters only.
pub fn discriminator_gradients<T: Real>(
    d: &Network<T>,
    real: &ImageTensor<T>,
    fake: &ImageTensor<T>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, Gradients<T>)> {
    if d.role() != Role::Discriminator {
        return Err(Error::Config(format!("expected a discriminator, got a {}", d.role().name())));
    }
    check_discriminator_input(d, real.shape())?;
    check_discriminator_input(d, fake.shape())?;
    let (sr, tr_real) = d.forward_traced(real.tensor())?;
    let (sf, tr_fake) = d.forward_traced(fake.tensor())?;
    let (loss, g_real, g_fake) = adv_loss_discriminator_with_grad(&ScoreMap(sr), &ScoreMap(sf), cfg)?;
    check_component("discriminator", loss)?;
    let mut grads = d.zero_grads();
    d.backward(&tr_real, &g_real, Some(&mut grads));
    d.backward(&tr_fake, &g_fake, Some(&mut grads));
    Ok((loss, grads))
}
