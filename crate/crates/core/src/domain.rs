//! Domain identifiers, image/latent value types and objective settings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Dense index of a domain within a registry of `n >= 2` domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainId(usize);

impl DomainId {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        if index < n {
            Ok(Self(index))
        } else {
            Err(Error::DomainOutOfRange { index, n })
        }
    }

    pub(crate) fn new_unchecked(index: usize) -> Self {
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// All ids of an `n`-domain model in order.
    pub fn all(n: usize) -> impl Iterator<Item = DomainId> {
        (0..n).map(DomainId)
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 3-channel image in `[-1, 1]`, laid out (C, H, W), with spatial dims divisible by 4.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T = f32>(Tensor<T>);

impl<T: Real> ImageTensor<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        let [c, h, w] = data.shape();
        if c != 3 {
            return Err(Error::shape(format!("image must have 3 channels, got {c}")));
        }
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(format!("image size {h}x{w} must be a nonzero multiple of 4")));
        }
        if !data.is_finite() {
            return Err(Error::shape("image contains non-finite values"));
        }
        Ok(Self(data))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn shape(&self) -> [usize; 3] {
        self.0.shape()
    }

    pub fn flip_horizontal(&self) -> Self {
        Self(self.0.flip_horizontal())
    }
}

/// Encoder output: the shared representation every decoder consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<T = f32> {
    pub data: Tensor<T>,
    pub source: DomainId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialLoss {
    /// Squared error of raw scores against the target labels.
    #[default]
    LeastSquares,
    /// Minimax cross-entropy on sigmoid(scores).
    LogLikelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub lambda_cycle: f64,
    pub adv_variant: AdversarialLoss,
    pub real_label: f64,
    pub fake_label: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { lambda_cycle: 10.0, adv_variant: AdversarialLoss::LeastSquares, real_label: 1.0, fake_label: 0.0 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cycle.is_finite() && self.lambda_cycle >= 0.0) {
            return Err(Error::Config(format!("lambda_cycle must be finite and >= 0, got {}", self.lambda_cycle)));
        }
        if !self.real_label.is_finite() || !self.fake_label.is_finite() {
            return Err(Error::Config("labels must be finite".into()));
        }
        if self.real_label == self.fake_label {
            return Err(Error::Config("real_label and fake_label must differ".into()));
        }
        Ok(())
    }
}

/// Generator counts for `n` domains under the composed model and under one
/// two-domain model per unordered pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelCount {
    pub composed: usize,
    pub pairwise_cyclegan: usize,
}

impl ModelCount {
    /// Pairwise models trained by the quadratic baseline, `C(n, 2)`.
    pub fn pairwise_models(&self) -> usize {
        self.pairwise_cyclegan / 2
    }

    /// Encoders, decoders and discriminators of the composed model.
    pub fn composed_networks(&self) -> usize {
        3 * self.composed
    }

    /// Generators plus discriminators of the pairwise baseline.
    pub fn pairwise_networks(&self) -> usize {
        2 * self.pairwise_cyclegan
    }
}

pub fn model_count(n: usize) -> Result<ModelCount> {
    if n < 2 {
        return Err(Error::TooFewDomains(n));
    }
    Ok(ModelCount { composed: n, pairwise_cyclegan: n * (n - 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn model_counts() {
        assert_eq!(model_count(14).unwrap(), ModelCount { composed: 14, pairwise_cyclegan: 182 });
        assert_eq!(model_count(14).unwrap().pairwise_models(), 91);
        assert_eq!(model_count(2).unwrap(), ModelCount { composed: 2, pairwise_cyclegan: 2 });
        assert_eq!(model_count(5).unwrap().pairwise_cyclegan, 2 * binomial(5, 2));
        assert!(model_count(1).is_err());
        assert!(model_count(0).is_err());
    }

    #[test]
    fn composed_model_is_never_larger() {
        for n in 2..64 {
            let c = model_count(n).unwrap();
            assert_eq!(c.composed_networks(), 3 * n);
            assert_eq!(c.pairwise_networks(), 4 * binomial(n, 2));
            if n == 2 {
                assert_eq!(c.composed, c.pairwise_cyclegan);
            } else {
                assert!(c.composed < c.pairwise_cyclegan);
            }
        }
    }

    #[test]
    fn image_shape_rules() {
        assert!(ImageTensor::new(Tensor::<f32>::zeros([3, 8, 12])).is_ok());
        assert!(ImageTensor::new(Tensor::<f32>::zeros([1, 8, 8])).is_err());
        assert!(ImageTensor::new(Tensor::<f32>::zeros([3, 6, 8])).is_err());
        assert!(ImageTensor::new(Tensor::<f32>::full([3, 4, 4], f32::NAN)).is_err());
    }

    #[test]
    fn objective_validation() {
        assert!(ObjectiveConfig::default().validate().is_ok());
        let same = ObjectiveConfig { fake_label: 1.0, ..Default::default() };
        assert!(same.validate().is_err());
        let negative = ObjectiveConfig { lambda_cycle: -1.0, ..Default::default() };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn domain_ids_are_dense() {
        assert_eq!(DomainId::all(4).map(DomainId::index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(DomainId::new(4, 4).is_err());
    }
}
