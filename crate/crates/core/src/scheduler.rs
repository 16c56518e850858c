//! Domain-pair sampling, epoch budgets and the learning-rate schedule.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainId;
use crate::error::{Error, Result};

/// Epochs a single two-domain model is trained for.
pub const DEFAULT_K2_EPOCHS: usize = 200;
pub const LR_GENERATOR: f64 = 0.0002;
pub const LR_DISCRIMINATOR: f64 = 0.0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrRole {
    Generator,
    Discriminator,
}

/// Total epochs `(k2 / 2) * n`: each domain is then expected to be trained as
/// often as in a `k2`-epoch two-domain run, since it is drawn with probability `2/n`.
pub fn required_epochs(n: usize, k2: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::TooFewDomains(n));
    }
    if k2 == 0 || k2 % 2 != 0 {
        return Err(Error::Config(format!("k2 must be even and positive, got {k2}")));
    }
    Ok(k2 / 2 * n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub n_domains: usize,
    pub k2_equivalent: usize,
    pub total_epochs: usize,
    pub iterations_per_epoch: usize,
    pub rng_seed: u64,
    pub lr_gen_initial: f64,
    pub lr_disc_initial: f64,
}

impl TrainPlan {
    /// Plan with the default two-domain budget and learning rates.
    pub fn new(n_domains: usize, iterations_per_epoch: usize, rng_seed: u64) -> Result<Self> {
        Self::with_k2(n_domains, DEFAULT_K2_EPOCHS, iterations_per_epoch, rng_seed)
    }

    pub fn with_k2(n_domains: usize, k2: usize, iterations_per_epoch: usize, rng_seed: u64) -> Result<Self> {
        let plan = Self {
            n_domains,
            k2_equivalent: k2,
            total_epochs: required_epochs(n_domains, k2)?,
            iterations_per_epoch,
            rng_seed,
            lr_gen_initial: LR_GENERATOR,
            lr_disc_initial: LR_DISCRIMINATOR,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Replaces the derived epoch budget with an explicit one.
    pub fn with_total_epochs(mut self, epochs: usize) -> Self {
        self.total_epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_domains < 2 {
            return Err(Error::TooFewDomains(self.n_domains));
        }
        if self.iterations_per_epoch == 0 {
            return Err(Error::Config("iterations_per_epoch must be positive".into()));
        }
        for (name, lr) in [("lr_gen", self.lr_gen_initial), ("lr_disc", self.lr_disc_initial)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    pub fn initial_lr(&self, role: LrRole) -> f64 {
        match role {
            LrRole::Generator => self.lr_gen_initial,
            LrRole::Discriminator => self.lr_disc_initial,
        }
    }
}

/// Constant for the first half of training, then linear decay reaching zero at
/// `total_epochs`. The rate changes once per epoch.
pub fn learning_rate_at(epoch: usize, plan: &TrainPlan, role: LrRole) -> Result<f64> {
    let total = plan.total_epochs;
    if epoch >= total {
        return Err(Error::Config(format!("epoch {epoch} outside plan of {total} epochs")));
    }
    let remaining = 2.0 * (total - epoch) as f64 / total as f64;
    Ok(plan.initial_lr(role) * remaining.min(1.0))
}

/// Uniform sampler over unordered pairs of distinct domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSampler {
    rng: ChaCha8Rng,
}

impl PairSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Returns `(X, Y)` with `X < Y`.
    pub fn sample(&mut self, n: usize) -> Result<(DomainId, DomainId)> {
        sample_pair(&mut self.rng, n)
    }
}

pub fn sample_pair<R: RngExt + ?Sized>(rng: &mut R, n: usize) -> Result<(DomainId, DomainId)> {
    if n < 2 {
        return Err(Error::TooFewDomains(n));
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    Ok((DomainId::new(a.min(b), n)?, DomainId::new(a.max(b), n)?))
}

/// Empirical pair and per-domain draw frequencies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairStats {
    pub draws: usize,
    /// `counts[i][j]` for `i < j`.
    pub pair_counts: Vec<Vec<usize>>,
    pub domain_counts: Vec<usize>,
}

impl PairStats {
    pub fn domain_frequency(&self, d: usize) -> f64 {
        self.domain_counts[d] as f64 / self.draws as f64
    }

    /// Pearson chi-square statistic of the pair counts against the uniform law.
    pub fn pair_chi_square(&self) -> f64 {
        let n = self.domain_counts.len();
        let cells = n * (n - 1) / 2;
        let expected = self.draws as f64 / cells as f64;
        let mut chi = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = self.pair_counts[i][j] as f64 - expected;
                chi += d * d / expected;
            }
        }
        chi
    }
}

pub fn simulate_pairs(n: usize, draws: usize, seed: u64) -> Result<PairStats> {
    let mut sampler = PairSampler::new(seed);
    let mut pair_counts = vec![vec![0; n]; n];
    let mut domain_counts = vec![0; n];
    for _ in 0..draws {
        let (x, y) = sampler.sample(n)?;
        pair_counts[x.index()][y.index()] += 1;
        domain_counts[x.index()] += 1;
        domain_counts[y.index()] += 1;
    }
    Ok(PairStats { draws, pair_counts, domain_counts })
}
