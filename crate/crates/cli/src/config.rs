//! Training configuration: a TOML file whose keys are exactly the long flags
//! of `xlat train` (dashes become underscores), with flags taking precedence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use xlat_core::data::dataset::DEFAULT_HOLDOUT;
use xlat_core::scheduler::{DEFAULT_K2_EPOCHS, LR_DISCRIMINATOR, LR_GENERATOR};
use xlat_core::trainer::DEFAULT_POOL_CAPACITY;
use xlat_core::{AdversarialLoss, Error, Result, Width};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 256x256, full width.
    Full,
    /// 64x64, width 1/4, synthetic data when no dataset is given.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AdvVariant {
    LeastSquares,
    LogLikelihood,
}

impl From<AdvVariant> for AdversarialLoss {
    fn from(v: AdvVariant) -> Self {
        match v {
            AdvVariant::LeastSquares => AdversarialLoss::LeastSquares,
            AdvVariant::LogLikelihood => AdversarialLoss::LogLikelihood,
        }
    }
}

/// Every field is optional so a file and the command line can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset root with one subdirectory per domain.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults bundle: `full` or `desk`.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Synthetic domain count, used when no dataset is given.
    #[arg(long)]
    pub domains: Option<usize>,
    /// Synthetic images per domain.
    #[arg(long)]
    pub synthetic_count: Option<usize>,
    /// `auto` for the k2/2 * n budget, or an explicit epoch count.
    #[arg(long)]
    pub epochs: Option<String>,
    /// Epochs a two-domain model would need.
    #[arg(long)]
    pub k2: Option<usize>,
    /// `auto` for the largest training domain's size, or an explicit count.
    #[arg(long)]
    pub iterations: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channel width multiplier such as `1`, `1/4` or `0.125`.
    #[arg(long)]
    pub width: Option<String>,
    /// Square training image side, a multiple of 4.
    #[arg(long)]
    pub size: Option<usize>,
    /// Cycle-consistency weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub adv_loss: Option<AdvVariant>,
    #[arg(long)]
    pub real_label: Option<f64>,
    #[arg(long)]
    pub fake_label: Option<f64>,
    #[arg(long)]
    pub lr_gen: Option<f64>,
    #[arg(long)]
    pub lr_disc: Option<f64>,
    /// Fake history size per domain; 0 disables it.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Random horizontal flips.
    #[arg(long)]
    pub flip: Option<bool>,
    /// Random crops after upscaling by 1/8.
    #[arg(long)]
    pub crop: Option<bool>,
    /// Fraction of each domain held out from training.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Keep decoded images in memory instead of reading files every draw.
    #[arg(long)]
    pub in_memory: Option<bool>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Run directory name under the output root.
    #[arg(long)]
    pub name: Option<String>,
}

impl TrainArgs {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(self, base: TrainArgs) -> TrainArgs {
        macro_rules! pick {
            ($($f:ident),*) => { TrainArgs { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            data,
            preset,
            domains,
            synthetic_count,
            epochs,
            k2,
            iterations,
            seed,
            width,
            size,
            lambda,
            adv_loss,
            real_label,
            fake_label,
            lr_gen,
            lr_disc,
            pool_size,
            flip,
            crop,
            holdout,
            in_memory,
            checkpoint_every,
            resume,
            name
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Count {
    Auto,
    Fixed(usize),
}

fn parse_count(key: &str, v: Option<&str>) -> Result<Count> {
    match v {
        None | Some("auto") => Ok(Count::Auto),
        Some(s) => s
            .parse()
            .map(Count::Fixed)
            .map_err(|_| Error::Config(format!("{key} must be `auto` or a nonnegative integer, got `{s}`"))),
    }
}

/// Fully resolved training configuration, recorded in the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub preset: Preset,
    pub domains: usize,
    pub synthetic_count: usize,
    pub epochs: Count,
    pub k2: usize,
    pub iterations: Count,
    pub seed: u64,
    pub width: Width,
    pub size: usize,
    pub lambda: f64,
    pub adv_loss: AdvVariant,
    pub real_label: f64,
    pub fake_label: f64,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub pool_size: usize,
    pub flip: bool,
    pub crop: bool,
    pub holdout: f64,
    pub in_memory: bool,
    pub checkpoint_every: usize,
    pub resume: Option<PathBuf>,
    pub name: String,
}

impl RunConfig {
    /// Applies preset defaults and validates every field before any work starts.
    pub fn resolve(a: TrainArgs) -> Result<Self> {
        let preset = a.preset.unwrap_or(Preset::Full);
        let (size, width, synthetic_count) = match preset {
            Preset::Full => (256, Width::ONE, 200),
            Preset::Desk => (64, Width::new(1, 4)?, 200),
        };
        let cfg = Self {
            data: a.data,
            preset,
            domains: a.domains.unwrap_or(4),
            synthetic_count: a.synthetic_count.unwrap_or(synthetic_count),
            epochs: parse_count("epochs", a.epochs.as_deref())?,
            k2: a.k2.unwrap_or(DEFAULT_K2_EPOCHS),
            iterations: parse_count("iterations", a.iterations.as_deref())?,
            seed: a.seed.unwrap_or(0),
            width: a.width.as_deref().map(Width::parse).transpose()?.unwrap_or(width),
            size: a.size.unwrap_or(size),
            lambda: a.lambda.unwrap_or(10.0),
            adv_loss: a.adv_loss.unwrap_or(AdvVariant::LeastSquares),
            real_label: a.real_label.unwrap_or(1.0),
            fake_label: a.fake_label.unwrap_or(0.0),
            lr_gen: a.lr_gen.unwrap_or(LR_GENERATOR),
            lr_disc: a.lr_disc.unwrap_or(LR_DISCRIMINATOR),
            pool_size: a.pool_size.unwrap_or(DEFAULT_POOL_CAPACITY),
            flip: a.flip.unwrap_or(true),
            crop: a.crop.unwrap_or(false),
            holdout: a.holdout.unwrap_or(DEFAULT_HOLDOUT),
            in_memory: a.in_memory.unwrap_or(false),
            checkpoint_every: a.checkpoint_every.unwrap_or(10),
            resume: a.resume,
            name: a.name.unwrap_or_else(|| "train".into()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.data.is_none() && self.domains < 2 {
            problems.push(format!("domains must be at least 2, got {}", self.domains));
        }
        if self.data.is_none() && self.synthetic_count == 0 {
            problems.push("synthetic_count must be positive".into());
        }
        if self.data.is_none() && self.preset != Preset::Desk {
            problems.push("no dataset given: pass --data or use --preset desk for synthetic data".into());
        }
        if self.size == 0 || self.size % 4 != 0 {
            problems.push(format!("size must be a positive multiple of 4, got {}", self.size));
        }
        if self.k2 == 0 || self.k2 % 2 != 0 {
            problems.push(format!("k2 must be even and positive, got {}", self.k2));
        }
        if self.iterations == Count::Fixed(0) {
            problems.push("iterations must be positive".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            problems.push(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.real_label == self.fake_label {
            problems.push("real_label and fake_label must differ".into());
        }
        for (k, v) in [("lr_gen", self.lr_gen), ("lr_disc", self.lr_disc)] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{k} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.holdout) {
            problems.push(format!("holdout must be in [0, 1), got {}", self.holdout));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            problems.push(format!("name `{}` must be a plain directory name", self.name));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
