//! The multi-domain training loop: sample a pair, update its generators on the
//! summed objective, then update its two discriminators.

mod pool;
mod step;
mod trace;

pub use pool::{FakePool, DEFAULT_POOL_CAPACITY};
pub use step::{discriminator_gradients, generator_pass, GeneratorGrads, GeneratorStep};
pub use trace::{read_trace, JsonLinesSink, LogSink, MemorySink, NullSink, TraceRecord};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::checkpoint::{save_checkpoint, Checkpoint};
use crate::data::ImageSource;
use crate::domain::{DomainId, ImageTensor, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::networks::Role;
use crate::objectives::LossReport;
use crate::optim::{Adam, AdamConfig};
use crate::registry::DomainRegistry;
use crate::scheduler::{learning_rate_at, LrRole, PairSampler, TrainPlan};

const SAMPLER_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;
const POOL_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for the per-iteration domain pair.
pub fn sampler_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, SAMPLER_STREAM)
}

/// Generator for data order, flips and crops.
pub fn data_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, DATA_STREAM)
}

/// Generator for fake-pool replacement decisions.
pub fn pool_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, POOL_STREAM)
}

/// Optimizer moments for one domain's three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainOptimizers {
    pub encoder: Adam,
    pub decoder: Adam,
    pub discriminator: Adam,
}

impl DomainOptimizers {
    pub fn get(&self, role: Role) -> &Adam {
        match role {
            Role::Encoder => &self.encoder,
            Role::Decoder => &self.decoder,
            Role::Discriminator => &self.discriminator,
        }
    }

    pub fn get_mut(&mut self, role: Role) -> &mut Adam {
        match role {
            Role::Encoder => &mut self.encoder,
            Role::Decoder => &mut self.decoder,
            Role::Discriminator => &mut self.discriminator,
        }
    }
}

/// Everything besides the weights needed to continue training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub plan: TrainPlan,
    pub objective: ObjectiveConfig,
    pub adam: AdamConfig,
    /// Next epoch to run.
    pub epoch: usize,
    /// Iterations completed so far.
    pub iteration: u64,
    pub sampler: PairSampler,
    pub data_rng: ChaCha8Rng,
    pub pool_rng: ChaCha8Rng,
    pub optimizers: Vec<DomainOptimizers>,
    pub pools: Vec<FakePool>,
}

impl TrainState {
    pub fn fresh(
        reg: &DomainRegistry,
        plan: TrainPlan,
        objective: ObjectiveConfig,
        pool_capacity: usize,
    ) -> Result<Self> {
        plan.validate()?;
        objective.validate()?;
        if plan.n_domains != reg.len() {
            return Err(Error::Config(format!("plan is for {} domains, registry has {}", plan.n_domains, reg.len())));
        }
        let adam = AdamConfig::default();
        let optimizers = reg
            .domains()
            .iter()
            .map(|d| DomainOptimizers {
                encoder: Adam::new(&d.encoder, adam),
                decoder: Adam::new(&d.decoder, adam),
                discriminator: Adam::new(&d.discriminator, adam),
            })
            .collect();
        Ok(Self {
            sampler: PairSampler::from_rng(sampler_rng(plan.rng_seed)),
            data_rng: data_rng(plan.rng_seed),
            pool_rng: pool_rng(plan.rng_seed),
            plan,
            objective,
            adam,
            epoch: 0,
            iteration: 0,
            optimizers,
            pools: (0..reg.len()).map(|_| FakePool::new(pool_capacity)).collect(),
        })
    }

    pub fn pool_capacity(&self) -> usize {
        self.pools.first().map(FakePool::capacity).unwrap_or(0)
    }

    /// Learning rates `(generator, discriminator)` for the next epoch to run.
    pub fn learning_rates(&self) -> Result<(f64, f64)> {
        Ok((
            learning_rate_at(self.epoch, &self.plan, LrRole::Generator)?,
            learning_rate_at(self.epoch, &self.plan, LrRole::Discriminator)?,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationReport {
    pub loss: LossReport,
    pub disc_x: f64,
    pub disc_y: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Directory for `epoch_<e>.cgan` files; none disables checkpointing.
    pub checkpoint_dir: Option<PathBuf>,
    /// Write a checkpoint after every this many epochs, and after the last.
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub registry: DomainRegistry,
    pub state: TrainState,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:05}.cgan"))
}

impl Trainer {
    pub fn new(
        registry: DomainRegistry,
        plan: TrainPlan,
        objective: ObjectiveConfig,
        pool_capacity: usize,
    ) -> Result<Self> {
        let state = TrainState::fresh(&registry, plan, objective, pool_capacity)?;
        Ok(Self { registry, state })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        Self { registry: ckpt.registry, state: ckpt.state }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { registry: self.registry.clone(), state: self.state.clone() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.registry, &self.state)
    }

    /// One optimization step on the pair `(dx, dy)` with learning rates
    /// `(generator, discriminator)`. Nothing is modified when a loss diverges.
    pub fn train_iteration(
        &mut self,
        x: &ImageTensor,
        y: &ImageTensor,
        dx: DomainId,
        dy: DomainId,
        (lr_gen, lr_disc): (f64, f64),
    ) -> Result<IterationReport> {
        let cfg = self.state.objective;
        let step = generator_pass(&self.registry, x, y, dx, dy, &cfg)?;
        step.report.check()?;
        let GeneratorStep { report, forward, backward, grads } = step;

        // Work on copies of the pair so a diverging discriminator step leaves everything as it was.
        let (ix, iy) = (dx.index(), dy.index());
        let mut mx = self.registry.domain(dx).clone();
        let mut my = self.registry.domain(dy).clone();
        let mut ox = self.state.optimizers[ix].clone();
        let mut oy = self.state.optimizers[iy].clone();
        ox.encoder.update(&mut mx.encoder, &grads.encoder_x, lr_gen);
        ox.decoder.update(&mut mx.decoder, &grads.decoder_x, lr_gen);
        oy.encoder.update(&mut my.encoder, &grads.encoder_y, lr_gen);
        oy.decoder.update(&mut my.decoder, &grads.decoder_y, lr_gen);

        let mut pool_y = self.state.pools[iy].clone();
        let mut pool_x = self.state.pools[ix].clone();
        let mut pool_rng = self.state.pool_rng.clone();
        let fake_y = pool_y.query(forward.fake, &mut pool_rng);
        let fake_x = pool_x.query(backward.fake, &mut pool_rng);
        let (disc_y, g_dy) = discriminator_gradients(&my.discriminator, y, &fake_y, &cfg)?;
        let (disc_x, g_dx) = discriminator_gradients(&mx.discriminator, x, &fake_x, &cfg)?;
        oy.discriminator.update(&mut my.discriminator, &g_dy, lr_disc);
        ox.discriminator.update(&mut mx.discriminator, &g_dx, lr_disc);

        *self.registry.domain_mut(dx) = mx;
        *self.registry.domain_mut(dy) = my;
        self.state.optimizers[ix] = ox;
        self.state.optimizers[iy] = oy;
        self.state.pools[iy] = pool_y;
        self.state.pools[ix] = pool_x;
        self.state.pool_rng = pool_rng;
        self.state.iteration += 1;
        Ok(IterationReport { loss: report, disc_x, disc_y })
    }

    /// Runs the remaining epochs of the plan. On divergence the pre-iteration
    /// state is checkpointed to `diverged.cgan` (when checkpointing) and the
    /// error returned.
    pub fn train(&mut self, data: &mut dyn ImageSource, sink: &mut dyn LogSink, opts: &TrainOptions) -> Result<()> {
        let n = self.registry.len();
        if data.domain_count() != n {
            return Err(Error::Data(format!("dataset has {} domains, model has {n}", data.domain_count())));
        }
        for d in self.registry.ids() {
            if data.domain_len(d) == 0 {
                return Err(Error::Data(format!("domain `{}` is empty", self.registry.domain(d).name)));
            }
        }
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let total = self.state.plan.total_epochs;
        while self.state.epoch < total {
            let epoch = self.state.epoch;
            let lr = self.state.learning_rates()?;
            data.begin_epoch(&mut self.state.data_rng);
            for _ in 0..self.state.plan.iterations_per_epoch {
                let (dx, dy) = self.state.sampler.sample(n)?;
                let x = data.draw(dx, &mut self.state.data_rng)?;
                let y = data.draw(dy, &mut self.state.data_rng)?;
                let r = match self.train_iteration(&x, &y, dx, dy, lr) {
                    Err(e @ Error::Divergence { .. }) => {
                        if let Some(dir) = &opts.checkpoint_dir {
                            self.save(&dir.join("diverged.cgan"))?;
                        }
                        sink.flush()?;
                        return Err(e);
                    }
                    other => other?,
                };
                sink.record(&TraceRecord {
                    epoch,
                    iteration: self.state.iteration - 1,
                    pair: (dx.index(), dy.index()),
                    adv_forward: r.loss.adv_forward,
                    adv_backward: r.loss.adv_backward,
                    cycle: r.loss.cycle,
                    total: r.loss.total,
                    lr_gen: lr.0,
                    lr_disc: lr.1,
                    disc_x: r.disc_x,
                    disc_y: r.disc_y,
                })?;
            }
            self.state.epoch += 1;
            if let Some(dir) = &opts.checkpoint_dir {
                let every = opts.checkpoint_every.max(1);
                if self.state.epoch % every == 0 || self.state.epoch == total {
                    self.save(&checkpoint_path(dir, self.state.epoch))?;
                }
            }
            log::info!("epoch {}/{} done", self.state.epoch, total);
        }
        sink.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MemoryDataset;
    use crate::networks::{ArchSpec, Width};
    use crate::tensor::Tensor;
    use rand::RngExt;

    fn setup(n: usize, epochs: usize, iters: usize) -> (Trainer, MemoryDataset) {
        let names: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let reg = DomainRegistry::build(&names, &ArchSpec::with_width(Width::new(1, 8).unwrap()), 11).unwrap();
        let plan = TrainPlan::new(n, iters, 5).unwrap().with_total_epochs(epochs);
        let trainer = Trainer::new(reg, plan, ObjectiveConfig::default(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let images = (0..n)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        ImageTensor::new(Tensor::from_fn([3, 24, 24], |_, _, _| rng.random_range(-1.0..1.0))).unwrap()
                    })
                    .collect()
            })
            .collect();
        (trainer, MemoryDataset::new(names, images, true).unwrap())
    }

    #[test]
    fn zero_epochs_leave_the_registry_unchanged() {
        let (mut t, mut data) = setup(3, 0, 4);
        let before = t.registry.clone();
        let mut sink = MemorySink::default();
        t.train(&mut data, &mut sink, &TrainOptions::default()).unwrap();
        assert_eq!(t.registry, before);
        assert!(sink.records.is_empty());
    }

    #[test]
    fn iteration_touches_only_the_pair() {
        let (mut t, mut data) = setup(4, 1, 1);
        let before: Vec<String> = t.registry.domains().iter().map(|d| d.fingerprint()).collect();
        let mut rng = data_rng(0);
        data.begin_epoch(&mut rng);
        let (a, b) = (t.registry.id(1).unwrap(), t.registry.id(3).unwrap());
        let x = data.draw(a, &mut rng).unwrap();
        let y = data.draw(b, &mut rng).unwrap();
        t.train_iteration(&x, &y, a, b, (2e-4, 1e-4)).unwrap();
        for (i, d) in t.registry.domains().iter().enumerate() {
            let changed = d.fingerprint() != before[i];
            assert_eq!(changed, i == 1 || i == 3, "domain {i}");
            if changed {
                for role in Role::ALL {
                    assert_ne!(d.network(role).fingerprint(), before[i].split(':').nth(role as usize).unwrap());
                }
            }
        }
    }

    #[test]
    fn divergence_leaves_state_untouched() {
        let (mut t, _) = setup(2, 1, 1);
        let before = t.clone();
        let huge = ImageTensor::new(Tensor::full([3, 24, 24], 1.0e30)).unwrap();
        let (a, b) = (t.registry.id(0).unwrap(), t.registry.id(1).unwrap());
        let err = t.train_iteration(&huge, &huge, a, b, (2e-4, 1e-4)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert_eq!(t.registry, before.registry);
        assert_eq!(t.state, before.state);
    }

    #[test]
    fn training_is_deterministic_and_logs_every_iteration() {
        let run = || {
            let (mut t, mut data) = setup(3, 2, 3);
            let mut sink = MemorySink::default();
            t.train(&mut data, &mut sink, &TrainOptions::default()).unwrap();
            (t.registry, sink.records)
        };
        let (reg_a, trace_a) = run();
        let (reg_b, trace_b) = run();
        assert_eq!(trace_a.len(), 6);
        assert_eq!(trace_a, trace_b);
        assert_eq!(reg_a, reg_b);
        assert!(trace_a.iter().all(|r| r.pair.0 < r.pair.1 && r.pair.1 < 3));
        assert_eq!((trace_a[5].epoch, trace_a[5].lr_gen), (1, 2e-4));
    }
}
