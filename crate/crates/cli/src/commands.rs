use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xlat_core::data::dataset::DomainFiles;
use xlat_core::data::image_io::{decode_rgb, resize, rgb_to_tensor, save_png, save_tensor_png, tile};
use xlat_core::domain::model_count;
use xlat_core::scheduler::simulate_pairs;
use xlat_core::trainer::{checkpoint_path, JsonLinesSink};
use xlat_core::{
    learning_rate_at, load_checkpoint, make_synthetic_dataset, required_epochs, scan_dataset, ArchSpec, DatasetHandle,
    DatasetOptions, DomainRegistry, Error, ImageSource, ImageTensor, LrRole, MemoryDataset, ObjectiveConfig, Result,
    SyntheticSpec, TrainOptions, TrainPlan, Trainer, Translator,
};

use crate::config::{Count, RunConfig, TrainArgs};
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let args = match &cli.config {
                Some(path) => args.over(TrainArgs::from_toml_file(path)?),
                None => args,
            };
            train(&cli.output_root, RunConfig::resolve(args)?)
        }
        Command::Translate(a) => translate(a),
        Command::Grid(a) => grid(a),
        Command::Schedule(a) => schedule(a),
        Command::Synth(a) => synth(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    domains: Vec<String>,
    total_epochs: usize,
    iterations_per_epoch: usize,
    start_epoch: usize,
    train_counts: Vec<usize>,
    heldout: &'a [DomainFiles],
    skipped: &'a [PathBuf],
}

fn open_dataset(cfg: &RunConfig, run_dir: &Path) -> Result<DatasetHandle> {
    let options = DatasetOptions { target_size: (cfg.size, cfg.size), flip: cfg.flip, crop: cfg.crop };
    options.validate()?;
    match &cfg.data {
        Some(root) => scan_dataset(root, options),
        None => {
            let spec = SyntheticSpec {
                n_domains: cfg.domains,
                per_domain_count: cfg.synthetic_count,
                size: cfg.size,
                seed: cfg.seed,
            };
            let mut h = make_synthetic_dataset(spec, &run_dir.join("synthetic"))?;
            h.options = options;
            Ok(h)
        }
    }
}

fn train(output_root: &Path, cfg: RunConfig) -> Result<()> {
    let run_dir = output_root.join(&cfg.name);
    create_dir(&run_dir)?;
    let data = open_dataset(&cfg, &run_dir)?;
    let names = data.names();

    let mut trainer = match &cfg.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            ckpt.expect_domains(&names)?;
            log::info!("resuming {} at epoch {}", path.display(), ckpt.state.epoch);
            Trainer::from_checkpoint(ckpt)
        }
        None => {
            let (train_part, _) = data.split(cfg.holdout, cfg.seed);
            let iterations = match cfg.iterations {
                Count::Auto => train_part.largest_domain(),
                Count::Fixed(k) => k,
            };
            let mut plan = TrainPlan::with_k2(names.len(), cfg.k2, iterations, cfg.seed)?;
            if let Count::Fixed(e) = cfg.epochs {
                plan = plan.with_total_epochs(e);
            }
            plan.lr_gen_initial = cfg.lr_gen;
            plan.lr_disc_initial = cfg.lr_disc;
            plan.validate()?;
            let objective = ObjectiveConfig {
                lambda_cycle: cfg.lambda,
                adv_variant: cfg.adv_loss.into(),
                real_label: cfg.real_label,
                fake_label: cfg.fake_label,
            };
            let registry = DomainRegistry::build(&names, &ArchSpec::with_width(cfg.width), cfg.seed)?;
            Trainer::new(registry, plan, objective, cfg.pool_size)?
        }
    };

    // The split is keyed by the run seed, so a resumed run holds out the same files.
    let (mut train_part, held) = data.split(cfg.holdout, trainer.state.plan.rng_seed);
    let plan = trainer.state.plan.clone();
    write_json(
        &run_dir.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION"),
            seed: plan.rng_seed,
            config: &cfg,
            domains: names.clone(),
            total_epochs: plan.total_epochs,
            iterations_per_epoch: plan.iterations_per_epoch,
            start_epoch: trainer.state.epoch,
            train_counts: train_part.domains.iter().map(|d| d.files.len()).collect(),
            heldout: &held.domains,
            skipped: data.skipped(),
        },
    )?;

    let mut sink = JsonLinesSink::append(&run_dir.join("trace.jsonl"))?;
    let ckpt_dir = run_dir.join("checkpoints");
    let opts = TrainOptions { checkpoint_dir: Some(ckpt_dir.clone()), checkpoint_every: cfg.checkpoint_every };
    eprintln!(
        "training {} domains [{}] for epochs {}..{} x {} iterations into {}",
        names.len(),
        names.join(", "),
        trainer.state.epoch,
        plan.total_epochs,
        plan.iterations_per_epoch,
        run_dir.display()
    );
    let mut memory;
    let source: &mut dyn ImageSource = if cfg.in_memory {
        memory = MemoryDataset::from_handle(&train_part)?;
        &mut memory
    } else {
        &mut train_part
    };
    trainer.train(source, &mut sink, &opts)?;
    println!("{}", checkpoint_path(&ckpt_dir, trainer.state.epoch).display());
    Ok(())
}

/// Loads an image, resized to `size` when given and otherwise trimmed to a
/// multiple of 4 on each side.
fn load_input(path: &Path, size: Option<usize>) -> Result<ImageTensor> {
    let img = decode_rgb(path)?;
    let (h, w) = match size {
        Some(s) => (s, s),
        None => (img.height() as usize / 4 * 4, img.width() as usize / 4 * 4),
    };
    if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
        return Err(Error::Shape(format!("{}: cannot use a {h}x{w} input", path.display())));
    }
    if (h, w) == (img.height() as usize, img.width() as usize) {
        rgb_to_tensor(&img)
    } else {
        rgb_to_tensor(&resize(&img, (h, w)))
    }
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Source domain name.
    #[arg(long)]
    pub from: String,
    /// Target domain names.
    #[arg(long, num_args = 1.., required = true)]
    pub to: Vec<String>,
    /// Output directory; files are named `<input stem>_<target>.png`.
    #[arg(long)]
    pub out: PathBuf,
    /// Square side to resize the input to.
    #[arg(long)]
    pub size: Option<usize>,
}

fn translate(a: TranslateArgs) -> Result<()> {
    let t = Translator::new(load_checkpoint(&a.checkpoint)?.registry, 1);
    let from = t.registry().id_of(&a.from)?;
    let targets = a.to.iter().map(|n| t.registry().id_of(n)).collect::<Result<Vec<_>>>()?;
    let x = load_input(&a.input, a.size)?;
    let outs = t.translate_many(&x, from, &targets)?;
    create_dir(&a.out)?;
    let stem = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
    for (name, img) in a.to.iter().zip(&outs) {
        let path = a.out.join(format!("{stem}_{name}.png"));
        save_tensor_png(&path, img)?;
        println!("{}", path.display());
    }
    log::info!("{} encoder and {} decoder passes", t.encoder_calls(), t.decoder_calls());
    Ok(())
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One image per domain, in the checkpoint's domain order.
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// Output PNG; row i is image i, column j is domain j.
    #[arg(long)]
    pub out: PathBuf,
    /// Square side all inputs are resized to.
    #[arg(long)]
    pub size: Option<usize>,
}

fn grid(a: GridArgs) -> Result<()> {
    let t = Translator::new(load_checkpoint(&a.checkpoint)?.registry, a.images.len().max(1));
    let n = t.registry().len();
    if a.images.len() != n {
        return Err(Error::Config(format!(
            "grid needs one image per domain ({n}: {}), got {}",
            t.registry().names().join(", "),
            a.images.len()
        )));
    }
    let size = match a.size {
        Some(s) => s,
        None => {
            let first = decode_rgb(&a.images[0])?;
            first.height().min(first.width()) as usize / 4 * 4
        }
    };
    let images = a.images.iter().map(|p| load_input(p, Some(size))).collect::<Result<Vec<_>>>()?;
    let rows = t.translate_grid(&images)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_png(&a.out, &tile(&rows)?)?;
    println!("{}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub domains: usize,
    /// Epochs a two-domain model would need.
    #[arg(long, default_value_t = 200)]
    pub k2: usize,
    /// Simulated pair draws; 0 skips the simulation.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct ScheduleReport {
    domains: usize,
    generators: usize,
    pairwise_generators: usize,
    networks: usize,
    epochs: usize,
    pairwise_epochs: usize,
    draws: usize,
    domain_frequency: Vec<f64>,
    expected_frequency: f64,
    pair_chi_square: Option<f64>,
}

fn schedule(a: ScheduleArgs) -> Result<()> {
    let counts = model_count(a.domains)?;
    let epochs = required_epochs(a.domains, a.k2)?;
    let (domain_frequency, chi) = if a.draws > 0 {
        let stats = simulate_pairs(a.domains, a.draws, a.seed)?;
        ((0..a.domains).map(|d| stats.domain_frequency(d)).collect(), Some(stats.pair_chi_square()))
    } else {
        (Vec::new(), None)
    };
    let report = ScheduleReport {
        domains: a.domains,
        generators: counts.composed,
        pairwise_generators: counts.pairwise_cyclegan,
        networks: 3 * a.domains,
        epochs,
        pairwise_epochs: a.k2 * a.domains * (a.domains - 1) / 2,
        draws: a.draws,
        domain_frequency,
        expected_frequency: 2.0 / a.domains as f64,
        pair_chi_square: chi,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?);
        return Ok(());
    }
    println!("domains               {}", report.domains);
    println!("generators            {} (pairwise models: {})", report.generators, report.pairwise_generators);
    println!("networks              {}", report.networks);
    println!("epochs                {} (pairwise models: {})", report.epochs, report.pairwise_epochs);
    if let Some(chi) = report.pair_chi_square {
        println!("draws                 {}", report.draws);
        let freqs: Vec<String> = report.domain_frequency.iter().map(|f| format!("{f:.4}")).collect();
        println!("domain frequency      {} (expected {:.4})", freqs.join(" "), report.expected_frequency);
        println!("pair chi-square       {chi:.2} on {} degrees of freedom", a.domains * (a.domains - 1) / 2 - 1);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub domains: usize,
    /// Images per domain.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec { n_domains: a.domains, per_domain_count: a.count, size: a.size, seed: a.seed };
    let h = make_synthetic_dataset(spec, &a.out)?;
    for d in &h.domains {
        println!("{}\t{}", d.name, d.files.len());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct InspectReport {
    domains: Vec<String>,
    width: String,
    parameters: usize,
    epoch: usize,
    total_epochs: usize,
    iteration: u64,
    iterations_per_epoch: usize,
    seed: u64,
    /// None once the plan is complete.
    lr_gen: Option<f64>,
    lr_disc: Option<f64>,
    pool_sizes: Vec<usize>,
    objective: ObjectiveConfig,
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let plan = &ckpt.state.plan;
    let epoch = ckpt.state.epoch;
    let report = InspectReport {
        domains: ckpt.registry.names().iter().map(|s| s.to_string()).collect(),
        width: ckpt.registry.arch().width.to_string(),
        parameters: ckpt.registry.parameter_count(),
        epoch,
        total_epochs: plan.total_epochs,
        iteration: ckpt.state.iteration,
        iterations_per_epoch: plan.iterations_per_epoch,
        seed: plan.rng_seed,
        lr_gen: learning_rate_at(epoch, plan, LrRole::Generator).ok(),
        lr_disc: learning_rate_at(epoch, plan, LrRole::Discriminator).ok(),
        pool_sizes: ckpt.state.pools.iter().map(|p| p.len()).collect(),
        objective: ckpt.state.objective,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?);
        return Ok(());
    }
    println!("domains      {}", report.domains.join(", "));
    println!("width        {}", report.width);
    println!("parameters   {}", report.parameters);
    println!("epoch        {}/{}", report.epoch, report.total_epochs);
    println!("iteration    {} ({} per epoch)", report.iteration, report.iterations_per_epoch);
    println!("seed         {}", report.seed);
    match (report.lr_gen, report.lr_disc) {
        (Some(g), Some(d)) => println!("lr           generator {g:e}, discriminator {d:e}"),
        _ => println!("lr           none (training complete)"),
    }
    println!("pool sizes   {:?}", report.pool_sizes);
    Ok(())
}
