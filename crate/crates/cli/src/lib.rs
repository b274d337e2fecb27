//! Argument parsing and subcommands of the `featmix` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use featmix::data::{gen_synthetic, write_cifar10_bin, Dataset, TEST_FILE, TRAIN_FILES};
use featmix::harness::{
    evaluate, export_feature_maps, load_test_set, ConfigOverrides, DataSource, RunConfig, RunManifest, Trainer,
    Variant, CHECKPOINT_FILE, MANIFEST_FILE, SYNTH_CLASSES, SYNTH_TEST_PER_CLASS,
};
use featmix::net::load_checkpoint;
use featmix::Rng;

#[derive(Parser, Debug)]
#[command(name = "featmix", version, about = "Train and inspect feature-map mixup CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one variant, writing metrics.csv, run.json and checkpoint.bin
    Train(RunFlags),
    /// Test accuracy of a finished run
    Eval(EvalArgs),
    /// Dump first-layer feature maps of test images as PGM and raw f64
    ExportMaps(ExportArgs),
    /// Write a synthetic dataset in the CIFAR-10 binary layout
    GenSynth(GenSynthArgs),
}

#[derive(Args, Debug, Default)]
pub struct RunFlags {
    /// original, mixup, mixup3, conv1-mixup, conv2-mixup, conv1-mixup3 or conv2-mixup3
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Beta/Dirichlet concentration
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight decay (default depends on the variant)
    #[arg(long = "wd")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// cifar-10-batches-bin directory, or `synthetic`
    #[arg(long)]
    pub data: Option<DataSource>,
    /// Training samples kept per class
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of the above; flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write 0 in the secs column so metrics.csv is reproducible byte for byte
    #[arg(long)]
    pub no_timing: bool,
}

impl RunFlags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            variant: self.variant,
            alpha: self.alpha,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            data: self.data.clone(),
            per_class: self.per_class,
            out: self.out.clone(),
            timing: self.no_timing.then_some(false),
        }
    }
}

/// Resolves flags over the optional `--config` file and the defaults.
pub fn parse_config(flags: &RunFlags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ConfigOverrides::from_json(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ConfigOverrides::default(),
    };
    Ok(flags.overrides().over(file).resolve()?)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Output directory of a `train` run
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint to evaluate instead of the run's own
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Output directory of a `train` run
    #[arg(long)]
    pub run: PathBuf,
    /// Convolution layer (only 1)
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Number of test images to export
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Defaults to `<run>/maps`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SYNTH_CLASSES)]
    pub classes: usize,
    /// Training images per class, spread over the five batch files
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = SYNTH_TEST_PER_CLASS)]
    pub test_per_class: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(flags) => train(&parse_config(&flags)?),
        Command::Eval(args) => {
            let acc = eval(&args)?;
            println!("test accuracy {acc:.4}");
            Ok(())
        }
        Command::ExportMaps(args) => {
            let files = export_maps(&args)?;
            println!("wrote {} files", files.len());
            Ok(())
        }
        Command::GenSynth(args) => gen_synth(&args),
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut trainer = Trainer::new(cfg.clone())?;
    eprintln!(
        "{}: {} train / {} test samples, alpha {}, wd {}, writing to {}",
        cfg.variant,
        trainer.train_set().len(),
        trainer.test_set().len(),
        cfg.alpha,
        cfg.weight_decay,
        cfg.out.display()
    );
    for _ in 0..cfg.epochs {
        let row = trainer.run_epoch()?;
        eprintln!(
            "epoch {:>3}/{}  loss {:.4}  test_acc {:.4}  lr {}",
            row.epoch, cfg.epochs, row.loss, row.test_acc, row.lr
        );
    }
    let outcome = trainer.finish()?;
    if let Some(last) = outcome.metrics.last() {
        println!("final test accuracy {:.4}", last.test_acc);
    }
    Ok(())
}

fn load_run(run: &Path, checkpoint: Option<&Path>) -> Result<(RunManifest, featmix::ModelParams, Dataset)> {
    let manifest = RunManifest::load(&run.join(MANIFEST_FILE))?;
    let checkpoint = checkpoint.map_or_else(|| run.join(CHECKPOINT_FILE), Path::to_path_buf);
    let model = load_checkpoint(&checkpoint)?;
    let test = load_test_set(&manifest)?;
    Ok((manifest, model, test))
}

pub fn eval(args: &EvalArgs) -> Result<f64> {
    let (_, model, test) = load_run(&args.run, args.checkpoint.as_deref())?;
    Ok(evaluate(&model, &test)?)
}

pub fn export_maps(args: &ExportArgs) -> Result<Vec<PathBuf>> {
    let (_, model, test) = load_run(&args.run, None)?;
    if args.count == 0 || args.count > test.len() {
        bail!("--count must be in 1..={}", test.len());
    }
    let indices: Vec<usize> = (0..args.count).collect();
    let out = args.out.clone().unwrap_or_else(|| args.run.join("maps"));
    Ok(export_feature_maps(&model, &test.images.gather(&indices), args.layer, &out)?)
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let mut rng = Rng::new(args.seed);
    let train = gen_synthetic(&mut rng, args.classes, args.per_class)?;
    let test = gen_synthetic(&mut rng, args.classes, args.test_per_class)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    // Interleave classes so every batch file holds a share of each.
    let order: Vec<usize> = (0..args.per_class)
        .flat_map(|k| (0..args.classes).map(move |c| c * args.per_class + k))
        .collect();
    let per_file = order.len().div_ceil(TRAIN_FILES.len());
    for (i, file) in TRAIN_FILES.iter().enumerate() {
        let chunk = &order[(i * per_file).min(order.len())..((i + 1) * per_file).min(order.len())];
        write_cifar10_bin(&train.subset(chunk), &args.out.join(file))?;
    }
    write_cifar10_bin(&test, &args.out.join(TEST_FILE))?;
    println!(
        "wrote {} training and {} test images to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}
