use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use crate::data::{
    compute_norm_stats, gen_synthetic, load_cifar10_bin, load_cifar10_dir, normalize, one_hot_batch,
    subsample_per_class, Dataset, NormStats, TEST_FILE,
};
use crate::error::{Error, Result};
use crate::mix::MixSpec;
use crate::net::{init_model, predict, save_checkpoint, train_step_mixed, train_step_plain, ModelParams};
use crate::ops::lr_at_epoch;
use crate::sampler::Rng;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_HEADER: &str = "epoch,loss,test_acc,lr,secs";

/// Classes in the synthetic stand-in dataset.
pub const SYNTH_CLASSES: usize = 3;
/// Synthetic test images per class.
pub const SYNTH_TEST_PER_CLASS: usize = 100;

/// Images evaluated per forward pass.
const EVAL_CHUNK: usize = 100;

/// One line of metrics.csv.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MetricsRow {
    pub epoch: usize,
    pub loss: f64,
    pub test_acc: f64,
    pub lr: f64,
    pub secs: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.loss, self.test_acc, self.lr, self.secs
        )
    }
}

/// Everything written to run.json.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub mix: Option<MixSpec>,
    /// Per-channel standardization computed on the training subset.
    pub normalization: NormStats,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate(m: &ModelParams, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..test.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = test.images.gather(chunk);
        let pred = predict(m, &x)?;
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|(&p, &i)| p == test.labels[i])
            .count();
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Training and test sets for `cfg`, both standardized with training statistics.
pub fn prepare_data(cfg: &RunConfig, rng: &mut Rng) -> Result<(Dataset, Dataset, NormStats)> {
    let (train, test) = match &cfg.data {
        DataSource::Synthetic => {
            let train = gen_synthetic(rng, SYNTH_CLASSES, cfg.per_class)?;
            let test = gen_synthetic(rng, SYNTH_CLASSES, SYNTH_TEST_PER_CLASS)?;
            (train, test)
        }
        DataSource::Cifar10(dir) => {
            let (full, test) = load_cifar10_dir(dir)?;
            (subsample_per_class(&full, cfg.per_class, rng)?, test)
        }
    };
    let stats = compute_norm_stats(&train)?;
    Ok((normalize(&train, &stats)?, normalize(&test, &stats)?, stats))
}

/// Independent streams derived from the run seed: data, init, shuffle, mix.
fn run_streams(seed: u64) -> [Rng; 4] {
    let mut root = Rng::new(seed);
    [root.fork(), root.fork(), root.fork(), root.fork()]
}

/// The standardized test set of a finished run, rebuilt from its manifest.
pub fn load_test_set(manifest: &RunManifest) -> Result<Dataset> {
    let test = match &manifest.config.data {
        DataSource::Synthetic => {
            let [mut data_rng, ..] = run_streams(manifest.config.seed);
            let _train = gen_synthetic(&mut data_rng, SYNTH_CLASSES, manifest.config.per_class)?;
            gen_synthetic(&mut data_rng, SYNTH_CLASSES, SYNTH_TEST_PER_CLASS)?
        }
        DataSource::Cifar10(dir) => {
            let mut test = load_cifar10_bin(&[dir.join(TEST_FILE)])?;
            test.name = "cifar10-test".into();
            test
        }
    };
    normalize(&test, &manifest.normalization)
}

/// A training run in progress; one call to [`Trainer::run_epoch`] per epoch.
pub struct Trainer {
    cfg: RunConfig,
    mix: Option<MixSpec>,
    model: ModelParams,
    train: Dataset,
    test: Dataset,
    train_targets: crate::tensor::Tensor,
    shuffle_rng: Rng,
    mix_rng: Rng,
    epoch: usize,
    started: Instant,
    metrics: BufWriter<File>,
    metrics_path: PathBuf,
    history: Vec<MetricsRow>,
}

impl Trainer {
    /// Loads data, initializes the model and writes run.json plus the
    /// metrics.csv header into `cfg.out`.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mix = cfg.mix_spec()?;
        let [mut data_rng, mut init_rng, shuffle_rng, mix_rng] = run_streams(cfg.seed);

        let (train, test, stats) = prepare_data(&cfg, &mut data_rng)?;
        let model = init_model(&mut init_rng);
        let train_targets = one_hot_batch(&train.labels)?;

        fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        let manifest = RunManifest {
            config: cfg.clone(),
            mix,
            normalization: stats,
            train_samples: train.len(),
            test_samples: test.len(),
        };
        let manifest_path = cfg.out.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

        let metrics_path = cfg.out.join(METRICS_FILE);
        let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        let mut metrics = BufWriter::new(file);
        writeln!(metrics, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;

        Ok(Trainer {
            cfg,
            mix,
            model,
            train,
            test,
            train_targets,
            shuffle_rng,
            mix_rng,
            epoch: 0,
            started: Instant::now(),
            metrics,
            metrics_path,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[MetricsRow] {
        &self.history
    }

    /// Trains one epoch, evaluates on the test set and appends a metrics row.
    ///
    /// Each of the `k` branches walks its own shuffle of the training set, so
    /// every sample appears once per branch per epoch.
    pub fn run_epoch(&mut self) -> Result<MetricsRow> {
        self.epoch += 1;
        let lr = lr_at_epoch(self.epoch);
        let n = self.train.len();
        let arity = self.cfg.variant.arity();
        let orders: Vec<Vec<usize>> = (0..arity)
            .map(|_| {
                let mut order: Vec<usize> = (0..n).collect();
                self.shuffle_rng.shuffle(&mut order);
                order
            })
            .collect();

        let mut loss_sum = 0.0;
        for start in (0..n).step_by(self.cfg.batch) {
            let end = (start + self.cfg.batch).min(n);
            let xs: Vec<_> = orders.iter().map(|o| self.train.images.gather(&o[start..end])).collect();
            let ts: Vec<_> = orders.iter().map(|o| self.train_targets.gather(&o[start..end])).collect();
            let step = match &self.mix {
                None => train_step_plain(&mut self.model, &xs[0], &ts[0], lr, self.cfg.weight_decay),
                Some(spec) => {
                    let x_refs: Vec<_> = xs.iter().collect();
                    let t_refs: Vec<_> = ts.iter().collect();
                    train_step_mixed(
                        &mut self.model,
                        &x_refs,
                        &t_refs,
                        spec,
                        &mut self.mix_rng,
                        lr,
                        self.cfg.weight_decay,
                    )
                }
            };
            let loss = step.map_err(|e| match e {
                Error::Diverged(msg) => {
                    Error::Diverged(format!("epoch {}, samples {start}..{end}: {msg}", self.epoch))
                }
                other => other,
            })?;
            loss_sum += loss * (end - start) as f64;
        }

        let row = MetricsRow {
            epoch: self.epoch,
            loss: loss_sum / n as f64,
            test_acc: evaluate(&self.model, &self.test)?,
            lr,
            secs: if self.cfg.timing {
                self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        writeln!(self.metrics, "{}", row.to_csv())
            .and_then(|_| self.metrics.flush())
            .map_err(|e| Error::io(&self.metrics_path, e))?;
        self.history.push(row);
        Ok(row)
    }

    /// Writes the final checkpoint and returns the trained model and metrics.
    pub fn finish(mut self) -> Result<RunOutcome> {
        self.metrics
            .flush()
            .map_err(|e| Error::io(&self.metrics_path, e))?;
        let checkpoint = self.cfg.out.join(CHECKPOINT_FILE);
        save_checkpoint(&self.model, &checkpoint)?;
        Ok(RunOutcome {
            model: self.model,
            metrics: self.history,
            train: self.train,
            test: self.test,
            out: self.cfg.out,
        })
    }
}

/// Result of a completed run.
pub struct RunOutcome {
    pub model: ModelParams,
    pub metrics: Vec<MetricsRow>,
    /// Standardized training subset.
    pub train: Dataset,
    /// Standardized test set.
    pub test: Dataset,
    pub out: PathBuf,
}

/// Runs all configured epochs, writing metrics.csv, run.json and the checkpoint.
pub fn train_run(cfg: RunConfig) -> Result<RunOutcome> {
    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(cfg)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
    }
    trainer.finish()
}
