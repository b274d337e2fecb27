use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mix::{MixSpec, SplitLayer};

/// The seven compared training variants.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Original,
    Mixup,
    Mixup3,
    #[serde(rename = "conv1-mixup")]
    Conv1Mixup,
    #[serde(rename = "conv2-mixup")]
    Conv2Mixup,
    #[serde(rename = "conv1-mixup3")]
    Conv1Mixup3,
    #[serde(rename = "conv2-mixup3")]
    Conv2Mixup3,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Original,
        Variant::Mixup,
        Variant::Mixup3,
        Variant::Conv1Mixup,
        Variant::Conv2Mixup,
        Variant::Conv1Mixup3,
        Variant::Conv2Mixup3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Mixup => "mixup",
            Variant::Mixup3 => "mixup3",
            Variant::Conv1Mixup => "conv1-mixup",
            Variant::Conv2Mixup => "conv2-mixup",
            Variant::Conv1Mixup3 => "conv1-mixup3",
            Variant::Conv2Mixup3 => "conv2-mixup3",
        }
    }

    /// Split layer and arity, or `None` for unmixed training.
    pub fn mix_layout(self) -> Option<(SplitLayer, usize)> {
        match self {
            Variant::Original => None,
            Variant::Mixup => Some((SplitLayer::Input, 2)),
            Variant::Mixup3 => Some((SplitLayer::Input, 3)),
            Variant::Conv1Mixup => Some((SplitLayer::Conv1, 2)),
            Variant::Conv2Mixup => Some((SplitLayer::Conv2, 2)),
            Variant::Conv1Mixup3 => Some((SplitLayer::Conv1, 3)),
            Variant::Conv2Mixup3 => Some((SplitLayer::Conv2, 3)),
        }
    }

    pub fn mix_spec(self, alpha: f64) -> Result<Option<MixSpec>> {
        self.mix_layout()
            .map(|(split, k)| MixSpec::new(split, k, alpha))
            .transpose()
    }

    /// Number of samples combined per training example (1 when unmixed).
    pub fn arity(self) -> usize {
        self.mix_layout().map_or(1, |(_, k)| k)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::invalid("variant", format!("{s:?} (expected one of {})", names.join(", ")))
            })
    }
}

/// Weight decay used for each variant unless overridden: 0.04 unmixed,
/// 0.02 for two-way mixes and the three-way conv2 mix, 0.01 for three-way
/// input and conv1 mixes.
pub fn default_weight_decay(variant: Variant) -> f64 {
    match variant {
        Variant::Original => 0.04,
        Variant::Mixup | Variant::Conv1Mixup | Variant::Conv2Mixup => 0.02,
        Variant::Conv2Mixup3 => 0.02,
        Variant::Mixup3 | Variant::Conv1Mixup3 => 0.01,
    }
}

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_SEED: u64 = 0;
/// Training samples kept per CIFAR-10 class.
pub const DEFAULT_CIFAR_PER_CLASS: usize = 500;
/// Synthetic training samples generated per class.
pub const DEFAULT_SYNTH_PER_CLASS: usize = 200;
pub const DEFAULT_OUT: &str = "run";

/// Where training and test images come from.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DataSource {
    Synthetic,
    /// A `cifar-10-batches-bin` directory.
    Cifar10(PathBuf),
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::invalid("data", "empty data path")),
            "synthetic" => Ok(DataSource::Synthetic),
            path => Ok(DataSource::Cifar10(PathBuf::from(path))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic => f.write_str("synthetic"),
            DataSource::Cifar10(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for DataSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DataSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fully resolved settings of one training run.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub data: DataSource,
    pub per_class: usize,
    pub out: PathBuf,
    /// Record wall-clock seconds in metrics.csv; when false the column is 0
    /// and the file is a pure function of the configuration.
    pub timing: bool,
}

/// Partially specified settings, from a JSON file or command-line flags.
#[derive(Clone, Default, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub data: Option<DataSource>,
    pub per_class: Option<usize>,
    pub out: Option<PathBuf>,
    pub timing: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("config file", e.to_string()))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            variant: self.variant.or(base.variant),
            alpha: self.alpha.or(base.alpha),
            weight_decay: self.weight_decay.or(base.weight_decay),
            epochs: self.epochs.or(base.epochs),
            batch: self.batch.or(base.batch),
            seed: self.seed.or(base.seed),
            data: self.data.or(base.data),
            per_class: self.per_class.or(base.per_class),
            out: self.out.or(base.out),
            timing: self.timing.or(base.timing),
        }
    }

    /// Fills defaults and validates.
    pub fn resolve(self) -> Result<RunConfig> {
        let variant = self.variant.unwrap_or(Variant::Original);
        let data = self
            .data
            .ok_or_else(|| Error::invalid("data", "no data source given (a CIFAR-10 directory or `synthetic`)"))?;
        let per_class = self.per_class.unwrap_or(match data {
            DataSource::Synthetic => DEFAULT_SYNTH_PER_CLASS,
            DataSource::Cifar10(_) => DEFAULT_CIFAR_PER_CLASS,
        });
        let cfg = RunConfig {
            variant,
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            weight_decay: self.weight_decay.unwrap_or_else(|| default_weight_decay(variant)),
            epochs: self.epochs.unwrap_or(DEFAULT_EPOCHS),
            batch: self.batch.unwrap_or(DEFAULT_BATCH),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            data,
            per_class,
            out: self.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            timing: self.timing.unwrap_or(true),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("{} (must be > 0)", self.alpha)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay", format!("{} (must be >= 0)", self.weight_decay)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch", "must be >= 1"));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per-class sample count", "must be >= 1"));
        }
        Ok(())
    }

    pub fn mix_spec(&self) -> Result<Option<MixSpec>> {
        self.variant.mix_spec(self.alpha)
    }
}
