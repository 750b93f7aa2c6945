//! Run configuration: a TOML file of flat sections. Every key has a default,
//! and the resolved form is written next to each command's outputs.

use std::path::{Path, PathBuf};

use pyramid_core::datapipe::{Augmentation, ClaheParams, DatasetConfig, Modality};
use pyramid_core::network::{Activation, Architecture, LayerSpec};
use pyramid_core::train::{Schedule, Stage};
use pyramid_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub paths: PathsSection,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub predict: PredictSection,
    pub bench: BenchSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            threads: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Files are located by case name:
/// `raw_dir/<case>_<modality>.pvol`, `data_dir/<case>.pvol`,
/// `label_dir/<case>.pvol` and `prediction_dir/<case>.labels.pvol`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub raw_dir: PathBuf,
    pub data_dir: PathBuf,
    pub label_dir: PathBuf,
    pub prediction_dir: PathBuf,
    pub model: PathBuf,
    pub train_cases: Vec<String>,
    pub test_cases: Vec<String>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            raw_dir: PathBuf::from("raw"),
            data_dir: PathBuf::from("data"),
            label_dir: PathBuf::from("labels"),
            prediction_dir: PathBuf::from("predictions"),
            model: PathBuf::from("model.pnet"),
            train_cases: Vec::new(),
            test_cases: Vec::new(),
        }
    }
}

impl PathsSection {
    pub fn raw(&self, case: &str, modality: &str) -> PathBuf {
        self.raw_dir.join(format!("{case}_{modality}.pvol"))
    }

    pub fn data(&self, case: &str) -> PathBuf {
        self.data_dir.join(format!("{case}.pvol"))
    }

    pub fn labels(&self, case: &str) -> PathBuf {
        self.label_dir.join(format!("{case}.pvol"))
    }

    pub fn prediction(&self, case: &str) -> PathBuf {
        self.prediction_dir.join(format!("{case}.labels.pvol"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub modalities: Vec<String>,
    pub use_original: Vec<bool>,
    pub use_preprocessed: Vec<bool>,
    pub num_classes: usize,
    pub rotate_z: bool,
    pub flip_x: bool,
    pub flip_y: bool,
    pub flip_z: bool,
    pub overlap: f64,
    pub sigma_frac: f64,
    pub clahe_tile: usize,
    pub clahe_clip: f64,
    pub clahe_bins: usize,
    /// Voxel spacing in millimetres, used by the distance metrics.
    pub spacing: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let em = DatasetConfig::em();
        DatasetSection {
            modalities: vec!["em".into()],
            use_original: vec![true],
            use_preprocessed: vec![false],
            num_classes: em.num_classes,
            rotate_z: em.augmentation.rotate_z,
            flip_x: em.augmentation.flip_x,
            flip_y: em.augmentation.flip_y,
            flip_z: em.augmentation.flip_z,
            overlap: em.overlap,
            sigma_frac: em.sigma_frac,
            clahe_tile: em.clahe.tile,
            clahe_clip: em.clahe.clip_limit,
            clahe_bins: em.clahe.bins,
            spacing: [1.0, 1.0, 1.0],
        }
    }
}

impl DatasetSection {
    pub fn to_core(&self) -> Result<DatasetConfig> {
        let n = self.modalities.len();
        if self.use_original.len() != n || self.use_preprocessed.len() != n {
            return Err(Error::config(
                "dataset.use_original",
                "use_original and use_preprocessed need one entry per modality",
            ));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config("dataset.spacing", "must be positive"));
        }
        let cfg = DatasetConfig {
            modalities: (0..n)
                .map(|i| Modality::new(&self.modalities[i], self.use_original[i], self.use_preprocessed[i]))
                .collect(),
            num_classes: self.num_classes,
            augmentation: Augmentation {
                rotate_z: self.rotate_z,
                flip_x: self.flip_x,
                flip_y: self.flip_y,
                flip_z: self.flip_z,
            },
            overlap: self.overlap,
            sigma_frac: self.sigma_frac,
            clahe: ClaheParams {
                tile: self.clahe_tile,
                clip_limit: self.clahe_clip,
                bins: self.clahe_bins,
            },
        };
        cfg.validate().map_err(|e| prefix(e, "dataset."))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// 0 derives the count from the enabled dataset channels.
    pub input_channels: usize,
    pub filter: usize,
    /// `"pyramid <hidden>"` or `"fc <units> <tanh|softmax>"`; empty selects
    /// the reference stack ending in one softmax unit per class.
    pub layers: Vec<String>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            input_channels: 0,
            filter: 7,
            layers: Vec::new(),
        }
    }
}

fn parse_layer(s: &str) -> Option<LayerSpec> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        ["pyramid", h] => Some(LayerSpec::Pyramid { hidden: h.parse().ok()? }),
        ["fc", u, act] => Some(LayerSpec::Fc {
            units: u.parse().ok()?,
            activation: match *act {
                "tanh" => Activation::Tanh,
                "softmax" => Activation::Softmax,
                _ => return None,
            },
        }),
        _ => None,
    }
}

pub fn format_layer(l: &LayerSpec) -> String {
    match l {
        LayerSpec::Pyramid { hidden } => format!("pyramid {hidden}"),
        LayerSpec::Fc { units, activation } => format!(
            "fc {units} {}",
            match activation {
                Activation::Tanh => "tanh",
                Activation::Softmax => "softmax",
            }
        ),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// `"<epochs> <W>x<H>x<D>"` per bootstrapping stage.
    pub stages: Vec<String>,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            stages: Schedule::desk().stages.iter().map(format_stage).collect(),
            checkpoint_every: 50,
        }
    }
}

pub fn parse_size(s: &str) -> Option<[usize; 3]> {
    let v: Vec<usize> = s.split('x').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    <[usize; 3]>::try_from(v).ok()
}

fn format_stage(s: &Stage) -> String {
    format!("{} {}x{}x{}", s.epochs, s.size[0], s.size[1], s.size[2])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub tile: String,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            tile: "48x48x16".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub size: String,
    pub channels: usize,
    pub threads: Vec<usize>,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            size: "128x128x16".into(),
            channels: 1,
            threads: vec![1, 2, 4, 8],
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub size: String,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            size: "32x32x16".into(),
            train_count: 8,
            test_count: 2,
        }
    }
}

fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { field, message } => Error::config(format!("{section}{field}"), message),
        other => other,
    }
}

fn network_field(e: Error) -> Error {
    match e {
        Error::Config { field, message } => {
            let rest = field.strip_prefix("arch.").unwrap_or(&field);
            Error::config(format!("network.{rest}"), message)
        }
        other => Error::config("network", other.to_string()),
    }
}

fn size_field(field: &str, s: &str) -> Result<[usize; 3]> {
    parse_size(s)
        .filter(|d| !d.contains(&0))
        .ok_or_else(|| Error::config(field, format!("expected WxHxD with positive extents, found {s:?}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().replace('\n', " ");
            Error::config("config", msg.trim().to_string())
        })
    }

    /// Materializes defaults that depend on other keys.
    pub fn resolve(&mut self) {
        if self.network.input_channels == 0 {
            self.network.input_channels = self.dataset_channels();
        }
        if self.network.layers.is_empty() {
            let arch = Architecture::reference(
                self.network.input_channels,
                self.dataset.num_classes,
                self.network.filter,
            );
            self.network.layers = arch.layers.iter().map(format_layer).collect();
        }
    }

    fn dataset_channels(&self) -> usize {
        let orig = self.dataset.use_original.iter().filter(|&&b| b).count();
        let pre = self.dataset.use_preprocessed.iter().filter(|&&b| b).count();
        orig + pre
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        self.dataset.to_core()
    }

    /// The layer stack, which need not end in a softmax.
    pub fn layer_stack(&self) -> Result<Architecture> {
        let layers = self
            .network
            .layers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse_layer(s).ok_or_else(|| {
                    Error::config(format!("network.layers[{i}]"), format!("cannot parse {s:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let arch = Architecture {
            input_channels: self.network.input_channels,
            filter: self.network.filter,
            layers,
        };
        arch.validate_layers().map_err(network_field)?;
        Ok(arch)
    }

    /// A trainable architecture matching the dataset's channels and classes.
    pub fn architecture(&self) -> Result<Architecture> {
        let arch = self.layer_stack()?;
        arch.validate().map_err(network_field)?;
        if arch.input_channels != self.dataset_channels() {
            return Err(Error::config(
                "network.input_channels",
                format!(
                    "{} does not match the {} enabled dataset channels",
                    arch.input_channels,
                    self.dataset_channels()
                ),
            ));
        }
        if arch.output_channels() != self.dataset.num_classes {
            return Err(Error::config(
                "network.layers",
                format!(
                    "last layer has {} units but dataset.num_classes is {}",
                    arch.output_channels(),
                    self.dataset.num_classes
                ),
            ));
        }
        Ok(arch)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let stages = self
            .train
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let field = format!("train.stages[{i}]");
                let (e, size) = s
                    .trim()
                    .split_once(' ')
                    .ok_or_else(|| Error::config(&field, format!("expected \"<epochs> WxHxD\", found {s:?}")))?;
                let epochs = e
                    .parse()
                    .map_err(|_| Error::config(&field, format!("bad epoch count {e:?}")))?;
                Ok(Stage {
                    epochs,
                    size: size_field(&field, size.trim())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if stages.is_empty() {
            return Err(Error::config("train.stages", "no stages"));
        }
        if self.train.checkpoint_every == 0 {
            return Err(Error::config("train.checkpoint_every", "must be positive"));
        }
        Ok(Schedule { stages })
    }

    pub fn predict_tile(&self) -> Result<[usize; 3]> {
        size_field("predict.tile", &self.predict.tile)
    }

    pub fn bench_size(&self) -> Result<[usize; 3]> {
        if self.bench.channels == 0 {
            return Err(Error::config("bench.channels", "must be positive"));
        }
        if self.bench.threads.is_empty() || self.bench.threads.contains(&0) {
            return Err(Error::config("bench.threads", "need positive thread counts"));
        }
        if self.bench.repeats == 0 {
            return Err(Error::config("bench.repeats", "must be positive"));
        }
        size_field("bench.size", &self.bench.size)
    }

    pub fn synth_size(&self) -> Result<[usize; 3]> {
        size_field("synth.size", &self.synth.size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let mut c = RunConfig::default();
        c.resolve();
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(back.architecture().unwrap().param_count(), c.architecture().unwrap().param_count());
        assert_eq!(back.schedule().unwrap(), Schedule::desk());
    }

    #[test]
    fn field_level_errors() {
        let field = |text: &str| {
            let mut c = RunConfig::parse(text).unwrap();
            c.resolve();
            let e = c.architecture().and(c.schedule()).and(c.dataset().map(|_| ())).unwrap_err();
            match e {
                Error::Config { field, .. } => field,
                e => panic!("{e}"),
            }
        };
        assert_eq!(field("[train]\nstages = [\"10 4x4\"]"), "train.stages[0]");
        assert_eq!(field("[network]\nlayers = [\"conv 3\"]"), "network.layers[0]");
        assert_eq!(field("[network]\nfilter = 4"), "network.filter");
        assert!(RunConfig::parse("[run]\nbogus = 1").is_err());
    }
}
