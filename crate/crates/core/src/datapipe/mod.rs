//! From raw modality volumes to network inputs, and from tile predictions back
//! to full volumes.

mod preprocess;
mod sample;
mod stitch;

pub use preprocess::{
    clahe, gaussian_subtract, gaussian_taps, normalize_slices, ClaheParams, BACKGROUND_SIGMA, BACKGROUND_TAPS,
};
pub use sample::{sample_subvolume, Augmentation, SubVolumeSample, Transform};
pub use stitch::{predict_tiled, stitch, tile_origins, window, DEFAULT_OVERLAP, DEFAULT_SIGMA_FRAC};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq)]
pub struct Modality {
    pub name: String,
    pub use_original: bool,
    /// Background subtraction followed by CLAHE.
    pub use_preprocessed: bool,
}

impl Modality {
    pub fn new(name: &str, use_original: bool, use_preprocessed: bool) -> Self {
        Modality {
            name: name.to_string(),
            use_original,
            use_preprocessed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub modalities: Vec<Modality>,
    pub num_classes: usize,
    pub augmentation: Augmentation,
    pub overlap: f64,
    pub sigma_frac: f64,
    pub clahe: ClaheParams,
}

impl DatasetConfig {
    /// Brain MR: T1 and FLAIR originals plus preprocessed T1, IR and FLAIR;
    /// only x flips.
    pub fn mr() -> Self {
        DatasetConfig {
            modalities: vec![
                Modality::new("t1", true, true),
                Modality::new("ir", false, true),
                Modality::new("flair", true, true),
            ],
            num_classes: 4,
            augmentation: Augmentation {
                flip_x: true,
                ..Augmentation::NONE
            },
            overlap: DEFAULT_OVERLAP,
            sigma_frac: DEFAULT_SIGMA_FRAC,
            clahe: ClaheParams::default(),
        }
    }

    /// Electron microscopy: one raw channel, binary labels, full augmentation.
    pub fn em() -> Self {
        DatasetConfig {
            modalities: vec![Modality::new("em", true, false)],
            num_classes: 2,
            augmentation: Augmentation {
                rotate_z: true,
                flip_x: true,
                flip_y: true,
                flip_z: true,
            },
            overlap: DEFAULT_OVERLAP,
            sigma_frac: DEFAULT_SIGMA_FRAC,
            clahe: ClaheParams::default(),
        }
    }

    pub fn channel_count(&self) -> usize {
        self.modalities
            .iter()
            .map(|m| m.use_original as usize + m.use_preprocessed as usize)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_count() == 0 {
            return Err(Error::config("modalities", "no input channel enabled"));
        }
        if self.num_classes < 2 || self.num_classes > 256 {
            return Err(Error::config("num_classes", "must be between 2 and 256"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("overlap", "must be in [0, 1)"));
        }
        if !self.sigma_frac.is_finite() || self.sigma_frac <= 0.0 {
            return Err(Error::config("sigma_frac", "must be positive"));
        }
        if self.clahe.tile == 0 || self.clahe.bins == 0 || self.clahe.clip_limit.is_nan() || self.clahe.clip_limit <= 0.0 {
            return Err(Error::config("clahe", "tile, bins and clip limit must be positive"));
        }
        Ok(())
    }
}

/// Builds the network input: per modality the original and/or preprocessed
/// channel, each slice-normalized, concatenated in modality order.
pub fn assemble_channels(raw: &[Volume], cfg: &DatasetConfig) -> Result<Volume> {
    cfg.validate()?;
    if raw.len() != cfg.modalities.len() {
        return Err(Error::shape(format!(
            "{} modality volumes for {} configured modalities",
            raw.len(),
            cfg.modalities.len()
        )));
    }
    let mut parts = Vec::with_capacity(cfg.channel_count());
    for (v, m) in raw.iter().zip(&cfg.modalities) {
        if v.dims().channels != 1 {
            return Err(Error::shape(format!("modality {} must have one channel", m.name)));
        }
        if m.use_original {
            parts.push(normalize_slices(v));
        }
        if m.use_preprocessed {
            parts.push(normalize_slices(&clahe(&gaussian_subtract(v), cfg.clahe)));
        }
    }
    Volume::concat_channels(&parts)
}
