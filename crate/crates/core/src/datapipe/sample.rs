use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::{Axis, Interp, LabelVolume, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub rotate_z: bool,
    pub flip_x: bool,
    pub flip_y: bool,
    pub flip_z: bool,
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation {
        rotate_z: false,
        flip_x: false,
        flip_y: false,
        flip_z: false,
    };

    fn flips(&self) -> [(Axis, bool); 3] {
        [(Axis::X, self.flip_x), (Axis::Y, self.flip_y), (Axis::Z, self.flip_z)]
    }
}

/// Geometry applied to one sample: crop at `origin`, rotate about z, then flip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub origin: [usize; 3],
    pub size: [usize; 3],
    pub angle: Option<f64>,
    /// Flips along x, y, z.
    pub flips: [bool; 3],
}

impl Transform {
    pub fn apply(&self, source: &Volume) -> Result<Volume> {
        let mut v = source.crop(self.origin, self.size)?;
        if let Some(a) = self.angle {
            v = v.rotate_z(a, Interp::Bilinear);
        }
        for (axis, on) in Axis::ALL.into_iter().zip(self.flips) {
            if on {
                v = v.flip(axis);
            }
        }
        Ok(v)
    }

    pub fn apply_labels(&self, target: &LabelVolume) -> Result<LabelVolume> {
        let mut l = target.crop(self.origin, self.size)?;
        if let Some(a) = self.angle {
            l = l.rotate_z(a);
        }
        for (axis, on) in Axis::ALL.into_iter().zip(self.flips) {
            if on {
                l = l.flip(axis);
            }
        }
        Ok(l)
    }
}

#[derive(Debug, Clone)]
pub struct SubVolumeSample {
    pub input: Volume,
    pub target: LabelVolume,
    pub transform: Transform,
}

/// Draws a random crop position from `sampling` and the augmentation from
/// `augment`, then applies the same geometry to input and labels.
pub fn sample_subvolume(
    source: &Volume,
    target: &LabelVolume,
    size: [usize; 3],
    aug: Augmentation,
    sampling: &mut impl Rng,
    augment: &mut impl Rng,
) -> Result<SubVolumeSample> {
    let spatial = source.dims().spatial();
    if target.spatial() != spatial {
        return Err(Error::shape(format!(
            "labels {:?} do not match volume {:?}",
            target.spatial(),
            spatial
        )));
    }
    if size.iter().zip(spatial).any(|(&s, n)| s == 0 || s > n) {
        return Err(Error::config(
            "schedule",
            format!("sub-volume {size:?} does not fit in volume {spatial:?}"),
        ));
    }
    let mut origin = [0; 3];
    for a in 0..3 {
        origin[a] = sampling.random_range(0..=spatial[a] - size[a]);
    }
    let mut flips = [false; 3];
    for (f, (_, enabled)) in flips.iter_mut().zip(aug.flips()) {
        *f = enabled && augment.random_bool(0.5);
    }
    let angle = aug
        .rotate_z
        .then(|| augment.random_range(0.0..std::f64::consts::TAU));
    let transform = Transform {
        origin,
        size,
        angle,
        flips,
    };
    Ok(SubVolumeSample {
        input: transform.apply(source)?,
        target: transform.apply_labels(target)?,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data() -> (Volume, LabelVolume) {
        let v = Volume::from_fn(Dims::new(9, 8, 6, 2), |x, y, z, c| (x + 10 * y + 100 * z) as f64 + 0.5 * c as f64).unwrap();
        let l = LabelVolume::from_fn([9, 8, 6], 4, |x, y, z| ((x + y + z) % 3 + 1) as u8).unwrap();
        (v, l)
    }

    fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
        (ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed + 1000))
    }

    #[test]
    fn plain_crop_when_size_fills_volume() {
        let (v, l) = data();
        let (mut a, mut b) = rngs(1);
        let s = sample_subvolume(&v, &l, [9, 8, 6], Augmentation::NONE, &mut a, &mut b).unwrap();
        assert_eq!(s.transform.origin, [0, 0, 0]);
        assert_eq!(s.input, v);
        assert_eq!(s.target, l);
    }

    #[test]
    fn reproducible_and_consistent() {
        let (v, l) = data();
        let aug = Augmentation {
            rotate_z: true,
            flip_x: true,
            flip_y: true,
            flip_z: true,
        };
        for seed in 0..20 {
            let (mut a, mut b) = rngs(seed);
            let s = sample_subvolume(&v, &l, [5, 4, 3], aug, &mut a, &mut b).unwrap();
            let (mut a, mut b) = rngs(seed);
            let t = sample_subvolume(&v, &l, [5, 4, 3], aug, &mut a, &mut b).unwrap();
            assert_eq!(s.input.data(), t.input.data());
            assert_eq!(s.target, t.target);
            assert!(s.transform.apply(&v).unwrap().max_abs_diff(&s.input).unwrap() <= 1e-12);
            assert_eq!(s.transform.apply_labels(&l).unwrap(), s.target);
        }
    }

    #[test]
    fn labels_stay_in_source_set_without_rotation() {
        let (v, l) = data();
        let aug = Augmentation {
            rotate_z: false,
            flip_x: true,
            flip_y: true,
            flip_z: true,
        };
        for seed in 0..20 {
            let (mut a, mut b) = rngs(seed);
            let s = sample_subvolume(&v, &l, [4, 4, 4], aug, &mut a, &mut b).unwrap();
            assert!(s.target.labels().iter().all(|x| (1..=3).contains(x)));
        }
    }

    #[test]
    fn rotated_labels_come_from_source_or_background() {
        let (v, l) = data();
        let aug = Augmentation {
            rotate_z: true,
            ..Augmentation::NONE
        };
        for seed in 0..20 {
            let (mut a, mut b) = rngs(seed);
            let s = sample_subvolume(&v, &l, [6, 6, 2], aug, &mut a, &mut b).unwrap();
            assert!(s.target.labels().iter().all(|&x| x <= 3));
        }
    }

    #[test]
    fn oversized_request_is_config_error() {
        let (v, l) = data();
        let (mut a, mut b) = rngs(0);
        let err = sample_subvolume(&v, &l, [10, 4, 4], Augmentation::NONE, &mut a, &mut b).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
