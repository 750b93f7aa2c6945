//! Synthetic volumes whose labels need non-local context.

use rand::Rng;

use crate::error::Result;
use crate::rng::{stream, Stream};
use crate::volume::{Dims, LabelVolume, Volume};

/// Wall thickness of the shell, in voxels.
const WALL: f64 = 1.5;
const NOISE: f64 = 0.1;

/// A randomly placed hollow ellipsoid. The input shows only the wall (plus
/// noise); the label marks everything enclosed by it, wall included, as
/// class 1. Inside and outside look identical locally.
pub fn hollow_ellipsoid(spatial: [usize; 3], seed: u64, index: u64) -> Result<(Volume, LabelVolume)> {
    let dims = Dims::new(spatial[0], spatial[1], spatial[2], 1);
    dims.validate()?;
    let mut rng = stream(seed, Stream::Synthetic, index);
    let mut centre = [0.0; 3];
    let mut radius = [0.0; 3];
    for a in 0..3 {
        let n = spatial[a] as f64;
        radius[a] = rng.random_range(0.25..0.4) * n;
        let slack = (n - 1.0 - 2.0 * radius[a]).max(0.0) / 2.0;
        centre[a] = (n - 1.0) / 2.0 + rng.random_range(-slack..=slack);
    }
    let rmin = radius.iter().copied().fold(f64::INFINITY, f64::min);
    let inner = (1.0 - WALL / rmin).max(0.0);
    let r = |x: usize, y: usize, z: usize| {
        let p = [x, y, z];
        (0..3)
            .map(|a| ((p[a] as f64 - centre[a]) / radius[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let labels = LabelVolume::from_fn(spatial, 2, |x, y, z| u8::from(r(x, y, z) <= 1.0))?;
    let input = Volume::from_fn(dims, |x, y, z, _| {
        let d = r(x, y, z);
        let wall = if d <= 1.0 && d >= inner { 1.0 } else { 0.0 };
        wall + rng.random_range(-NOISE..NOISE)
    })?;
    Ok((input, labels))
}
