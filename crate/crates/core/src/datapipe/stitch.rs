//! Tiled prediction and Gaussian-weighted reassembly.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::volume::{Dims, Volume};

pub const DEFAULT_SIGMA_FRAC: f64 = 0.25;
pub const DEFAULT_OVERLAP: f64 = 0.5;

/// Gaussian window along one axis of extent `n`, centred on the middle.
pub fn window(n: usize, sigma_frac: f64) -> Vec<f64> {
    let sigma = sigma_frac * n as f64;
    let c = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Weighted average of overlapping sub-volume predictions over `full`.
pub fn stitch(parts: &[(Volume, [usize; 3])], full: [usize; 3], sigma_frac: f64) -> Result<Volume> {
    if !sigma_frac.is_finite() || sigma_frac <= 0.0 {
        return Err(Error::config("sigma_frac", "must be positive"));
    }
    let channels = parts
        .first()
        .map(|(v, _)| v.dims().channels)
        .ok_or_else(|| Error::shape("nothing to stitch"))?;
    let dims = Dims::new(full[0], full[1], full[2], channels);
    dims.validate()?;
    let mut acc = Volume::zeros(dims)?;
    let mut weight = vec![0.0f64; dims.voxels()];
    for (p, origin) in parts {
        let pd = p.dims();
        if pd.channels != channels {
            return Err(Error::shape("sub-volumes disagree on channel count"));
        }
        let size = pd.spatial();
        if (0..3).any(|a| origin[a] + size[a] > full[a]) {
            return Err(Error::shape(format!(
                "sub-volume at {origin:?} of size {size:?} exceeds {full:?}"
            )));
        }
        let [wx, wy, wz] = [0, 1, 2].map(|a| window(size[a], sigma_frac));
        for (z, &fz) in wz.iter().enumerate() {
            for (y, &fy) in wy.iter().enumerate() {
                for (x, &fx) in wx.iter().enumerate() {
                    let w = fz * fy * fx;
                    let (gx, gy, gz) = (origin[0] + x, origin[1] + y, origin[2] + z);
                    weight[dims.offset(gx, gy, gz, 0)] += w;
                    for c in 0..channels {
                        let i = dims.offset(gx, gy, gz, c);
                        acc.data_mut()[i] += w * p.get(x, y, z, c);
                    }
                }
            }
        }
    }
    for z in 0..full[2] {
        for y in 0..full[1] {
            for x in 0..full[0] {
                let w = weight[dims.offset(x, y, z, 0)];
                if w == 0.0 {
                    return Err(Error::Coverage(x, y, z));
                }
                for c in 0..channels {
                    let i = dims.offset(x, y, z, c);
                    acc.data_mut()[i] /= w;
                }
            }
        }
    }
    Ok(acc)
}

/// Tile origins along one axis: stride `tile·(1 − overlap)`, with the last
/// tile flush against the end.
pub fn tile_origins(n: usize, tile: usize, overlap: f64) -> Result<Vec<usize>> {
    if tile == 0 || tile > n {
        return Err(Error::config("tile", format!("tile {tile} does not fit extent {n}")));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("overlap", "must be in [0, 1)"));
    }
    let stride = ((tile as f64 * (1.0 - overlap)).round() as usize).max(1);
    let mut out: Vec<usize> = (0..=n - tile).step_by(stride).collect();
    if *out.last().unwrap() != n - tile {
        out.push(n - tile);
    }
    Ok(out)
}

/// Runs the network on overlapping tiles and stitches the outputs.
/// Tile extents are clamped to the volume.
pub fn predict_tiled(
    net: &Network,
    x: &Volume,
    tile: [usize; 3],
    overlap: f64,
    sigma_frac: f64,
) -> Result<Volume> {
    let full = x.dims().spatial();
    let size = [0, 1, 2].map(|a| tile[a].min(full[a]));
    let ox = tile_origins(full[0], size[0], overlap)?;
    let oy = tile_origins(full[1], size[1], overlap)?;
    let oz = tile_origins(full[2], size[2], overlap)?;
    let mut parts = Vec::with_capacity(ox.len() * oy.len() * oz.len());
    for &z in &oz {
        for &y in &oy {
            for &xo in &ox {
                let origin = [xo, y, z];
                let p = net.predict(&x.crop(origin, size)?)?;
                parts.push((p, origin));
            }
        }
    }
    stitch(&parts, full, sigma_frac)
}
