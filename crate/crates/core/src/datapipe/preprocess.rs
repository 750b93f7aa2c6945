//! Per-slice intensity preprocessing.

use rayon::prelude::*;

use crate::volume::Volume;

/// Gaussian background filter used by [`gaussian_subtract`].
pub const BACKGROUND_TAPS: usize = 31;
pub const BACKGROUND_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tile: usize,
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tile: 16,
            clip_limit: 2.0,
            bins: 256,
        }
    }
}

/// Applies `f` to every (z, channel) slice in parallel.
fn map_slices(v: &Volume, f: impl Fn(&[f64], usize, usize) -> Vec<f64> + Sync) -> Volume {
    let d = v.dims();
    let area = d.width * d.height;
    let mut out = v.clone();
    if area == 0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(area)
        .zip(v.data().par_chunks(area))
        .for_each(|(dst, src)| dst.copy_from_slice(&f(src, d.width, d.height)));
    out
}

/// Zero-mean, unit (population) variance per z-slice and channel.
/// Constant slices become zero.
pub fn normalize_slices(v: &Volume) -> Volume {
    map_slices(v, |s, _, _| normalize(s))
}

fn normalize(s: &[f64]) -> Vec<f64> {
    if s.iter().all(|&x| x == s[0]) {
        return vec![0.0; s.len()];
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    s.iter().map(|x| (x - mean) / sd).collect()
}

/// Normalized 1-D Gaussian taps centred on the middle tap.
pub fn gaussian_taps(taps: usize, sigma: f64) -> Vec<f64> {
    let c = (taps / 2) as f64;
    let raw: Vec<f64> = (0..taps)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|g| g / sum).collect()
}

/// Separable blur with edge replication.
fn blur(s: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; s.len()];
    for y in 0..h {
        for x in 0..w {
            rows[x + w * y] = taps
                .iter()
                .enumerate()
                .map(|(k, g)| g * s[clamp(x as isize + k as isize - r, w) + w * y])
                .sum();
        }
    }
    let mut out = vec![0.0; s.len()];
    for y in 0..h {
        for x in 0..w {
            out[x + w * y] = taps
                .iter()
                .enumerate()
                .map(|(k, g)| g * rows[x + w * clamp(y as isize + k as isize - r, h)])
                .sum();
        }
    }
    out
}

/// Subtracts a 31×31, σ = 5 Gaussian-smoothed copy of each slice.
pub fn gaussian_subtract(v: &Volume) -> Volume {
    let taps = gaussian_taps(BACKGROUND_TAPS, BACKGROUND_SIGMA);
    map_slices(v, |s, w, h| {
        let bg = blur(s, w, h, &taps);
        s.iter().zip(bg).map(|(a, b)| a - b).collect()
    })
}

/// Contrast-limited adaptive histogram equalization per slice; output in `[0, 1]`.
pub fn clahe(v: &Volume, params: ClaheParams) -> Volume {
    map_slices(v, |s, w, h| clahe_slice(s, w, h, params))
}

/// Tile boundaries along one axis. Extents shorter than a tile form one tile.
fn tile_bounds(n: usize, tile: usize) -> Vec<(usize, usize)> {
    let count = n.div_ceil(tile.max(1)).max(1);
    if n < tile {
        return vec![(0, n)];
    }
    (0..count).map(|i| (i * tile, ((i + 1) * tile).min(n))).collect()
}

fn bin_of(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = (x - lo) / (hi - lo);
    ((t * bins as f64) as usize).min(bins - 1)
}

/// Clipped, redistributed cumulative histogram mapping, normalized to `[0, 1]`.
pub(crate) fn tile_mapping(bins_of: impl Iterator<Item = usize>, params: ClaheParams) -> Vec<f64> {
    let mut hist = vec![0.0f64; params.bins];
    let mut count = 0usize;
    for b in bins_of {
        hist[b] += 1.0;
        count += 1;
    }
    let limit = (params.clip_limit * count as f64 / params.bins as f64).max(1.0);
    let mut excess = 0.0;
    for h in &mut hist {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / params.bins as f64;
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h + share;
            acc / count as f64
        })
        .collect()
}

/// Interpolation neighbours and weight of the second one, from tile centres.
fn neighbours(p: usize, centres: &[f64]) -> (usize, usize, f64) {
    let p = p as f64;
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let i = centres.iter().rposition(|&c| c <= p).unwrap_or(0);
    let t = (p - centres[i]) / (centres[i + 1] - centres[i]);
    (i, i + 1, t)
}

fn clahe_slice(s: &[f64], w: usize, h: usize, params: ClaheParams) -> Vec<f64> {
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo >= hi {
        return vec![0.0; s.len()];
    }
    let bins: Vec<usize> = s.iter().map(|&x| bin_of(x, lo, hi, params.bins)).collect();
    let tx = tile_bounds(w, params.tile);
    let ty = tile_bounds(h, params.tile);
    let mut maps = Vec::with_capacity(tx.len() * ty.len());
    for &(y0, y1) in &ty {
        for &(x0, x1) in &tx {
            let it = (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y)));
            maps.push(tile_mapping(it.map(|(x, y)| bins[x + w * y]), params));
        }
    }
    let centre = |b: &(usize, usize)| (b.0 + b.1 - 1) as f64 / 2.0;
    let cx: Vec<f64> = tx.iter().map(centre).collect();
    let cy: Vec<f64> = ty.iter().map(centre).collect();
    let map = |i: usize, j: usize, b: usize| maps[i + tx.len() * j][b];

    let mut out = vec![0.0; s.len()];
    for y in 0..h {
        let (j0, j1, v) = neighbours(y, &cy);
        for x in 0..w {
            let (i0, i1, u) = neighbours(x, &cx);
            let b = bins[x + w * y];
            let top = (1.0 - u) * map(i0, j0, b) + u * map(i1, j0, b);
            let bottom = (1.0 - u) * map(i0, j1, b) + u * map(i1, j1, b);
            out[x + w * y] = (1.0 - v) * top + v * bottom;
        }
    }
    let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo >= hi {
        return vec![0.0; s.len()];
    }
    out.iter().map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}
