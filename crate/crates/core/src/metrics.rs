//! Segmentation evaluation: DICE, 95th-percentile Hausdorff distance,
//! absolute volume difference, pixel error and Rand error.
//!
//! Conventions:
//! - a boundary voxel belongs to the mask and has at least one 6-neighbour
//!   outside it (voxels on the volume border count as boundary);
//! - percentiles use the nearest-rank rule on sorted distances;
//! - Rand error segments are connected components of the foreground class.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

#[derive(Debug, Clone, Copy)]
pub struct SegmentationPair<'a> {
    pub predicted: &'a LabelVolume,
    pub reference: &'a LabelVolume,
    /// Voxel spacing `(sx, sy, sz)` in millimetres.
    pub spacing: [f64; 3],
}

impl<'a> SegmentationPair<'a> {
    pub fn new(
        predicted: &'a LabelVolume,
        reference: &'a LabelVolume,
        spacing: [f64; 3],
    ) -> Result<Self> {
        if predicted.spatial() != reference.spatial() {
            return Err(Error::shape(format!(
                "prediction {:?} vs reference {:?}",
                predicted.spatial(),
                reference.spatial()
            )));
        }
        if predicted.num_classes() != reference.num_classes() {
            return Err(Error::shape(format!(
                "prediction has {} classes, reference {}",
                predicted.num_classes(),
                reference.num_classes()
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::shape(format!("invalid voxel spacing {spacing:?}")));
        }
        Ok(SegmentationPair {
            predicted,
            reference,
            spacing,
        })
    }

    /// The same pair with prediction and reference exchanged.
    pub fn swapped(&self) -> Self {
        SegmentationPair {
            predicted: self.reference,
            reference: self.predicted,
            spacing: self.spacing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// 6-connectivity in 3-D.
    #[default]
    Face3d,
    /// 4-connectivity inside each z-slice; slices are never joined.
    Slice2d,
}

fn mask(l: &LabelVolume, class: u8) -> Vec<bool> {
    l.labels().iter().map(|&v| v == class).collect()
}

pub fn dice(pair: &SegmentationPair, class: u8) -> f64 {
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &r) in pair.predicted.labels().iter().zip(pair.reference.labels()) {
        let (pa, rb) = (p == class, r == class);
        a += pa as usize;
        b += rb as usize;
        both += (pa && rb) as usize;
    }
    if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    }
}

/// Absolute volume difference in percent of the reference volume; `None`
/// when the reference class is empty.
pub fn avd(pair: &SegmentationPair, class: u8) -> Option<f64> {
    let a = pair.predicted.count(class);
    let b = pair.reference.count(class);
    (b > 0).then(|| 100.0 * (a as f64 - b as f64).abs() / b as f64)
}

/// `1 − F1` of the voxelwise foreground classification.
pub fn pixel_error(pair: &SegmentationPair, foreground: u8) -> f64 {
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (&p, &r) in pair.predicted.labels().iter().zip(pair.reference.labels()) {
        match (p == foreground, r == foreground) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    1.0 - f_score(tp, fp, fnn)
}

/// `2TP / (2TP + FP + FN)`, taken as 1 when there are no positives at all.
pub(crate) fn f_score(tp: u64, fp: u64, fnn: u64) -> f64 {
    let denom = 2 * tp + fp + fnn;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Labels connected components of `mask`. Returns per-voxel component ids
/// (0 = not in mask, components numbered from 1) and the component count.
pub fn components(mask: &[bool], spatial: [usize; 3], conn: Connectivity) -> (Vec<u32>, u32) {
    let [w, h, d] = spatial;
    let mut ids = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y, z) = (i % w, (i / w) % h, i / (w * h));
            let mut visit = |j: usize| {
                if mask[j] && ids[j] == 0 {
                    ids[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if conn == Connectivity::Face3d {
                if z > 0 {
                    visit(i - w * h);
                }
                if z + 1 < d {
                    visit(i + w * h);
                }
            }
        }
    }
    (ids, next)
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair counts `(TP, FP, FN)` of the Rand F-score: a voxel pair is positive
/// in a segmentation when both voxels lie in the same foreground component.
pub fn rand_pair_counts(pair: &SegmentationPair, foreground: u8, conn: Connectivity) -> (u64, u64, u64) {
    let spatial = pair.reference.spatial();
    let (pred, n_pred) = components(&mask(pair.predicted, foreground), spatial, conn);
    let (refc, n_ref) = components(&mask(pair.reference, foreground), spatial, conn);
    let mut pred_sizes = vec![0u64; n_pred as usize + 1];
    let mut ref_sizes = vec![0u64; n_ref as usize + 1];
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for (&p, &r) in pred.iter().zip(&refc) {
        pred_sizes[p as usize] += 1;
        ref_sizes[r as usize] += 1;
        if p != 0 && r != 0 {
            *joint.entry((p, r)).or_default() += 1;
        }
    }
    let tp: u64 = joint.values().map(|&n| pairs(n)).sum();
    let same_pred: u64 = pred_sizes[1..].iter().map(|&n| pairs(n)).sum();
    let same_ref: u64 = ref_sizes[1..].iter().map(|&n| pairs(n)).sum();
    (tp, same_pred - tp, same_ref - tp)
}

/// `1 − F` of the Rand index over foreground segments.
pub fn rand_error(pair: &SegmentationPair, foreground: u8, conn: Connectivity) -> f64 {
    let (tp, fp, fnn) = rand_pair_counts(pair, foreground, conn);
    1.0 - f_score(tp, fp, fnn)
}

/// Flat indices of the boundary voxels of `mask`.
pub fn boundary(mask: &[bool], spatial: [usize; 3]) -> Vec<usize> {
    let [w, h, d] = spatial;
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = x + w * (y + h * z);
                if !mask[i] {
                    continue;
                }
                let interior = x > 0
                    && x + 1 < w
                    && y > 0
                    && y + 1 < h
                    && z > 0
                    && z + 1 < d
                    && mask[i - 1]
                    && mask[i + 1]
                    && mask[i - w]
                    && mask[i + w]
                    && mask[i - w * h]
                    && mask[i + w * h];
                if !interior {
                    out.push(i);
                }
            }
        }
    }
    out
}

/// One line of the squared distance transform: `out[q] = min_p w2·(q−p)² + f[p]`
/// (lower envelope of parabolas).
fn edt_line(f: &[f64], w2: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let pf = p as f64;
            let s = ((f[q] + w2 * qf * qf) - (f[p] + w2 * pf * pf)) / (2.0 * w2 * (qf - pf));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = w2 * (dq * dq) + f[v[k]];
    }
}

/// Squared Euclidean distance from every voxel to the nearest `feature` voxel,
/// with anisotropic spacing. Infinite everywhere when there are no features.
pub fn squared_distance_transform(features: &[usize], spatial: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [w, h, d] = spatial;
    let mut dist = vec![f64::INFINITY; w * h * d];
    for &i in features {
        dist[i] = 0.0;
    }
    let mut v = Vec::new();
    let mut z = Vec::new();
    let extents = [w, h, d];
    let strides = [1, w, w * h];
    for axis in 0..3 {
        let n = extents[axis];
        let stride = strides[axis];
        let w2 = spacing[axis] * spacing[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for start in 0..dist.len() {
            // visit each line once, from its first element
            if (start / stride) % n != 0 {
                continue;
            }
            for (k, l) in line.iter_mut().enumerate() {
                *l = dist[start + k * stride];
            }
            edt_line(&line, w2, &mut out, &mut v, &mut z);
            for (k, o) in out.iter().enumerate() {
                dist[start + k * stride] = *o;
            }
        }
    }
    dist
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile_nearest_rank(values: &mut [f64], pct: usize) -> f64 {
    assert!(!values.is_empty() && (1..=100).contains(&pct));
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = (pct * values.len()).div_ceil(100).max(1);
    values[rank - 1]
}

/// 95th percentile of distances from the boundary of the predicted class to
/// the boundary of the reference class. `None` when either mask is empty.
pub fn directed_hausdorff95(pair: &SegmentationPair, class: u8) -> Option<f64> {
    let spatial = pair.reference.spatial();
    let a = boundary(&mask(pair.predicted, class), spatial);
    let b = boundary(&mask(pair.reference, class), spatial);
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let dist = squared_distance_transform(&b, spatial, pair.spacing);
    let mut d: Vec<f64> = a.iter().map(|&i| dist[i].sqrt()).collect();
    Some(percentile_nearest_rank(&mut d, 95))
}

/// Symmetric 95th-percentile (modified) Hausdorff distance in millimetres.
pub fn hausdorff95(pair: &SegmentationPair, class: u8) -> Option<f64> {
    let ab = directed_hausdorff95(pair, class)?;
    let ba = directed_hausdorff95(&pair.swapped(), class)?;
    Some(ab.max(ba))
}
