//! Slow, single-threaded reference implementations for tests and benches.
//!
//! Nothing here calls into the convolution, sweep or metric code it is used
//! to check. The sweep oracle evaluates the scalar LSTM cell at every pixel
//! with explicit loops over kernel taps; the metric oracles enumerate all
//! voxel pairs.

use crate::clstm::{ClstmParams, Direction};
use crate::volume::{Axis, Dims, LabelVolume, Volume};

/// Gate and cell scalars of one LSTM step at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLstmState {
    pub input: f64,
    pub forget: f64,
    pub candidate: f64,
    pub cell: f64,
    pub output: f64,
    pub hidden: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One step of the standard LSTM cell from its four pre-activations.
pub fn lstm_step(pre_i: f64, pre_f: f64, pre_c: f64, pre_o: f64, cell_prev: f64) -> ScalarLstmState {
    let input = logistic(pre_i);
    let forget = logistic(pre_f);
    let candidate = pre_c.tanh();
    let cell = forget * cell_prev + input * candidate;
    let output = logistic(pre_o);
    ScalarLstmState {
        input,
        forget,
        candidate,
        cell,
        output,
        hidden: output * cell.tanh(),
    }
}

/// Voxel coordinates of in-plane position `(a, b)` on the plane at `level`
/// along `axis`, or `None` outside the volume.
fn voxel(dims: Dims, axis: Axis, level: usize, a: isize, b: isize) -> Option<(usize, usize, usize)> {
    let (ea, eb) = match axis {
        Axis::X => (dims.height, dims.depth),
        Axis::Y => (dims.width, dims.depth),
        Axis::Z => (dims.width, dims.height),
    };
    if a < 0 || b < 0 || a as usize >= ea || b as usize >= eb {
        return None;
    }
    let (a, b) = (a as usize, b as usize);
    Some(match axis {
        Axis::X => (level, a, b),
        Axis::Y => (a, level, b),
        Axis::Z => (a, b, level),
    })
}

#[allow(clippy::too_many_arguments)]
fn tap(w: &[f64], cin: usize, kh: usize, kw: usize, o: usize, ci: usize, ky: usize, kx: usize) -> f64 {
    w[((o * cin + ci) * kh + ky) * kw + kx]
}

/// Pixel-by-pixel evaluation of one directional C-LSTM sweep.
#[allow(clippy::needless_range_loop)]
pub fn naive_sweep(x: &Volume, p: &ClstmParams, dir: Direction) -> Volume {
    let dims = x.dims();
    let cin = dims.channels;
    let hidden = p.theta_xi.out_channels;
    let (kh, kw) = (p.theta_xi.kh, p.theta_xi.kw);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let steps = dims.extent(dir.axis);
    let (ea, eb) = match dir.axis {
        Axis::X => (dims.height, dims.depth),
        Axis::Y => (dims.width, dims.depth),
        Axis::Z => (dims.width, dims.height),
    };
    let out_dims = Dims::new(dims.width, dims.height, dims.depth, hidden);
    let mut h = Volume::zeros(out_dims).unwrap();
    let mut c = Volume::zeros(out_dims).unwrap();

    let wx = [
        &p.theta_xi.weights,
        &p.theta_xf.weights,
        &p.theta_xc.weights,
        &p.theta_xo.weights,
    ];
    let wh = [
        &p.theta_hi.weights,
        &p.theta_hf.weights,
        &p.theta_hc.weights,
        &p.theta_ho.weights,
    ];
    let bias = [
        &p.bias_i.values,
        &p.bias_f.values,
        &p.bias_c.values,
        &p.bias_o.values,
    ];

    for t in 0..steps {
        let level = if dir.positive { t } else { steps - 1 - t };
        let prev = if t == 0 {
            None
        } else if dir.positive {
            Some(level - 1)
        } else {
            Some(level + 1)
        };
        for b in 0..eb {
            for a in 0..ea {
                let (vx, vy, vz) = voxel(dims, dir.axis, level, a as isize, b as isize).unwrap();
                for o in 0..hidden {
                    let mut pre = [0.0f64; 4];
                    for g in 0..4 {
                        let mut s = bias[g][o];
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let sa = a as isize + kx as isize - pw;
                                    let sb = b as isize + ky as isize - ph;
                                    if let Some((sx, sy, sz)) = voxel(dims, dir.axis, level, sa, sb) {
                                        s += x.get(sx, sy, sz, ci) * tap(wx[g], cin, kh, kw, o, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        if let Some(pl) = prev {
                            for hc in 0..hidden {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let sa = a as isize + kx as isize - pw;
                                        let sb = b as isize + ky as isize - ph;
                                        if let Some((sx, sy, sz)) = voxel(dims, dir.axis, pl, sa, sb) {
                                            s += h.get(sx, sy, sz, hc) * tap(wh[g], hidden, kh, kw, o, hc, ky, kx);
                                        }
                                    }
                                }
                            }
                        }
                        pre[g] = s;
                    }
                    let c_prev = match prev {
                        Some(pl) => {
                            let (px, py, pz) = voxel(dims, dir.axis, pl, a as isize, b as isize).unwrap();
                            c.get(px, py, pz, o)
                        }
                        None => 0.0,
                    };
                    let st = lstm_step(pre[0], pre[1], pre[2], pre[3], c_prev);
                    c.set(vx, vy, vz, o, st.cell);
                    h.set(vx, vy, vz, o, st.hidden);
                }
            }
        }
    }
    h
}

/// Sum of the six naive sweeps, one parameter set per direction in
/// [`Direction::ALL`] order.
pub fn naive_pyramid(x: &Volume, params: &[ClstmParams]) -> Volume {
    let mut sum: Option<Volume> = None;
    for (p, dir) in params.iter().zip(Direction::ALL) {
        let h = naive_sweep(x, p, dir);
        sum = Some(match sum {
            None => h,
            Some(mut s) => {
                for (a, b) in s.data_mut().iter_mut().zip(h.data()) {
                    *a += b;
                }
                s
            }
        });
    }
    sum.expect("at least one direction")
}

/// A gated layer with no recurrent input: `h = σ(o)·tanh(σ(i)·tanh(c̃))`
/// evaluated on every plane independently. Equals a sweep whose axis has
/// extent one.
pub fn recurrence_free_gated(x: &Volume, p: &ClstmParams, axis: Axis) -> Volume {
    let dims = x.dims();
    let cin = dims.channels;
    let hidden = p.theta_xi.out_channels;
    let (kh, kw) = (p.theta_xi.kh, p.theta_xi.kw);
    let mut out = Volume::zeros(dims.with_channels(hidden)).unwrap();
    let conv = |w: &[f64], bias: f64, o: usize, xx: usize, yy: usize, zz: usize| -> f64 {
        let (level, a, b) = match axis {
            Axis::X => (xx, yy, zz),
            Axis::Y => (yy, xx, zz),
            Axis::Z => (zz, xx, yy),
        };
        let mut s = bias;
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let sa = a as isize + kx as isize - (kw / 2) as isize;
                    let sb = b as isize + ky as isize - (kh / 2) as isize;
                    if let Some((sx, sy, sz)) = voxel(dims, axis, level, sa, sb) {
                        s += x.get(sx, sy, sz, ci) * w[((o * cin + ci) * kh + ky) * kw + kx];
                    }
                }
            }
        }
        s
    };
    for zz in 0..dims.depth {
        for yy in 0..dims.height {
            for xx in 0..dims.width {
                for o in 0..hidden {
                    let i = logistic(conv(&p.theta_xi.weights, p.bias_i.values[o], o, xx, yy, zz));
                    let g = conv(&p.theta_xc.weights, p.bias_c.values[o], o, xx, yy, zz).tanh();
                    let og = logistic(conv(&p.theta_xo.weights, p.bias_o.values[o], o, xx, yy, zz));
                    out.set(xx, yy, zz, o, og * (i * g).tanh());
                }
            }
        }
    }
    out
}

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let plus = f(&probe);
            probe[i] = theta[i] - h;
            let minus = f(&probe);
            probe[i] = theta[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

fn coords(i: usize, spatial: [usize; 3]) -> [usize; 3] {
    let [w, h, _] = spatial;
    [i % w, (i / w) % h, i / (w * h)]
}

/// A voxel of class `class` with a face neighbour outside the class or
/// outside the volume.
fn is_surface(l: &LabelVolume, class: u8, x: usize, y: usize, z: usize) -> bool {
    let [w, h, d] = l.spatial();
    if l.get(x, y, z) != class {
        return false;
    }
    let offsets: [(isize, isize, isize); 6] = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
    offsets.iter().any(|&(dx, dy, dz)| {
        let (nx, ny, nz) = (x as isize + dx, y as isize + dy, z as isize + dz);
        nx < 0
            || ny < 0
            || nz < 0
            || nx as usize >= w
            || ny as usize >= h
            || nz as usize >= d
            || l.get(nx as usize, ny as usize, nz as usize) != class
    })
}

fn surface(l: &LabelVolume, class: u8) -> Vec<[usize; 3]> {
    let [w, h, d] = l.spatial();
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if is_surface(l, class, x, y, z) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn directed_p95(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> f64 {
    let w2 = spacing.map(|s| s * s);
    let mut d: Vec<f64> = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    let dx = p[0] as f64 - q[0] as f64;
                    let dy = p[1] as f64 - q[1] as f64;
                    let dz = p[2] as f64 - q[2] as f64;
                    w2[2] * (dz * dz) + (w2[1] * (dy * dy) + w2[0] * (dx * dx))
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (95 * d.len()).div_ceil(100).max(1);
    d[k - 1]
}

/// All-pairs 95th-percentile Hausdorff distance; `None` if a mask is empty.
pub fn brute_hausdorff95(pred: &LabelVolume, reference: &LabelVolume, class: u8, spacing: [f64; 3]) -> Option<f64> {
    let a = surface(pred, class);
    let b = surface(reference, class);
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some(directed_p95(&a, &b, spacing).max(directed_p95(&b, &a, spacing)))
}

/// Component labels by repeated min-propagation until nothing changes.
fn propagate_components(l: &LabelVolume, fg: u8, within_slice: bool) -> Vec<Option<usize>> {
    let spatial = l.spatial();
    let n = l.labels().len();
    let mut lab: Vec<Option<usize>> = (0..n).map(|i| (l.labels()[i] == fg).then_some(i)).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                let (Some(li), Some(lj)) = (lab[i], lab[j]) else { continue };
                let [xi, yi, zi] = coords(i, spatial);
                let [xj, yj, zj] = coords(j, spatial);
                let manhattan = xi.abs_diff(xj) + yi.abs_diff(yj) + zi.abs_diff(zj);
                if manhattan != 1 || (within_slice && zi != zj) {
                    continue;
                }
                if lj < li {
                    lab[i] = Some(lj);
                    changed = true;
                }
            }
        }
        if !changed {
            return lab;
        }
    }
}

/// Rand error by enumerating every unordered voxel pair.
pub fn brute_rand_error(pred: &LabelVolume, reference: &LabelVolume, fg: u8, within_slice: bool) -> f64 {
    let p = propagate_components(pred, fg, within_slice);
    let r = propagate_components(reference, fg, within_slice);
    let n = p.len();
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let same_p = p[i].is_some() && p[i] == p[j];
            let same_r = r[i].is_some() && r[i] == r[j];
            match (same_p, same_r) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                _ => {}
            }
        }
    }
    if tp + fp + fnn == 0 {
        return 0.0;
    }
    1.0 - (2 * tp) as f64 / (2 * tp + fp + fnn) as f64
}
