//! Directional convolutional LSTM sweeps.
//!
//! A sweep walks the volume plane by plane along one signed axis. Each plane
//! sees the input plane through `θ_x` kernels and the previous plane's hidden
//! state through `θ_h` kernels; there is no recurrence inside a plane, so all
//! pixels of a plane are computed concurrently.
//!
//! Internally the volume is transposed into sweep order (`[t][c][b][a]`, with
//! `t` counted along the traversal) so every direction runs the same code.
//! The four gate kernels are fused into one kernel whose output channel
//! `4·o + g` holds gate `g ∈ {i, f, c̃, o}` of hidden unit `o`; this keeps the
//! four gates of one unit adjacent for the elementwise cell update.

use rayon::prelude::*;

use crate::conv2d::{
    accumulate_input_channel, accumulate_kernel_grad, accumulate_output_channel, Bias, Kernel,
};
use crate::error::{Error, Result};
use crate::volume::{Axis, Dims, Volume};

const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub axis: Axis,
    /// `true` walks increasing coordinates.
    pub positive: bool,
}

impl Direction {
    pub const fn new(axis: Axis, positive: bool) -> Self {
        Direction { axis, positive }
    }

    /// The six signed axes, in the order used for parameter storage.
    pub const ALL: [Direction; 6] = [
        Direction::new(Axis::X, true),
        Direction::new(Axis::X, false),
        Direction::new(Axis::Y, true),
        Direction::new(Axis::Y, false),
        Direction::new(Axis::Z, true),
        Direction::new(Axis::Z, false),
    ];

    pub fn sign(self) -> i32 {
        if self.positive {
            1
        } else {
            -1
        }
    }

    pub fn reversed(self) -> Direction {
        Direction::new(self.axis, !self.positive)
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = if self.positive { '+' } else { '-' };
        write!(f, "{s}{:?}", self.axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Candidate,
    Output,
}

/// Weights of one directional C-LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct ClstmParams {
    pub theta_xi: Kernel,
    pub theta_xf: Kernel,
    pub theta_xc: Kernel,
    pub theta_xo: Kernel,
    pub theta_hi: Kernel,
    pub theta_hf: Kernel,
    pub theta_hc: Kernel,
    pub theta_ho: Kernel,
    pub bias_i: Bias,
    pub bias_f: Bias,
    pub bias_c: Bias,
    pub bias_o: Bias,
}

impl ClstmParams {
    pub fn zeros(input_channels: usize, hidden: usize, kh: usize, kw: usize) -> Self {
        let kx = || Kernel::zeros(kh, kw, input_channels, hidden);
        let khh = || Kernel::zeros(kh, kw, hidden, hidden);
        ClstmParams {
            theta_xi: kx(),
            theta_xf: kx(),
            theta_xc: kx(),
            theta_xo: kx(),
            theta_hi: khh(),
            theta_hf: khh(),
            theta_hc: khh(),
            theta_ho: khh(),
            bias_i: Bias::zeros(hidden),
            bias_f: Bias::zeros(hidden),
            bias_c: Bias::zeros(hidden),
            bias_o: Bias::zeros(hidden),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.theta_xi.in_channels
    }

    pub fn hidden(&self) -> usize {
        self.theta_xi.out_channels
    }

    pub fn filter(&self) -> (usize, usize) {
        (self.theta_xi.kh, self.theta_xi.kw)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn input_kernels(&self) -> [&Kernel; 4] {
        [&self.theta_xi, &self.theta_xf, &self.theta_xc, &self.theta_xo]
    }

    fn hidden_kernels(&self) -> [&Kernel; 4] {
        [&self.theta_hi, &self.theta_hf, &self.theta_hc, &self.theta_ho]
    }

    fn biases(&self) -> [&Bias; 4] {
        [&self.bias_i, &self.bias_f, &self.bias_c, &self.bias_o]
    }

    /// Parameter tensors in declaration order.
    pub fn tensors(&self) -> [&[f64]; 12] {
        [
            &self.theta_xi.weights,
            &self.theta_xf.weights,
            &self.theta_xc.weights,
            &self.theta_xo.weights,
            &self.theta_hi.weights,
            &self.theta_hf.weights,
            &self.theta_hc.weights,
            &self.theta_ho.weights,
            &self.bias_i.values,
            &self.bias_f.values,
            &self.bias_c.values,
            &self.bias_o.values,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            &mut self.theta_xi.weights,
            &mut self.theta_xf.weights,
            &mut self.theta_xc.weights,
            &mut self.theta_xo.weights,
            &mut self.theta_hi.weights,
            &mut self.theta_hf.weights,
            &mut self.theta_hc.weights,
            &mut self.theta_ho.weights,
            &mut self.bias_i.values,
            &mut self.bias_f.values,
            &mut self.bias_c.values,
            &mut self.bias_o.values,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (c, o) = (self.input_channels(), self.hidden());
        let (kh, kw) = self.filter();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape(format!("filter {kh}x{kw} must be odd")));
        }
        for k in self.input_kernels() {
            if (k.kh, k.kw, k.in_channels, k.out_channels) != (kh, kw, c, o)
                || k.weights.len() != kh * kw * c * o
            {
                return Err(Error::shape("input kernels disagree in shape"));
            }
        }
        for k in self.hidden_kernels() {
            if (k.kh, k.kw, k.in_channels, k.out_channels) != (kh, kw, o, o)
                || k.weights.len() != kh * kw * o * o
            {
                return Err(Error::shape("hidden kernels disagree in shape"));
            }
        }
        if self.biases().iter().any(|b| b.values.len() != o) {
            return Err(Error::shape("bias length differs from hidden units"));
        }
        Ok(())
    }

    fn fuse(kernels: [&Kernel; 4]) -> Kernel {
        let k0 = kernels[0];
        let per = k0.in_channels * k0.kh * k0.kw;
        let hidden = k0.out_channels;
        let mut fused = Kernel::zeros(k0.kh, k0.kw, k0.in_channels, GATES * hidden);
        for o in 0..hidden {
            for (g, k) in kernels.iter().enumerate() {
                let dst = (GATES * o + g) * per;
                fused.weights[dst..dst + per].copy_from_slice(k.output_weights(o));
            }
        }
        fused
    }

    fn fused_bias(&self) -> Vec<f64> {
        let b = self.biases();
        (0..self.hidden())
            .flat_map(|o| b.map(|bias| bias.values[o]))
            .collect()
    }

    fn unfuse(fused: &Kernel, targets: [&mut Kernel; 4]) {
        let per = fused.in_channels * fused.kh * fused.kw;
        let hidden = fused.out_channels / GATES;
        for (g, k) in targets.into_iter().enumerate() {
            for o in 0..hidden {
                let src = (GATES * o + g) * per;
                k.weights[o * per..(o + 1) * per].copy_from_slice(&fused.weights[src..src + per]);
            }
        }
    }
}

/// Plane geometry of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    dir: Direction,
    dims: Dims,
    /// Number of planes along the sweep axis.
    steps: usize,
    a: usize,
    b: usize,
}

impl Geometry {
    fn new(dims: Dims, dir: Direction) -> Self {
        let (a_axis, b_axis) = dir.axis.plane_axes();
        Geometry {
            dir,
            dims,
            steps: dims.extent(dir.axis),
            a: dims.extent(a_axis),
            b: dims.extent(b_axis),
        }
    }

    fn plane(&self) -> usize {
        self.a * self.b
    }

    /// Index in sweep order of voxel `(x, y, z)`, channel `c` of `channels`.
    #[inline]
    fn seq_index(&self, x: usize, y: usize, z: usize, c: usize, channels: usize) -> usize {
        let (coord, a, b) = match self.dir.axis {
            Axis::X => (x, y, z),
            Axis::Y => (y, x, z),
            Axis::Z => (z, x, y),
        };
        let t = if self.dir.positive {
            coord
        } else {
            self.steps - 1 - coord
        };
        ((t * channels + c) * self.b + b) * self.a + a
    }

    fn gather(&self, v: &Volume) -> Vec<f64> {
        let d = v.dims();
        let mut out = vec![0.0; d.len()];
        let mut src = v.data().iter();
        for c in 0..d.channels {
            for z in 0..d.depth {
                for y in 0..d.height {
                    for x in 0..d.width {
                        out[self.seq_index(x, y, z, c, d.channels)] = *src.next().unwrap();
                    }
                }
            }
        }
        out
    }

    fn scatter(&self, seq: &[f64], channels: usize) -> Volume {
        let dims = self.dims.with_channels(channels);
        Volume::from_fn(dims, |x, y, z, c| seq[self.seq_index(x, y, z, c, channels)])
            .expect("sweep geometry has valid dims")
    }
}

/// Activations retained by [`sweep_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct SweepCache {
    geom: Geometry,
    hidden: usize,
    /// Input in sweep order, `[t][c][plane]`.
    input: Vec<f64>,
    /// Gate activations, `[t][4·o + g][plane]`.
    gates: Vec<f64>,
    /// Cell states, `[t][o][plane]`.
    cells: Vec<f64>,
    /// Hidden states, `[t][o][plane]`.
    hiddens: Vec<f64>,
}

impl SweepCache {
    pub fn direction(&self) -> Direction {
        self.geom.dir
    }

    /// Number of cached planes (the traversal extent).
    pub fn depth(&self) -> usize {
        self.geom.steps
    }

    pub fn gate_values(&self, gate: Gate) -> impl Iterator<Item = f64> + '_ {
        let g = gate as usize;
        let p = self.geom.plane();
        self.gates
            .chunks(p)
            .enumerate()
            .filter(move |(i, _)| i % GATES == g)
            .flat_map(|(_, c)| c.iter().copied())
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cells
    }

    pub fn hidden_values(&self) -> &[f64] {
        &self.hiddens
    }

    /// Cell states of the plane at traversal step `t` (all hidden units).
    pub fn cell_plane(&self, t: usize) -> &[f64] {
        let n = self.hidden * self.geom.plane();
        &self.cells[t * n..(t + 1) * n]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_input(x: &Volume, p: &ClstmParams) -> Result<()> {
    p.validate()?;
    if x.dims().channels != p.input_channels() {
        return Err(Error::shape(format!(
            "input has {} channels, C-LSTM expects {}",
            x.dims().channels,
            p.input_channels()
        )));
    }
    Ok(())
}

/// Applies the gate nonlinearities of one plane in place and writes the new
/// cell and hidden states. `pre` holds the four pre-activations of each unit.
fn cell_update(pre: &mut [f64], c_prev: Option<&[f64]>, cell: &mut [f64], hidden: &mut [f64], plane: usize) {
    let (gi, rest) = pre.split_at_mut(plane);
    let (gf, rest) = rest.split_at_mut(plane);
    let (gc, go) = rest.split_at_mut(plane);
    for p in 0..plane {
        let i = sigmoid(gi[p]);
        let f = sigmoid(gf[p]);
        let g = gc[p].tanh();
        let o = sigmoid(go[p]);
        let prev = c_prev.map_or(0.0, |c| c[p]);
        let c = f * prev + i * g;
        gi[p] = i;
        gf[p] = f;
        gc[p] = g;
        go[p] = o;
        cell[p] = c;
        hidden[p] = o * c.tanh();
    }
}

/// Runs one directional sweep and keeps the activations needed for
/// [`sweep_backward`]. The output is in the input's coordinates.
pub fn sweep_forward(x: &Volume, p: &ClstmParams, dir: Direction) -> Result<(Volume, SweepCache)> {
    check_input(x, p)?;
    let geom = Geometry::new(x.dims(), dir);
    let (cin, hidden) = (p.input_channels(), p.hidden());
    let (a, b, plane, steps) = (geom.a, geom.b, geom.plane(), geom.steps);
    let wx = ClstmParams::fuse(p.input_kernels());
    let wh = ClstmParams::fuse(p.hidden_kernels());
    let bias = p.fused_bias();
    let gated = GATES * hidden;

    let input = geom.gather(x);
    let mut gates = vec![0.0; steps * gated * plane];
    // Input contributions do not depend on the recurrence: all planes at once.
    gates
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (t, g) = (idx / gated, idx % gated);
            dst.fill(bias[g]);
            let x_t = &input[t * cin * plane..(t + 1) * cin * plane];
            accumulate_output_channel(x_t, a, b, &wx, g, dst);
        });

    let mut cells = vec![0.0; steps * hidden * plane];
    let mut hiddens = vec![0.0; steps * hidden * plane];
    let state = hidden * plane;
    for t in 0..steps {
        let (c_done, c_rest) = cells.split_at_mut(t * state);
        let (h_done, h_rest) = hiddens.split_at_mut(t * state);
        let pre = &mut gates[t * gated * plane..(t + 1) * gated * plane];
        let h_prev = (t > 0).then(|| &h_done[(t - 1) * state..]);
        let c_prev = (t > 0).then(|| &c_done[(t - 1) * state..]);
        if let Some(h_prev) = h_prev {
            pre.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(g, dst)| accumulate_output_channel(h_prev, a, b, &wh, g, dst));
        }
        pre.par_chunks_mut(GATES * plane)
            .zip(c_rest[..state].par_chunks_mut(plane))
            .zip(h_rest[..state].par_chunks_mut(plane))
            .enumerate()
            .for_each(|(o, ((pre_o, c_o), h_o))| {
                let prev = c_prev.map(|c| &c[o * plane..(o + 1) * plane]);
                cell_update(pre_o, prev, c_o, h_o, plane);
            });
    }

    let out = geom.scatter(&hiddens, hidden);
    let cache = SweepCache {
        geom,
        hidden,
        input,
        gates,
        cells,
        hiddens,
    };
    Ok((out, cache))
}

/// Forward sweep without retaining activations; only the previous plane's
/// state is kept. Produces the same values as [`sweep_forward`].
pub fn sweep_inference(x: &Volume, p: &ClstmParams, dir: Direction) -> Result<Volume> {
    check_input(x, p)?;
    let geom = Geometry::new(x.dims(), dir);
    let (cin, hidden) = (p.input_channels(), p.hidden());
    let (a, b, plane, steps) = (geom.a, geom.b, geom.plane(), geom.steps);
    let wx = ClstmParams::fuse(p.input_kernels());
    let wh = ClstmParams::fuse(p.hidden_kernels());
    let bias = p.fused_bias();
    let gated = GATES * hidden;
    let state = hidden * plane;

    let input = geom.gather(x);
    let mut hiddens = vec![0.0; steps * state];
    let mut pre = vec![0.0; gated * plane];
    let mut c_prev = vec![0.0; state];
    let mut c_next = vec![0.0; state];
    for t in 0..steps {
        let (h_done, h_rest) = hiddens.split_at_mut(t * state);
        let h_prev = (t > 0).then(|| &h_done[(t - 1) * state..t * state]);
        let x_t = &input[t * cin * plane..(t + 1) * cin * plane];
        pre.par_chunks_mut(plane).enumerate().for_each(|(g, dst)| {
            dst.fill(bias[g]);
            accumulate_output_channel(x_t, a, b, &wx, g, dst);
            if let Some(h_prev) = h_prev {
                accumulate_output_channel(h_prev, a, b, &wh, g, dst);
            }
        });
        let first = t == 0;
        pre.par_chunks_mut(GATES * plane)
            .zip(c_next.par_chunks_mut(plane))
            .zip(h_rest[..state].par_chunks_mut(plane))
            .enumerate()
            .for_each(|(o, ((pre_o, c_o), h_o))| {
                let prev = (!first).then(|| &c_prev[o * plane..(o + 1) * plane]);
                cell_update(pre_o, prev, c_o, h_o, plane);
            });
        std::mem::swap(&mut c_prev, &mut c_next);
    }
    Ok(geom.scatter(&hiddens, hidden))
}

/// Reverse-mode pass of one sweep: gradients of `⟨dh, h⟩` with respect to
/// the sweep input and every parameter.
pub fn sweep_backward(
    cache: &SweepCache,
    p: &ClstmParams,
    dh: &Volume,
) -> Result<(Volume, ClstmParams)> {
    p.validate()?;
    let geom = cache.geom;
    let hidden = cache.hidden;
    if p.hidden() != hidden || dh.dims() != geom.dims.with_channels(hidden) {
        return Err(Error::shape(format!(
            "gradient {} does not match sweep output {}",
            dh.dims(),
            geom.dims.with_channels(hidden)
        )));
    }
    let cin = p.input_channels();
    if cache.input.len() != geom.dims.voxels() * cin {
        return Err(Error::shape("cache was produced with different input channels"));
    }
    let (kh, kw) = p.filter();
    let (a, b, plane, steps) = (geom.a, geom.b, geom.plane(), geom.steps);
    let gated = GATES * hidden;
    let state = hidden * plane;
    let wx = ClstmParams::fuse(p.input_kernels());
    let wh = ClstmParams::fuse(p.hidden_kernels());

    let dh_seq = geom.gather(dh);
    let mut dpre = vec![0.0; steps * gated * plane];
    let mut dc_carry = vec![0.0; state];
    let mut dh_rec = vec![0.0; state];

    for t in (0..steps).rev() {
        let gates_t = &cache.gates[t * gated * plane..(t + 1) * gated * plane];
        let c_t = &cache.cells[t * state..(t + 1) * state];
        let c_prev = (t > 0).then(|| &cache.cells[(t - 1) * state..t * state]);
        let dh_t = &dh_seq[t * state..(t + 1) * state];
        let dpre_t = &mut dpre[t * gated * plane..(t + 1) * gated * plane];
        let dh_rec_ref = &dh_rec;
        dpre_t
            .par_chunks_mut(GATES * plane)
            .zip(dc_carry.par_chunks_mut(plane))
            .enumerate()
            .for_each(|(o, (dpre_o, carry))| {
                let s = o * plane..(o + 1) * plane;
                let g_o = &gates_t[o * GATES * plane..(o + 1) * GATES * plane];
                let (gi, rest) = g_o.split_at(plane);
                let (gf, rest) = rest.split_at(plane);
                let (gc, go) = rest.split_at(plane);
                let c = &c_t[s.clone()];
                let dht = &dh_t[s.clone()];
                let dhr = &dh_rec_ref[s.clone()];
                let prev = c_prev.map(|c| &c[s.clone()]);
                for q in 0..plane {
                    let dh_total = dht[q] + dhr[q];
                    let tc = c[q].tanh();
                    let d_o = dh_total * tc;
                    let dc = dh_total * go[q] * (1.0 - tc * tc) + carry[q];
                    let cp = prev.map_or(0.0, |c| c[q]);
                    let (i, f, g, o) = (gi[q], gf[q], gc[q], go[q]);
                    dpre_o[q] = dc * g * i * (1.0 - i);
                    dpre_o[plane + q] = dc * cp * f * (1.0 - f);
                    dpre_o[2 * plane + q] = dc * i * (1.0 - g * g);
                    dpre_o[3 * plane + q] = d_o * o * (1.0 - o);
                    carry[q] = dc * f;
                }
            });
        if t > 0 {
            let dpre_t = &dpre[t * gated * plane..(t + 1) * gated * plane];
            dh_rec.par_chunks_mut(plane).enumerate().for_each(|(ci, dst)| {
                dst.fill(0.0);
                accumulate_input_channel(dpre_t, a, b, &wh, ci, dst);
            });
        }
    }

    let mut dx_seq = vec![0.0; steps * cin * plane];
    dx_seq
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (t, ci) = (idx / cin, idx % cin);
            let dpre_t = &dpre[t * gated * plane..(t + 1) * gated * plane];
            accumulate_input_channel(dpre_t, a, b, &wx, ci, dst);
        });

    let mut dwx = Kernel::zeros(kh, kw, cin, gated);
    dwx.weights
        .par_chunks_mut(cin * kh * kw)
        .enumerate()
        .for_each(|(g, dw)| {
            for t in 0..steps {
                let x_t = &cache.input[t * cin * plane..(t + 1) * cin * plane];
                let d = &dpre[(t * gated + g) * plane..(t * gated + g + 1) * plane];
                accumulate_kernel_grad(x_t, d, a, b, kh, kw, cin, dw);
            }
        });
    let mut dwh = Kernel::zeros(kh, kw, hidden, gated);
    dwh.weights
        .par_chunks_mut(hidden * kh * kw)
        .enumerate()
        .for_each(|(g, dw)| {
            for t in 1..steps {
                let h_prev = &cache.hiddens[(t - 1) * state..t * state];
                let d = &dpre[(t * gated + g) * plane..(t * gated + g + 1) * plane];
                accumulate_kernel_grad(h_prev, d, a, b, kh, kw, hidden, dw);
            }
        });
    let dbias: Vec<f64> = (0..gated)
        .map(|g| {
            let mut s = 0.0;
            for t in 0..steps {
                s += dpre[(t * gated + g) * plane..(t * gated + g + 1) * plane]
                    .iter()
                    .sum::<f64>();
            }
            s
        })
        .collect();

    let mut grads = ClstmParams::zeros(cin, hidden, kh, kw);
    ClstmParams::unfuse(
        &dwx,
        [
            &mut grads.theta_xi,
            &mut grads.theta_xf,
            &mut grads.theta_xc,
            &mut grads.theta_xo,
        ],
    );
    ClstmParams::unfuse(
        &dwh,
        [
            &mut grads.theta_hi,
            &mut grads.theta_hf,
            &mut grads.theta_hc,
            &mut grads.theta_ho,
        ],
    );
    for o in 0..hidden {
        grads.bias_i.values[o] = dbias[GATES * o];
        grads.bias_f.values[o] = dbias[GATES * o + 1];
        grads.bias_c.values[o] = dbias[GATES * o + 2];
        grads.bias_o.values[o] = dbias[GATES * o + 3];
    }
    Ok((geom.scatter(&dx_seq, cin), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params(rng: &mut ChaCha8Rng, c: usize, o: usize, k: usize, scale: f64) -> ClstmParams {
        let mut p = ClstmParams::zeros(c, o, k, k);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
        }
        p
    }

    fn random_volume(rng: &mut ChaCha8Rng, dims: Dims) -> Volume {
        Volume::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn directions_are_distinct() {
        let set: std::collections::HashSet<_> = Direction::ALL.iter().collect();
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_volume(&mut rng, Dims::new(4, 3, 2, 2));
        let p = ClstmParams::zeros(2, 3, 3, 3);
        for dir in Direction::ALL {
            let (h, cache) = sweep_forward(&x, &p, dir).unwrap();
            assert!(h.data().iter().all(|&v| v == 0.0));
            assert!(cache.gate_values(Gate::Forget).all(|v| v == 0.5));
            assert_eq!(cache.depth(), x.dims().extent(dir.axis));
        }
    }

    #[test]
    fn scalar_cell_zero_fixed_point() {
        let x = Volume::zeros(Dims::new(1, 1, 1, 1)).unwrap();
        let mut p = ClstmParams::zeros(1, 1, 1, 1);
        for k in [&mut p.theta_xi, &mut p.theta_xf, &mut p.theta_xc, &mut p.theta_xo] {
            k.weights[0] = 1.0;
        }
        let (h, _) = sweep_forward(&x, &p, Direction::ALL[0]).unwrap();
        assert_eq!(h.data(), &[0.0]);
    }

    #[test]
    fn scalar_cell_by_hand() {
        // one voxel, all weights 1, biases 0, input 0.5
        let x = Volume::filled(Dims::new(1, 1, 1, 1), 0.5).unwrap();
        let mut p = ClstmParams::zeros(1, 1, 1, 1);
        for t in p.tensors_mut().into_iter().take(8) {
            t[0] = 1.0;
        }
        let (h, _) = sweep_forward(&x, &p, Direction::ALL[4]).unwrap();
        let s = 1.0 / (1.0 + (-0.5f64).exp());
        let c = s * 0.5f64.tanh();
        assert!((h.data()[0] - s * c.tanh()).abs() < 1e-15);
    }

    #[test]
    fn inference_matches_training_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_volume(&mut rng, Dims::new(5, 4, 3, 2));
        let p = random_params(&mut rng, 2, 3, 3, 0.5);
        for dir in Direction::ALL {
            let (h, _) = sweep_forward(&x, &p, dir).unwrap();
            assert_eq!(h, sweep_inference(&x, &p, dir).unwrap());
        }
    }

    #[test]
    fn direction_symmetry_under_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_volume(&mut rng, Dims::new(4, 5, 6, 2));
        let p = random_params(&mut rng, 2, 2, 3, 0.5);
        for axis in Axis::ALL {
            let (lhs, _) = sweep_forward(&x.flip(axis), &p, Direction::new(axis, true)).unwrap();
            let (rhs, _) = sweep_forward(&x, &p, Direction::new(axis, false)).unwrap();
            assert_eq!(lhs, rhs.flip(axis));
        }
    }

    #[test]
    fn causality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = Dims::new(4, 5, 6, 1);
        let x = random_volume(&mut rng, dims);
        let p = random_params(&mut rng, 1, 2, 3, 0.5);
        for dir in Direction::ALL {
            let n = dims.extent(dir.axis);
            let (h, _) = sweep_forward(&x, &p, dir).unwrap();
            let k = n / 2;
            let mut y = x.clone();
            // perturb every plane strictly after k in traversal order
            for j in 0..n {
                let later = if dir.positive { j > k } else { j < k };
                if later {
                    let mut pl = y.plane(dir.axis, j).unwrap();
                    pl.data.iter_mut().for_each(|v| *v += 3.0);
                    y.set_plane(dir.axis, j, &pl).unwrap();
                }
            }
            let (h2, _) = sweep_forward(&y, &p, dir).unwrap();
            assert_eq!(h.plane(dir.axis, k).unwrap(), h2.plane(dir.axis, k).unwrap());
            assert_ne!(h, h2);
        }
    }

    #[test]
    fn gate_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_volume(&mut rng, Dims::new(3, 3, 7, 1)).scale(20.0);
        let p = random_params(&mut rng, 1, 2, 3, 2.0);
        let (h, cache) = sweep_forward(&x, &p, Direction::new(Axis::Z, true)).unwrap();
        for g in [Gate::Input, Gate::Forget, Gate::Output] {
            assert!(cache.gate_values(g).all(|v| v > 0.0 && v < 1.0 || v == 1.0 || v == 0.0));
        }
        assert!(cache.gate_values(Gate::Candidate).all(|v| v.abs() <= 1.0));
        assert!(h.data().iter().all(|v| v.abs() <= 1.0));
        for t in 0..cache.depth() {
            assert!(cache.cell_plane(t).iter().all(|c| c.abs() <= (t + 1) as f64));
        }
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_volume(&mut rng, Dims::new(3, 4, 2, 2));
        let p = random_params(&mut rng, 2, 2, 3, 0.5);
        let (h, cache) = sweep_forward(&x, &p, Direction::ALL[3]).unwrap();
        let (dx, dp) = sweep_backward(&cache, &p, &Volume::zeros(h.dims()).unwrap()).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dp.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Volume::zeros(Dims::new(2, 2, 2, 3)).unwrap();
        let p = ClstmParams::zeros(2, 2, 3, 3);
        assert!(sweep_forward(&x, &p, Direction::ALL[0]).is_err());
        let x = Volume::zeros(Dims::new(2, 2, 2, 2)).unwrap();
        let (_, cache) = sweep_forward(&x, &p, Direction::ALL[0]).unwrap();
        assert!(sweep_backward(&cache, &p, &Volume::zeros(Dims::new(2, 2, 2, 3)).unwrap()).is_err());
    }
}
