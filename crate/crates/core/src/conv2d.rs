//! Stride-1, zero-padded ("same") multi-channel 2-D convolution on planes.
//!
//! Planes are stored channel-planar (`a` fastest, then `b`, then channel).
//! Kernel weights are laid out `[out][in][kh][kw]` with `kh` running along
//! the plane's `b` axis and `kw` along `a`. Every output element is
//! accumulated in the fixed order bias, input channel, kernel row, kernel
//! column, so results do not depend on how output channels are spread over
//! workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Plane;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub kh: usize,
    pub kw: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn zeros(kh: usize, kw: usize, in_channels: usize, out_channels: usize) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "kernel extents must be odd");
        Kernel {
            kh,
            kw,
            in_channels,
            out_channels,
            weights: vec![0.0; kh * kw * in_channels * out_channels],
        }
    }

    /// Single 1.0 at the centre tap for every `i → i` channel pair.
    pub fn identity(kh: usize, kw: usize, channels: usize) -> Self {
        let mut k = Kernel::zeros(kh, kw, channels, channels);
        for c in 0..channels {
            let i = k.index(c, c, kh / 2, kw / 2);
            k.weights[i] = 1.0;
        }
        k
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kh + ky) * self.kw + kx
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[self.index(o, i, ky, kx)]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn per_output(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    /// Weights of output channel `o`, laid out `[in][kh][kw]`.
    pub(crate) fn output_weights(&self, o: usize) -> &[f64] {
        let n = self.per_output();
        &self.weights[o * n..(o + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bias {
    pub values: Vec<f64>,
}

impl Bias {
    pub fn zeros(n: usize) -> Self {
        Bias {
            values: vec![0.0; n],
        }
    }
}

/// Destination range `[lo, hi)` such that `dst + shift` stays inside `[0, n)`,
/// plus the matching source start.
#[inline]
fn shifted_range(n: usize, shift: isize) -> Option<(usize, usize, usize)> {
    let lo = (-shift).max(0);
    let hi = (n as isize - shift).min(n as isize);
    (lo < hi).then(|| (lo as usize, hi as usize, (lo + shift) as usize))
}

/// Adds the response of output channel `o` of `k` to `out` (one `a×b` plane).
///
/// `input` holds `k.in_channels` planes of `a×b`.
pub(crate) fn accumulate_output_channel(
    input: &[f64],
    a: usize,
    b: usize,
    k: &Kernel,
    o: usize,
    out: &mut [f64],
) {
    let plane = a * b;
    let (ph, pw) = ((k.kh / 2) as isize, (k.kw / 2) as isize);
    let w_o = k.output_weights(o);
    for row in 0..b {
        let out_row = &mut out[row * a..(row + 1) * a];
        for ci in 0..k.in_channels {
            let src = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..k.kh {
                let sr = row as isize + ky as isize - ph;
                if sr < 0 || sr >= b as isize {
                    continue;
                }
                let src_row = &src[sr as usize * a..(sr as usize + 1) * a];
                for kx in 0..k.kw {
                    let w = w_o[(ci * k.kh + ky) * k.kw + kx];
                    let shift = kx as isize - pw;
                    let Some((lo, hi, s_lo)) = shifted_range(a, shift) else {
                        continue;
                    };
                    let s_hi = s_lo + (hi - lo);
                    for (d, s) in out_row[lo..hi].iter_mut().zip(&src_row[s_lo..s_hi]) {
                        *d += w * s;
                    }
                }
            }
        }
    }
}

/// Adds the gradient w.r.t. input channel `ci` given output gradients `dout`
/// (`k.out_channels` planes) into `din` (one plane).
pub(crate) fn accumulate_input_channel(
    dout: &[f64],
    a: usize,
    b: usize,
    k: &Kernel,
    ci: usize,
    din: &mut [f64],
) {
    let plane = a * b;
    let (ph, pw) = ((k.kh / 2) as isize, (k.kw / 2) as isize);
    for row in 0..b {
        let din_row = &mut din[row * a..(row + 1) * a];
        for o in 0..k.out_channels {
            let g = &dout[o * plane..(o + 1) * plane];
            for ky in 0..k.kh {
                // forward: out[r] reads in[r + ky - ph], so in[row] feeds out[row - ky + ph]
                let gr = row as isize - ky as isize + ph;
                if gr < 0 || gr >= b as isize {
                    continue;
                }
                let g_row = &g[gr as usize * a..(gr as usize + 1) * a];
                for kx in 0..k.kw {
                    let w = k.get(o, ci, ky, kx);
                    let shift = pw - kx as isize;
                    let Some((lo, hi, s_lo)) = shifted_range(a, shift) else {
                        continue;
                    };
                    let s_hi = s_lo + (hi - lo);
                    for (d, s) in din_row[lo..hi].iter_mut().zip(&g_row[s_lo..s_hi]) {
                        *d += w * s;
                    }
                }
            }
        }
    }
}

/// Adds `∂/∂k[o, ·, ·, ·]` for one output channel into `dw_o` (`[in][kh][kw]`).
///
/// `input` holds `in_channels` planes and `dout_o` the single output plane `o`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_kernel_grad(
    input: &[f64],
    dout_o: &[f64],
    a: usize,
    b: usize,
    kh: usize,
    kw: usize,
    in_channels: usize,
    dw_o: &mut [f64],
) {
    let plane = a * b;
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    for ci in 0..in_channels {
        let src = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..kh {
            for kx in 0..kw {
                let shift = kx as isize - pw;
                let Some((lo, hi, s_lo)) = shifted_range(a, shift) else {
                    continue;
                };
                let s_hi = s_lo + (hi - lo);
                let mut acc = 0.0;
                for row in 0..b {
                    let sr = row as isize + ky as isize - ph;
                    if sr < 0 || sr >= b as isize {
                        continue;
                    }
                    let g_row = &dout_o[row * a + lo..row * a + hi];
                    let s_row = &src[sr as usize * a + s_lo..sr as usize * a + s_hi];
                    acc += g_row.iter().zip(s_row).map(|(g, s)| g * s).sum::<f64>();
                }
                dw_o[(ci * kh + ky) * kw + kx] += acc;
            }
        }
    }
}

fn check_channels(found: usize, expected: usize, what: &str) -> Result<()> {
    if found != expected {
        return Err(Error::shape(format!(
            "{what}: plane has {found} channels, kernel expects {expected}"
        )));
    }
    Ok(())
}

pub fn conv_forward(p: &Plane, k: &Kernel, bias: Option<&Bias>) -> Result<Plane> {
    check_channels(p.channels, k.in_channels, "conv_forward")?;
    if let Some(bias) = bias {
        if bias.values.len() != k.out_channels {
            return Err(Error::shape(format!(
                "bias has {} values for {} output channels",
                bias.values.len(),
                k.out_channels
            )));
        }
    }
    let (a, b) = (p.a, p.b);
    let mut out = Plane::zeros(a, b, k.out_channels);
    out.data
        .par_chunks_mut(a * b)
        .enumerate()
        .for_each(|(o, dst)| {
            if let Some(bias) = bias {
                dst.fill(bias.values[o]);
            }
            accumulate_output_channel(&p.data, a, b, k, o, dst);
        });
    Ok(out)
}

pub fn conv_backward_input(dout: &Plane, k: &Kernel) -> Result<Plane> {
    check_channels(dout.channels, k.out_channels, "conv_backward_input")?;
    let (a, b) = (dout.a, dout.b);
    let mut din = Plane::zeros(a, b, k.in_channels);
    din.data
        .par_chunks_mut(a * b)
        .enumerate()
        .for_each(|(ci, dst)| accumulate_input_channel(&dout.data, a, b, k, ci, dst));
    Ok(din)
}

/// Gradients of `⟨dout, conv_forward(p, k, bias)⟩` w.r.t. the kernel and bias.
pub fn conv_backward_kernel(
    p: &Plane,
    dout: &Plane,
    kh: usize,
    kw: usize,
) -> Result<(Kernel, Bias)> {
    if p.a != dout.a || p.b != dout.b {
        return Err(Error::shape(format!(
            "input plane {}x{} vs gradient plane {}x{}",
            p.a, p.b, dout.a, dout.b
        )));
    }
    let (a, b) = (p.a, p.b);
    let mut dk = Kernel::zeros(kh, kw, p.channels, dout.channels);
    let per = p.channels * kh * kw;
    dk.weights
        .par_chunks_mut(per)
        .enumerate()
        .for_each(|(o, dw)| {
            let g = &dout.data[o * a * b..(o + 1) * a * b];
            accumulate_kernel_grad(&p.data, g, a, b, kh, kw, p.channels, dw);
        });
    let db = Bias {
        values: dout
            .data
            .chunks(a * b)
            .map(|g| g.iter().sum())
            .collect(),
    };
    Ok((dk, db))
}
