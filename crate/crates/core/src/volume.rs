//! Dense 4-D volumes and their label counterpart.
//!
//! Element `(x, y, z, c)` of a [`Volume`] lives at offset
//! `x + W·(y + H·(z + D·c))`: each channel is a contiguous `W×H×D` block
//! and each z-slice of a channel is a contiguous `W×H` block.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// The two free axes of a plane orthogonal to `self`, fastest first.
    pub fn plane_axes(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub channels: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize, depth: usize, channels: usize) -> Self {
        Dims {
            width,
            height,
            depth,
            channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.depth == 0 || self.channels == 0 {
            return Err(Error::Dims(format!(
                "all dimensions must be >= 1, got {}x{}x{}x{}",
                self.width, self.height, self.depth, self.channels
            )));
        }
        Ok(())
    }

    /// Spatial voxel count `W·H·D`.
    pub fn voxels(&self) -> usize {
        self.width * self.height * self.depth
    }

    pub fn len(&self) -> usize {
        self.voxels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.width,
            Axis::Y => self.height,
            Axis::Z => self.depth,
        }
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.width, self.height, self.depth]
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Dims { channels, ..self }
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize, c: usize) -> usize {
        x + self.width * (y + self.height * (z + self.depth * c))
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.width, self.height, self.depth, self.channels
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        dims.validate()?;
        Ok(Volume {
            dims,
            data: vec![value; dims.len()],
        })
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::shape(format!(
                "data length {} does not match {} ({} elements)",
                data.len(),
                dims,
                dims.len()
            )));
        }
        Ok(Volume { dims, data })
    }

    /// Builds a volume by evaluating `f(x, y, z, c)` at every element.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for c in 0..dims.channels {
            for z in 0..dims.depth {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        data.push(f(x, y, z, c));
                    }
                }
            }
        }
        Ok(Volume { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize, c: usize) -> f64 {
        self.data[self.dims.offset(x, y, z, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, c: usize, value: f64) {
        let i = self.dims.offset(x, y, z, c);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.voxels();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// The `W×H` block of one z-slice of one channel.
    pub fn slice(&self, z: usize, c: usize) -> &[f64] {
        let n = self.dims.width * self.dims.height;
        let start = self.dims.offset(0, 0, z, c);
        &self.data[start..start + n]
    }

    pub fn slice_mut(&mut self, z: usize, c: usize) -> &mut [f64] {
        let n = self.dims.width * self.dims.height;
        let start = self.dims.offset(0, 0, z, c);
        &mut self.data[start..start + n]
    }

    /// Copies out the plane of voxels whose `axis` coordinate equals `index`.
    pub fn plane(&self, axis: Axis, index: usize) -> Result<Plane> {
        let extent = self.dims.extent(axis);
        if index >= extent {
            return Err(Error::Bounds { index, extent });
        }
        let (a_axis, b_axis) = axis.plane_axes();
        let (na, nb) = (self.dims.extent(a_axis), self.dims.extent(b_axis));
        let mut plane = Plane::zeros(na, nb, self.dims.channels);
        for c in 0..self.dims.channels {
            for b in 0..nb {
                for a in 0..na {
                    let [x, y, z] = place(axis, index, a, b);
                    plane.data[a + na * (b + nb * c)] = self.get(x, y, z, c);
                }
            }
        }
        Ok(plane)
    }

    /// Writes `plane` back at `axis = index`; the inverse of [`Volume::plane`].
    pub fn set_plane(&mut self, axis: Axis, index: usize, plane: &Plane) -> Result<()> {
        let extent = self.dims.extent(axis);
        if index >= extent {
            return Err(Error::Bounds { index, extent });
        }
        let (a_axis, b_axis) = axis.plane_axes();
        let (na, nb) = (self.dims.extent(a_axis), self.dims.extent(b_axis));
        if plane.a != na || plane.b != nb || plane.channels != self.dims.channels {
            return Err(Error::shape(format!(
                "plane {}x{}x{} does not fit a {:?}-plane of {}",
                plane.a, plane.b, plane.channels, axis, self.dims
            )));
        }
        for c in 0..self.dims.channels {
            for b in 0..nb {
                for a in 0..na {
                    let [x, y, z] = place(axis, index, a, b);
                    self.set(x, y, z, c, plane.data[a + na * (b + nb * c)]);
                }
            }
        }
        Ok(())
    }

    /// Mirrors the volume along `axis`: coordinate `k` moves to `extent − 1 − k`.
    pub fn flip(&self, axis: Axis) -> Volume {
        let d = self.dims;
        let mut out = self.clone();
        for c in 0..d.channels {
            for z in 0..d.depth {
                for y in 0..d.height {
                    for x in 0..d.width {
                        let [sx, sy, sz] = flip_coord(d, axis, x, y, z);
                        out.set(x, y, z, c, self.get(sx, sy, sz, c));
                    }
                }
            }
        }
        out
    }

    /// Rotates each z-slice by `angle` radians (counter-clockwise in x/y) about
    /// `((W−1)/2, (H−1)/2)`. Samples falling outside the slice read as zero.
    pub fn rotate_z(&self, angle: f64, interp: Interp) -> Volume {
        let d = self.dims;
        let mut out = Volume {
            dims: d,
            data: vec![0.0; d.len()],
        };
        let map = RotationMap::new(d.width, d.height, angle);
        for c in 0..d.channels {
            for z in 0..d.depth {
                let src = self.slice(z, c);
                let dst = out.slice_mut(z, c);
                for y in 0..d.height {
                    for x in 0..d.width {
                        let (sx, sy) = map.source(x, y);
                        dst[x + d.width * y] = match interp {
                            Interp::Bilinear => bilinear(src, d.width, d.height, sx, sy),
                            Interp::Nearest => nearest(src, d.width, d.height, sx, sy).unwrap_or(0.0),
                        };
                    }
                }
            }
        }
        out
    }

    /// Copies the spatial box `[origin, origin + size)` (all channels).
    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Volume> {
        check_box(self.dims.spatial(), origin, size)?;
        let dims = Dims::new(size[0], size[1], size[2], self.dims.channels);
        Volume::from_fn(dims, |x, y, z, c| {
            self.get(origin[0] + x, origin[1] + y, origin[2] + z, c)
        })
    }

    /// Stacks volumes of identical spatial shape along the channel axis.
    pub fn concat_channels(parts: &[Volume]) -> Result<Volume> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot concatenate zero volumes"))?;
        let spatial = first.dims.spatial();
        let mut channels = 0;
        for p in parts {
            if p.dims.spatial() != spatial {
                return Err(Error::shape(format!(
                    "spatial shape {} differs from {}",
                    p.dims, first.dims
                )));
            }
            channels += p.dims.channels;
        }
        let mut data = Vec::with_capacity(first.dims.voxels() * channels);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Volume::from_vec(first.dims.with_channels(channels), data)
    }

    fn check_same(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("{} vs {}", self.dims, other.dims)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Volume) -> Result<Volume> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Volume) -> Result<Volume> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Volume) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Volume {
        self.map(|v| v * factor)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Volume> {
        self.check_same(other)?;
        Ok(Volume {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Volume) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Volume) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Per-voxel argmax over channels; ties go to the lower class index.
    pub fn argmax(&self) -> LabelVolume {
        let d = self.dims;
        let n = d.voxels();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0;
                let mut best_v = self.data[i];
                for c in 1..d.channels {
                    let v = self.data[i + n * c];
                    if v > best_v {
                        best = c;
                        best_v = v;
                    }
                }
                best as u8
            })
            .collect();
        LabelVolume {
            width: d.width,
            height: d.height,
            depth: d.depth,
            num_classes: d.channels,
            labels,
        }
    }
}

/// Per-voxel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    width: usize,
    height: usize,
    depth: usize,
    num_classes: usize,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(spatial: [usize; 3], num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        let [width, height, depth] = spatial;
        Dims::new(width, height, depth, num_classes).validate()?;
        if num_classes > 256 {
            return Err(Error::Dims(format!(
                "num_classes {num_classes} exceeds the u8 label range"
            )));
        }
        if labels.len() != width * height * depth {
            return Err(Error::shape(format!(
                "label count {} does not match {}x{}x{}",
                labels.len(),
                width,
                height,
                depth
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::shape(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabelVolume {
            width,
            height,
            depth,
            num_classes,
            labels,
        })
    }

    pub fn from_fn(
        spatial: [usize; 3],
        num_classes: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let [w, h, d] = spatial;
        let mut labels = Vec::with_capacity(w * h * d);
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    labels.push(f(x, y, z));
                }
            }
        }
        Self::new(spatial, num_classes, labels)
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.width, self.height, self.depth]
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height, self.depth, self.num_classes)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[x + self.width * (y + self.height * z)]
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// One-hot encoding as a `W×H×D×num_classes` volume.
    pub fn one_hot(&self) -> Volume {
        let dims = self.dims();
        let n = dims.voxels();
        let mut data = vec![0.0; dims.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            data[i + n * l as usize] = 1.0;
        }
        Volume { dims, data }
    }

    pub fn flip(&self, axis: Axis) -> LabelVolume {
        let d = self.dims();
        let mut out = self.clone();
        for z in 0..d.depth {
            for y in 0..d.height {
                for x in 0..d.width {
                    let [sx, sy, sz] = flip_coord(d, axis, x, y, z);
                    out.labels[x + d.width * (y + d.height * z)] = self.get(sx, sy, sz);
                }
            }
        }
        out
    }

    /// Nearest-neighbour rotation of each z-slice; outside samples become class 0.
    pub fn rotate_z(&self, angle: f64) -> LabelVolume {
        let (w, h) = (self.width, self.height);
        let map = RotationMap::new(w, h, angle);
        let mut out = self.clone();
        for z in 0..self.depth {
            let base = w * h * z;
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = map.source(x, y);
                    out.labels[base + x + w * y] = match nearest_index(w, h, sx, sy) {
                        Some(i) => self.labels[base + i],
                        None => 0,
                    };
                }
            }
        }
        out
    }

    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Result<LabelVolume> {
        check_box(self.spatial(), origin, size)?;
        LabelVolume::from_fn(size, self.num_classes, |x, y, z| {
            self.get(origin[0] + x, origin[1] + y, origin[2] + z)
        })
    }
}

/// A single plane of a volume with all its channels, stored `a` fastest,
/// then `b`, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub a: usize,
    pub b: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(a: usize, b: usize, channels: usize) -> Self {
        Plane {
            a,
            b,
            channels,
            data: vec![0.0; a * b * channels],
        }
    }

    pub fn from_vec(a: usize, b: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != a * b * channels {
            return Err(Error::shape(format!(
                "plane data length {} does not match {a}x{b}x{channels}",
                data.len()
            )));
        }
        Ok(Plane {
            a,
            b,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[a + self.a * (b + self.b * c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[a + self.a * (b + self.b * c)] = v;
    }
}

#[inline]
fn place(axis: Axis, index: usize, a: usize, b: usize) -> [usize; 3] {
    match axis {
        Axis::X => [index, a, b],
        Axis::Y => [a, index, b],
        Axis::Z => [a, b, index],
    }
}

#[inline]
fn flip_coord(d: Dims, axis: Axis, x: usize, y: usize, z: usize) -> [usize; 3] {
    match axis {
        Axis::X => [d.width - 1 - x, y, z],
        Axis::Y => [x, d.height - 1 - y, z],
        Axis::Z => [x, y, d.depth - 1 - z],
    }
}

fn check_box(spatial: [usize; 3], origin: [usize; 3], size: [usize; 3]) -> Result<()> {
    for i in 0..3 {
        if size[i] == 0 || origin[i] + size[i] > spatial[i] {
            return Err(Error::shape(format!(
                "box at {origin:?} of size {size:?} does not fit in {spatial:?}"
            )));
        }
    }
    Ok(())
}

/// Inverse mapping from output pixel to source position for a slice rotation.
struct RotationMap {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
}

impl RotationMap {
    fn new(width: usize, height: usize, angle: f64) -> Self {
        RotationMap {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    #[inline]
    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let dx = x as f64 - self.cx;
        let dy = y as f64 - self.cy;
        (
            self.cos * dx + self.sin * dy + self.cx,
            -self.sin * dx + self.cos * dy + self.cy,
        )
    }
}

fn bilinear(src: &[f64], w: usize, h: usize, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let read = |x: f64, y: f64| -> f64 {
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            0.0
        } else {
            src[x as usize + w * y as usize]
        }
    };
    let top = read(x0, y0) * (1.0 - fx) + read(x0 + 1.0, y0) * fx;
    let bottom = read(x0, y0 + 1.0) * (1.0 - fx) + read(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn nearest_index(w: usize, h: usize, sx: f64, sy: f64) -> Option<usize> {
    let x = sx.round();
    let y = sy.round();
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        None
    } else {
        Some(x as usize + w * y as usize)
    }
}

fn nearest(src: &[f64], w: usize, h: usize, sx: f64, sy: f64) -> Option<f64> {
    nearest_index(w, h, sx, sy).map(|i| src[i])
}
