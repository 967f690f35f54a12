//! Dense real tensors and the handful of spatial primitives the edge and
//! fusion operators are built from.

use std::fmt;

use crate::error::{Error, Result};

/// A `C x H x W` feature map, row-major by `(c, y, x)`.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor3({}x{}x{})", self.c, self.h, self.w)
    }
}

impl Tensor3 {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!("empty tensor {c}x{h}x{w}")));
        }
        if data.len() != c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {c}x{h}x{w} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("tensor holds non-finite values".into()));
        }
        Ok(Tensor3 { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self::filled(c, h, w, 0.0)
    }

    pub fn filled(c: usize, h: usize, w: usize, v: f64) -> Self {
        assert!(c > 0 && h > 0 && w > 0, "empty tensor {c}x{h}x{w}");
        Tensor3 {
            c,
            h,
            w,
            data: vec![v; c * h * w],
        }
    }

    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(c, h, w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    t.data[(ci * h + y) * w + x] = f(ci, y, x);
                }
            }
        }
        t
    }

    pub fn channels(&self) -> usize {
        self.c
    }
    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }

    /// Value at signed coordinates, zero outside the map.
    #[inline]
    pub fn at_or_zero(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            0.0
        } else {
            self.at(c, y as usize, x as usize)
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.h * self.w;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn expect_same_shape(&self, other: &Tensor3, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        self.expect_same_shape(other, "element-wise op")?;
        Ok(Tensor3 {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Multiplies every channel by a `1 x H x W` map.
    pub fn mul_spatial(&self, map: &Tensor3) -> Result<Tensor3> {
        if map.c != 1 || map.h != self.h || map.w != self.w {
            return Err(Error::ShapeMismatch(format!(
                "spatial map {:?} for tensor {:?}",
                map.shape(),
                self.shape()
            )));
        }
        let plane = self.h * self.w;
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(plane) {
            for (v, &m) in chunk.iter_mut().zip(&map.data) {
                *v *= m;
            }
        }
        Ok(out)
    }

    /// Multiplies channel `c` by `gains[c]`.
    pub fn mul_channels(&self, gains: &[f64]) -> Result<Tensor3> {
        if gains.len() != self.c {
            return Err(Error::ShapeMismatch(format!(
                "{} channel gains for {} channels",
                gains.len(),
                self.c
            )));
        }
        let plane = self.h * self.w;
        let mut out = self.clone();
        for (chunk, &g) in out.data.chunks_mut(plane).zip(gains) {
            chunk.iter_mut().for_each(|v| *v *= g);
        }
        Ok(out)
    }

    /// Stacks channels of `self` then `other`.
    pub fn concat_channels(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.h != other.h || self.w != other.w {
            return Err(Error::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Tensor3 {
            c: self.c + other.c,
            h: self.h,
            w: self.w,
            data,
        })
    }

    /// Picks the given channels, in order.
    pub fn select_channels(&self, channels: &[usize]) -> Tensor3 {
        let mut data = Vec::with_capacity(channels.len() * self.h * self.w);
        for &c in channels {
            data.extend_from_slice(self.channel(c));
        }
        Tensor3 {
            c: channels.len(),
            h: self.h,
            w: self.w,
            data,
        }
    }

    /// Per-pixel mean over channels, as a `1 x H x W` map.
    pub fn channel_mean(&self) -> Tensor3 {
        let plane = self.h * self.w;
        let mut out = vec![0.0; plane];
        for chunk in self.data.chunks(plane) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        let n = self.c as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Tensor3 { c: 1, h: self.h, w: self.w, data: out }
    }

    /// Per-pixel max over channels, as a `1 x H x W` map.
    pub fn channel_max(&self) -> Tensor3 {
        let plane = self.h * self.w;
        let mut out = self.data[..plane].to_vec();
        for chunk in self.data.chunks(plane).skip(1) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                *o = o.max(v);
            }
        }
        Tensor3 { c: 1, h: self.h, w: self.w, data: out }
    }

    /// Global average per channel.
    pub fn spatial_mean(&self) -> Vec<f64> {
        let n = (self.h * self.w) as f64;
        self.data
            .chunks(self.h * self.w)
            .map(|ch| ch.iter().sum::<f64>() / n)
            .collect()
    }

    /// Global max per channel.
    pub fn spatial_max(&self) -> Vec<f64> {
        self.data
            .chunks(self.h * self.w)
            .map(|ch| ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A tensor of rank 1 to 4, used for learned weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::ShapeMismatch(format!("unsupported rank {}", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Element of a rank-4 tensor.
    #[inline]
    pub fn at4(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let [_, db, dc, dd] = [self.dims[0], self.dims[1], self.dims[2], self.dims[3]];
        self.data[((a * db + b) * dc + c) * dd + d]
    }

    pub fn set4(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let [_, db, dc, dd] = [self.dims[0], self.dims[1], self.dims[2], self.dims[3]];
        self.data[((a * db + b) * dc + c) * dd + d] = v;
    }
}

/// Output size of a strided, zero-padded window.
pub fn conv_out_size(input: usize, kernel: usize, padding: usize, stride: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// 2D cross-correlation with zero padding.
///
/// `kernel` is `[C_out, C_in, kH, kW]`.
pub fn conv2d(input: &Tensor3, kernel: &Tensor, padding: usize, stride: usize) -> Result<Tensor3> {
    conv2d_bias(input, kernel, None, padding, stride)
}

/// [`conv2d`] plus an optional per-output-channel bias of length `C_out`.
pub fn conv2d_bias(
    input: &Tensor3,
    kernel: &Tensor,
    bias: Option<&[f64]>,
    padding: usize,
    stride: usize,
) -> Result<Tensor3> {
    let dims = kernel.dims();
    if dims.len() != 4 {
        return Err(Error::ShapeMismatch(format!("conv kernel of rank {}", dims.len())));
    }
    let (c_out, c_in, kh, kw) = (dims[0], dims[1], dims[2], dims[3]);
    if c_in != input.channels() {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {c_in} input channels, got {}",
            input.channels()
        )));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::ShapeMismatch(format!("bias of {} for {c_out} outputs", b.len())));
        }
    }
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = match (
        conv_out_size(h, kh, padding, stride),
        conv_out_size(w, kw, padding, stride),
    ) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "{kh}x{kw} kernel does not fit a {h}x{w} input with padding {padding}"
            )))
        }
    };

    let mut out = vec![0.0; c_out * oh * ow];
    let pad = padding as isize;
    for co in 0..c_out {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..c_in {
            let src = input.channel(ci);
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = kernel.at4(co, ci, ky, kx);
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad;
                            if ix >= 0 && (ix as usize) < w {
                                *o += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor3 { c: c_out, h: oh, w: ow, data: out })
}

/// 2x2 max pooling with stride 2 and no padding.
pub fn max_pool2(input: &Tensor3) -> Result<Tensor3> {
    let (c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::ShapeMismatch(format!("cannot 2x pool a {h}x{w} map")));
    }
    Ok(Tensor3::from_fn(c, oh, ow, |ci, y, x| {
        let (y0, x0) = (2 * y, 2 * x);
        input
            .at(ci, y0, x0)
            .max(input.at(ci, y0, x0 + 1))
            .max(input.at(ci, y0 + 1, x0))
            .max(input.at(ci, y0 + 1, x0 + 1))
    }))
}

/// Bilinear resampling of every channel to `oh x ow`, half-pixel centers,
/// edge-clamped. Channels are never mixed.
pub fn resize_bilinear(input: &Tensor3, oh: usize, ow: usize) -> Result<Tensor3> {
    if oh == 0 || ow == 0 {
        return Err(Error::ShapeMismatch("resize to an empty map".into()));
    }
    let (c, h, w) = input.shape();
    let axis = |o: usize, n_out: usize, n_in: usize| {
        let scale = n_in as f64 / n_out as f64;
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, src - i0 as f64)
    };
    let ys: Vec<_> = (0..oh).map(|o| axis(o, oh, h)).collect();
    let xs: Vec<_> = (0..ow).map(|o| axis(o, ow, w)).collect();
    Ok(Tensor3::from_fn(c, oh, ow, |ci, y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = input.at(ci, y0, x0) * (1.0 - fx) + input.at(ci, y0, x1) * fx;
        let bottom = input.at(ci, y1, x0) * (1.0 - fx) + input.at(ci, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}
