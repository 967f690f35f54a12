//! Edge-feature front end for the infrared branch.
//!
//! [`gp`] applies fixed vertical and horizontal central-difference filters
//! to each channel, [`mge`] turns them into a stabilized gradient
//! magnitude, and [`msfe_forward`] encodes that edge map into a four-level
//! feature pyramid.
//!
//! The fixed difference filters replicate border pixels, so a constant
//! image has zero gradient everywhere. Learned convolutions in the encoder
//! use zero padding.

pub use crate::tensor::conv2d;

use crate::error::{Error, Result};
use crate::tensor::{max_pool2, relu, resize_bilinear, Tensor, Tensor3};
use crate::weights::{SeededInit, WeightBundle};

pub type Kernel3x3 = [[f64; 3]; 3];

/// Vertical difference: `u[y+1, x] - u[y-1, x]`.
pub const K_V: Kernel3x3 = [[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
/// Horizontal difference: `u[y, x+1] - u[y, x-1]`.
pub const K_H: Kernel3x3 = [[0.0, 0.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]];

pub const DEFAULT_EPS: f64 = 1e-6;

/// Applies one 3x3 kernel to every channel independently; same-size output,
/// border pixels replicated.
pub fn filter_channels(u: &Tensor3, k: &Kernel3x3) -> Tensor3 {
    let (c, h, w) = u.shape();
    let clamp = |v: usize, d: usize, n: usize| (v + d).saturating_sub(1).min(n - 1);
    Tensor3::from_fn(c, h, w, |ci, y, x| {
        let mut acc = 0.0;
        for (ky, row) in k.iter().enumerate() {
            for (kx, &wv) in row.iter().enumerate() {
                acc += wv * u.at(ci, clamp(y, ky, h), clamp(x, kx, w));
            }
        }
        acc
    })
}

fn expect_three_channels(u: &Tensor3) -> Result<()> {
    if u.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected a 3-channel image, got {} channels",
            u.channels()
        )));
    }
    Ok(())
}

/// Gradient processor: per-channel `(u * K_v, u * K_h)`.
pub fn gp(u: &Tensor3) -> Result<(Tensor3, Tensor3)> {
    expect_three_channels(u)?;
    Ok((filter_channels(u, &K_V), filter_channels(u, &K_H)))
}

/// Per-pixel `sqrt(v^2 + h^2 + eps)` over the gradient-processor outputs.
pub fn mge(u: &Tensor3, eps: f64) -> Result<Tensor3> {
    let (v, h) = gp(u)?;
    v.zip_map(&h, |a, b| (a * a + b * b + eps).sqrt())
}

/// Replicates a single-channel image to three channels.
pub fn to_three_channels(u: &Tensor3) -> Tensor3 {
    if u.channels() == 3 {
        return u.clone();
    }
    u.select_channels(&[0, 0, 0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidLevel {
    pub stride: usize,
    pub channels: usize,
}

/// Output strides and widths of the edge-feature pyramid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidSpec {
    levels: Vec<PyramidLevel>,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        PyramidSpec {
            levels: [(4, 64), (8, 128), (16, 320), (32, 512)]
                .into_iter()
                .map(|(stride, channels)| PyramidLevel { stride, channels })
                .collect(),
        }
    }
}

impl PyramidSpec {
    /// Strides must be 4, 8, 16, ... and channel counts non-zero.
    pub fn new(levels: Vec<PyramidLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ShapeMismatch("empty pyramid".into()));
        }
        for (k, l) in levels.iter().enumerate() {
            if l.stride != 4 << k || l.channels == 0 {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} has stride {} and {} channels",
                    l.stride, l.channels
                )));
            }
        }
        Ok(PyramidSpec { levels })
    }

    /// The default strides with custom widths.
    pub fn with_channels(channels: &[usize]) -> Result<Self> {
        Self::new(
            channels
                .iter()
                .enumerate()
                .map(|(k, &channels)| PyramidLevel { stride: 4 << k, channels })
                .collect(),
        )
    }

    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }

    fn input_channels(&self, k: usize) -> usize {
        if k == 0 {
            3
        } else {
            self.levels[k - 1].channels
        }
    }
}

/// Names and dims of every MSFE weight for `spec`.
pub fn msfe_weight_shapes(spec: &PyramidSpec) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    for (k, level) in spec.levels().iter().enumerate() {
        let (cin, c) = (spec.input_channels(k), level.channels);
        for (unit, dims) in [("align", vec![c, cin, 1, 1]), ("feat", vec![c, c, 3, 3])] {
            shapes.push((format!("msfe.{k}.{unit}.weight"), dims));
            shapes.push((format!("msfe.{k}.{unit}.scale"), vec![c]));
            shapes.push((format!("msfe.{k}.{unit}.shift"), vec![c]));
        }
    }
    shapes
}

/// A seeded MSFE bundle: conv weights at `1/sqrt(fan_in)`, scales in
/// `[0.5, 1.5)`, shifts in `[-0.1, 0.1)`.
pub fn seeded_msfe_weights(spec: &PyramidSpec, seed: u64) -> WeightBundle {
    let mut init = SeededInit::new(seed);
    let mut bundle = WeightBundle::new();
    for (name, dims) in msfe_weight_shapes(spec) {
        let t = if name.ends_with(".weight") {
            init.conv(&[dims[0], dims[1], dims[2], dims[3]])
        } else if name.ends_with(".scale") {
            init.uniform(&dims, 1.0, 0.5)
        } else {
            init.uniform(&dims, 0.0, 0.1)
        };
        bundle.insert(name, t);
    }
    bundle
}

/// Conv, frozen per-channel affine normalization, ReLU.
pub fn conv_unit(
    x: &Tensor3,
    weight: &Tensor,
    scale: &[f64],
    shift: &[f64],
    padding: usize,
) -> Result<Tensor3> {
    let y = conv2d(x, weight, padding, 1)?;
    let (c, h, w) = y.shape();
    if scale.len() != c || shift.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "normalization of length {}/{} for {c} channels",
            scale.len(),
            shift.len()
        )));
    }
    Ok(Tensor3::from_fn(c, h, w, |ci, yy, xx| {
        relu(scale[ci] * y.at(ci, yy, xx) + shift[ci])
    }))
}

/// The two conv units of level `k`: channel alignment (1x1) then feature
/// learning (3x3, pad 1).
pub fn msfe_level_units(x: &Tensor3, weights: &WeightBundle, spec: &PyramidSpec, k: usize) -> Result<Tensor3> {
    let (cin, c) = (spec.input_channels(k), spec.levels()[k].channels);
    let unit = |x: &Tensor3, name: &str, dims: [usize; 4], pad: usize| -> Result<Tensor3> {
        let w = weights.get(&format!("msfe.{k}.{name}.weight"), &dims)?;
        let s = weights.get(&format!("msfe.{k}.{name}.scale"), &[c])?;
        let b = weights.get(&format!("msfe.{k}.{name}.shift"), &[c])?;
        conv_unit(x, w, s.data(), b.data(), pad)
    };
    let aligned = unit(x, "align", [c, cin, 1, 1], 0)?;
    unit(&aligned, "feat", [c, c, 3, 3], 1)
}

/// Multi-scale edge encoder.
///
/// Level 0 runs its conv units at input resolution and reaches stride 4 by
/// a 2x max-pool followed by a 2x bilinear reduction; each later level runs
/// its units on the previous level's output and max-pools once more.
pub fn msfe_forward(x: &Tensor3, weights: &WeightBundle, spec: &PyramidSpec) -> Result<Vec<Tensor3>> {
    expect_three_channels(x)?;
    let (_, h, w) = x.shape();
    let coarsest = spec.levels().last().expect("non-empty pyramid").stride;
    if h % coarsest != 0 || w % coarsest != 0 {
        return Err(Error::ShapeMismatch(format!(
            "input {h}x{w} is not divisible by stride {coarsest}"
        )));
    }
    let mut outputs: Vec<Tensor3> = Vec::with_capacity(spec.levels().len());
    for k in 0..spec.levels().len() {
        let input = if k == 0 { x } else { &outputs[k - 1] };
        let features = msfe_level_units(input, weights, spec, k)?;
        let pooled = max_pool2(&features)?;
        let level = if k == 0 {
            resize_bilinear(&pooled, pooled.height() / 2, pooled.width() / 2)?
        } else {
            pooled
        };
        outputs.push(level);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(3, h, w, |_, _, _| rng.gen_range(0.0..1.0))
    }

    /// Quarter turn counterclockwise: out[y][x] = in[x][W-1-y].
    fn rot90(t: &Tensor3) -> Tensor3 {
        let (c, h, w) = t.shape();
        Tensor3::from_fn(c, w, h, |ci, y, x| t.at(ci, x, w - 1 - y))
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let u = Tensor3::filled(3, 6, 6, 0.7);
        let (v, h) = gp(&u).unwrap();
        assert!(v.data().iter().chain(h.data()).all(|&g| g == 0.0));
        let m = mge(&u, DEFAULT_EPS).unwrap();
        assert!(m.data().iter().all(|&v| (v - 1e-3).abs() < 1e-12));
    }

    #[test]
    fn horizontal_step_response() {
        // Left half 0, right half 1.
        let u = Tensor3::from_fn(3, 6, 8, |_, _, x| if x >= 4 { 1.0 } else { 0.0 });
        let (v, h) = gp(&u).unwrap();
        for c in 0..3 {
            for y in 0..6 {
                for x in 0..8 {
                    // Direct difference oracle with clamped borders.
                    let right = u.at(c, y, (x + 1).min(7));
                    let left = u.at(c, y, x.saturating_sub(1));
                    assert_eq!(h.at(c, y, x), right - left);
                    assert_eq!(v.at(c, y, x), 0.0);
                }
                assert_eq!(h.at(c, y, 3), 1.0);
                assert_eq!(h.at(c, y, 4), 1.0);
                assert_eq!(h.at(c, y, 2), 0.0);
            }
        }
    }

    #[test]
    fn transpose_swaps_directions() {
        let u = random_image(3, 7, 7);
        let t = Tensor3::from_fn(3, 7, 7, |c, y, x| u.at(c, x, y));
        let (v, h) = gp(&u).unwrap();
        let (vt, ht) = gp(&t).unwrap();
        for c in 0..3 {
            for y in 0..7 {
                for x in 0..7 {
                    assert_eq!(vt.at(c, y, x), h.at(c, x, y));
                    assert_eq!(ht.at(c, y, x), v.at(c, x, y));
                }
            }
        }
    }

    #[test]
    fn single_bright_pixel() {
        let mut u = Tensor3::zeros(3, 5, 5);
        u.set(1, 2, 2, 1.0);
        let m = mge(&u, DEFAULT_EPS).unwrap();
        for y in 0..5isize {
            for x in 0..5isize {
                let dv = u.at_or_zero(1, y + 1, x) - u.at_or_zero(1, y - 1, x);
                let dh = u.at_or_zero(1, y, x + 1) - u.at_or_zero(1, y, x - 1);
                let want = (dv * dv + dh * dh + DEFAULT_EPS).sqrt();
                assert_eq!(m.at(1, y as usize, x as usize), want);
            }
        }
        assert_eq!(m.at(1, 1, 2), (1.0 + DEFAULT_EPS).sqrt());
        assert_eq!(m.at(1, 2, 2), DEFAULT_EPS.sqrt());
        assert_eq!(m.at(0, 1, 2), DEFAULT_EPS.sqrt());
    }

    #[test]
    fn mge_commutes_with_quarter_turns() {
        let u = random_image(4, 6, 9);
        let a = mge(&rot90(&u), DEFAULT_EPS).unwrap();
        let b = rot90(&mge(&u, DEFAULT_EPS).unwrap());
        assert_eq!(a.shape(), b.shape());
        assert!(a.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        assert!(matches!(gp(&Tensor3::zeros(1, 4, 4)), Err(Error::ShapeMismatch(_))));
        assert!(mge(&Tensor3::zeros(4, 4, 4), DEFAULT_EPS).is_err());
    }

    #[test]
    fn pyramid_spec_validation() {
        assert_eq!(PyramidSpec::default().levels().len(), 4);
        assert!(PyramidSpec::with_channels(&[8, 16]).is_ok());
        assert!(PyramidSpec::new(vec![PyramidLevel { stride: 2, channels: 4 }]).is_err());
        assert!(PyramidSpec::with_channels(&[8, 0]).is_err());
    }

    #[test]
    fn msfe_default_shapes() {
        let spec = PyramidSpec::default();
        let weights = seeded_msfe_weights(&spec, 11);
        let x = mge(&random_image(5, 64, 64), DEFAULT_EPS).unwrap();
        let levels = msfe_forward(&x, &weights, &spec).unwrap();
        let shapes: Vec<_> = levels.iter().map(Tensor3::shape).collect();
        assert_eq!(shapes, vec![(64, 16, 16), (128, 8, 8), (320, 4, 4), (512, 2, 2)]);
    }

    #[test]
    fn msfe_preserves_constants_with_identity_weights() {
        let spec = PyramidSpec::with_channels(&[4, 6, 5, 3]).unwrap();
        let mut w = WeightBundle::new();
        for (name, dims) in msfe_weight_shapes(&spec) {
            let mut t = Tensor::zeros(&dims);
            if name.ends_with("align.weight") {
                let fill = 1.0 / dims[1] as f64;
                t.data_mut().iter_mut().for_each(|v| *v = fill);
            } else if name.ends_with("feat.weight") {
                for c in 0..dims[0] {
                    t.set4(c, c, 1, 1, 1.0);
                }
            } else if name.ends_with(".scale") {
                t.data_mut().iter_mut().for_each(|v| *v = 1.0);
            }
            w.insert(name, t);
        }
        let x = Tensor3::filled(3, 32, 64, 0.25);
        for (k, level) in msfe_forward(&x, &w, &spec).unwrap().iter().enumerate() {
            assert_eq!(level.channels(), spec.levels()[k].channels);
            assert!(level.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn msfe_first_level_is_the_stated_composition() {
        let spec = PyramidSpec::with_channels(&[8, 8, 8, 8]).unwrap();
        let weights = seeded_msfe_weights(&spec, 3);
        let x = random_image(6, 32, 32);
        let levels = msfe_forward(&x, &weights, &spec).unwrap();

        // Independent composition from conv2d and explicit loops.
        let unit = |x: &Tensor3, name: &str, pad: usize| {
            let (dims, t) = match name {
                "align" => (vec![8, 3, 1, 1], "align"),
                _ => (vec![8, 8, 3, 3], "feat"),
            };
            let wt = weights.get(&format!("msfe.0.{t}.weight"), &dims).unwrap();
            let s = weights.get(&format!("msfe.0.{t}.scale"), &[8]).unwrap();
            let b = weights.get(&format!("msfe.0.{t}.shift"), &[8]).unwrap();
            let y = conv2d(x, wt, pad, 1).unwrap();
            Tensor3::from_fn(8, y.height(), y.width(), |c, yy, xx| {
                (s.data()[c] * y.at(c, yy, xx) + b.data()[c]).max(0.0)
            })
        };
        let f = unit(&unit(&x, "align", 0), "feat", 1);
        let pooled = Tensor3::from_fn(8, 16, 16, |c, y, x| {
            let mut m = f64::NEG_INFINITY;
            for dy in 0..2 {
                for dx in 0..2 {
                    m = m.max(f.at(c, 2 * y + dy, 2 * x + dx));
                }
            }
            m
        });
        let reduced = Tensor3::from_fn(8, 8, 8, |c, y, x| {
            let (y0, x0) = (2 * y, 2 * x);
            0.25 * (pooled.at(c, y0, x0) + pooled.at(c, y0, x0 + 1) + pooled.at(c, y0 + 1, x0) + pooled.at(c, y0 + 1, x0 + 1))
        });
        assert!(levels[0].max_abs_diff(&reduced) < 1e-8);
    }

    #[test]
    fn msfe_errors() {
        let spec = PyramidSpec::default();
        let weights = seeded_msfe_weights(&spec, 1);
        let x = Tensor3::zeros(3, 48, 64);
        assert!(matches!(msfe_forward(&x, &weights, &spec), Err(Error::ShapeMismatch(_))));
        let x = Tensor3::zeros(3, 32, 32);
        assert!(matches!(
            msfe_forward(&x, &WeightBundle::new(), &spec),
            Err(Error::MissingWeight(_))
        ));
    }
}
