//! Forward pass of the selective multimodal feature fusion block.
//!
//! Given same-shaped visible and infrared feature maps `x1`, `x2`:
//!
//! 1. per-modality offset convs predict 18-channel offset fields;
//! 2. 3x3 deformable convs align each map (`x1~`, `x2~`);
//! 3. a shared CBAM refines both and the results are summed into `SA`;
//! 4. the adaptive weight extractor turns channel-avg/max of
//!    `[x1~; x2~]` into two per-pixel softmax weights `SA1 + SA2 = 1`;
//! 5. output `= (x1~ * SA1 + x2~ * SA2) * SA`, element-wise.
//!
//! Weights come from a [`WeightBundle`]; see [`smff_weight_shapes`] for the
//! names.

use crate::error::{Error, Result};
use crate::tensor::{conv2d_bias, relu, sigmoid, Tensor, Tensor3};
use crate::weights::{SeededInit, WeightBundle};

/// 3x3 taps, one `(dy, dx)` pair each.
pub const OFFSET_CHANNELS: usize = 18;
pub const CBAM_REDUCTION: usize = 16;
pub const CBAM_KERNEL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Visible,
    Infrared,
}

impl Branch {
    fn suffix(self) -> &'static str {
        match self {
            Branch::Visible => "1",
            Branch::Infrared => "2",
        }
    }
}

/// Per-tap sampling displacements. Channel `2k` is `dy` and `2k + 1` is
/// `dx` for tap `k = 3 * ky + kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField(Tensor3);

impl OffsetField {
    pub fn new(t: Tensor3) -> Result<Self> {
        if t.channels() != OFFSET_CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "offset field needs {OFFSET_CHANNELS} channels, got {}",
                t.channels()
            )));
        }
        Ok(OffsetField(t))
    }

    /// The same `(dy, dx)` at every tap and pixel.
    pub fn uniform(h: usize, w: usize, dy: f64, dx: f64) -> Self {
        OffsetField(Tensor3::from_fn(OFFSET_CHANNELS, h, w, |c, _, _| {
            if c % 2 == 0 {
                dy
            } else {
                dx
            }
        }))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }
}

fn cbam_hidden(channels: usize) -> usize {
    (channels / CBAM_REDUCTION).max(1)
}

/// Names and dims of every SMFF weight for `channels`-wide features.
pub fn smff_weight_shapes(channels: usize) -> Vec<(String, Vec<usize>)> {
    let c = channels;
    let hidden = cbam_hidden(c);
    let k = CBAM_KERNEL;
    vec![
        ("smff.offset1.weight".into(), vec![OFFSET_CHANNELS, c, 3, 3]),
        ("smff.offset1.bias".into(), vec![OFFSET_CHANNELS]),
        ("smff.offset2.weight".into(), vec![OFFSET_CHANNELS, c, 3, 3]),
        ("smff.offset2.bias".into(), vec![OFFSET_CHANNELS]),
        ("smff.deform1.weight".into(), vec![c, c, 3, 3]),
        ("smff.deform2.weight".into(), vec![c, c, 3, 3]),
        ("smff.cbam.fc1.weight".into(), vec![hidden, c]),
        ("smff.cbam.fc1.bias".into(), vec![hidden]),
        ("smff.cbam.fc2.weight".into(), vec![c, hidden]),
        ("smff.cbam.fc2.bias".into(), vec![c]),
        ("smff.cbam.spatial.weight".into(), vec![1, 2, k, k]),
        ("smff.cbam.spatial.bias".into(), vec![1]),
        ("smff.awe.weight".into(), vec![2, 2, k, k]),
        ("smff.awe.bias".into(), vec![2]),
    ]
}

/// Seeded SMFF bundle. Offset weights are scaled down by 10 so sampling
/// stays within a pixel or so of the regular grid.
pub fn seeded_smff_weights(channels: usize, seed: u64) -> WeightBundle {
    let mut init = SeededInit::new(seed);
    let mut bundle = WeightBundle::new();
    for (name, dims) in smff_weight_shapes(channels) {
        let fan_in: usize = dims.iter().skip(1).product::<usize>().max(1);
        let mut bound = 1.0 / (fan_in as f64).sqrt();
        if name.starts_with("smff.offset") {
            bound *= 0.1;
        }
        if name.ends_with(".bias") {
            bound = 0.1;
        }
        bundle.insert(name, init.uniform(&dims, 0.0, bound));
    }
    bundle
}

/// Zero-valued bundle of the right shapes, handy for building test fixtures.
pub fn zero_smff_weights(channels: usize) -> WeightBundle {
    let mut bundle = WeightBundle::new();
    for (name, dims) in smff_weight_shapes(channels) {
        bundle.insert(name, Tensor::zeros(&dims));
    }
    bundle
}

fn expect_same_shape(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "modality features differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn offset_field(x: &Tensor3, weights: &WeightBundle, branch: Branch) -> Result<OffsetField> {
    let c = x.channels();
    let s = branch.suffix();
    let w = weights.get(&format!("smff.offset{s}.weight"), &[OFFSET_CHANNELS, c, 3, 3])?;
    let b = weights.get(&format!("smff.offset{s}.bias"), &[OFFSET_CHANNELS])?;
    OffsetField::new(conv2d_bias(x, w, Some(b.data()), 1, 1)?)
}

/// Offset fields for both modalities.
pub fn offset_fields(
    x1: &Tensor3,
    x2: &Tensor3,
    weights: &WeightBundle,
) -> Result<(OffsetField, OffsetField)> {
    expect_same_shape(x1, x2)?;
    Ok((
        offset_field(x1, weights, Branch::Visible)?,
        offset_field(x2, weights, Branch::Infrared)?,
    ))
}

/// Bilinear sample with zeros outside the map.
pub fn bilinear_zero(x: &Tensor3, c: usize, py: f64, px: f64) -> f64 {
    let (y0, x0) = (py.floor(), px.floor());
    let (fy, fx) = (py - y0, px - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let v00 = x.at_or_zero(c, y0, x0);
    let v01 = x.at_or_zero(c, y0, x0 + 1);
    let v10 = x.at_or_zero(c, y0 + 1, x0);
    let v11 = x.at_or_zero(c, y0 + 1, x0 + 1);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
}

/// 3x3 deformable convolution, stride 1, same-size output, no bias.
///
/// Tap `(ky, kx)` at output `p` reads `x` at
/// `p + (ky - 1, kx - 1) + offset_k(p)` by bilinear interpolation.
pub fn deform_conv2d(x: &Tensor3, offsets: &OffsetField, kernel: &Tensor) -> Result<Tensor3> {
    let (c_in, h, w) = x.shape();
    let off = offsets.tensor();
    if off.height() != h || off.width() != w {
        return Err(Error::ShapeMismatch(format!(
            "offsets {:?} for features {:?}",
            off.shape(),
            x.shape()
        )));
    }
    let d = kernel.dims();
    if d.len() != 4 || d[1] != c_in || d[2] != 3 || d[3] != 3 {
        return Err(Error::ShapeMismatch(format!(
            "deformable kernel {d:?} for {c_in} input channels"
        )));
    }
    let c_out = d[0];

    // Sampled columns: [c_in][tap][y][x].
    let plane = h * w;
    let mut cols = vec![0.0; c_in * 9 * plane];
    for ci in 0..c_in {
        for tap in 0..9 {
            let (ky, kx) = ((tap / 3) as f64 - 1.0, (tap % 3) as f64 - 1.0);
            let base = (ci * 9 + tap) * plane;
            for y in 0..h {
                for xx in 0..w {
                    let dy = off.at(2 * tap, y, xx);
                    let dx = off.at(2 * tap + 1, y, xx);
                    cols[base + y * w + xx] =
                        bilinear_zero(x, ci, y as f64 + ky + dy, xx as f64 + kx + dx);
                }
            }
        }
    }

    let mut out = vec![0.0; c_out * plane];
    for co in 0..c_out {
        let dst = &mut out[co * plane..(co + 1) * plane];
        for ci in 0..c_in {
            for tap in 0..9 {
                let wv = kernel.at4(co, ci, tap / 3, tap % 3);
                let src = &cols[(ci * 9 + tap) * plane..(ci * 9 + tap + 1) * plane];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += wv * s;
                }
            }
        }
    }
    Tensor3::new(c_out, h, w, out)
}

/// Aligns one modality with its deformable kernel.
pub fn deformable_sample(
    x: &Tensor3,
    offsets: &OffsetField,
    weights: &WeightBundle,
    branch: Branch,
) -> Result<Tensor3> {
    let c = x.channels();
    let k = weights.get(&format!("smff.deform{}.weight", branch.suffix()), &[c, c, 3, 3])?;
    deform_conv2d(x, offsets, k)
}

fn dense(v: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (rows, cols) = (w.dims()[0], w.dims()[1]);
    (0..rows)
        .map(|r| {
            let row = &w.data()[r * cols..(r + 1) * cols];
            row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + b.data()[r]
        })
        .collect()
}

/// Channel gates `sigmoid(mlp(avg) + mlp(max))`.
pub fn cbam_channel_gates(x: &Tensor3, weights: &WeightBundle) -> Result<Vec<f64>> {
    let c = x.channels();
    let hidden = cbam_hidden(c);
    let w1 = weights.get("smff.cbam.fc1.weight", &[hidden, c])?;
    let b1 = weights.get("smff.cbam.fc1.bias", &[hidden])?;
    let w2 = weights.get("smff.cbam.fc2.weight", &[c, hidden])?;
    let b2 = weights.get("smff.cbam.fc2.bias", &[c])?;
    let mlp = |v: &[f64]| {
        let hid: Vec<f64> = dense(v, w1, b1).into_iter().map(relu).collect();
        dense(&hid, w2, b2)
    };
    let a = mlp(&x.spatial_mean());
    let m = mlp(&x.spatial_max());
    Ok(a.iter().zip(&m).map(|(p, q)| sigmoid(p + q)).collect())
}

/// Spatial gate `sigmoid(conv7x7([mean_c; max_c]))`, `1 x H x W`.
pub fn cbam_spatial_gate(x: &Tensor3, weights: &WeightBundle) -> Result<Tensor3> {
    let k = CBAM_KERNEL;
    let w = weights.get("smff.cbam.spatial.weight", &[1, 2, k, k])?;
    let b = weights.get("smff.cbam.spatial.bias", &[1])?;
    let pooled = x.channel_mean().concat_channels(&x.channel_max())?;
    Ok(conv2d_bias(&pooled, w, Some(b.data()), k / 2, 1)?.map(sigmoid))
}

/// CBAM: channel attention, then spatial attention on the result.
pub fn cbam_forward(x: &Tensor3, weights: &WeightBundle) -> Result<Tensor3> {
    let refined = x.mul_channels(&cbam_channel_gates(x, weights)?)?;
    let gate = cbam_spatial_gate(&refined, weights)?;
    refined.mul_spatial(&gate)
}

/// `SA = cbam(x1~) + cbam(x2~)`.
pub fn fusion_attention(x1t: &Tensor3, x2t: &Tensor3, weights: &WeightBundle) -> Result<Tensor3> {
    cbam_forward(x1t, weights)?.add(&cbam_forward(x2t, weights)?)
}

/// Adaptive weight extractor: per-pixel softmax over a 2-to-2 7x7 conv of
/// the channel-wise mean and max of `[x1~; x2~]`. Returns `(SA1, SA2)`,
/// each `1 x H x W`.
pub fn awe_forward(x1t: &Tensor3, x2t: &Tensor3, weights: &WeightBundle) -> Result<(Tensor3, Tensor3)> {
    expect_same_shape(x1t, x2t)?;
    let k = CBAM_KERNEL;
    let w = weights.get("smff.awe.weight", &[2, 2, k, k])?;
    let b = weights.get("smff.awe.bias", &[2])?;
    let m = x1t.concat_channels(x2t)?;
    let a = m.channel_mean().concat_channels(&m.channel_max())?;
    let logits = conv2d_bias(&a, w, Some(b.data()), k / 2, 1)?;
    let (l1, l2) = (logits.select_channels(&[0]), logits.select_channels(&[1]));
    let sa1 = l1.zip_map(&l2, |p, q| {
        let top = p.max(q);
        let (ep, eq) = ((p - top).exp(), (q - top).exp());
        ep / (ep + eq)
    })?;
    let sa2 = l1.zip_map(&l2, |p, q| {
        let top = p.max(q);
        let (ep, eq) = ((p - top).exp(), (q - top).exp());
        eq / (ep + eq)
    })?;
    Ok((sa1, sa2))
}

/// `(x1~ * SA1 + x2~ * SA2) * SA`, with `SA1`/`SA2` broadcast over channels.
pub fn combine(
    x1t: &Tensor3,
    x2t: &Tensor3,
    sa: &Tensor3,
    sa1: &Tensor3,
    sa2: &Tensor3,
) -> Result<Tensor3> {
    expect_same_shape(x1t, x2t)?;
    let mixed = x1t.mul_spatial(sa1)?.add(&x2t.mul_spatial(sa2)?)?;
    mixed.mul(sa)
}

/// Every intermediate of one fusion pass.
#[derive(Debug, Clone)]
pub struct SmffStages {
    pub offsets1: OffsetField,
    pub offsets2: OffsetField,
    pub aligned1: Tensor3,
    pub aligned2: Tensor3,
    pub sa: Tensor3,
    pub sa1: Tensor3,
    pub sa2: Tensor3,
    pub fused: Tensor3,
}

pub fn smff_stages(x1: &Tensor3, x2: &Tensor3, weights: &WeightBundle) -> Result<SmffStages> {
    let (offsets1, offsets2) = offset_fields(x1, x2, weights)?;
    let aligned1 = deformable_sample(x1, &offsets1, weights, Branch::Visible)?;
    let aligned2 = deformable_sample(x2, &offsets2, weights, Branch::Infrared)?;
    let sa = fusion_attention(&aligned1, &aligned2, weights)?;
    let (sa1, sa2) = awe_forward(&aligned1, &aligned2, weights)?;
    let fused = combine(&aligned1, &aligned2, &sa, &sa1, &sa2)?;
    Ok(SmffStages {
        offsets1,
        offsets2,
        aligned1,
        aligned2,
        sa,
        sa1,
        sa2,
        fused,
    })
}

/// Fuses two same-shaped modality feature maps.
pub fn smff_fuse(x1: &Tensor3, x2: &Tensor3, weights: &WeightBundle) -> Result<Tensor3> {
    Ok(smff_stages(x1, x2, weights)?.fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv2d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, c: usize, h: usize, w: usize) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn center_identity(c: usize) -> Tensor {
        let mut k = Tensor::zeros(&[c, c, 3, 3]);
        for i in 0..c {
            k.set4(i, i, 1, 1, 1.0);
        }
        k
    }

    #[test]
    fn zero_weights_give_zero_offsets() {
        let w = zero_smff_weights(4);
        let x = random(1, 4, 5, 6);
        let (o1, o2) = offset_fields(&x, &x, &w).unwrap();
        assert!(o1.tensor().data().iter().chain(o2.tensor().data()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_gives_bias_offsets() {
        let mut w = seeded_smff_weights(4, 9);
        let bias = w.get("smff.offset1.bias", &[18]).unwrap().clone();
        let x = Tensor3::zeros(4, 5, 6);
        let o = offset_field(&x, &w, Branch::Visible).unwrap();
        for c in 0..18 {
            assert!(o.tensor().channel(c).iter().all(|&v| v == bias.data()[c]));
        }
        w.get_mut("smff.offset2.bias").unwrap().data_mut()[0] = 5.0;
        let o2 = offset_field(&x, &w, Branch::Infrared).unwrap();
        assert!(o2.tensor().channel(0).iter().all(|&v| v == 5.0));
    }

    #[test]
    fn offsets_match_plain_conv() {
        let w = seeded_smff_weights(4, 2);
        let x = random(3, 4, 7, 5);
        let o = offset_field(&x, &w, Branch::Infrared).unwrap();
        let k = w.get("smff.offset2.weight", &[18, 4, 3, 3]).unwrap();
        let b = w.get("smff.offset2.bias", &[18]).unwrap();
        let reference = conv2d(&x, k, 1, 1).unwrap();
        let reference = Tensor3::from_fn(18, 7, 5, |c, y, xx| reference.at(c, y, xx) + b.data()[c]);
        assert!(o.tensor().max_abs_diff(&reference) < 1e-10);
    }

    #[test]
    fn zero_offsets_reduce_to_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..5 {
            let x = random(trial, 3, 6, 7);
            let k = Tensor::new(vec![5, 3, 3, 3], (0..135).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let got = deform_conv2d(&x, &OffsetField::uniform(6, 7, 0.0, 0.0), &k).unwrap();
            let want = conv2d(&x, &k, 1, 1).unwrap();
            assert!(got.max_abs_diff(&want) <= 1e-12);
        }
    }

    #[test]
    fn integer_offset_shifts_left() {
        let x = random(5, 2, 5, 6);
        let y = deform_conv2d(&x, &OffsetField::uniform(5, 6, 0.0, 1.0), &center_identity(2)).unwrap();
        for c in 0..2 {
            for r in 0..5 {
                for col in 0..5 {
                    assert_eq!(y.at(c, r, col), x.at(c, r, col + 1));
                }
                // Past the right edge the sample is zero.
                assert_eq!(y.at(c, r, 5), 0.0);
            }
        }
    }

    #[test]
    fn half_pixel_offset_blends_neighbours() {
        let x = random(6, 1, 4, 5);
        let y = deform_conv2d(&x, &OffsetField::uniform(4, 5, 0.0, 0.5), &center_identity(1)).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let want = 0.5 * (x.at(0, r, col) + x.at(0, r, col + 1));
                assert!((y.at(0, r, col) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_cbam_weights_quarter_the_input() {
        let w = zero_smff_weights(8);
        let x = random(7, 8, 6, 6);
        let y = cbam_forward(&x, &w).unwrap();
        let want = x.map(|v| 0.25 * v);
        assert!(y.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn constant_channels_pool_identically() {
        let x = Tensor3::from_fn(4, 3, 3, |c, _, _| c as f64 - 1.5);
        assert_eq!(x.spatial_mean(), x.spatial_max());
    }

    #[test]
    fn cbam_matches_step_by_step_reference() {
        let c = 32;
        let w = seeded_smff_weights(c, 21);
        let x = random(8, c, 6, 7);
        let got = cbam_forward(&x, &w).unwrap();

        let fc1 = w.get("smff.cbam.fc1.weight", &[2, c]).unwrap();
        let b1 = w.get("smff.cbam.fc1.bias", &[2]).unwrap();
        let fc2 = w.get("smff.cbam.fc2.weight", &[c, 2]).unwrap();
        let b2 = w.get("smff.cbam.fc2.bias", &[c]).unwrap();
        let mlp = |v: &[f64]| -> Vec<f64> {
            let hid: Vec<f64> = (0..2)
                .map(|r| {
                    let row = &fc1.data()[r * c..(r + 1) * c];
                    let s: f64 = b1.data()[r] + row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                    s.max(0.0)
                })
                .collect();
            (0..c)
                .map(|r| {
                    b2.data()[r] + fc2.data()[r * 2] * hid[0] + fc2.data()[r * 2 + 1] * hid[1]
                })
                .collect()
        };
        let (h, wd) = (6, 7);
        let mut avg = vec![0.0; c];
        let mut mx = vec![f64::NEG_INFINITY; c];
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..wd {
                    avg[ch] += x.at(ch, y, xx) / (h * wd) as f64;
                    mx[ch] = mx[ch].max(x.at(ch, y, xx));
                }
            }
        }
        let (ma, mm) = (mlp(&avg), mlp(&mx));
        let gate: Vec<f64> = (0..c).map(|i| 1.0 / (1.0 + (-(ma[i] + mm[i])).exp())).collect();
        let xc = Tensor3::from_fn(c, h, wd, |ch, y, xx| x.at(ch, y, xx) * gate[ch]);
        let sk = w.get("smff.cbam.spatial.weight", &[1, 2, 7, 7]).unwrap();
        let sb = w.get("smff.cbam.spatial.bias", &[1]).unwrap().data()[0];
        let want = Tensor3::from_fn(c, h, wd, |ch, y, xx| {
            let mut s = sb;
            for ky in 0..7isize {
                for kx in 0..7isize {
                    let (yy, xq) = (y as isize + ky - 3, xx as isize + kx - 3);
                    if yy < 0 || xq < 0 || yy >= h as isize || xq >= wd as isize {
                        continue;
                    }
                    let vals: Vec<f64> = (0..c).map(|k| xc.at(k, yy as usize, xq as usize)).collect();
                    let mean = vals.iter().sum::<f64>() / c as f64;
                    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    s += sk.at4(0, 0, ky as usize, kx as usize) * mean
                        + sk.at4(0, 1, ky as usize, kx as usize) * max;
                }
            }
            xc.at(ch, y, xx) / (1.0 + (-s).exp())
        });
        assert!(got.max_abs_diff(&want) < 1e-8);
    }

    #[test]
    fn awe_weights_sum_to_one() {
        let w = seeded_smff_weights(6, 5);
        let (a, b) = (random(9, 6, 5, 5), random(10, 6, 5, 5));
        let (sa1, sa2) = awe_forward(&a, &b, &w).unwrap();
        assert_eq!(sa1.shape(), (1, 5, 5));
        for (p, q) in sa1.data().iter().zip(sa2.data()) {
            assert!((p + q - 1.0).abs() <= 1e-12);
        }
        let z = zero_smff_weights(6);
        let (z1, z2) = awe_forward(&a, &b, &z).unwrap();
        assert!(z1.data().iter().chain(z2.data()).all(|&v| v == 0.5));
    }

    #[test]
    fn awe_matches_step_by_step_reference() {
        let w = seeded_smff_weights(5, 17);
        let (a, b) = (random(20, 5, 6, 5), random(21, 5, 6, 5));
        let (sa1, sa2) = awe_forward(&a, &b, &w).unwrap();
        let k = w.get("smff.awe.weight", &[2, 2, 7, 7]).unwrap();
        let bias = w.get("smff.awe.bias", &[2]).unwrap();
        let pooled = |y: usize, x: usize| {
            let vals: Vec<f64> = (0..5).map(|c| a.at(c, y, x)).chain((0..5).map(|c| b.at(c, y, x))).collect();
            let mean = vals.iter().sum::<f64>() / 10.0;
            [mean, vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)]
        };
        for y in 0..6 {
            for x in 0..5 {
                let mut logits = [bias.data()[0], bias.data()[1]];
                for (o, logit) in logits.iter_mut().enumerate() {
                    for ky in 0..7 {
                        for kx in 0..7 {
                            let (yy, xx) = (y as isize + ky as isize - 3, x as isize + kx as isize - 3);
                            if yy < 0 || xx < 0 || yy >= 6 || xx >= 5 {
                                continue;
                            }
                            let p = pooled(yy as usize, xx as usize);
                            *logit += k.at4(o, 0, ky, kx) * p[0] + k.at4(o, 1, ky, kx) * p[1];
                        }
                    }
                }
                let want1 = 1.0 / (1.0 + (logits[1] - logits[0]).exp());
                assert!((sa1.at(0, y, x) - want1).abs() < 1e-8);
                assert!((sa2.at(0, y, x) - (1.0 - want1)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn awe_symmetric_weights_on_equal_inputs() {
        let mut w = seeded_smff_weights(4, 6);
        let t = w.get("smff.awe.weight", &[2, 2, 7, 7]).unwrap().clone();
        let mut sym = t.clone();
        sym.data_mut()[98..].copy_from_slice(&t.data()[..98]);
        w.insert("smff.awe.weight", sym);
        w.insert("smff.awe.bias", Tensor::new(vec![2], vec![0.3, 0.3]).unwrap());
        let x = random(11, 4, 6, 6);
        let (sa1, sa2) = awe_forward(&x, &x, &w).unwrap();
        assert_eq!(sa1, sa2);
    }

    #[test]
    fn combine_degenerate_weights_return_first_input() {
        let (x1, x2) = (random(12, 3, 4, 4), random(13, 3, 4, 4));
        let ones = Tensor3::filled(3, 4, 4, 1.0);
        let one = Tensor3::filled(1, 4, 4, 1.0);
        let zero = Tensor3::zeros(1, 4, 4);
        assert_eq!(combine(&x1, &x2, &ones, &one, &zero).unwrap(), x1);
    }

    #[test]
    fn combine_convex_weights_on_equal_inputs() {
        let x = random(14, 3, 4, 4);
        let ones = Tensor3::filled(3, 4, 4, 1.0);
        let w = random(15, 1, 4, 4).map(|v| 0.5 + 0.4 * v);
        let rest = w.map(|v| 1.0 - v);
        let out = combine(&x, &x, &ones, &w, &rest).unwrap();
        assert!(out.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn saturated_awe_bias_selects_visible_branch() {
        let c = 4;
        let mut w = zero_smff_weights(c);
        w.insert("smff.deform1.weight", center_identity(c));
        w.insert("smff.deform2.weight", center_identity(c));
        w.insert("smff.awe.bias", Tensor::new(vec![2], vec![1000.0, -1000.0]).unwrap());
        let (x1, x2) = (random(16, c, 5, 5), random(17, c, 5, 5));
        let st = smff_stages(&x1, &x2, &w).unwrap();
        assert_eq!(st.aligned1, x1);
        assert!(st.sa1.data().iter().all(|&v| v == 1.0));
        assert!(st.sa2.data().iter().all(|&v| v == 0.0));
        // Zero CBAM weights: SA = 0.25 * (x1 + x2).
        let expected = Tensor3::from_fn(c, 5, 5, |ch, y, x| {
            x1.at(ch, y, x) * (0.25 * x1.at(ch, y, x) + 0.25 * x2.at(ch, y, x))
        });
        assert!(st.fused.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn fuse_preserves_shape_and_matches_stages() {
        let w = seeded_smff_weights(16, 33);
        let (x1, x2) = (random(18, 16, 8, 9), random(19, 16, 8, 9));
        let fused = smff_fuse(&x1, &x2, &w).unwrap();
        assert_eq!(fused.shape(), x1.shape());
        let (o1, o2) = offset_fields(&x1, &x2, &w).unwrap();
        let a1 = deformable_sample(&x1, &o1, &w, Branch::Visible).unwrap();
        let a2 = deformable_sample(&x2, &o2, &w, Branch::Infrared).unwrap();
        let sa = cbam_forward(&a1, &w).unwrap().add(&cbam_forward(&a2, &w).unwrap()).unwrap();
        let (s1, s2) = awe_forward(&a1, &a2, &w).unwrap();
        let manual = a1.mul_spatial(&s1).unwrap().add(&a2.mul_spatial(&s2).unwrap()).unwrap().mul(&sa).unwrap();
        assert_eq!(fused, manual);
    }

    #[test]
    fn shape_and_weight_errors() {
        let w = seeded_smff_weights(4, 1);
        assert!(matches!(
            smff_fuse(&Tensor3::zeros(4, 4, 4), &Tensor3::zeros(4, 4, 5), &w),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            smff_fuse(&Tensor3::zeros(8, 4, 4), &Tensor3::zeros(8, 4, 4), &w),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            smff_fuse(&Tensor3::zeros(4, 4, 4), &Tensor3::zeros(4, 4, 4), &WeightBundle::new()),
            Err(Error::MissingWeight(_))
        ));
        assert!(OffsetField::new(Tensor3::zeros(9, 2, 2)).is_err());
    }
}
