//! Browser bindings for the obbfuse demo page (`www/index.html`).
//!
//! Three interactive operations:
//!
//! * [`explore_iou`]: rotated IoU of two boxes plus their intersection polygon;
//! * [`pattern_rgba`] / [`edge_rgba`]: a synthetic test pattern and its
//!   gradient-magnitude edge map as RGBA pixels for a canvas;
//! * [`fuse_label_text`]: cross-modal fusion of two pasted label files.
//!
//! Every export wraps a plain function returning `Result<_, String>` so the
//! logic can be tested natively.

use std::f64::consts::PI;

use wasm_bindgen::prelude::*;

use obbfuse::annotations::{format_label_set, parse_label_text, AnnotationRecord, ImagePairLabels, Modality};
use obbfuse::cmlf::fuse_pair;
use obbfuse::edgeops::mge;
use obbfuse::geometry::{convex_intersection, quad_from_rbox, rotated_iou, Point, RotatedBox};
use obbfuse::render::edge_map_u16;
use obbfuse::tensor::Tensor3;

pub const MAX_SIDE: usize = 1024;

fn corners_flat(b: &RotatedBox) -> Vec<f64> {
    b.corners().iter().flat_map(|p| [p.x, p.y]).collect()
}

#[wasm_bindgen]
pub struct IouView {
    iou: f64,
    intersection: f64,
    area_a: f64,
    area_b: f64,
    polygon: Vec<f64>,
    corners_a: Vec<f64>,
    corners_b: Vec<f64>,
}

#[wasm_bindgen]
impl IouView {
    #[wasm_bindgen(getter)]
    pub fn iou(&self) -> f64 {
        self.iou
    }

    #[wasm_bindgen(getter)]
    pub fn intersection(&self) -> f64 {
        self.intersection
    }

    #[wasm_bindgen(getter)]
    pub fn area_a(&self) -> f64 {
        self.area_a
    }

    #[wasm_bindgen(getter)]
    pub fn area_b(&self) -> f64 {
        self.area_b
    }

    /// Intersection polygon as `[x0, y0, x1, y1, ...]`, empty if disjoint.
    pub fn polygon(&self) -> Vec<f64> {
        self.polygon.clone()
    }

    pub fn corners_a(&self) -> Vec<f64> {
        self.corners_a.clone()
    }

    pub fn corners_b(&self) -> Vec<f64> {
        self.corners_b.clone()
    }
}

/// Box parameters are `[cx, cy, w, h, angle_degrees]`.
pub fn iou_view(a: [f64; 5], b: [f64; 5]) -> Result<IouView, String> {
    let make = |p: [f64; 5]| RotatedBox::new(p[0], p[1], p[2], p[3], p[4].to_radians()).map_err(|e| e.to_string());
    let (a, b) = (make(a)?, make(b)?);
    let polygon: Vec<Point> = convex_intersection(&quad_from_rbox(&a), &quad_from_rbox(&b))
        .map(|p| p.vertices().to_vec())
        .unwrap_or_default();
    let iou = rotated_iou(&a, &b);
    Ok(IouView {
        iou,
        // Recovered from the IoU so the number shown matches it exactly.
        intersection: iou * (a.area() + b.area()) / (1.0 + iou),
        area_a: a.area(),
        area_b: b.area(),
        polygon: polygon.iter().flat_map(|p| [p.x, p.y]).collect(),
        corners_a: corners_flat(&a),
        corners_b: corners_flat(&b),
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn explore_iou(
    ax: f64,
    ay: f64,
    aw: f64,
    ah: f64,
    a_deg: f64,
    bx: f64,
    by: f64,
    bw: f64,
    bh: f64,
    b_deg: f64,
) -> Result<IouView, JsError> {
    iou_view([ax, ay, aw, ah, a_deg], [bx, by, bw, bh, b_deg]).map_err(|e| JsError::new(&e))
}

pub const PATTERNS: [&str; 4] = ["shapes", "rings", "checker", "bars"];

#[wasm_bindgen]
pub fn pattern_names() -> String {
    PATTERNS.join(",")
}

/// Three-channel test image in `[0, 1]`; `angle_deg` rotates the pattern.
pub fn synth_pattern(name: &str, width: usize, height: usize, angle_deg: f64) -> Result<Tensor3, String> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(format!("size must be between 1 and {MAX_SIDE} pixels"));
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    // Pattern coordinates: pixel centers rotated about the image center.
    let uv = move |y: usize, x: usize| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let img = match name {
        "rings" => Tensor3::from_fn(3, height, width, |ch, y, x| {
            let (u, v) = uv(y, x);
            let r = (u * u + v * v).sqrt();
            0.5 + 0.5 * (r / 5.0 + ch as f64 * 2.0 * PI / 3.0).sin()
        }),
        "checker" => Tensor3::from_fn(3, height, width, |ch, y, x| {
            let (u, v) = uv(y, x);
            let on = ((u / 16.0).floor() + (v / 16.0).floor()).rem_euclid(2.0) == 0.0;
            if on {
                [0.9, 0.8, 0.2][ch]
            } else {
                [0.1, 0.2, 0.5][ch]
            }
        }),
        "bars" => Tensor3::from_fn(3, height, width, |_, y, x| {
            let (u, _) = uv(y, x);
            if (u / 10.0).floor().rem_euclid(2.0) == 0.0 {
                1.0
            } else {
                0.0
            }
        }),
        "shapes" => {
            let side = width.min(height) as f64;
            let boxes = [
                (0.3, 0.3, 0.35, 0.15, 20.0, [0.9, 0.2, 0.2]),
                (0.65, 0.35, 0.25, 0.25, -35.0, [0.2, 0.7, 0.3]),
                (0.45, 0.7, 0.5, 0.12, 60.0, [0.2, 0.4, 0.9]),
            ]
            .map(|(fx, fy, fw, fh, deg, col)| {
                let b = RotatedBox::new(fx * width as f64, fy * height as f64, fw * side, fh * side, (deg + angle_deg).to_radians())
                    .expect("positive size");
                (b, col)
            });
            Tensor3::from_fn(3, height, width, |ch, y, x| {
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                boxes
                    .iter()
                    .rev()
                    .find(|(b, _)| b.contains(p))
                    .map_or(0.08, |(_, col)| col[ch])
            })
        }
        other => return Err(format!("unknown pattern {other:?}; expected one of {}", PATTERNS.join(", "))),
    };
    Ok(img)
}

fn to_rgba(t: &Tensor3) -> Vec<u8> {
    let (h, w) = (t.height(), t.width());
    let mut out = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out.push((t.at(ch, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

pub fn pattern_pixels(name: &str, width: usize, height: usize, angle_deg: f64) -> Result<Vec<u8>, String> {
    synth_pattern(name, width, height, angle_deg).map(|t| to_rgba(&t))
}

/// Normalized edge map as grayscale RGBA.
pub fn edge_pixels(name: &str, width: usize, height: usize, angle_deg: f64, eps: f64) -> Result<Vec<u8>, String> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err("eps must be finite and non-negative".into());
    }
    let img = synth_pattern(name, width, height, angle_deg)?;
    let edges = mge(&img, eps).map_err(|e| e.to_string())?;
    let samples = edge_map_u16(&edges).map_err(|e| e.to_string())?;
    Ok(samples
        .iter()
        .flat_map(|&v| {
            let g = (v >> 8) as u8;
            [g, g, g, 255]
        })
        .collect())
}

#[wasm_bindgen]
pub fn pattern_rgba(name: &str, width: usize, height: usize, angle_deg: f64) -> Result<Vec<u8>, JsError> {
    pattern_pixels(name, width, height, angle_deg).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn edge_rgba(name: &str, width: usize, height: usize, angle_deg: f64, eps: f64) -> Result<Vec<u8>, JsError> {
    edge_pixels(name, width, height, angle_deg, eps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct FusionView {
    m: usize,
    n: usize,
    matched: usize,
    fused_text: String,
    visible: Vec<f64>,
    infrared: Vec<f64>,
    fused: Vec<f64>,
    fused_categories: String,
}

#[wasm_bindgen]
impl FusionView {
    #[wasm_bindgen(getter)]
    pub fn m(&self) -> usize {
        self.m
    }

    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    #[wasm_bindgen(getter)]
    pub fn matched(&self) -> usize {
        self.matched
    }

    /// Fused labels in label-file format.
    #[wasm_bindgen(getter)]
    pub fn fused_text(&self) -> String {
        self.fused_text.clone()
    }

    /// Corners of every visible record, 8 numbers per record.
    pub fn visible(&self) -> Vec<f64> {
        self.visible.clone()
    }

    pub fn infrared(&self) -> Vec<f64> {
        self.infrared.clone()
    }

    pub fn fused(&self) -> Vec<f64> {
        self.fused.clone()
    }

    /// One category per fused record, newline-separated.
    #[wasm_bindgen(getter)]
    pub fn fused_categories(&self) -> String {
        self.fused_categories.clone()
    }
}

fn all_corners(records: &[AnnotationRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| corners_flat(&r.bbox)).collect()
}

pub fn fusion_view(rgb: &str, ir: &str, tau: f64) -> Result<FusionView, String> {
    if !(0.0..=1.0).contains(&tau) {
        return Err("tau must lie in [0, 1]".into());
    }
    let vis = parse_label_text(rgb, "demo", Modality::Visible).map_err(|e| format!("visible labels: {e}"))?;
    let inf = parse_label_text(ir, "demo", Modality::Infrared).map_err(|e| format!("infrared labels: {e}"))?;
    let pair = ImagePairLabels::new(vis, inf).map_err(|e| e.to_string())?;
    let out = fuse_pair(&pair, tau).map_err(|e| e.to_string())?;
    let records = out.fused.records();
    Ok(FusionView {
        m: out.m,
        n: out.n,
        matched: out.matched,
        fused_text: format_label_set(&out.fused.to_label_set()),
        visible: all_corners(pair.visible().records()),
        infrared: all_corners(pair.infrared().records()),
        fused: all_corners(records),
        fused_categories: records.iter().map(|r| r.category.as_str()).collect::<Vec<_>>().join("\n"),
    })
}

#[wasm_bindgen]
pub fn fuse_label_text(rgb: &str, ir: &str, tau: f64) -> Result<FusionView, JsError> {
    fusion_view(rgb, ir, tau).map_err(|e| JsError::new(&e))
}
