//! Static inspection artifacts: SVG label overlays and 16-bit edge maps.

use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::{ImageBuffer, ImageFormat, Luma};

use crate::annotations::{format_coord, AnnotationRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45",
    "#469990", "#9a6324", "#800000",
];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stroke color of a category. Stable across runs and platforms.
pub fn category_color(category: &str) -> &'static str {
    PALETTE[(fnv1a(category.as_bytes()) % PALETTE.len() as u64) as usize]
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayStyle {
    pub stroke_width: f64,
    pub font_size: f64,
    pub show_labels: bool,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            stroke_width: 2.0,
            font_size: 12.0,
            show_labels: true,
        }
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// SVG overlay for already-encoded PNG bytes of a `width` x `height` image.
pub fn overlay_svg(png: &[u8], width: u32, height: u32, records: &[AnnotationRecord], style: &OverlayStyle) -> String {
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<image x="0" y="0" width="{width}" height="{height}" xlink:href="data:image/png;base64,{}"/>"#,
        BASE64.encode(png)
    );
    for r in records {
        let color = category_color(&r.category);
        let corners = r.bbox.corners();
        let mut d = String::new();
        for (k, p) in corners.iter().enumerate() {
            let _ = write!(d, "{}{} {} ", if k == 0 { "M" } else { "L" }, format_coord(p.x), format_coord(p.y));
        }
        d.push('Z');
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="{}"/>"#,
            format_coord(style.stroke_width)
        );
        if style.show_labels {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}" font-family="sans-serif" font-size="{}">{}</text>"#,
                format_coord(corners[0].x),
                format_coord(corners[0].y - 2.0),
                format_coord(style.font_size),
                xml_escape(&r.category)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads an image and returns PNG bytes with its size. PNG files are passed
/// through untouched; anything else is decoded and re-encoded.
fn png_payload(path: &Path) -> Result<(Vec<u8>, u32, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| image_err(path, e))?;
    if format == ImageFormat::Png {
        let (w, h) = image::ImageReader::with_format(Cursor::new(&bytes), ImageFormat::Png)
            .into_dimensions()
            .map_err(|e| image_err(path, e))?;
        return Ok((bytes, w, h));
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| image_err(path, e))?;
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    Ok((out, img.width(), img.height()))
}

/// SVG with the image embedded and one outlined path per record.
pub fn render_overlay(image_path: impl AsRef<Path>, records: &[AnnotationRecord], style: &OverlayStyle) -> Result<String> {
    let (png, w, h) = png_payload(image_path.as_ref())?;
    Ok(overlay_svg(&png, w, h, records, style))
}

/// Decodes an image into a 3-channel tensor with values in `[0, 1]`.
pub fn load_image_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Ok(Tensor3::from_fn(3, h, w, |c, y, x| f64::from(raw[(y * w + x) * 3 + c]) / 65535.0))
}

/// Normalizes each channel to `[0, 65535]` and collapses channels by
/// pixelwise max. A constant channel maps to all zeros.
pub fn edge_map_u16(x: &Tensor3) -> Result<Vec<u16>> {
    let (c, h, w) = x.shape();
    if c != 1 && c != 3 {
        return Err(Error::ShapeMismatch(format!("edge map needs 1 or 3 channels, got {c}")));
    }
    let mut out = vec![0u16; h * w];
    for ch in 0..c {
        let plane = x.channel(ch);
        let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo || hi.is_nan() || lo.is_nan() {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(plane) {
            let q = ((v - lo) / (hi - lo) * 65535.0).round() as u16;
            *o = (*o).max(q);
        }
    }
    Ok(out)
}

/// Binary 16-bit PGM (P5), samples big-endian.
pub fn pgm16_bytes(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Writes the edge map as 16-bit PGM, or 16-bit grayscale PNG when `path`
/// ends in `.png`.
pub fn export_edge_map(x: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let samples = edge_map_u16(x)?;
    let (w, h) = (x.width(), x.height());
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w as u32, h as u32, samples).expect("sample count matches size");
        buf.save_with_format(path, ImageFormat::Png).map_err(|e| image_err(path, e))
    } else {
        fs::write(path, pgm16_bytes(w, h, &samples)).map_err(|e| Error::io(path, e))
    }
}
