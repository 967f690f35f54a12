#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use obbfuse::annotations::{write_label_file, AnnotationRecord, Modality, ModalityLabelSet};
use obbfuse::eval::DetectionRecord;
use obbfuse::geometry::RotatedBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CATEGORIES: [&str; 5] = ["car", "truck", "bus", "van", "freight_car"];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_obbfuse")
}

pub fn obbfuse(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("OBBFUSE_THREADS", n.to_string()),
        None => cmd.env_remove("OBBFUSE_THREADS"),
    };
    cmd.output().expect("spawn obbfuse")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Expected per-image numbers of the synthetic fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureCounts {
    pub m: usize,
    pub n: usize,
    pub matched: usize,
}

pub struct Fixture {
    pub root: PathBuf,
    pub rgb: PathBuf,
    pub ir: PathBuf,
    pub dets: PathBuf,
    pub images: PathBuf,
    pub ids: Vec<String>,
    pub counts: Vec<FixtureCounts>,
}

fn record(b: RotatedBox, cat: &str, m: Modality) -> AnnotationRecord {
    AnnotationRecord::new(b, cat, 0, m).unwrap()
}

fn det_line(d: &DetectionRecord) -> String {
    let mut s = String::new();
    for c in d.bbox.corners() {
        s.push_str(&format!("{:.4} {:.4} ", c.x, c.y));
    }
    format!("{s}{} {:.4}\n", d.category, d.score)
}

/// Writes a paired visible/infrared dataset of `images` 96x96 scenes with a
/// known match structure: `matched` objects appear in both modalities with
/// the infrared copy nudged by under a pixel, the rest are modality-only and
/// placed on a grid so they never overlap anything else.
pub fn write_fixture(root: &Path, images: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = ["rgb", "ir", "dets", "images"].map(|d| {
        let p = root.join(d);
        fs::create_dir_all(&p).unwrap();
        p
    });
    let mut ids = Vec::new();
    let mut counts = Vec::new();
    for k in 0..images {
        let id = format!("{:05}", k + 1);
        // 4x4 grid of 24 px cells; each object owns one cell.
        let mut cells: Vec<usize> = (0..16).collect();
        for i in (1..cells.len()).rev() {
            cells.swap(i, rng.gen_range(0..=i));
        }
        let matched = rng.gen_range(0..=4);
        let only_rgb = rng.gen_range(0..=3);
        let only_ir = rng.gen_range(0..=3);
        let mut cell = cells.into_iter();
        let mut next_box = |rng: &mut ChaCha8Rng| {
            let c = cell.next().unwrap();
            let (cx, cy) = (12.0 + 24.0 * (c % 4) as f64, 12.0 + 24.0 * (c / 4) as f64);
            RotatedBox::new(cx, cy, rng.gen_range(8.0..16.0), rng.gen_range(4.0..8.0), rng.gen_range(-1.5..1.5)).unwrap()
        };

        let mut vis = ModalityLabelSet::new(&*id, Modality::Visible);
        let mut inf = ModalityLabelSet::new(&*id, Modality::Infrared);
        let mut dets = Vec::new();
        for _ in 0..matched {
            let b = next_box(&mut rng);
            let shifted = b.transformed(0.0, rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let cat = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            let ir_cat = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            vis.push(record(b, cat, Modality::Visible)).unwrap();
            inf.push(record(shifted, ir_cat, Modality::Infrared)).unwrap();
            dets.push(DetectionRecord::new(&*id, shifted.transformed(0.0, 0.5, 0.0), cat, rng.gen_range(0.3..1.0)).unwrap());
        }
        for _ in 0..only_rgb {
            let b = next_box(&mut rng);
            let cat = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            vis.push(record(b, cat, Modality::Visible)).unwrap();
            if rng.gen_bool(0.5) {
                dets.push(DetectionRecord::new(&*id, b, cat, rng.gen_range(0.0..1.0)).unwrap());
            }
        }
        for _ in 0..only_ir {
            let b = next_box(&mut rng);
            let cat = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            inf.push(record(b, cat, Modality::Infrared)).unwrap();
        }
        // One false positive per image.
        let fp = next_box(&mut rng);
        dets.push(DetectionRecord::new(&*id, fp, "car", rng.gen_range(0.0..0.5)).unwrap());

        write_label_file(&vis, dirs[0].join(format!("{id}.txt"))).unwrap();
        write_label_file(&inf, dirs[1].join(format!("{id}.txt"))).unwrap();
        let text: String = dets.iter().map(det_line).collect();
        fs::write(dirs[2].join(format!("{id}.txt")), text).unwrap();
        let shade = (k * 20) as u8;
        let img = RgbImage::from_fn(96, 96, |x, y| Rgb([shade, (x * 2) as u8, (y * 2) as u8]));
        img.save(dirs[3].join(format!("{id}.png"))).unwrap();

        counts.push(FixtureCounts {
            m: matched + only_rgb,
            n: matched + only_ir,
            matched,
        });
        ids.push(id);
    }
    let [rgb, ir, dets, images] = dirs;
    Fixture {
        root: root.to_path_buf(),
        rgb,
        ir,
        dets,
        images,
        ids,
        counts,
    }
}

/// Every file under `dir`, as (relative path, bytes), sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
