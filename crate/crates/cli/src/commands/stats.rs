use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rayon::prelude::*;

use obbfuse::annotations::{list_label_files, read_label_file, AnnotationRecord, Modality};
use obbfuse::geometry::{normalize_angle, RotatedBox};

use crate::{require_dir, Status};

pub const ANGLE_BINS: usize = 16;
pub const QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    pub files: usize,
    pub counts: BTreeMap<String, usize>,
    /// Quantiles of `sqrt(w * h)` at [`QUANTILES`]; `None` without records.
    pub size_quantiles: Option<[f64; 5]>,
    pub angle_histogram: [usize; ANGLE_BINS],
}

/// Orientation of the long side in `[-pi/2, pi/2)`. Unlike the stored angle
/// this does not depend on which side is called the width.
pub fn long_side_angle(b: &RotatedBox) -> f64 {
    if b.w() >= b.h() {
        b.angle()
    } else {
        normalize_angle(b.angle() + FRAC_PI_2)
    }
}

/// Histogram bin of an angle in `[-pi/2, pi/2)`.
pub fn angle_bin(angle: f64) -> usize {
    let t = (angle + FRAC_PI_2) / PI;
    ((t * ANGLE_BINS as f64).floor().max(0.0) as usize).min(ANGLE_BINS - 1)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn collect_stats<'a>(files: usize, records: impl IntoIterator<Item = &'a AnnotationRecord>) -> LabelStats {
    let mut counts = BTreeMap::new();
    let mut sizes = Vec::new();
    let mut angle_histogram = [0; ANGLE_BINS];
    for r in records {
        *counts.entry(r.category.clone()).or_insert(0) += 1;
        sizes.push(r.bbox.area().sqrt());
        angle_histogram[angle_bin(long_side_angle(&r.bbox))] += 1;
    }
    sizes.sort_by(f64::total_cmp);
    let size_quantiles = (!sizes.is_empty()).then(|| QUANTILES.map(|q| quantile(&sizes, q)));
    LabelStats {
        files,
        counts,
        size_quantiles,
        angle_histogram,
    }
}

pub fn format_stats(s: &LabelStats) -> String {
    let mut out = String::new();
    let total: usize = s.counts.values().sum();
    let _ = writeln!(out, "files: {}  records: {}", s.files, total);
    let width = s.counts.keys().map(String::len).max().unwrap_or(0).max(8);
    let _ = writeln!(out, "{:<width$} {:>8}", "category", "count");
    for (cat, n) in &s.counts {
        let _ = writeln!(out, "{cat:<width$} {n:>8}");
    }
    let _ = writeln!(out, "{:<width$} {total:>8}", "total");
    let _ = writeln!(out);
    let _ = writeln!(out, "box size sqrt(w*h), px:");
    let _ = writeln!(out, "{:>10} {:>10} {:>10} {:>10} {:>10}", "min", "q25", "median", "q75", "max");
    match &s.size_quantiles {
        Some(q) => {
            let _ = writeln!(out, "{:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}", q[0], q[1], q[2], q[3], q[4]);
        }
        None => {
            let _ = writeln!(out, "{:>10} {:>10} {:>10} {:>10} {:>10}", "-", "-", "-", "-", "-");
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "long-side angle, degrees:");
    let step = 180.0 / ANGLE_BINS as f64;
    for (k, n) in s.angle_histogram.iter().enumerate() {
        let lo = -90.0 + step * k as f64;
        let _ = writeln!(out, "[{:>7.2}, {:>7.2}) {n:>8}", lo, lo + step);
    }
    out
}

pub fn run(args: &StatsArgs) -> Result<Status> {
    require_dir(&args.labels)?;
    let files: Vec<(String, PathBuf)> = list_label_files(&args.labels)?.into_iter().collect();
    let parsed: Vec<_> = files
        .par_iter()
        .map(|(id, p)| (id, read_label_file(p, Modality::Visible)))
        .collect();
    let mut sets = Vec::new();
    let mut failed = 0;
    for (id, r) in parsed {
        match r {
            Ok(s) => sets.push(s),
            Err(e) => {
                eprintln!("{id}: {e}");
                failed += 1;
            }
        }
    }
    let stats = collect_stats(sets.len(), sets.iter().flat_map(|s| s.records()));
    print!("{}", format_stats(&stats));
    Ok(if failed > 0 {
        Status::PartialFailure
    } else {
        Status::Success
    })
}
