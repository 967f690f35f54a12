use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use obbfuse::annotations::{format_label_set, list_label_files, read_label_file, ImagePairLabels, Modality, LABEL_EXTENSION};
use obbfuse::cmlf::{fuse_pair, DEFAULT_TAU};

use crate::{require_dir, write_json, Status, SCHEMA_VERSION};

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Directory of visible-light label files.
    #[arg(long = "rgb-labels", value_name = "DIR")]
    pub rgb_labels: PathBuf,
    /// Directory of infrared label files.
    #[arg(long = "ir-labels", value_name = "DIR")]
    pub ir_labels: PathBuf,
    /// Output directory for fused label files (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Match threshold; pairs need CMIoU strictly above it.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Where to write the JSON report.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageCounts {
    pub image_id: String,
    pub m: usize,
    pub n: usize,
    pub matched: usize,
    pub fused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Totals {
    pub images: usize,
    pub m: usize,
    pub n: usize,
    pub matched: usize,
    pub fused: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuseReport {
    pub schema_version: u32,
    pub tau: f64,
    pub images: Vec<ImageCounts>,
    pub failures: Vec<FileFailure>,
    pub unpaired_rgb: Vec<String>,
    pub unpaired_ir: Vec<String>,
    pub totals: Totals,
}

struct Fused {
    counts: ImageCounts,
    text: String,
}

fn fuse_files(id: &str, rgb: &Path, ir: &Path, tau: f64) -> obbfuse::Result<Fused> {
    let pair = ImagePairLabels::new(read_label_file(rgb, Modality::Visible)?, read_label_file(ir, Modality::Infrared)?)?;
    let outcome = fuse_pair(&pair, tau)?;
    Ok(Fused {
        counts: ImageCounts {
            image_id: id.to_string(),
            m: outcome.m,
            n: outcome.n,
            matched: outcome.matched,
            fused: outcome.fused.len(),
        },
        text: format_label_set(&outcome.fused.to_label_set()),
    })
}

fn unpaired(a: &BTreeMap<String, PathBuf>, b: &BTreeMap<String, PathBuf>) -> Vec<String> {
    a.keys().filter(|k| !b.contains_key(*k)).cloned().collect()
}

pub fn run(args: &FuseArgs) -> Result<Status> {
    ensure!((0.0..=1.0).contains(&args.tau), "--tau must lie in [0, 1], got {}", args.tau);
    require_dir(&args.rgb_labels)?;
    require_dir(&args.ir_labels)?;
    let rgb = list_label_files(&args.rgb_labels)?;
    let ir = list_label_files(&args.ir_labels)?;
    let ids: Vec<&String> = rgb.keys().filter(|k| ir.contains_key(*k)).collect();

    let results: Vec<(String, obbfuse::Result<Fused>)> = ids
        .par_iter()
        .map(|id| ((*id).clone(), fuse_files(id, &rgb[*id], &ir[*id], args.tau)))
        .collect();

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut images = Vec::new();
    let mut failures = Vec::new();
    let mut totals = Totals::default();
    for (id, result) in results {
        match result {
            Ok(f) => {
                let path = args.out.join(format!("{id}.{LABEL_EXTENSION}"));
                fs::write(&path, &f.text).with_context(|| format!("cannot write {}", path.display()))?;
                totals.images += 1;
                totals.m += f.counts.m;
                totals.n += f.counts.n;
                totals.matched += f.counts.matched;
                totals.fused += f.counts.fused;
                images.push(f.counts);
            }
            Err(e) => {
                eprintln!("{id}: {e}");
                failures.push(FileFailure {
                    image_id: id,
                    error: e.to_string(),
                });
            }
        }
    }
    totals.failed = failures.len();

    let report = FuseReport {
        schema_version: SCHEMA_VERSION,
        tau: args.tau,
        images,
        unpaired_rgb: unpaired(&rgb, &ir),
        unpaired_ir: unpaired(&ir, &rgb),
        failures,
        totals,
    };
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    let t = &report.totals;
    println!(
        "fused {} image pairs: {} visible + {} infrared records, {} matched, {} fused; {} failed, {} unpaired",
        t.images,
        t.m,
        t.n,
        t.matched,
        t.fused,
        t.failed,
        report.unpaired_rgb.len() + report.unpaired_ir.len()
    );
    Ok(if t.failed > 0 {
        Status::PartialFailure
    } else {
        Status::Success
    })
}
