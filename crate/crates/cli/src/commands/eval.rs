use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use obbfuse::annotations::{list_label_files, read_label_file, Modality};
use obbfuse::eval::{evaluate_map, read_detection_file, ApMode, CategoryResult, EvalConfig, EvalResult, DEFAULT_IOU};

use crate::{require_dir, write_json, Status, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Voc11,
    Area,
}

impl From<Mode> for ApMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Voc11 => ApMode::Voc11,
            Mode::Area => ApMode::Area,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of detection files (`x1 y1 ... y4 category score`).
    #[arg(long, value_name = "DIR")]
    pub dets: PathBuf,
    /// Directory of ground-truth label files.
    #[arg(long, value_name = "DIR")]
    pub gts: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU)]
    pub iou: f64,
    #[arg(long, value_enum, default_value_t = Mode::Voc11)]
    pub mode: Mode,
    /// Comma-separated category list; detections outside it are an error.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Where to write the JSON result.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport<'a> {
    pub schema_version: u32,
    pub iou_thr: f64,
    pub mode: ApMode,
    pub categories: &'a BTreeMap<String, CategoryResult>,
    pub map: f64,
}

/// Fixed-width table of per-category results followed by the mAP row.
pub fn format_table(result: &EvalResult) -> String {
    let width = result.categories.keys().map(String::len).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>8}", "category", "gt", "dets", "tp", "fp", "AP50");
    for (cat, r) in &result.categories {
        let ap = r.ap.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{cat:<width$} {:>7} {:>7} {:>7} {:>7} {ap:>8}", r.num_gt, r.num_det, r.tp, r.fp);
    }
    let _ = writeln!(out, "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>8.4}", "mAP50", "", "", "", "", result.map);
    out
}

pub fn run(args: &EvalArgs) -> Result<Status> {
    ensure!((0.0..=1.0).contains(&args.iou), "--iou must lie in [0, 1], got {}", args.iou);
    require_dir(&args.dets)?;
    require_dir(&args.gts)?;

    let det_files: Vec<PathBuf> = list_label_files(&args.dets)?.into_values().collect();
    let gt_files: Vec<PathBuf> = list_label_files(&args.gts)?.into_values().collect();
    let dets = det_files
        .par_iter()
        .map(|p| read_detection_file(p).with_context(|| format!("in {}", p.display())))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let gts = gt_files
        .par_iter()
        .map(|p| read_label_file(p, Modality::Visible).with_context(|| format!("in {}", p.display())))
        .collect::<Result<Vec<_>>>()?;

    let cfg = EvalConfig {
        iou_thr: args.iou,
        mode: args.mode.into(),
        classes: args.classes.clone(),
    };
    let result = evaluate_map(&dets, &gts, &cfg)?;
    print!("{}", format_table(&result));
    if let Some(path) = &args.json {
        write_json(
            path,
            &EvalReport {
                schema_version: SCHEMA_VERSION,
                iou_thr: cfg.iou_thr,
                mode: cfg.mode,
                categories: &result.categories,
                map: result.map,
            },
        )?;
    }
    Ok(Status::Success)
}
