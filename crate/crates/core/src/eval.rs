//! Oriented-box detection scoring: greedy IoU matching, precision/recall,
//! per-category AP and the mean over categories.
//!
//! Ground truths with `difficulty > 0` can absorb a detection (which is then
//! [`MatchFlag::Ignored`]) but do not count towards `num_gt`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::annotations::{image_id_of, parse_quad, validate_category, AnnotationRecord, ModalityLabelSet};
use crate::error::{Error, Result};
use crate::geometry::{min_area_rect, rotated_iou, RotatedBox};

pub const DEFAULT_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub bbox: RotatedBox,
    pub category: String,
    pub score: f64,
}

impl DetectionRecord {
    pub fn new(
        image_id: impl Into<String>,
        bbox: RotatedBox,
        category: impl Into<String>,
        score: f64,
    ) -> Result<Self> {
        let category = category.into();
        validate_category(&category)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidRecord(format!("score {score} outside [0, 1]")));
        }
        Ok(DetectionRecord {
            image_id: image_id.into(),
            bbox,
            category,
            score,
        })
    }
}

fn parse_detection_at(line: &str, lineno: usize, image_id: &str) -> Result<DetectionRecord> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(Error::MalformedLine {
            line: lineno,
            reason: format!("expected 10 fields, found {}", tokens.len()),
        });
    }
    let corners = parse_quad(&tokens, lineno)?;
    let score: f64 = tokens[9].parse().map_err(|_| Error::MalformedLine {
        line: lineno,
        reason: format!("bad score {:?}", tokens[9]),
    })?;
    DetectionRecord::new(image_id, min_area_rect(&corners)?, tokens[8], score)
}

/// Parses `x1 y1 x2 y2 x3 y3 x4 y4 category score`.
pub fn parse_detection_line(line: &str, image_id: &str) -> Result<DetectionRecord> {
    parse_detection_at(line, 1, image_id)
}

pub fn parse_detection_text(text: &str, image_id: &str) -> Result<Vec<DetectionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_detection_at(l.trim(), i + 1, image_id))
        .collect()
}

pub fn read_detection_file(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detection_text(&text, &image_id_of(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchFlag {
    Tp,
    Fp,
    /// Matched a difficult ground truth; neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    #[default]
    Voc11,
    Area,
}

impl ApMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ApMode::Voc11 => "voc11",
            ApMode::Area => "area",
        }
    }
}

impl fmt::Display for ApMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voc11" => Ok(ApMode::Voc11),
            "area" => Ok(ApMode::Area),
            other => Err(Error::InvalidRecord(format!("unknown AP mode {other:?}"))),
        }
    }
}

/// Matches detections of one image and one category, in the order given,
/// against `gts`. Each detection takes the still-unmatched ground truth with
/// the highest IoU `>= iou_thr` (lowest index on ties).
pub fn greedy_match(dets: &[DetectionRecord], gts: &[AnnotationRecord], iou_thr: f64) -> Vec<MatchFlag> {
    let mut used = vec![false; gts.len()];
    dets.iter()
        .map(|d| match best_unmatched(&d.bbox, gts, &used, iou_thr) {
            Some(g) => {
                used[g] = true;
                if gts[g].difficulty > 0 {
                    MatchFlag::Ignored
                } else {
                    MatchFlag::Tp
                }
            }
            None => MatchFlag::Fp,
        })
        .collect()
}

fn best_unmatched(b: &RotatedBox, gts: &[AnnotationRecord], used: &[bool], iou_thr: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if used[g] {
            continue;
        }
        let iou = rotated_iou(b, &gt.bbox);
        if iou >= iou_thr && best.map_or(true, |(_, v)| iou > v) {
            best = Some((g, iou));
        }
    }
    best.map(|(g, _)| g)
}

/// Average precision for flags in descending-score order.
///
/// `None` when there is neither ground truth nor any scored detection.
pub fn ap_from_pr(flags: &[MatchFlag], num_gt: usize, mode: ApMode) -> Option<f64> {
    let scored: Vec<bool> = flags
        .iter()
        .filter(|f| **f != MatchFlag::Ignored)
        .map(|f| *f == MatchFlag::Tp)
        .collect();
    if num_gt == 0 {
        return if scored.is_empty() { None } else { Some(0.0) };
    }
    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for is_tp in scored {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    Some(match mode {
        ApMode::Voc11 => voc11(&recall, &precision),
        ApMode::Area => area(&recall, &precision),
    })
}

fn voc11(recall: &[f64], precision: &[f64]) -> f64 {
    let mut sum = 0.0;
    for t in 0..=10 {
        let r = t as f64 / 10.0;
        let p = recall
            .iter()
            .zip(precision)
            .filter(|(rc, _)| **rc >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 11.0
}

fn area(recall: &[f64], precision: &[f64]) -> f64 {
    let mut mrec = Vec::with_capacity(recall.len() + 2);
    mrec.push(0.0);
    mrec.extend_from_slice(recall);
    mrec.push(1.0);
    let mut mpre = Vec::with_capacity(precision.len() + 2);
    mpre.push(0.0);
    mpre.extend_from_slice(precision);
    mpre.push(0.0);
    for i in (0..mpre.len() - 1).rev() {
        mpre[i] = mpre[i].max(mpre[i + 1]);
    }
    (0..mrec.len() - 1)
        .filter(|&i| mrec[i + 1] != mrec[i])
        .map(|i| (mrec[i + 1] - mrec[i]) * mpre[i + 1])
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_thr: f64,
    pub mode: ApMode,
    /// When set, only these categories are scored and any detection outside
    /// the list is an error.
    pub classes: Option<Vec<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thr: DEFAULT_IOU,
            mode: ApMode::default(),
            classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryResult {
    /// `None` when the category has neither ground truth nor detections.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_det: usize,
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub categories: BTreeMap<String, CategoryResult>,
    /// Mean AP over categories with at least one ground truth; 0 if none.
    pub map: f64,
}

/// Scores `dets` against per-image ground truth. The result does not depend
/// on the order of `gts` or on how detections are grouped into images.
pub fn evaluate_map(dets: &[DetectionRecord], gts: &[ModalityLabelSet], cfg: &EvalConfig) -> Result<EvalResult> {
    let categories: BTreeSet<String> = match &cfg.classes {
        Some(list) => {
            let set: BTreeSet<String> = list.iter().cloned().collect();
            if let Some(d) = dets.iter().find(|d| !set.contains(&d.category)) {
                return Err(Error::CategoryMismatch(format!(
                    "detection category {:?} in image {:?} is not in the class list",
                    d.category, d.image_id
                )));
            }
            set
        }
        None => gts
            .iter()
            .flat_map(|s| s.records().iter().map(|r| r.category.clone()))
            .chain(dets.iter().map(|d| d.category.clone()))
            .collect(),
    };

    let mut by_image: HashMap<&str, Vec<&ModalityLabelSet>> = HashMap::new();
    for set in gts {
        by_image.entry(set.image_id()).or_default().push(set);
    }

    let categories: Vec<String> = categories.into_iter().collect();
    let score = |cat: &String| (cat.clone(), evaluate_category(cat, dets, &by_image, cfg));
    #[cfg(feature = "parallel")]
    let per_cat: Vec<(String, CategoryResult)> = {
        use rayon::prelude::*;
        categories.par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_cat: Vec<(String, CategoryResult)> = categories.iter().map(score).collect();

    let aps: Vec<f64> = per_cat
        .iter()
        .filter(|(_, r)| r.num_gt > 0)
        .filter_map(|(_, r)| r.ap)
        .collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    Ok(EvalResult {
        categories: per_cat.into_iter().collect(),
        map,
    })
}

fn evaluate_category(
    cat: &str,
    dets: &[DetectionRecord],
    by_image: &HashMap<&str, Vec<&ModalityLabelSet>>,
    cfg: &EvalConfig,
) -> CategoryResult {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].category == cat).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then_with(|| dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });

    // Ground truth of this category per image, in a stable order.
    let mut gt_of: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    let mut num_gt = 0;
    for (&id, sets) in by_image {
        let recs: Vec<AnnotationRecord> = sets
            .iter()
            .flat_map(|s| s.records().iter())
            .filter(|r| r.category == cat)
            .cloned()
            .collect();
        num_gt += recs.iter().filter(|r| r.difficulty == 0).count();
        gt_of.insert(id, recs);
    }

    let mut used: HashMap<&str, Vec<bool>> = gt_of.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let empty: Vec<AnnotationRecord> = Vec::new();
    let mut flags = Vec::with_capacity(order.len());
    for &i in &order {
        let d = &dets[i];
        let gts = gt_of.get(d.image_id.as_str()).unwrap_or(&empty);
        let flag = match used.get_mut(d.image_id.as_str()) {
            Some(u) => match best_unmatched(&d.bbox, gts, u, cfg.iou_thr) {
                Some(g) => {
                    u[g] = true;
                    if gts[g].difficulty > 0 {
                        MatchFlag::Ignored
                    } else {
                        MatchFlag::Tp
                    }
                }
                None => MatchFlag::Fp,
            },
            None => MatchFlag::Fp,
        };
        flags.push(flag);
    }
    CategoryResult {
        ap: ap_from_pr(&flags, num_gt, cfg.mode),
        num_gt,
        num_det: order.len(),
        tp: flags.iter().filter(|f| **f == MatchFlag::Tp).count(),
        fp: flags.iter().filter(|f| **f == MatchFlag::Fp).count(),
    }
}
