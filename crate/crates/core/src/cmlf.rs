//! Cross-modal label fusion.
//!
//! Visible and infrared annotators label the same registered scene
//! independently. Boxes whose cross-modal IoU exceeds `tau` are taken to be
//! the same object: the fused label keeps the infrared geometry and the
//! visible category. Everything left unmatched is carried over unchanged.

use serde::Serialize;

use crate::annotations::{AnnotationRecord, ImagePairLabels, Modality, ModalityLabelSet};
use crate::error::{Error, Result};
use crate::geometry::rotated_iou;

pub const DEFAULT_TAU: f64 = 0.7;

/// Pairwise rotated IoU; rows index visible records, columns infrared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmIouMatrix {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl CmIouMatrix {
    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.m && j < self.n, "({i}, {j}) outside {}x{}", self.m, self.n);
        self.values[i * self.n + j]
    }

    /// Builds a matrix from row-major values, clamping nothing. Values must
    /// lie in `[0, 1]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged CMIoU rows".into()));
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch("CMIoU values must lie in [0, 1]".into()));
        }
        Ok(CmIouMatrix { m, n, values })
    }
}

pub fn cmiou_matrix(rgb: &ModalityLabelSet, inf: &ModalityLabelSet) -> Result<CmIouMatrix> {
    check_same_image(rgb, inf)?;
    let (m, n) = (rgb.len(), inf.len());
    let mut values = Vec::with_capacity(m * n);
    for a in rgb.records() {
        for b in inf.records() {
            values.push(rotated_iou(&a.bbox, &b.bbox));
        }
    }
    Ok(CmIouMatrix { m, n, values })
}

fn check_same_image(a: &ModalityLabelSet, b: &ModalityLabelSet) -> Result<()> {
    if a.image_id() != b.image_id() {
        return Err(Error::ImageIdMismatch {
            left: a.image_id().to_string(),
            right: b.image_id().to_string(),
        });
    }
    Ok(())
}

/// One-to-one cross-modal matches, sorted by visible index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchSet {
    pairs: Vec<(usize, usize)>,
    tau: f64,
}

impl MatchSet {
    /// Validates that no visible or infrared index is used twice.
    pub fn new(mut pairs: Vec<(usize, usize)>, tau: f64) -> Result<Self> {
        pairs.sort_unstable();
        let mut js: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        js.sort_unstable();
        let dup_i = pairs.windows(2).any(|w| w[0].0 == w[1].0);
        let dup_j = js.windows(2).any(|w| w[0] == w[1]);
        if dup_i || dup_j {
            return Err(Error::InvalidRecord("match set is not one-to-one".into()));
        }
        Ok(MatchSet { pairs, tau })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Greedy one-to-one assignment over entries strictly above `tau`, taken in
/// descending IoU order; ties go to the smaller visible index, then the
/// smaller infrared index.
pub fn select_matches(matrix: &CmIouMatrix, tau: f64) -> MatchSet {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..matrix.m {
        for j in 0..matrix.n {
            let v = matrix.get(i, j);
            if v > tau {
                candidates.push((v, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut row_used = vec![false; matrix.m];
    let mut col_used = vec![false; matrix.n];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    MatchSet { pairs, tau }
}

/// Fused labels of one image. Every record is tagged [`Modality::Fused`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedLabelSet {
    image_id: String,
    records: Vec<AnnotationRecord>,
}

impl FusedLabelSet {
    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_label_set(&self) -> ModalityLabelSet {
        ModalityLabelSet::from_records(&*self.image_id, Modality::Fused, self.records.clone())
            .expect("fused records carry the fused tag")
    }
}

fn retag(record: &AnnotationRecord) -> AnnotationRecord {
    AnnotationRecord {
        source: Modality::Fused,
        ..record.clone()
    }
}

/// Applies the fusion rules.
///
/// For each matched pair `(i, j)` the output holds the geometry of
/// `inf[j]` with the category (and difficulty) of `rgb[i]`; unmatched
/// records of both sets follow verbatim. Order: matched pairs by `i`, then
/// unmatched visible by `i`, then unmatched infrared by `j`.
///
/// The modality tags of the inputs are not checked: the first set always
/// contributes categories and the second geometry.
pub fn fuse_labels(
    rgb: &ModalityLabelSet,
    inf: &ModalityLabelSet,
    matches: &MatchSet,
) -> Result<FusedLabelSet> {
    check_same_image(rgb, inf)?;
    let (m, n) = (rgb.len(), inf.len());
    let mut rgb_matched = vec![false; m];
    let mut inf_matched = vec![false; n];
    for &(i, j) in matches.pairs() {
        if i >= m || j >= n {
            return Err(Error::IndexOutOfRange { i, j, m, n });
        }
        rgb_matched[i] = true;
        inf_matched[j] = true;
    }

    let mut records = Vec::with_capacity(m + n - matches.len());
    for &(i, j) in matches.pairs() {
        let (visible, infrared) = (&rgb.records()[i], &inf.records()[j]);
        records.push(AnnotationRecord {
            bbox: infrared.bbox,
            category: visible.category.clone(),
            difficulty: visible.difficulty,
            source: Modality::Fused,
        });
    }
    records.extend(
        rgb.records()
            .iter()
            .zip(&rgb_matched)
            .filter(|(_, &used)| !used)
            .map(|(r, _)| retag(r)),
    );
    records.extend(
        inf.records()
            .iter()
            .zip(&inf_matched)
            .filter(|(_, &used)| !used)
            .map(|(r, _)| retag(r)),
    );
    Ok(FusedLabelSet {
        image_id: rgb.image_id().to_string(),
        records,
    })
}

/// Fusion result of one image plus the bookkeeping the CLI reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionOutcome {
    pub image_id: String,
    pub m: usize,
    pub n: usize,
    pub matched: usize,
    pub fused: FusedLabelSet,
}

/// An image that could not be fused.
#[derive(Debug)]
pub struct FusionFailure {
    pub image_id: String,
    pub error: Error,
}

pub fn fuse_pair(pair: &ImagePairLabels, tau: f64) -> Result<FusionOutcome> {
    let (rgb, inf) = (pair.visible(), pair.infrared());
    let matrix = cmiou_matrix(rgb, inf)?;
    let matches = select_matches(&matrix, tau);
    let fused = fuse_labels(rgb, inf, &matches)?;
    Ok(FusionOutcome {
        image_id: pair.image_id().to_string(),
        m: rgb.len(),
        n: inf.len(),
        matched: matches.len(),
        fused,
    })
}

fn sorted_by_image(
    mut results: Vec<std::result::Result<FusionOutcome, FusionFailure>>,
) -> Vec<std::result::Result<FusionOutcome, FusionFailure>> {
    let key = |r: &std::result::Result<FusionOutcome, FusionFailure>| match r {
        Ok(o) => o.image_id.clone(),
        Err(f) => f.image_id.clone(),
    };
    results.sort_by_key(key);
    results
}

/// Fuses every image pair; failures are collected, not fatal. Output is
/// ordered by image id.
pub fn fuse_dataset<I>(pairs: I, tau: f64) -> Vec<std::result::Result<FusionOutcome, FusionFailure>>
where
    I: IntoIterator<Item = ImagePairLabels>,
{
    let results = pairs
        .into_iter()
        .map(|p| {
            fuse_pair(&p, tau).map_err(|error| FusionFailure {
                image_id: p.image_id().to_string(),
                error,
            })
        })
        .collect();
    sorted_by_image(results)
}

/// [`fuse_dataset`] on the current rayon pool. Same output, same order.
#[cfg(feature = "parallel")]
pub fn fuse_dataset_parallel(
    pairs: Vec<ImagePairLabels>,
    tau: f64,
) -> Vec<std::result::Result<FusionOutcome, FusionFailure>> {
    use rayon::prelude::*;
    let results = pairs
        .par_iter()
        .map(|p| {
            fuse_pair(p, tau).map_err(|error| FusionFailure {
                image_id: p.image_id().to_string(),
                error,
            })
        })
        .collect();
    sorted_by_image(results)
}
