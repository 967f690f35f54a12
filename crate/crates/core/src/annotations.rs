//! DOTA-style oriented annotation files.
//!
//! One object per line: `x1 y1 x2 y2 x3 y3 x4 y4 category difficulty`.
//! Optional `imagesource:` / `gsd:` header lines are skipped on read. Each
//! image has one file whose stem is the image id.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{min_area_rect, Point, RotatedBox};

pub const LABEL_EXTENSION: &str = "txt";

/// Which sensor a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visible,
    Infrared,
    Fused,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visible => "visible",
            Modality::Infrared => "infrared",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visible" | "rgb" => Ok(Modality::Visible),
            "infrared" | "ir" => Ok(Modality::Infrared),
            "fused" => Ok(Modality::Fused),
            other => Err(Error::InvalidRecord(format!("unknown modality {other:?}"))),
        }
    }
}

/// One labeled object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationRecord {
    pub bbox: RotatedBox,
    pub category: String,
    pub difficulty: u32,
    pub source: Modality,
}

impl AnnotationRecord {
    pub fn new(
        bbox: RotatedBox,
        category: impl Into<String>,
        difficulty: u32,
        source: Modality,
    ) -> Result<Self> {
        let category = category.into();
        validate_category(&category)?;
        Ok(AnnotationRecord {
            bbox,
            category,
            difficulty,
            source,
        })
    }
}

pub(crate) fn validate_category(category: &str) -> Result<()> {
    if category.is_empty() {
        return Err(Error::InvalidRecord("empty category".into()));
    }
    if category.chars().any(char::is_whitespace) {
        return Err(Error::InvalidRecord(format!(
            "category {category:?} contains whitespace"
        )));
    }
    Ok(())
}

/// All labels of one image in one modality, in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalityLabelSet {
    image_id: String,
    modality: Modality,
    records: Vec<AnnotationRecord>,
}

impl ModalityLabelSet {
    pub fn new(image_id: impl Into<String>, modality: Modality) -> Self {
        ModalityLabelSet {
            image_id: image_id.into(),
            modality,
            records: Vec::new(),
        }
    }

    pub fn from_records(
        image_id: impl Into<String>,
        modality: Modality,
        records: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        let mut set = ModalityLabelSet::new(image_id, modality);
        for r in records {
            set.push(r)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, record: AnnotationRecord) -> Result<()> {
        if record.source != self.modality {
            return Err(Error::InvalidRecord(format!(
                "{} record in a {} label set",
                record.source, self.modality
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
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

    pub fn into_records(self) -> Vec<AnnotationRecord> {
        self.records
    }
}

/// Visible and infrared labels of one registered image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePairLabels {
    image_id: String,
    visible: ModalityLabelSet,
    infrared: ModalityLabelSet,
}

impl ImagePairLabels {
    pub fn new(visible: ModalityLabelSet, infrared: ModalityLabelSet) -> Result<Self> {
        if visible.image_id != infrared.image_id {
            return Err(Error::ImageIdMismatch {
                left: visible.image_id,
                right: infrared.image_id,
            });
        }
        Ok(ImagePairLabels {
            image_id: visible.image_id.clone(),
            visible,
            infrared,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }
    pub fn visible(&self) -> &ModalityLabelSet {
        &self.visible
    }
    pub fn infrared(&self) -> &ModalityLabelSet {
        &self.infrared
    }
}

fn is_header(line: &str) -> bool {
    line.starts_with("imagesource") || line.starts_with("gsd")
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        line,
        reason: reason.into(),
    }
}

/// Parses the four corner coordinates shared by label and detection lines.
pub(crate) fn parse_quad(tokens: &[&str], lineno: usize) -> Result<[Point; 4]> {
    let mut coords = [0.0f64; 8];
    for (k, tok) in tokens.iter().take(8).enumerate() {
        let v: f64 = tok
            .parse()
            .map_err(|_| malformed(lineno, format!("non-numeric coordinate {tok:?}")))?;
        if !v.is_finite() {
            return Err(malformed(lineno, format!("non-finite coordinate {tok:?}")));
        }
        coords[k] = v;
    }
    Ok([0, 1, 2, 3].map(|i| Point::new(coords[2 * i], coords[2 * i + 1])))
}

fn parse_line_at(line: &str, lineno: usize, source: Modality) -> Result<AnnotationRecord> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(malformed(
            lineno,
            format!("expected 10 fields, found {}", tokens.len()),
        ));
    }
    let corners = parse_quad(&tokens, lineno)?;
    let difficulty: u32 = tokens[9]
        .parse()
        .map_err(|_| malformed(lineno, format!("bad difficulty {:?}", tokens[9])))?;
    let bbox = min_area_rect(&corners)?;
    AnnotationRecord::new(bbox, tokens[8], difficulty, source)
}

/// Parses one label line. The box is the minimum-area rectangle around the
/// four corners, so slightly non-rectangular hand labels are accepted.
pub fn parse_annotation_line(line: &str, source: Modality) -> Result<AnnotationRecord> {
    parse_line_at(line, 1, source)
}

/// Parses the contents of a whole label file.
pub fn parse_label_text(
    text: &str,
    image_id: impl Into<String>,
    modality: Modality,
) -> Result<ModalityLabelSet> {
    let mut set = ModalityLabelSet::new(image_id, modality);
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || is_header(line) {
            continue;
        }
        set.push(parse_line_at(line, idx + 1, modality)?)?;
    }
    Ok(set)
}

/// Image id of a label path: its file stem.
pub fn image_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_label_file(path: impl AsRef<Path>, modality: Modality) -> Result<ModalityLabelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_text(&text, image_id_of(path), modality)
}

/// Formats a coordinate with at most six decimals and at least one.
pub fn format_coord(v: f64) -> String {
    let mut s = format!("{v:.6}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

pub fn format_record(record: &AnnotationRecord) -> String {
    let mut line = String::new();
    for p in record.bbox.corners() {
        let _ = write!(line, "{} {} ", format_coord(p.x), format_coord(p.y));
    }
    let _ = write!(line, "{} {}", record.category, record.difficulty);
    line
}

/// Serializes a label set, one LF-terminated line per record.
pub fn format_label_set(set: &ModalityLabelSet) -> String {
    let mut out = String::new();
    for r in set.records() {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    out
}

pub fn write_label_file(set: &ModalityLabelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_label_set(set)).map_err(|e| Error::io(path, e))
}

/// Label files in `dir`, keyed by image id.
pub fn list_label_files(dir: impl AsRef<Path>) -> Result<BTreeMap<String, PathBuf>> {
    let dir = dir.as_ref();
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == LABEL_EXTENSION) {
            files.insert(image_id_of(&path), path);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_square_label() {
        let r = parse_annotation_line("0 0 2 0 2 2 0 2 car 0", Modality::Visible).unwrap();
        assert_eq!(r.bbox, RotatedBox::new(1.0, 1.0, 2.0, 2.0, 0.0).unwrap());
        assert_eq!(r.category, "car");
        assert_eq!(r.difficulty, 0);
        assert_eq!(r.source, Modality::Visible);
    }

    #[test]
    fn malformed_lines() {
        let short = parse_annotation_line("0 0 2 0 2 2 0 2 car", Modality::Visible);
        assert!(matches!(short, Err(Error::MalformedLine { line: 1, .. })));
        let word = parse_annotation_line("0 0 2 x 2 2 0 2 car 0", Modality::Visible);
        assert!(matches!(word, Err(Error::MalformedLine { .. })));
        let neg = parse_annotation_line("0 0 2 0 2 2 0 2 car -1", Modality::Visible);
        assert!(matches!(neg, Err(Error::MalformedLine { .. })));
        let nan = parse_annotation_line("0 0 2 0 2 2 0 NaN car 0", Modality::Visible);
        assert!(matches!(nan, Err(Error::MalformedLine { .. })));
        let flat = parse_annotation_line("0 0 1 0 2 0 3 0 car 0", Modality::Visible);
        assert!(matches!(flat, Err(Error::DegenerateQuad { .. })));
    }

    #[test]
    fn rotated_truck_matches_calipers() {
        let line = "472 306 455 339 513 369 530 336 truck 0";
        let r = parse_annotation_line(line, Modality::Infrared).unwrap();
        let corners = [(472.0, 306.0), (455.0, 339.0), (513.0, 369.0), (530.0, 336.0)]
            .map(|(x, y)| Point::new(x, y));
        let expected = min_area_rect(&corners).unwrap();
        assert_eq!(r.bbox, expected);
        // Nearly rectangular: the box hugs all four corners.
        for c in corners {
            let d = r.bbox.corners().iter().map(|q| q.distance(c)).fold(f64::MAX, f64::min);
            assert!(d < 1.5, "corner {c:?} is {d} px from the box");
        }
    }

    #[test]
    fn headers_blank_lines_and_crlf() {
        let text = "imagesource:drone\r\ngsd:0.1\r\n\r\n0 0 2 0 2 2 0 2 car 0\r\n10 10 14 10 14 12 10 12 bus 1\r\n";
        let set = parse_label_text(text, "00001", Modality::Visible).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.records()[1].category, "bus");
        assert_eq!(set.records()[1].difficulty, 1);
    }

    #[test]
    fn error_reports_file_line_number() {
        let text = "imagesource:x\n0 0 2 0 2 2 0 2 car 0\n0 0 2 0 car 0\n";
        match parse_label_text(text, "a", Modality::Visible) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coordinate_formatting() {
        assert_eq!(format_coord(2.0), "2.0");
        assert_eq!(format_coord(-0.0), "0.0");
        assert_eq!(format_coord(-1e-9), "0.0");
        assert_eq!(format_coord(12.25), "12.25");
        assert_eq!(format_coord(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn modality_mismatch_rejected() {
        let mut set = ModalityLabelSet::new("a", Modality::Visible);
        let r = parse_annotation_line("0 0 2 0 2 2 0 2 car 0", Modality::Infrared).unwrap();
        assert!(set.push(r).is_err());
        assert!(AnnotationRecord::new(
            RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap(),
            "",
            0,
            Modality::Visible
        )
        .is_err());
    }

    #[test]
    fn pair_requires_same_image() {
        let a = ModalityLabelSet::new("a", Modality::Visible);
        let b = ModalityLabelSet::new("b", Modality::Infrared);
        assert!(matches!(
            ImagePairLabels::new(a, b),
            Err(Error::ImageIdMismatch { .. })
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "").unwrap();
        assert!(read_label_file(&empty, Modality::Visible).unwrap().is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cats = ["car", "truck", "bus", "van", "freight_car"];
        let mut set = ModalityLabelSet::new("rand", Modality::Infrared);
        for _ in 0..100 {
            let b = RotatedBox::new(
                rng.gen_range(0.0..640.0),
                rng.gen_range(0.0..512.0),
                rng.gen_range(2.0..120.0),
                rng.gen_range(2.0..120.0),
                rng.gen_range(-3.2..3.2),
            )
            .unwrap();
            let cat = cats[rng.gen_range(0..cats.len())];
            set.push(AnnotationRecord::new(b, cat, rng.gen_range(0..3), Modality::Infrared).unwrap())
                .unwrap();
        }
        let path = dir.path().join("rand.txt");
        write_label_file(&set, &path).unwrap();
        let back = read_label_file(&path, Modality::Infrared).unwrap();
        assert_eq!(back.image_id(), "rand");
        assert_eq!(back.len(), 100);
        for (a, b) in set.records().iter().zip(back.records()) {
            assert_eq!(a.category, b.category);
            assert_eq!(a.difficulty, b.difficulty);
            assert!(a.bbox.same_rectangle(&b.bbox, 1e-4), "{:?} vs {:?}", a.bbox, b.bbox);
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 100);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn lists_only_label_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "").unwrap();
        fs::write(dir.path().join("a.txt"), "").unwrap();
        fs::write(dir.path().join("a.png"), "").unwrap();
        let files = list_label_files(dir.path()).unwrap();
        assert_eq!(files.keys().collect::<Vec<_>>(), ["a", "b"]);
    }
}
