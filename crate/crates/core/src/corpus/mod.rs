//! Dataset schema, JSON-lines loading/writing and synthetic corpora.
//!
//! One sample per line:
//!
//! ```text
//! {"sample_id": str, "image_width": num, "image_height": num, "question": str,
//!  "answers": [str], "ocr": [{"text": str, "quad": [x1,y1,...,x4,y4]}],
//!  "objects": [{"name": str, "attributes": [str], "quad": [...]}],
//!  "dictionary": [str]}            // optional
//! ```
//!
//! Quads that overflow the image are clamped to its bounds and counted as
//! warnings; every other violation rejects the record with its line number
//! and the offending field.

mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, Family, SyntheticConfig};

/// Quadrilateral with corners clockwise from the top-left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 8]", into = "[f64; 8]")]
pub struct Quad {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub x3: f64,
    pub y3: f64,
    pub x4: f64,
    pub y4: f64,
}

impl From<[f64; 8]> for Quad {
    fn from(c: [f64; 8]) -> Self {
        Quad { x1: c[0], y1: c[1], x2: c[2], y2: c[3], x3: c[4], y3: c[5], x4: c[6], y4: c[7] }
    }
}

impl From<Quad> for [f64; 8] {
    fn from(q: Quad) -> Self {
        q.coords()
    }
}

impl Quad {
    /// Axis-aligned box from its top-left corner and size.
    pub fn from_rect(x: f64, y: f64, w: f64, h: f64) -> Self {
        Quad::from([x, y, x + w, y, x + w, y + h, x, y + h])
    }

    pub fn coords(&self) -> [f64; 8] {
        [self.x1, self.y1, self.x2, self.y2, self.x3, self.y3, self.x4, self.y4]
    }

    pub fn xs(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn ys(&self) -> [f64; 4] {
        [self.y1, self.y2, self.y3, self.y4]
    }

    pub fn center(&self) -> (f64, f64) {
        (self.xs().iter().sum::<f64>() / 4.0, self.ys().iter().sum::<f64>() / 4.0)
    }

    /// Vertical extent.
    pub fn height(&self) -> f64 {
        let ys = self.ys();
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest axis-aligned quad containing both.
    pub fn union(&self, other: &Quad) -> Quad {
        let xs = self.xs().into_iter().chain(other.xs());
        let ys = self.ys().into_iter().chain(other.ys());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        for y in ys {
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Quad::from([x0, y0, x1, y0, x1, y1, x0, y1])
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Quad {
        let c = self.coords();
        Quad::from([c[0] * sx, c[1] * sy, c[2] * sx, c[3] * sy, c[4] * sx, c[5] * sy, c[6] * sx, c[7] * sy])
    }

    /// Clamps into `[0,width]x[0,height]`; returns whether anything moved.
    pub fn clamp_to(&mut self, width: f64, height: f64) -> bool {
        let mut c = self.coords();
        let mut changed = false;
        for (i, v) in c.iter_mut().enumerate() {
            let limit = if i % 2 == 0 { width } else { height };
            let clamped = v.clamp(0.0, limit);
            if clamped != *v {
                changed = true;
                *v = clamped;
            }
        }
        *self = Quad::from(c);
        changed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub quad: Quad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    pub quad: Quad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(rename = "ocr")]
    pub ocr_tokens: Vec<OcrToken>,
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the first `n` samples; the remainder keeps file order.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.samples.len());
        (
            Dataset { name: format!("{}[..{n}]", self.name), samples: self.samples[..n].to_vec() },
            Dataset { name: format!("{}[{n}..]", self.name), samples: self.samples[n..].to_vec() },
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    fn requires_answers(self) -> bool {
        !matches!(self, Split::Test)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid("split", format!("expected train|dev|test, got `{other}`"))),
        }
    }
}

/// Record counts from a load; `loaded + rejected + blank == lines`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub lines: usize,
    pub blank: usize,
    pub loaded: usize,
    /// Loaded records that needed at least one quad clamped.
    pub warned: usize,
    pub clamped_quads: usize,
    pub rejected: usize,
}

/// Result of scanning a file without stopping at the first bad record.
#[derive(Debug)]
pub struct ScanReport {
    pub dataset: Dataset,
    pub stats: LoadStats,
    pub errors: Vec<Error>,
}

/// Loads and validates a JSON-lines dataset. Any rejected record is an error.
pub fn load_dataset(path: impl AsRef<Path>, split: Split) -> Result<(Dataset, LoadStats)> {
    let mut report = scan_dataset(path, split)?;
    if let Some(first) = report.errors.drain(..).next() {
        return Err(first);
    }
    Ok((report.dataset, report.stats))
}

/// Validates every line, collecting errors instead of stopping.
pub fn scan_dataset(path: impl AsRef<Path>, split: Split) -> Result<ScanReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(parse_dataset(&text, &name, split))
}

pub fn parse_dataset(text: &str, name: &str, split: Split) -> ScanReport {
    let mut stats = LoadStats::default();
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        stats.lines += 1;
        if line.trim().is_empty() {
            stats.blank += 1;
            continue;
        }
        match parse_record(line, line_no, split) {
            Ok((sample, clamped)) => {
                if !seen.insert(sample.sample_id.clone()) {
                    stats.rejected += 1;
                    errors.push(Error::DuplicateSampleId { line: line_no, sample_id: sample.sample_id });
                    continue;
                }
                stats.loaded += 1;
                if clamped > 0 {
                    stats.warned += 1;
                    stats.clamped_quads += clamped;
                    log::warn!("line {line_no}: clamped {clamped} quad(s) of `{}` to the image bounds", sample.sample_id);
                }
                samples.push(sample);
            }
            Err(e) => {
                stats.rejected += 1;
                errors.push(e);
            }
        }
    }
    ScanReport { dataset: Dataset { name: name.to_string(), samples }, stats, errors }
}

/// Parses and validates one record; returns the sample and how many quads were clamped.
pub fn parse_record(line: &str, line_no: usize, split: Split) -> Result<(Sample, usize)> {
    let err = |field: &str, message: String| Error::Record { line: line_no, field: field.to_string(), message };
    let value: Value = serde_json::from_str(line).map_err(|e| err("<record>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| err("<record>", "expected a JSON object".into()))?;

    let sample_id = get_str(obj, "sample_id", line_no)?;
    let image_width = get_num(obj, "image_width", line_no)?;
    let image_height = get_num(obj, "image_height", line_no)?;
    if !(image_width.is_finite() && image_width > 0.0) {
        return Err(err("image_width", format!("must be positive, got {image_width}")));
    }
    if !(image_height.is_finite() && image_height > 0.0) {
        return Err(err("image_height", format!("must be positive, got {image_height}")));
    }
    let question = get_str(obj, "question", line_no)?;
    if question.trim().is_empty() {
        return Err(err("question", "must be non-empty".into()));
    }
    let gold_answers = get_str_list(obj, "answers", line_no)?;
    if split.requires_answers() && gold_answers.is_empty() {
        return Err(err("answers", "at least one answer is required for train/dev data".into()));
    }

    let mut clamped = 0;
    let mut ocr_tokens = Vec::new();
    for (k, tok) in get_array(obj, "ocr", line_no)?.iter().enumerate() {
        let field = format!("ocr[{k}]");
        let tok = tok.as_object().ok_or_else(|| err(&field, "expected an object".into()))?;
        let text = get_str(tok, "text", line_no).map_err(|e| prefix_field(e, &field))?;
        if text.is_empty() {
            return Err(err(&format!("{field}.text"), "must be non-empty".into()));
        }
        if text.contains('\n') || text.contains('\r') {
            return Err(err(&format!("{field}.text"), "must not contain a newline".into()));
        }
        let mut quad = get_quad(tok, line_no).map_err(|e| prefix_field(e, &field))?;
        if quad.clamp_to(image_width, image_height) {
            clamped += 1;
        }
        ocr_tokens.push(OcrToken { text, quad });
    }

    let mut objects = Vec::new();
    for (k, o) in get_array(obj, "objects", line_no)?.iter().enumerate() {
        let field = format!("objects[{k}]");
        let o = o.as_object().ok_or_else(|| err(&field, "expected an object".into()))?;
        let name = get_str(o, "name", line_no).map_err(|e| prefix_field(e, &field))?;
        if name.trim().is_empty() {
            return Err(err(&format!("{field}.name"), "must be non-empty".into()));
        }
        let attributes = if o.contains_key("attributes") {
            get_str_list(o, "attributes", line_no).map_err(|e| prefix_field(e, &field))?
        } else {
            Vec::new()
        };
        let mut quad = get_quad(o, line_no).map_err(|e| prefix_field(e, &field))?;
        if quad.clamp_to(image_width, image_height) {
            clamped += 1;
        }
        objects.push(SceneObject { name, attributes, quad });
    }

    let dictionary = match obj.get("dictionary") {
        None | Some(Value::Null) => None,
        Some(_) => Some(get_str_list(obj, "dictionary", line_no)?),
    };

    Ok((Sample { sample_id, image_width, image_height, question, gold_answers, ocr_tokens, objects, dictionary }, clamped))
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Record { line, field, message } => Error::Record { line, field: format!("{prefix}.{field}"), message },
        other => other,
    }
}

fn get_str(obj: &Map<String, Value>, key: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::Record { line, field: key.into(), message: format!("expected a string, got {other}") }),
        None => Err(Error::Record { line, field: key.into(), message: "missing".into() }),
    }
}

fn get_num(obj: &Map<String, Value>, key: &str, line: usize) -> Result<f64> {
    match obj.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| Error::Record { line, field: key.into(), message: "not representable as f64".into() }),
        Some(other) => Err(Error::Record { line, field: key.into(), message: format!("expected a number, got {other}") }),
        None => Err(Error::Record { line, field: key.into(), message: "missing".into() }),
    }
}

fn get_array<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a Vec<Value>> {
    match obj.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(other) => Err(Error::Record { line, field: key.into(), message: format!("expected an array, got {other}") }),
        None => Err(Error::Record { line, field: key.into(), message: "missing".into() }),
    }
}

fn get_str_list(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Vec<String>> {
    get_array(obj, key, line)?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Record { line, field: format!("{key}[{i}]"), message: format!("expected a string, got {v}") })
        })
        .collect()
}

fn get_quad(obj: &Map<String, Value>, line: usize) -> Result<Quad> {
    let arr = get_array(obj, "quad", line)?;
    if arr.len() != 8 {
        return Err(Error::Record { line, field: "quad".into(), message: format!("expected 8 coordinates, got {}", arr.len()) });
    }
    let mut c = [0.0; 8];
    for (i, v) in arr.iter().enumerate() {
        let x = v.as_f64().ok_or_else(|| Error::Record { line, field: format!("quad[{i}]"), message: format!("expected a number, got {v}") })?;
        if !x.is_finite() {
            return Err(Error::Record { line, field: format!("quad[{i}]"), message: "must be finite".into() });
        }
        c[i] = x;
    }
    Ok(Quad::from(c))
}

pub fn sample_to_json(sample: &Sample) -> String {
    serde_json::to_string(sample).expect("sample serializes")
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in &dataset.samples {
        writeln!(w, "{}", sample_to_json(s)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, w: f64, x1: f64) -> String {
        format!(
            r#"{{"sample_id":"{id}","image_width":{w},"image_height":100,"question":"what is it?","answers":["stop"],"ocr":[{{"text":"stop","quad":[{x1},10,40,10,40,20,10,20]}}],"objects":[]}}"#
        )
    }

    #[test]
    fn keeps_file_order() {
        let text = [record("c", 100.0, 10.0), record("a", 100.0, 10.0), record("b", 100.0, 10.0)].join("\n");
        let report = parse_dataset(&text, "t", Split::Train);
        assert!(report.errors.is_empty());
        let ids: Vec<_> = report.dataset.samples.iter().map(|s| s.sample_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(report.stats.loaded, 3);
    }

    #[test]
    fn zero_width_names_image_width() {
        let report = parse_dataset(&record("a", 0.0, 10.0), "t", Split::Train);
        match &report.errors[0] {
            Error::Record { line, field, .. } => {
                assert_eq!(*line, 1);
                assert_eq!(field, "image_width");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overflowing_quad_is_clamped_with_warning() {
        // x1 = W + 5 with W = 100
        let report = parse_dataset(&record("a", 100.0, 105.0), "t", Split::Train);
        assert!(report.errors.is_empty());
        assert_eq!(report.dataset.samples[0].ocr_tokens[0].quad.x1, 100.0);
        assert_eq!(report.stats.warned, 1);
        assert_eq!(report.stats.clamped_quads, 1);
    }

    #[test]
    fn duplicate_ids_rejected_and_counts_reconcile() {
        let text = [record("a", 100.0, 10.0), String::new(), record("a", 100.0, 10.0), "{not json".into()].join("\n");
        let report = parse_dataset(&text, "t", Split::Train);
        let s = &report.stats;
        assert_eq!(s.loaded + s.rejected + s.blank, s.lines);
        assert_eq!(s.rejected, 2);
        assert!(matches!(report.errors[0], Error::DuplicateSampleId { line: 3, .. }));
        assert!(matches!(&report.errors[1], Error::Record { line: 4, .. }));
    }

    #[test]
    fn nested_field_errors_carry_path() {
        let line = r#"{"sample_id":"a","image_width":10,"image_height":10,"question":"q","answers":["x"],"ocr":[{"text":"","quad":[0,0,1,0,1,1,0,1]}],"objects":[]}"#;
        let err = parse_record(line, 7, Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "line 7: field `ocr[0].text`: must be non-empty");
        let line = r#"{"sample_id":"a","image_width":10,"image_height":10,"question":"q","answers":["x"],"ocr":[],"objects":[{"name":"bus","quad":[0,0,1]}]}"#;
        let err = parse_record(line, 2, Split::Train).unwrap_err();
        assert!(err.to_string().contains("objects[0].quad"), "{err}");
    }

    #[test]
    fn test_split_allows_missing_answers() {
        let line = r#"{"sample_id":"a","image_width":10,"image_height":10,"question":"q","answers":[],"ocr":[],"objects":[]}"#;
        assert!(parse_record(line, 1, Split::Test).is_ok());
        assert!(parse_record(line, 1, Split::Dev).is_err());
    }
}
