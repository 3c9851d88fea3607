//! Prompt rendering and tolerant parsing of model answers.
//!
//! Answers are JSON, usually wrapped in a ```` ```json ```` fence and sometimes
//! surrounded by free text. Parsing locates the JSON value first, then checks
//! it against the expected answer grammar. Numbers are never allowed to be
//! NaN or infinite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::frame::{format_metric, format_number};
use crate::geom::{EulerAngles, OrientedBox3, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON value found in answer")]
    NoJson,

    #[error("invalid JSON: {0}")]
    InvalidJson(String),

    #[error("expected a JSON {expected}")]
    WrongShape { expected: &'static str },

    #[error("missing key {0:?}")]
    MissingKey(String),

    #[error("key {key:?} must be {expected}")]
    WrongType { key: String, expected: &'static str },

    #[error("key {key:?} must hold {expected} numbers, found {found}")]
    Arity {
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("key {key:?} holds a non-finite number")]
    NonFinite { key: String },

    #[error("box size at position {index} must be strictly positive, got {value}")]
    NonPositiveSize { index: usize, value: f64 },
}

/// Answer/prompt kinds understood by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Prompted-pixel label and first-frame coordinate.
    SparsePoint,
    /// Grounding stage 1: anchor frame selection.
    GroundingFrame,
    /// Grounding stage 2: box in the anchor frame.
    GroundingBox,
    Caption,
    Detection,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::SparsePoint,
        Task::GroundingFrame,
        Task::GroundingBox,
        Task::Caption,
        Task::Detection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::SparsePoint => "sparse_point",
            Task::GroundingFrame => "grounding_frame",
            Task::GroundingBox => "grounding_box",
            Task::Caption => "caption",
            Task::Detection => "detection",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSemanticPred {
    pub label: String,
    pub pointmap: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePred {
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPred {
    pub bbox_3d: OrientedBox3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEntry {
    pub label: String,
    pub bbox_3d: OrientedBox3,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionPred {
    pub entries: Vec<DetectionEntry>,
    pub parse_failures: usize,
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub task: Task,
    pub raw_text: String,
}

const FENCE_OPEN: &str = "```json";
const FENCE: &str = "```";

/// Locates the JSON answer inside model output.
///
/// The first ```` ```json ```` fence wins (an unterminated fence runs to the end
/// of the text). Without a fence, every balanced top-level `{…}` / `[…]` span is
/// a candidate; the longest one that parses as JSON is returned, falling back to
/// the longest balanced span.
pub fn extract_json_block(text: &str) -> Result<&str, ParseError> {
    if let Some(start) = text.find(FENCE_OPEN) {
        let body = &text[start + FENCE_OPEN.len()..];
        let end = body.find(FENCE).unwrap_or(body.len());
        let inner = body[..end].trim();
        if inner.is_empty() {
            return Err(ParseError::NoJson);
        }
        return Ok(inner);
    }

    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'{' | b'[') {
            if let Some(end) = match_brackets(bytes, i) {
                spans.push((i, end));
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    let longest = |cands: &mut dyn Iterator<Item = &(usize, usize)>| {
        cands
            .copied()
            .max_by_key(|(s, e)| (e - s, std::cmp::Reverse(*s)))
    };
    let parsed = longest(
        &mut spans
            .iter()
            .filter(|(s, e)| serde_json::from_str::<Value>(&text[*s..=*e]).is_ok()),
    );
    parsed
        .or_else(|| longest(&mut spans.iter()))
        .map(|(s, e)| &text[s..=e])
        .ok_or(ParseError::NoJson)
}

/// Index of the bracket closing the one at `open`, skipping string literals.
fn match_brackets(bytes: &[u8], open: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_value(text: &str) -> Result<Value, ParseError> {
    let block = extract_json_block(text)?;
    serde_json::from_str(block).map_err(|e| ParseError::InvalidJson(e.to_string()))
}

fn as_object(v: &Value) -> Result<&Map<String, Value>, ParseError> {
    v.as_object().ok_or(ParseError::WrongShape { expected: "object" })
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ParseError> {
    obj.get(key).ok_or_else(|| ParseError::MissingKey(key.to_string()))
}

fn get_string(obj: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    get(obj, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ParseError::WrongType {
            key: key.to_string(),
            expected: "a string",
        })
}

fn get_numbers<const N: usize>(obj: &Map<String, Value>, key: &str) -> Result<[f64; N], ParseError> {
    let arr = get(obj, key)?.as_array().ok_or_else(|| ParseError::WrongType {
        key: key.to_string(),
        expected: "an array of numbers",
    })?;
    if arr.len() != N {
        return Err(ParseError::Arity {
            key: key.to_string(),
            expected: N,
            found: arr.len(),
        });
    }
    let mut out = [0.0; N];
    for (slot, v) in out.iter_mut().zip(arr) {
        let x = v.as_f64().ok_or_else(|| ParseError::WrongType {
            key: key.to_string(),
            expected: "an array of numbers",
        })?;
        if !x.is_finite() {
            return Err(ParseError::NonFinite {
                key: key.to_string(),
            });
        }
        *slot = x;
    }
    Ok(out)
}

fn decode_box(obj: &Map<String, Value>) -> Result<OrientedBox3, ParseError> {
    let v = get_numbers::<9>(obj, "bbox_3d")?;
    if let Some(index) = (3..6).find(|&i| v[i] <= 0.0) {
        return Err(ParseError::NonPositiveSize {
            index,
            value: v[index],
        });
    }
    let angles = EulerAngles::new(v[6], v[7], v[8]).normalized();
    OrientedBox3::new(
        Vec3::new(v[0], v[1], v[2]),
        Vec3::new(v[3], v[4], v[5]),
        angles,
    )
    .map_err(|_| ParseError::NonFinite {
        key: "bbox_3d".to_string(),
    })
}

/// `{"label": str, "pointmap": [x, y, z]}`.
pub fn parse_point_semantic(text: &str) -> Result<PointSemanticPred, ParseError> {
    let v = parse_value(text)?;
    let obj = as_object(&v)?;
    let label = get_string(obj, "label")?;
    let p = get_numbers::<3>(obj, "pointmap")?;
    Ok(PointSemanticPred {
        label,
        pointmap: Vec3::from(p),
    })
}

/// `{"frame": n}` with `n` a non-negative integer (`2.0` is accepted as `2`).
pub fn parse_frame(text: &str) -> Result<FramePred, ParseError> {
    let v = parse_value(text)?;
    let obj = as_object(&v)?;
    let raw = get(obj, "frame")?;
    let wrong = || ParseError::WrongType {
        key: "frame".to_string(),
        expected: "a non-negative integer",
    };
    let frame = match raw.as_u64() {
        Some(n) => n,
        None => {
            let x = raw.as_f64().ok_or_else(wrong)?;
            if x.fract() != 0.0 || x < 0.0 || x > u32::MAX as f64 {
                return Err(wrong());
            }
            x as u64
        }
    };
    Ok(FramePred {
        frame: usize::try_from(frame).map_err(|_| wrong())?,
    })
}

/// `{"bbox_3d": [x, y, z, w, h, d, yaw, pitch, roll]}`; angles are normalized
/// to (−π, π].
pub fn parse_bbox3d(text: &str) -> Result<BoxPred, ParseError> {
    let v = parse_value(text)?;
    let obj = as_object(&v)?;
    Ok(BoxPred {
        bbox_3d: decode_box(obj)?,
    })
}

/// A JSON list of `{"label", "bbox_3d"}` objects. Malformed entries are dropped
/// and counted; only a missing or non-list outer value is an error.
pub fn parse_detections(text: &str) -> Result<DetectionPred, ParseError> {
    let v = parse_value(text)?;
    let items = v.as_array().ok_or(ParseError::WrongShape { expected: "list" })?;
    let mut out = DetectionPred::default();
    for item in items {
        let entry = as_object(item).and_then(|obj| {
            Ok(DetectionEntry {
                label: get_string(obj, "label")?,
                bbox_3d: decode_box(obj)?,
            })
        });
        match entry {
            Ok(e) => out.entries.push(e),
            Err(_) => out.parse_failures += 1,
        }
    }
    Ok(out)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn number_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format_number(*v)).collect();
    format!("[{}]", parts.join(", "))
}

/// Wraps an answer body in a ```` ```json ```` fence.
pub fn fenced(body: &str) -> String {
    format!("{FENCE_OPEN}\n{body}\n{FENCE}")
}

pub fn point_semantic_body(p: &PointSemanticPred) -> String {
    format!(
        "{{\"label\": {}, \"pointmap\": {}}}",
        json_string(&p.label),
        number_list(p.pointmap.as_slice())
    )
}

pub fn frame_body(p: &FramePred) -> String {
    format!("{{\"frame\": {}}}", p.frame)
}

pub fn bbox3d_body(b: &OrientedBox3) -> String {
    format!("{{\"bbox_3d\": {}}}", number_list(&b.to_array()))
}

fn detection_entry_body(e: &DetectionEntry) -> String {
    format!(
        "{{\"label\": {}, \"bbox_3d\": {}}}",
        json_string(&e.label),
        number_list(&e.bbox_3d.to_array())
    )
}

pub fn detections_body(entries: &[DetectionEntry]) -> String {
    if entries.is_empty() {
        return "[]".to_string();
    }
    let lines: Vec<String> = entries
        .iter()
        .map(|e| format!("    {}", detection_entry_body(e)))
        .collect();
    format!("[\n{}\n]", lines.join(",\n"))
}

pub fn serialize_point_semantic(p: &PointSemanticPred) -> String {
    fenced(&point_semantic_body(p))
}

pub fn serialize_frame(p: &FramePred) -> String {
    fenced(&frame_body(p))
}

pub fn serialize_bbox3d(p: &BoxPred) -> String {
    fenced(&bbox3d_body(&p.bbox_3d))
}

pub fn serialize_detections(entries: &[DetectionEntry]) -> String {
    fenced(&detections_body(entries))
}

/// Inputs for [`serialize_prompt`]. Which fields are required depends on the task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    /// Number of frames in the sequence (all tasks).
    pub num_frames: Option<usize>,
    /// Position of the marked frame within the sequence (sparse point).
    pub marked_frame: Option<usize>,
    /// Referring expression (both grounding stages).
    pub query: Option<String>,
    /// First-frame coordinate of the queried object (caption).
    pub point: Option<[f64; 3]>,
}

pub const IMAGE_TOKEN: &str = "<image>";
pub const MARKED_IMAGE_TOKEN: &str = "<marked_image>";
pub const ANCHOR_IMAGE_TOKEN: &str = "<anchor_image>";

const BOX_FORMAT_LINE: &str = "The 3D bounding box format should be [x_center, y_center, z_center, x_size, y_size, z_size, yaw, pitch, roll].";

fn require<T: Clone>(field: &Option<T>, task: Task, name: &str) -> Result<T> {
    field
        .clone()
        .ok_or_else(|| Error::invalid(format!("{task} prompt needs {name}")))
}

/// Renders the human-side prompt for `task`: image placeholders on the first
/// line, then the instruction text. Coordinates are quantized to centimeters.
pub fn serialize_prompt(task: Task, payload: &PromptPayload) -> Result<String> {
    let n = require(&payload.num_frames, task, "num_frames")?;
    if n == 0 {
        return Err(Error::invalid(format!("{task} prompt needs at least one frame")));
    }
    let mut out = String::new();
    match task {
        Task::SparsePoint => {
            let marked = require(&payload.marked_frame, task, "marked_frame")?;
            if marked >= n {
                return Err(Error::invalid(format!(
                    "marked frame {marked} outside a {n}-frame sequence"
                )));
            }
            for i in 0..n {
                out.push_str(if i == marked { MARKED_IMAGE_TOKEN } else { IMAGE_TOKEN });
            }
            out.push_str(
                "\nGiven the images, find the point covered by the red cross.\n\
                 Output a JSON dictionary with the point's semantic label in \"label\" \
                 and the point's 3D coordinate in \"pointmap\" in the camera coordinate \
                 system of the first frame.",
            );
        }
        Task::GroundingFrame => {
            let query = require(&payload.query, task, "query")?;
            let slots: Vec<String> = (0..n).map(|i| format!("Frame-{i}: {IMAGE_TOKEN}")).collect();
            out.push_str(&slots.join(" "));
            write!(
                out,
                "\nLocalize the first clear frame in the video showing the object described in the text.\n\
                 Text: {query}\n\
                 Output a JSON dictionary with the frame index in \"frame\"."
            )
            .expect("writing to a String");
        }
        Task::GroundingBox => {
            let query = require(&payload.query, task, "query")?;
            let mut slots = vec![ANCHOR_IMAGE_TOKEN];
            slots.extend(std::iter::repeat_n(IMAGE_TOKEN, n - 1));
            out.push_str(&slots.join(" "));
            write!(
                out,
                "\nLocalize the object described in the text.\n\
                 Text: {query}\n\
                 Output a JSON dictionary with the matched object's 3D bounding box in \"bbox_3d\" \
                 in the camera coordinate system of the first frame.\n\
                 {BOX_FORMAT_LINE}"
            )
            .expect("writing to a String");
        }
        Task::Caption => {
            let p = require(&payload.point, task, "point")?;
            let coords = p.iter().map(|v| format_metric(*v)).collect::<Result<Vec<_>>>()?;
            out.push_str(&IMAGE_TOKEN.repeat(n));
            write!(
                out,
                "\nCarefully watch the video and describe the object located at [{}] in detail.",
                coords.join(", ")
            )
            .expect("writing to a String");
        }
        Task::Detection => {
            out.push_str(&IMAGE_TOKEN.repeat(n));
            out.push_str(
                "\nDetect the 3D bounding boxes in the camera coordinate system of the first frame.\n\
                 Output a JSON list where each entry contains the object name in \"label\" \
                 and its 3D bounding box in \"bbox_3d\".\n",
            );
            out.push_str(BOX_FORMAT_LINE);
        }
    }
    Ok(out)
}
