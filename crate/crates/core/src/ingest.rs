//! Strict parsers for every supported input format, plus the writers that
//! produce their normalized form.
//!
//! Formats:
//! - mesh: OBJ subset, only `v x y z` and `f i j k` (1-based) plus `#` comments
//! - volume: JSON header (`dims`, `spacing_mm`, `origin_mm`, `dtype = "int16-le"`,
//!   `order = "x-fastest"`) next to a raw little-endian voxel blob
//! - sensor: CSV with header `t_s,<ch1>,...` next to a JSON header giving
//!   `fs_hz` and per-channel `units`
//! - motion: `frame_%06d.xyz` files of `x y z` lines plus a JSON header with
//!   `fps` and `correspondence`
//! - EHR: JSON object with `patient_id`, `demographics`, `biomarkers`, `notes`

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ehr::EhrRecord;
use crate::mesh::{Mesh, Violation};
use crate::motion::{MotionError, MotionSequence};
use crate::scalar::{lit, to_f64, Real};
use crate::trace::{Channel, Placement, SensorTrace, TraceError, Unit};
use crate::volume::{Volume, VolumeError};

/// Where in the input a parse error was detected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

impl ParseError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            location: None,
        }
    }

    fn at_line(message: impl Into<String>, line: usize) -> Self {
        Self {
            message: message.into(),
            location: Some(Location {
                file: None,
                line: Some(line),
            }),
        }
    }

    fn in_file(mut self, file: &str) -> Self {
        let loc = self.location.get_or_insert_with(Location::default);
        loc.file = Some(file.to_string());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)?;
        if let Some(loc) = &self.location {
            if let Some(line) = loc.line {
                write!(f, " at line {line}")?;
            }
            if let Some(file) = &loc.file {
                write!(f, " in {file}")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

fn utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        ParseError::at_line("invalid UTF-8", line)
    })
}

/// Lines with `\r\n` or `\n` endings, comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n').enumerate().filter_map(|(i, raw)| {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

fn finite_number(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_xyz_line<T: Real>(body: &str, line: usize) -> Result<Point3<T>, ParseError> {
    let coords: Vec<&str> = body.split_whitespace().collect();
    if coords.len() != 3 {
        return Err(ParseError::at_line(
            format!("expected 3 coordinates, got {}", coords.len()),
            line,
        ));
    }
    let mut p = [T::zero(); 3];
    for (slot, tok) in p.iter_mut().zip(&coords) {
        *slot = lit(finite_number(tok)
            .ok_or_else(|| ParseError::at_line(format!("non-numeric coordinate {tok:?}"), line))?);
    }
    Ok(Point3::from(p))
}

// ---------------------------------------------------------------- mesh

pub fn parse_mesh_obj<T: Real>(bytes: &[u8], label: &str) -> Result<Mesh<T>, ParseError> {
    let text = utf8(bytes)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (line, body) in content_lines(text) {
        let (keyword, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        match keyword {
            "v" => vertices.push(parse_xyz_line(rest, line)?),
            "f" => {
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                if tokens.iter().any(|t| t.contains('/')) {
                    return Err(ParseError::at_line("texture/normal index syntax", line));
                }
                if tokens.len() > 3 {
                    return Err(ParseError::at_line("non-triangular face", line));
                }
                if tokens.len() < 3 {
                    return Err(ParseError::at_line(
                        format!("face with {} indices", tokens.len()),
                        line,
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&tokens) {
                    let idx: usize = tok
                        .parse()
                        .ok()
                        .filter(|i| *i >= 1)
                        .ok_or_else(|| {
                            ParseError::at_line(format!("invalid face index {tok:?}"), line)
                        })?;
                    *slot = idx - 1;
                }
                faces.push(face);
                face_lines.push(line);
            }
            other => {
                return Err(ParseError::at_line(
                    format!("unsupported directive {other:?}"),
                    line,
                ))
            }
        }
    }
    let mesh = Mesh::new(vertices, faces, label);
    if let Some(v) = mesh.validate().violations.first() {
        let line = match v {
            Violation::IndexOutOfRange { face, .. } | Violation::DegenerateFace { face } => {
                face_lines[*face]
            }
            Violation::NonFiniteVertex { .. } => 0,
        };
        return Err(ParseError::at_line(v.to_string(), line));
    }
    Ok(mesh)
}

pub fn write_mesh_obj<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", to_f64(v.x), to_f64(v.y), to_f64(v.z));
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

// -------------------------------------------------------------- volume

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
}

pub const VOLUME_DTYPE: &str = "int16-le";
pub const VOLUME_ORDER: &str = "x-fastest";

pub fn parse_volume_meta(meta_json: &[u8]) -> Result<VolumeMeta, ParseError> {
    let meta: VolumeMeta = serde_json::from_slice(meta_json)
        .map_err(|e| ParseError::at_line(format!("invalid volume header: {e}"), e.line()))?;
    if meta.dtype != VOLUME_DTYPE {
        return Err(ParseError::new(format!("unsupported dtype {:?}", meta.dtype)));
    }
    if meta.order != VOLUME_ORDER {
        return Err(ParseError::new(format!("unsupported order {:?}", meta.order)));
    }
    if meta.spacing_mm.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(ParseError::new("nonpositive spacing"));
    }
    Ok(meta)
}

pub fn parse_volume<T: Real>(meta_json: &[u8], raw: &[u8]) -> Result<Volume<T>, ParseError> {
    let meta = parse_volume_meta(meta_json)?;
    let n = meta
        .dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .and_then(|n| n.checked_mul(2).map(|_| n))
        .ok_or_else(|| ParseError::new("volume dimensions overflow"))?;
    if raw.len() != 2 * n {
        return Err(ParseError::new(format!(
            "expected {} bytes, got {}",
            2 * n,
            raw.len()
        )));
    }
    let voxels = raw
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Volume::new(
        meta.dims,
        Vector3::from(meta.spacing_mm.map(lit::<T>)),
        Point3::from(meta.origin_mm.map(lit::<T>)),
        voxels,
    )
    .map_err(|e| match e {
        VolumeError::NonPositiveSpacing => ParseError::new("nonpositive spacing"),
        other => ParseError::new(other.to_string()),
    })
}

/// Header JSON and raw blob for a volume.
pub fn write_volume<T: Real>(v: &Volume<T>) -> (Vec<u8>, Vec<u8>) {
    let meta = VolumeMeta {
        dims: v.dims(),
        spacing_mm: [0, 1, 2].map(|a| to_f64(v.spacing_mm()[a])),
        origin_mm: [0, 1, 2].map(|a| to_f64(v.origin_mm()[a])),
        dtype: VOLUME_DTYPE.into(),
        order: VOLUME_ORDER.into(),
    };
    let raw = v.voxels().iter().flat_map(|x| x.to_le_bytes()).collect();
    (serde_json::to_vec(&meta).expect("volume header serializes"), raw)
}

// -------------------------------------------------------------- sensor

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub fs_hz: f64,
    pub units: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub placements: BTreeMap<String, Placement>,
}

/// Maximum deviation of a row timestamp from `t0 + i / fs`.
pub const TIMESTAMP_TOLERANCE_S: f64 = 1e-6;

pub fn parse_sensor_csv<T: Real>(
    csv_bytes: &[u8],
    meta_json: &[u8],
) -> Result<SensorTrace<T>, ParseError> {
    let meta: SensorMeta = serde_json::from_slice(meta_json)
        .map_err(|e| ParseError::new(format!("invalid sensor header: {e}")))?;
    if !(meta.fs_hz > 0.0) || !meta.fs_hz.is_finite() {
        return Err(ParseError::new(format!(
            "sampling rate must be positive, got {}",
            meta.fs_hz
        )));
    }
    utf8(csv_bytes)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let header = reader
        .headers()
        .map_err(|e| ParseError::at_line(format!("unreadable header: {e}"), 1))?
        .clone();
    if header.get(0) != Some("t_s") {
        return Err(ParseError::at_line("header must start with t_s", 1));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(ParseError::at_line("no channels in header", 1));
    }
    let mut units = Vec::with_capacity(names.len());
    for name in &names {
        let tag = meta
            .units
            .get(name)
            .ok_or_else(|| ParseError::new(format!("missing unit for channel {name}")))?;
        units.push(
            tag.parse::<Unit>()
                .map_err(|_| ParseError::new(format!("unknown unit tag {tag:?} for channel {name}")))?,
        );
    }
    if let Some(extra) = meta.units.keys().find(|k| !names.contains(k)) {
        return Err(ParseError::new(format!(
            "unit given for channel {extra} absent from header"
        )));
    }

    let mut columns: Vec<Vec<T>> = vec![Vec::new(); names.len()];
    let mut t0 = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ParseError::at_line(format!("unreadable row: {e}"), line)
        })?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(ParseError::at_line(
                format!("ragged row: {} fields, expected {}", record.len(), header.len()),
                line,
            ));
        }
        let mut values = record.iter().map(|tok| {
            finite_number(tok)
                .ok_or_else(|| ParseError::at_line(format!("non-numeric value {tok:?}"), line))
        });
        let t = values.next().expect("record has t_s")?;
        let start = *t0.get_or_insert(t);
        let expected = start + row as f64 / meta.fs_hz;
        if (t - expected).abs() > TIMESTAMP_TOLERANCE_S {
            return Err(ParseError::at_line(
                format!("timestamp drift: t={t} expected {expected}"),
                line,
            ));
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(lit(v?));
        }
    }

    let channels = names
        .into_iter()
        .zip(units)
        .zip(columns)
        .map(|((name, unit), samples)| Channel {
            placement: meta
                .placements
                .get(&name)
                .cloned()
                .or_else(|| Placement::lumbar_default(&name)),
            name,
            unit,
            samples,
        })
        .collect();
    SensorTrace::new(lit(meta.fs_hz), lit(t0.unwrap_or(0.0)), channels).map_err(|e| match e {
        TraceError::NonUnitQuaternion { sample, .. } => {
            ParseError::at_line(e.to_string(), sample + 2)
        }
        other => ParseError::new(other.to_string()),
    })
}

/// CSV body and JSON header for a trace.
pub fn write_sensor_csv<T: Real>(trace: &SensorTrace<T>) -> (String, Vec<u8>) {
    let mut out = String::from("t_s");
    for c in trace.channels() {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    let fs = to_f64(trace.fs_hz());
    let t0 = to_f64(trace.start_s());
    for i in 0..trace.len() {
        let _ = write!(out, "{}", t0 + i as f64 / fs);
        for c in trace.channels() {
            let _ = write!(out, ",{}", to_f64(c.samples[i]));
        }
        out.push('\n');
    }
    let meta = SensorMeta {
        fs_hz: fs,
        units: trace
            .channels()
            .iter()
            .map(|c| (c.name.clone(), c.unit.tag().to_string()))
            .collect(),
        placements: trace
            .channels()
            .iter()
            .filter_map(|c| {
                let p = c.placement.clone()?;
                (Placement::lumbar_default(&c.name).as_ref() != Some(&p)).then(|| (c.name.clone(), p))
            })
            .collect(),
    };
    (out, serde_json::to_vec(&meta).expect("sensor header serializes"))
}

// -------------------------------------------------------------- motion

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionMeta {
    pub fps: f64,
    pub correspondence: bool,
}

/// Frame index encoded in a `frame_%06d.xyz` file name.
pub fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".xyz")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:06}.xyz")
}

/// Points of an `.xyz` file: one `x y z` triple per line.
pub fn parse_xyz<T: Real>(bytes: &[u8]) -> Result<Vec<Point3<T>>, ParseError> {
    let text = utf8(bytes)?;
    content_lines(text)
        .map(|(line, body)| parse_xyz_line(body, line))
        .collect()
}

pub fn write_xyz<T: Real>(points: &[Point3<T>]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", to_f64(p.x), to_f64(p.y), to_f64(p.z));
    }
    out
}

/// Builds a sequence from `(file name, bytes)` pairs in any order.
pub fn parse_motion_dir<T: Real>(
    frame_files: &[(String, Vec<u8>)],
    meta_json: &[u8],
) -> Result<MotionSequence<T>, ParseError> {
    let meta: MotionMeta = serde_json::from_slice(meta_json)
        .map_err(|e| ParseError::new(format!("invalid motion header: {e}")))?;
    let mut indexed = Vec::with_capacity(frame_files.len());
    for (name, bytes) in frame_files {
        let idx = frame_index(name).ok_or_else(|| {
            ParseError::new(format!("unexpected file name {name:?}; want frame_NNNNNN.xyz"))
        })?;
        indexed.push((idx, name.as_str(), bytes.as_slice()));
    }
    indexed.sort_by_key(|(i, _, _)| *i);
    if indexed.is_empty() {
        return Err(ParseError::new("no frames"));
    }
    let mut frames = Vec::with_capacity(indexed.len());
    for (expected, (idx, name, bytes)) in indexed.iter().enumerate() {
        if *idx != expected {
            let msg = if *idx < expected {
                format!("duplicate frame {idx}")
            } else {
                format!("missing frame {expected}")
            };
            return Err(ParseError::new(msg));
        }
        frames.push(parse_xyz(bytes).map_err(|e| e.in_file(name))?);
    }
    MotionSequence::new(lit(meta.fps), frames, meta.correspondence).map_err(|e| match e {
        MotionError::Correspondence { frame, .. } => {
            ParseError::new(e.to_string()).in_file(&frame_name(frame))
        }
        other => ParseError::new(other.to_string()),
    })
}

/// Single-document form of a motion directory: `{meta, frames: {name: text}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionBundle {
    pub meta: MotionMeta,
    pub frames: BTreeMap<String, String>,
}

pub fn parse_motion_bundle<T: Real>(bytes: &[u8]) -> Result<MotionSequence<T>, ParseError> {
    let bundle: MotionBundle = serde_json::from_slice(bytes)
        .map_err(|e| ParseError::at_line(format!("invalid motion bundle: {e}"), e.line()))?;
    let files: Vec<(String, Vec<u8>)> = bundle
        .frames
        .into_iter()
        .map(|(k, v)| (k, v.into_bytes()))
        .collect();
    let meta = serde_json::to_vec(&bundle.meta).expect("motion header serializes");
    parse_motion_dir(&files, &meta)
}

pub fn write_motion_bundle<T: Real>(seq: &MotionSequence<T>) -> Vec<u8> {
    let bundle = MotionBundle {
        meta: MotionMeta {
            fps: to_f64(seq.fps()),
            correspondence: seq.correspondence(),
        },
        frames: seq
            .frames()
            .iter()
            .enumerate()
            .map(|(i, f)| (frame_name(i), write_xyz(f)))
            .collect(),
    };
    serde_json::to_vec(&bundle).expect("motion bundle serializes")
}

/// Reads every `frame_NNNNNN.xyz` file of a directory.
pub fn read_frame_files(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".xyz") {
            out.push((name, std::fs::read(entry.path())?));
        }
    }
    out.sort();
    Ok(out)
}

// ----------------------------------------------------------------- EHR

pub fn parse_ehr(json_bytes: &[u8]) -> Result<EhrRecord, ParseError> {
    let value: serde_json::Value = serde_json::from_slice(json_bytes)
        .map_err(|e| ParseError::at_line(format!("invalid JSON: {e}"), e.line()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::new("EHR document must be a JSON object"))?;
    if !obj.get("patient_id").is_some_and(|v| v.is_string()) {
        return Err(ParseError::new("missing patient_id"));
    }
    let record: EhrRecord = serde_json::from_value(value)
        .map_err(|e| ParseError::new(format!("invalid EHR record: {e}")))?;
    if let Some(problem) = record.problems().into_iter().next() {
        return Err(ParseError::new(problem));
    }
    Ok(record)
}

pub fn write_ehr(record: &EhrRecord) -> Vec<u8> {
    serde_json::to_vec(record).expect("EHR record serializes")
}
