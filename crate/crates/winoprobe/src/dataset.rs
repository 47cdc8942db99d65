//! Line-oriented dataset files.
//!
//! The first non-empty line is a header object
//! `{"format":"winoprobe-dataset","version":1}`; every following line holds
//! one instance. Perturbed files add `"kind"` to the header and `origin_id`
//! and `kind` to every record; instances that could not be perturbed are
//! kept as `{"origin_id", "kind", "skipped", "detail"}` records.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use winoprobe_core::schema::{Dataset, PerturbationKind, PerturbedDataset, SchemaInstance, SkipReason, Skipped};

use crate::error::{Error, Result};
use crate::report::write_atomic;

pub const FORMAT: &str = "winoprobe-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<PerturbationKind>,
}

#[derive(Serialize)]
struct PerturbedRecord<'a> {
    origin_id: &'a str,
    kind: PerturbationKind,
    #[serde(flatten)]
    instance: &'a SchemaInstance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkippedRecord {
    origin_id: String,
    kind: PerturbationKind,
    skipped: SkipReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    detail: String,
}

/// Non-empty lines with their 1-based numbers.
fn records(reader: impl BufRead, source: &str) -> Result<Vec<(usize, Value)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::format(source, i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::format(source, i + 1, format!("malformed record: {e}")))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn header(records: &[(usize, Value)], source: &str) -> Result<Header> {
    let (line, v) = records.first().ok_or_else(|| Error::format(source, 1, "missing header line"))?;
    let h: Header = serde_json::from_value(v.clone()).map_err(|e| Error::format(source, *line, format!("bad header: {e}")))?;
    if h.format != FORMAT {
        return Err(Error::format(source, *line, format!("format {:?} is not {FORMAT:?}", h.format)));
    }
    if h.version != VERSION {
        return Err(Error::format(source, *line, format!("unsupported version {}", h.version)));
    }
    Ok(h)
}

fn record_id(v: &Value) -> String {
    v.get("id").and_then(Value::as_str).unwrap_or("?").to_string()
}

fn decode(v: Value, source: &str, line: usize) -> Result<SchemaInstance> {
    let id = record_id(&v);
    serde_path_to_error::deserialize(v).map_err(|e| Error::format(source, line, format!("instance {id}: {}: {}", e.path(), e.inner())))
}

fn instance(v: Value, source: &str, line: usize) -> Result<SchemaInstance> {
    let inst = decode(v, source, line)?;
    inst.validate().map_err(|e| Error::format(source, line, e.to_string()))?;
    Ok(inst)
}

/// Decoded records with their line numbers, without invariant checks.
/// The kind is set for perturbed files.
pub fn read_instances(reader: impl BufRead, source: &str) -> Result<(Option<PerturbationKind>, Vec<(usize, SchemaInstance)>)> {
    let recs = records(reader, source)?;
    let h = header(&recs, source)?;
    let mut out = Vec::new();
    for (line, mut v) in recs.into_iter().skip(1) {
        if h.kind.is_some() {
            if v.get("skipped").is_some() {
                continue;
            }
            if let Some(obj) = v.as_object_mut() {
                obj.remove("origin_id");
                obj.remove("kind");
            }
        }
        out.push((line, decode(v, source, line)?));
    }
    Ok((h.kind, out))
}

pub fn parse_dataset(reader: impl BufRead, source: &str) -> Result<Dataset> {
    let recs = records(reader, source)?;
    let h = header(&recs, source)?;
    if let Some(kind) = h.kind {
        return Err(Error::format(source, recs[0].0, format!("this is a perturbed ({kind}) file, not a dataset")));
    }
    let instances = recs.into_iter().skip(1).map(|(line, v)| instance(v, source, line)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(instances)?)
}

/// Parses a perturbed file; with `origin` the origin links are checked.
pub fn parse_perturbed(reader: impl BufRead, source: &str, origin: Option<&Dataset>) -> Result<PerturbedDataset> {
    let recs = records(reader, source)?;
    let h = header(&recs, source)?;
    let kind = h.kind.ok_or_else(|| Error::format(source, recs[0].0, "header has no perturbation kind"))?;
    let mut out = PerturbedDataset { kind, instances: Vec::new(), skipped: Vec::new() };
    for (line, mut v) in recs.into_iter().skip(1) {
        let obj = v.as_object_mut().ok_or_else(|| Error::format(source, line, "record is not an object"))?;
        if obj.contains_key("skipped") {
            let s: SkippedRecord = serde_path_to_error::deserialize(v)
                .map_err(|e| Error::format(source, line, format!("skipped record: {}: {}", e.path(), e.inner())))?;
            if s.kind != kind {
                return Err(Error::format(source, line, format!("record kind {} in a {kind} file", s.kind)));
            }
            out.skipped.push(Skipped { origin_id: s.origin_id, reason: s.skipped, detail: s.detail });
            continue;
        }
        let origin_id = match obj.remove("origin_id") {
            Some(Value::String(s)) => s,
            _ => return Err(Error::format(source, line, format!("instance {}: origin_id: missing or not a string", record_id(&v)))),
        };
        let rk = obj.remove("kind").map(serde_json::from_value::<PerturbationKind>);
        match rk {
            Some(Ok(k)) if k == kind => {}
            Some(Ok(k)) => return Err(Error::format(source, line, format!("record kind {k} in a {kind} file"))),
            _ => return Err(Error::format(source, line, format!("instance {}: kind: missing or invalid", record_id(&v)))),
        }
        out.instances.push((origin_id, instance(v, source, line)?));
    }
    if let Some(d) = origin {
        out.validate_against(d)?;
    }
    Ok(out)
}

fn header_line(kind: Option<PerturbationKind>) -> String {
    serde_json::to_string(&Header { format: FORMAT.into(), version: VERSION, kind }).expect("header serializes")
}

pub fn write_dataset(d: &Dataset, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", header_line(None))?;
    for inst in d.instances() {
        writeln!(w, "{}", serde_json::to_string(inst).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

pub fn write_perturbed(p: &PerturbedDataset, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", header_line(Some(p.kind)))?;
    for (origin_id, instance) in &p.instances {
        let r = PerturbedRecord { origin_id, kind: p.kind, instance };
        writeln!(w, "{}", serde_json::to_string(&r).map_err(std::io::Error::other)?)?;
    }
    for s in &p.skipped {
        let r = SkippedRecord { origin_id: s.origin_id.clone(), kind: p.kind, skipped: s.reason, detail: s.detail.clone() };
        writeln!(w, "{}", serde_json::to_string(&r).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

pub fn dataset_bytes(d: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(d, &mut buf).expect("writing to memory");
    buf
}

pub fn perturbed_bytes(p: &PerturbedDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_perturbed(p, &mut buf).expect("writing to memory");
    buf
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(open(path)?, &path.display().to_string())
}

pub fn load_perturbed(path: &Path, origin: Option<&Dataset>) -> Result<PerturbedDataset> {
    parse_perturbed(open(path)?, &path.display().to_string(), origin)
}

pub fn save_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_atomic(path, &dataset_bytes(d))
}

pub fn save_perturbed(path: &Path, p: &PerturbedDataset) -> Result<()> {
    write_atomic(path, &perturbed_bytes(p))
}
