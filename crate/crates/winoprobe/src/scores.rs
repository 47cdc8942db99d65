//! Score set files: a header line, then one prediction per line.
//! Scores are stored with 12 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use winoprobe_core::scoring::{Prediction, ScoreSet, Strategy};

use crate::error::{Error, Result};
use crate::report::{round12, write_atomic};

pub const FORMAT: &str = "winoprobe-scores";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    dataset: String,
    strategy: Strategy,
    adapter: String,
    fingerprint: String,
    seed: u64,
    count: usize,
}

/// Rounds scores to their stored precision so in-memory sets equal what a
/// reload would produce.
pub fn canonicalize(s: &mut ScoreSet) {
    for p in &mut s.predictions {
        p.scores = p.scores.map(round12);
    }
}

pub fn write_scores(s: &ScoreSet, mut w: impl Write) -> std::io::Result<()> {
    let h = Header {
        format: FORMAT.into(),
        version: VERSION,
        dataset: s.dataset.clone(),
        strategy: s.strategy,
        adapter: s.adapter.clone(),
        fingerprint: s.fingerprint.clone(),
        seed: s.seed,
        count: s.predictions.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&h).map_err(std::io::Error::other)?)?;
    for p in &s.predictions {
        let p = Prediction { scores: p.scores.map(round12), ..p.clone() };
        writeln!(w, "{}", serde_json::to_string(&p).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

pub fn scores_bytes(s: &ScoreSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_scores(s, &mut buf).expect("writing to memory");
    buf
}

pub fn parse_scores(reader: impl BufRead, source: &str) -> Result<ScoreSet> {
    let mut header: Option<Header> = None;
    let mut predictions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::format(source, i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        if header.is_none() {
            let h: Header = serde_path_to_error::deserialize(&mut de)
                .map_err(|e| Error::format(source, i + 1, format!("bad header: {}: {}", e.path(), e.inner())))?;
            if h.format != FORMAT || h.version != VERSION {
                return Err(Error::format(source, i + 1, format!("not a {FORMAT} v{VERSION} file")));
            }
            header = Some(h);
            continue;
        }
        let p: Prediction = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::format(source, i + 1, format!("prediction: {}: {}", e.path(), e.inner())))?;
        predictions.push(p);
    }
    let h = header.ok_or_else(|| Error::format(source, 1, "missing header line"))?;
    if h.count != predictions.len() {
        return Err(Error::format(source, 1, format!("header announces {} predictions, found {}", h.count, predictions.len())));
    }
    Ok(ScoreSet { dataset: h.dataset, strategy: h.strategy, adapter: h.adapter, fingerprint: h.fingerprint, seed: h.seed, predictions })
}

pub fn load_scores(path: &Path) -> Result<ScoreSet> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scores(BufReader::new(f), &path.display().to_string())
}

pub fn save_scores(path: &Path, s: &ScoreSet) -> Result<()> {
    write_atomic(path, &scores_bytes(s))
}
