//! Binary co-occurrence table files and streaming corpus counting.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "WPMITBL\0" | version u32 | fingerprint (u32 len + utf8)
//! min_count u64 | window u32 | flags u8 (1 dynamic, 2 positional)
//! vocabulary: u32 n, then n x (u32 len + utf8), strictly sorted
//! pairs: u64 n, then n x (u32 word, u32 context, i32 offset, u64 count)
//! checksum u64 (fnv1a64 of everything before it)
//! ```
//!
//! Counts are fixed-point: scaled by the window when dynamic windows are on.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use winoprobe_core::pmi::{corpus_tokens, CooccurrenceTable, PairCounter, PmiConfig, PmiError, VocabCounter};
use winoprobe_core::seed::fnv1a64;

use crate::error::{Error, Result};
use crate::report::write_atomic;

pub const MAGIC: &[u8; 8] = b"WPMITBL\0";
pub const VERSION: u32 = 1;

pub fn encode(t: &CooccurrenceTable) -> Vec<u8> {
    let cfg = t.config();
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut b, &cfg.fingerprint());
    b.extend_from_slice(&cfg.min_count.to_le_bytes());
    b.extend_from_slice(&(cfg.window as u32).to_le_bytes());
    b.push(u8::from(cfg.dynamic_windows) | (u8::from(cfg.positional_contexts) << 1));
    b.extend_from_slice(&(t.vocabulary().len() as u32).to_le_bytes());
    for w in t.vocabulary() {
        put_str(&mut b, w);
    }
    b.extend_from_slice(&(t.pair_rows() as u64).to_le_bytes());
    for (w, c, o, n) in t.scaled_pairs() {
        b.extend_from_slice(&w.to_le_bytes());
        b.extend_from_slice(&c.to_le_bytes());
        b.extend_from_slice(&o.to_le_bytes());
        b.extend_from_slice(&n.to_le_bytes());
    }
    let sum = fnv1a64(&b);
    b.extend_from_slice(&sum.to_le_bytes());
    b
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PmiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| PmiError::Corrupt("truncated table file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PmiError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PmiError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, PmiError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PmiError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, PmiError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| PmiError::Corrupt("string is not utf-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<CooccurrenceTable, PmiError> {
    if bytes.len() < MAGIC.len() + 12 || &bytes[..8] != MAGIC {
        return Err(PmiError::Corrupt("not a co-occurrence table file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(PmiError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(PmiError::Corrupt(format!("unsupported table version {version}")));
    }
    let fingerprint = r.str()?;
    let min_count = r.u64()?;
    let window = r.u32()? as usize;
    let flags = r.u8()?;
    let cfg = PmiConfig { min_count, window, dynamic_windows: flags & 1 != 0, positional_contexts: flags & 2 != 0 };
    if cfg.fingerprint() != fingerprint {
        return Err(PmiError::Corrupt("embedded fingerprint does not match the stored configuration".into()));
    }
    let n = r.u32()? as usize;
    let vocab = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let m = r.u64()? as usize;
    if m > body.len() / 20 {
        return Err(PmiError::Corrupt("pair count exceeds file size".into()));
    }
    let mut pairs = Vec::with_capacity(m);
    for _ in 0..m {
        pairs.push((r.u32()?, r.u32()?, r.i32()?, r.u64()?));
    }
    if r.pos != body.len() {
        return Err(PmiError::Corrupt("trailing bytes".into()));
    }
    CooccurrenceTable::from_parts(cfg, vocab, pairs)
}

pub fn save_table(path: &Path, t: &CooccurrenceTable) -> Result<()> {
    write_atomic(path, &encode(t))
}

pub fn load_table(path: &Path) -> Result<CooccurrenceTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a table and refuses it unless it was built with `expected`.
pub fn load_table_checked(path: &Path, expected: &PmiConfig) -> Result<CooccurrenceTable> {
    let t = load_table(path)?;
    if t.config().fingerprint() != expected.fingerprint() {
        return Err(Error::Config(format!(
            "{} was built with {:?}, which does not match the requested {:?}",
            path.display(),
            t.config(),
            expected
        )));
    }
    Ok(t)
}

const BATCH: usize = 4096;

/// Runs `f` over batches of corpus documents (one per line).
fn for_batches(paths: &[&Path], mut f: impl FnMut(&[Vec<String>])) -> Result<()> {
    let mut batch = Vec::with_capacity(BATCH);
    for p in paths {
        let file = File::open(p).map_err(|e| Error::io(p, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(p, e))?;
            batch.push(corpus_tokens(&line));
            if batch.len() == BATCH {
                f(&batch);
                batch.clear();
            }
        }
    }
    if !batch.is_empty() {
        f(&batch);
    }
    Ok(())
}

fn shards(docs: &[Vec<String>], workers: usize) -> impl Iterator<Item = &[Vec<String>]> {
    docs.chunks(docs.len().div_ceil(workers.max(1)).max(1))
}

/// Counts corpus files in two streaming passes, sharding each batch across
/// `workers` threads.
pub fn build_from_files(paths: &[&Path], cfg: PmiConfig, workers: usize) -> Result<CooccurrenceTable> {
    cfg.validate()?;
    let mut vocab = VocabCounter::default();
    for_batches(paths, |docs| {
        let parts: Vec<VocabCounter> = std::thread::scope(|s| {
            let hs: Vec<_> = shards(docs, workers)
                .map(|shard| {
                    s.spawn(move || {
                        let mut v = VocabCounter::default();
                        shard.iter().for_each(|d| v.add_document(d));
                        v
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("counting thread")).collect()
        });
        parts.into_iter().for_each(|v| vocab.merge(v));
    })?;
    if vocab.tokens() == 0 {
        return Err(PmiError::EmptyCorpus.into());
    }
    let mut pairs = PairCounter::new(cfg, &vocab.vocabulary(cfg.min_count));
    for_batches(paths, |docs| {
        let parts: Vec<PairCounter> = std::thread::scope(|s| {
            let hs: Vec<_> = shards(docs, workers)
                .map(|shard| {
                    let mut p = pairs.fork();
                    s.spawn(move || {
                        shard.iter().for_each(|d| p.add_document(d));
                        p
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("counting thread")).collect()
        });
        parts.into_iter().for_each(|p| pairs.merge(p));
    })?;
    Ok(pairs.finish()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use winoprobe_core::pmi::build_table;

    const CORPUS: &str = "The trophy did not fit in the suitcase.\nThe suitcase was small, the trophy large.\n\nA trophy, a case; a prize!\n";

    fn cfg() -> PmiConfig {
        PmiConfig { min_count: 1, window: 3, dynamic_windows: true, positional_contexts: true }
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let docs: Vec<Vec<String>> = CORPUS.lines().map(corpus_tokens).collect();
        let t = build_table(&docs, cfg()).unwrap();
        let bytes = encode(&t);
        assert_eq!(decode(&bytes).unwrap(), t);
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn streaming_sharded_build_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, CORPUS.repeat(3000)).unwrap();
        let docs: Vec<Vec<String>> = CORPUS.repeat(3000).lines().map(corpus_tokens).collect();
        let want = build_table(&docs, cfg()).unwrap();
        for workers in [1, 3] {
            assert_eq!(build_from_files(&[p.as_path()], cfg(), workers).unwrap(), want);
        }
    }

    #[test]
    fn mismatched_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wpmi");
        let docs: Vec<Vec<String>> = CORPUS.lines().map(corpus_tokens).collect();
        save_table(&p, &build_table(&docs, cfg()).unwrap()).unwrap();
        assert!(load_table_checked(&p, &cfg()).is_ok());
        let other = PmiConfig { window: 4, ..cfg() };
        assert!(matches!(load_table_checked(&p, &other), Err(Error::Config(_))));
    }
}
