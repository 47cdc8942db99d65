//! Lexicon bundles stored as a directory of plain-text tables.

use std::path::Path;

use winoprobe_core::lexicon::{LexiconBundle, LexiconFiles};

use crate::error::{Error, Result};

/// Reads every table of a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<LexiconBundle> {
    let mut texts = Vec::with_capacity(LexiconFiles::FILE_NAMES.len());
    for name in LexiconFiles::FILE_NAMES {
        let p = dir.join(name);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::Missing(format!("lexicon bundle {}: {name}: {e}", dir.display())))?;
        texts.push(text);
    }
    let files = LexiconFiles {
        version: &texts[0],
        plural_rules: &texts[1],
        singular_rules: &texts[2],
        plural_irregular: &texts[3],
        verb_forms: &texts[4],
        names_masculine: &texts[5],
        names_feminine: &texts[6],
        gendered_nouns: &texts[7],
        rc_templates: &texts[8],
        adverbs: &texts[9],
    };
    Ok(LexiconBundle::parse(&files)?)
}

/// The bundle in `dir`, or the compiled-in one.
pub fn bundle(dir: Option<&Path>) -> Result<LexiconBundle> {
    match dir {
        Some(d) => load_bundle(d),
        None => Ok(LexiconBundle::builtin()),
    }
}
