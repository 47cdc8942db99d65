//! Lexical resources for the perturbations: inflection tables, name pools,
//! gendered nouns, relative-clause templates and adverbs.
//!
//! A bundle is a set of plain-text tables (tab-separated, `#` comments). The
//! default bundle is compiled in; [`LexiconBundle::parse`] accepts the same
//! files from anywhere.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::schema::Gender;
use crate::text;

/// Number of relative-clause templates shipped with the bundle.
pub const RC_TEMPLATE_COUNT: usize = 20;

/// Placeholder for the per-instance ending in a template.
pub const RC_SLOT: &str = "__";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}:{line}: {message}")]
pub struct LexiconError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

/// Raw file contents of a bundle.
#[derive(Debug, Clone, Copy)]
pub struct LexiconFiles<'a> {
    pub version: &'a str,
    pub plural_rules: &'a str,
    pub singular_rules: &'a str,
    pub plural_irregular: &'a str,
    pub verb_forms: &'a str,
    pub names_masculine: &'a str,
    pub names_feminine: &'a str,
    pub gendered_nouns: &'a str,
    pub rc_templates: &'a str,
    pub adverbs: &'a str,
}

impl LexiconFiles<'_> {
    pub const FILE_NAMES: [&'static str; 10] = [
        "VERSION",
        "plural_rules.tsv",
        "singular_rules.tsv",
        "plural_irregular.tsv",
        "verb_forms.tsv",
        "names_masculine.txt",
        "names_feminine.txt",
        "gendered_nouns.tsv",
        "rc_templates.txt",
        "adverbs.tsv",
    ];
}

pub const BUILTIN_FILES: LexiconFiles<'static> = LexiconFiles {
    version: include_str!("../resources/lexicon/VERSION"),
    plural_rules: include_str!("../resources/lexicon/plural_rules.tsv"),
    singular_rules: include_str!("../resources/lexicon/singular_rules.tsv"),
    plural_irregular: include_str!("../resources/lexicon/plural_irregular.tsv"),
    verb_forms: include_str!("../resources/lexicon/verb_forms.tsv"),
    names_masculine: include_str!("../resources/lexicon/names_masculine.txt"),
    names_feminine: include_str!("../resources/lexicon/names_feminine.txt"),
    gendered_nouns: include_str!("../resources/lexicon/gendered_nouns.tsv"),
    rc_templates: include_str!("../resources/lexicon/rc_templates.txt"),
    adverbs: include_str!("../resources/lexicon/adverbs.tsv"),
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub strip: usize,
    pub append: String,
    pub needs_consonant: bool,
}

impl SuffixRule {
    fn apply(&self, word: &str) -> Option<String> {
        let wildcard = self.suffix == "*";
        if !wildcard && !word.ends_with(self.suffix.as_str()) {
            return None;
        }
        let stem_len = if wildcard { word.len() } else { word.len() - self.suffix.len() };
        if self.needs_consonant {
            let before = word[..stem_len].chars().last()?;
            if !is_consonant(before) {
                return None;
            }
        }
        if self.strip > word.len() {
            return None;
        }
        let kept = word.len() - self.strip;
        if !word.is_char_boundary(kept) {
            return None;
        }
        Some(format!("{}{}", &word[..kept], self.append))
    }
}

fn is_consonant(c: char) -> bool {
    c.is_ascii_alphabetic() && !matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbForms {
    pub base: String,
    pub past: String,
    pub third_singular: String,
    pub present_participle: String,
    pub past_participle: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VerbFormKind {
    Past,
    Base,
    ThirdSingular,
    PresentParticiple,
    PastParticiple,
}

impl VerbForms {
    pub fn form(&self, kind: VerbFormKind) -> &str {
        match kind {
            VerbFormKind::Base => &self.base,
            VerbFormKind::Past => &self.past,
            VerbFormKind::ThirdSingular => &self.third_singular,
            VerbFormKind::PresentParticiple => &self.present_participle,
            VerbFormKind::PastParticiple => &self.past_participle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconBundle {
    pub version: String,
    pub plural_rules: Vec<SuffixRule>,
    pub singular_rules: Vec<SuffixRule>,
    /// (singular, plural)
    pub irregular_nouns: Vec<(String, String)>,
    pub verbs: Vec<VerbForms>,
    pub names_masculine: Vec<String>,
    pub names_feminine: Vec<String>,
    /// (masculine, feminine)
    pub gendered_nouns: Vec<(String, String)>,
    pub rc_templates: Vec<String>,
    /// (verb base or "*", adverb)
    pub adverbs: Vec<(String, String)>,
    verb_index: BTreeMap<String, Vec<(VerbFormKind, usize)>>,
    name_index: BTreeMap<String, Gender>,
}

fn rows<'a>(file: &'a str, body: &'a str, columns: usize) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), LexiconError>> + 'a {
    body.lines().enumerate().filter_map(move |(i, line)| {
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            return None;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != columns {
            return Some(Err(LexiconError {
                file: file.into(),
                line: i + 1,
                message: format!("expected {columns} columns, found {}", cols.len()),
            }));
        }
        Some(Ok((i + 1, cols)))
    })
}

fn parse_rules(file: &str, body: &str) -> Result<Vec<SuffixRule>, LexiconError> {
    rows(file, body, 4)
        .map(|r| {
            let (line, c) = r?;
            let strip = c[1].parse().map_err(|_| LexiconError {
                file: file.into(),
                line,
                message: format!("bad strip count {:?}", c[1]),
            })?;
            let needs_consonant = match c[3] {
                "consonant" => true,
                "-" | "" => false,
                other => {
                    return Err(LexiconError { file: file.into(), line, message: format!("unknown condition {other:?}") })
                }
            };
            Ok(SuffixRule { suffix: c[0].into(), strip, append: c[2].into(), needs_consonant })
        })
        .collect()
}

fn parse_pairs(file: &str, body: &str) -> Result<Vec<(String, String)>, LexiconError> {
    rows(file, body, 2).map(|r| r.map(|(_, c)| (c[0].to_lowercase(), c[1].to_lowercase()))).collect()
}

fn parse_list(body: &str) -> Vec<String> {
    body.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

impl LexiconBundle {
    /// The compiled-in default bundle.
    pub fn builtin() -> Self {
        Self::parse(&BUILTIN_FILES).expect("builtin lexicon is well formed")
    }

    pub fn parse(files: &LexiconFiles<'_>) -> Result<Self, LexiconError> {
        let err = |file: &str, message: String| LexiconError { file: file.into(), line: 0, message };
        let version = files.version.trim().to_string();
        if version.is_empty() {
            return Err(err("VERSION", "empty version".into()));
        }
        let plural_rules = parse_rules("plural_rules.tsv", files.plural_rules)?;
        let singular_rules = parse_rules("singular_rules.tsv", files.singular_rules)?;
        let irregular_nouns = parse_pairs("plural_irregular.tsv", files.plural_irregular)?;
        let gendered_nouns = parse_pairs("gendered_nouns.tsv", files.gendered_nouns)?;
        let adverbs = parse_pairs("adverbs.tsv", files.adverbs)?;
        let verbs = rows("verb_forms.tsv", files.verb_forms, 5)
            .map(|r| {
                r.map(|(_, c)| VerbForms {
                    base: c[0].into(),
                    past: c[1].into(),
                    third_singular: c[2].into(),
                    present_participle: c[3].into(),
                    past_participle: c[4].into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let names_masculine = parse_list(files.names_masculine);
        let names_feminine = parse_list(files.names_feminine);
        if names_masculine.is_empty() || names_feminine.is_empty() {
            return Err(err("names", "name pools must be non-empty".into()));
        }
        let masc: BTreeSet<String> = names_masculine.iter().map(|n| n.to_lowercase()).collect();
        if let Some(shared) = names_feminine.iter().find(|n| masc.contains(&n.to_lowercase())) {
            return Err(err("names_feminine.txt", format!("{shared} is in both name pools")));
        }
        let rc_templates = parse_list(files.rc_templates);
        if rc_templates.len() != RC_TEMPLATE_COUNT {
            return Err(err(
                "rc_templates.txt",
                format!("expected {RC_TEMPLATE_COUNT} templates, found {}", rc_templates.len()),
            ));
        }
        if let Some(t) = rc_templates.iter().find(|t| t.split(' ').filter(|w| *w == RC_SLOT).count() != 1) {
            return Err(err("rc_templates.txt", format!("template {t:?} needs exactly one {RC_SLOT}")));
        }
        if !adverbs.iter().any(|(k, _)| k == "*") {
            return Err(err("adverbs.tsv", "no fallback (*) adverbs".into()));
        }

        let mut verb_index: BTreeMap<String, Vec<(VerbFormKind, usize)>> = BTreeMap::new();
        for (i, v) in verbs.iter().enumerate() {
            for kind in [
                VerbFormKind::Past,
                VerbFormKind::Base,
                VerbFormKind::ThirdSingular,
                VerbFormKind::PresentParticiple,
                VerbFormKind::PastParticiple,
            ] {
                verb_index.entry(v.form(kind).to_lowercase()).or_default().push((kind, i));
            }
        }
        let mut name_index = BTreeMap::new();
        for n in &names_masculine {
            name_index.insert(n.to_lowercase(), Gender::Masculine);
        }
        for n in &names_feminine {
            name_index.insert(n.to_lowercase(), Gender::Feminine);
        }
        Ok(LexiconBundle {
            version,
            plural_rules,
            singular_rules,
            irregular_nouns,
            verbs,
            names_masculine,
            names_feminine,
            gendered_nouns,
            rc_templates,
            adverbs,
            verb_index,
            name_index,
        })
    }

    /// Plural form of a noun, preserving an initial capital.
    pub fn pluralize(&self, noun: &str) -> String {
        let lower = noun.to_lowercase();
        let out = self
            .irregular_nouns
            .iter()
            .find(|(s, _)| *s == lower)
            .map(|(_, p)| p.clone())
            .or_else(|| self.irregular_compound(&lower, true))
            .or_else(|| self.plural_rules.iter().find_map(|r| r.apply(&lower)))
            .unwrap_or(lower);
        match_case(noun, &out)
    }

    /// Singular form of a noun, preserving an initial capital.
    pub fn singularize(&self, noun: &str) -> String {
        let lower = noun.to_lowercase();
        let out = self
            .irregular_nouns
            .iter()
            .find(|(_, p)| *p == lower)
            .map(|(s, _)| s.clone())
            .or_else(|| self.irregular_compound(&lower, false))
            .or_else(|| self.singular_rules.iter().find_map(|r| r.apply(&lower)))
            .unwrap_or(lower);
        match_case(noun, &out)
    }

    // "councilman" -> "councilmen" via the "man"/"men" entry.
    fn irregular_compound(&self, lower: &str, to_plural: bool) -> Option<String> {
        self.irregular_nouns.iter().find_map(|(s, p)| {
            let (from, to) = if to_plural { (s, p) } else { (p, s) };
            if matches!(from.as_str(), "man" | "men") && lower.len() > from.len() && lower.ends_with(from.as_str()) {
                Some(format!("{}{}", &lower[..lower.len() - from.len()], to))
            } else {
                None
            }
        })
    }

    /// Whether the noun looks plural under the bundle's tables.
    pub fn is_plural_noun(&self, noun: &str) -> bool {
        let lower = noun.to_lowercase();
        if self.irregular_nouns.iter().any(|(s, p)| *p == lower && *s != lower) {
            return true;
        }
        if self.irregular_nouns.iter().any(|(s, _)| *s == lower) {
            return false;
        }
        self.singularize(&lower) != lower && self.pluralize(&self.singularize(&lower)) == lower
    }

    /// Every (form kind, verb) reading of a token.
    pub fn verb_readings(&self, token: &str) -> Vec<(VerbFormKind, &VerbForms)> {
        self.verb_index
            .get(&token.to_lowercase())
            .map(|v| v.iter().map(|&(k, i)| (k, &self.verbs[i])).collect())
            .unwrap_or_default()
    }

    /// The verb of a token read as the given form.
    pub fn verb_as(&self, token: &str, kind: VerbFormKind) -> Option<&VerbForms> {
        self.verb_readings(token).into_iter().find(|(k, _)| *k == kind).map(|(_, v)| v)
    }

    pub fn verb_base(&self, token: &str) -> Option<&VerbForms> {
        self.verb_readings(token).into_iter().next().map(|(_, v)| v)
    }

    pub fn name_gender(&self, token: &str) -> Option<Gender> {
        self.name_index.get(&token.to_lowercase()).copied()
    }

    pub fn names(&self, gender: Gender) -> &[String] {
        match gender {
            Gender::Feminine => &self.names_feminine,
            _ => &self.names_masculine,
        }
    }

    /// Opposite-gender counterpart of a gendered noun, with its own gender.
    pub fn gender_counterpart(&self, noun: &str) -> Option<(String, Gender)> {
        let lower = noun.to_lowercase();
        self.gendered_nouns.iter().find_map(|(m, f)| {
            if *m == lower {
                Some((match_case(noun, f), Gender::Feminine))
            } else if *f == lower {
                Some((match_case(noun, m), Gender::Masculine))
            } else {
                None
            }
        })
    }

    /// Filled relative clause tokens for a template index.
    pub fn rc_clause(&self, index: usize, ending: &str) -> Option<Vec<String>> {
        let template = self.rc_templates.get(index)?;
        let mut out = Vec::new();
        for w in template.split(' ') {
            if w == RC_SLOT {
                out.extend(text::tokenize_phrase(ending));
            } else {
                out.push(w.to_string());
            }
        }
        Some(out)
    }

    /// Adverbs listed for a verb base, or the fallback list.
    pub fn adverbs_for(&self, base: Option<&str>) -> Vec<&str> {
        let keyed: Vec<&str> = base
            .map(|b| self.adverbs.iter().filter(|(k, _)| k == b).map(|(_, a)| a.as_str()).collect())
            .unwrap_or_default();
        if keyed.is_empty() {
            self.adverbs.iter().filter(|(k, _)| k == "*").map(|(_, a)| a.as_str()).collect()
        } else {
            keyed
        }
    }

    /// Every lowercased word the bundle can emit.
    pub fn words(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |s: &str| {
            for w in text::tokenize_phrase(s) {
                if w != RC_SLOT {
                    out.insert(w.to_lowercase());
                }
            }
        };
        for (a, b) in self.irregular_nouns.iter().chain(&self.gendered_nouns) {
            add(a);
            add(b);
        }
        for v in &self.verbs {
            for f in [&v.base, &v.past, &v.third_singular, &v.present_participle, &v.past_participle] {
                add(f);
            }
        }
        for s in self.names_masculine.iter().chain(&self.names_feminine).chain(&self.rc_templates) {
            add(s);
        }
        for (_, a) in &self.adverbs {
            add(a);
        }
        out
    }

    pub fn is_adverb(&self, token: &str) -> bool {
        let lower = token.to_lowercase();
        self.adverbs.iter().any(|(_, a)| *a == lower)
    }
}

/// Copies the capitalization of `model`'s first letter onto `word`.
pub fn match_case(model: &str, word: &str) -> String {
    if model.chars().next().is_some_and(|c| c.is_uppercase()) {
        text::capitalize(word)
    } else {
        word.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses() {
        let lex = LexiconBundle::builtin();
        assert_eq!(lex.rc_templates.len(), RC_TEMPLATE_COUNT);
        assert_eq!(lex.rc_templates[4], "which we had seen __");
        assert!(lex.verbs.len() > 300);
    }

    #[test]
    fn plural_and_singular() {
        let lex = LexiconBundle::builtin();
        for (s, p) in [
            ("theory", "theories"),
            ("boy", "boys"),
            ("box", "boxes"),
            ("church", "churches"),
            ("child", "children"),
            ("Man", "Men"),
            ("suitcase", "suitcases"),
            ("fish", "fish"),
            ("councilman", "councilmen"),
            ("bus", "buses"),
        ] {
            assert_eq!(lex.pluralize(s), p, "pluralize {s}");
            assert_eq!(lex.singularize(p), s, "singularize {p}");
        }
        assert!(lex.is_plural_noun("children"));
        assert!(lex.is_plural_noun("suitcases"));
        assert!(!lex.is_plural_noun("suitcase"));
        assert!(!lex.is_plural_noun("bus"));
    }

    #[test]
    fn verb_lookup() {
        let lex = LexiconBundle::builtin();
        let v = lex.verb_as("explained", VerbFormKind::Past).unwrap();
        assert_eq!(v.present_participle, "explaining");
        assert_eq!(lex.verb_as("tied", VerbFormKind::Past).unwrap().present_participle, "tying");
        assert_eq!(lex.verb_base("fits").unwrap().base, "fit");
    }

    #[test]
    fn names_and_gendered_nouns() {
        let lex = LexiconBundle::builtin();
        assert_eq!(lex.name_gender("Sid"), Some(Gender::Masculine));
        assert_eq!(lex.name_gender("lucy"), Some(Gender::Feminine));
        assert_eq!(lex.gender_counterpart("Men"), Some(("Women".into(), Gender::Feminine)));
        assert_eq!(lex.gender_counterpart("girls"), Some(("boys".into(), Gender::Masculine)));
    }

    #[test]
    fn rc_clause_fills_slot() {
        let lex = LexiconBundle::builtin();
        let c = lex.rc_clause(4, "on the discussion panel with Chris").unwrap();
        assert_eq!(c.join(" "), "which we had seen on the discussion panel with Chris");
        assert!(lex.rc_clause(RC_TEMPLATE_COUNT, "x").is_none());
    }

    #[test]
    fn rejects_bad_bundles() {
        let mut files = BUILTIN_FILES;
        files.names_feminine = "Sid\n";
        assert!(LexiconBundle::parse(&files).is_err());
        let mut files = BUILTIN_FILES;
        files.rc_templates = "who __\n";
        assert!(LexiconBundle::parse(&files).is_err());
        let mut files = BUILTIN_FILES;
        files.verb_forms = "go\twent\n";
        assert_eq!(LexiconBundle::parse(&files).unwrap_err().line, 1);
    }

    #[test]
    fn adverb_fallback() {
        let lex = LexiconBundle::builtin();
        assert_eq!(lex.adverbs_for(Some("explain")), ["diligently", "patiently"]);
        assert!(lex.adverbs_for(Some("zzz")).contains(&"quickly"));
        assert!(lex.is_adverb("Diligently"));
    }
}
