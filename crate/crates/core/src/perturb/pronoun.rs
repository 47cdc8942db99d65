//! Closed third-person pronoun tables.

use alloc::string::String;
use alloc::vec::Vec;

use crate::schema::{Gender, GrammaticalNumber, PronounCase};
use crate::text;

/// Person/number/gender class of a third-person pronoun.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PronounClass {
    Masculine,
    Feminine,
    Neuter,
    Plural,
}

impl PronounClass {
    pub fn of(number: GrammaticalNumber, gender: Gender) -> Option<Self> {
        match (number, gender) {
            (GrammaticalNumber::Plural, _) => Some(PronounClass::Plural),
            (GrammaticalNumber::Singular, Gender::Masculine) => Some(PronounClass::Masculine),
            (GrammaticalNumber::Singular, Gender::Feminine) => Some(PronounClass::Feminine),
            (GrammaticalNumber::Singular, Gender::Neuter) => Some(PronounClass::Neuter),
            (GrammaticalNumber::Singular, Gender::Unspecified) => None,
        }
    }

    pub fn number(self) -> GrammaticalNumber {
        if self == PronounClass::Plural {
            GrammaticalNumber::Plural
        } else {
            GrammaticalNumber::Singular
        }
    }

    /// Whether a referent with this number and gender can be the antecedent.
    pub fn compatible(self, number: GrammaticalNumber, gender: Gender) -> bool {
        match self {
            PronounClass::Plural => number == GrammaticalNumber::Plural,
            PronounClass::Masculine => {
                number == GrammaticalNumber::Singular && matches!(gender, Gender::Masculine | Gender::Unspecified)
            }
            PronounClass::Feminine => {
                number == GrammaticalNumber::Singular && matches!(gender, Gender::Feminine | Gender::Unspecified)
            }
            PronounClass::Neuter => number == GrammaticalNumber::Singular && gender == Gender::Neuter,
        }
    }
}

const CASES: [PronounCase; 5] = [
    PronounCase::Subject,
    PronounCase::Object,
    PronounCase::Possessive,
    PronounCase::Independent,
    PronounCase::Reflexive,
];

const TABLE: [(PronounClass, [&str; 5]); 4] = [
    (PronounClass::Masculine, ["he", "him", "his", "his", "himself"]),
    (PronounClass::Feminine, ["she", "her", "her", "hers", "herself"]),
    (PronounClass::Neuter, ["it", "it", "its", "its", "itself"]),
    (PronounClass::Plural, ["they", "them", "their", "theirs", "themselves"]),
];

pub fn form(class: PronounClass, case: PronounCase) -> &'static str {
    let row = TABLE.iter().find(|(c, _)| *c == class).map(|(_, r)| r).expect("class in table");
    row[CASES.iter().position(|c| *c == case).expect("case in table")]
}

/// Class and candidate cases of a pronoun token.
pub fn readings(token: &str) -> Option<(PronounClass, Vec<PronounCase>)> {
    let lower = token.to_lowercase();
    TABLE.iter().find_map(|(class, row)| {
        let cases: Vec<PronounCase> = CASES.iter().zip(row).filter(|(_, f)| **f == lower).map(|(c, _)| *c).collect();
        (!cases.is_empty()).then_some((*class, cases))
    })
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "to", "of", "in", "on", "at", "for", "from", "with", "by", "about", "into", "and", "but", "or",
    "so", "because", "since", "that", "when", "while", "as", "if", "than", "though", "although", "until", "after",
    "before", "up", "down", "out", "off", "over", "back", "away", "again", "too", "very", "this", "then",
];

const AUXILIARIES: &[&str] = &[
    "is", "was", "has", "had", "does", "did", "can", "could", "will", "would", "should", "might", "must", "may",
    "isn't", "wasn't", "hasn't", "hadn't", "doesn't", "didn't", "can't", "couldn't", "won't", "wouldn't", "shouldn't",
    "are", "were", "have", "do", "don't", "aren't", "weren't", "haven't",
];

pub fn is_auxiliary(token: &str) -> bool {
    AUXILIARIES.contains(&token.to_lowercase().as_str())
}

fn is_function_word(token: &str) -> bool {
    FUNCTION_WORDS.contains(&token.to_lowercase().as_str())
}

/// Grammatical case of the pronoun at `i`, using a link when supplied and a
/// next-token heuristic for the ambiguous forms otherwise.
pub fn case_at(tokens: &[String], i: usize, linked: Option<PronounCase>) -> Option<PronounCase> {
    let (class, cases) = readings(&tokens[i])?;
    if let Some(c) = linked.filter(|c| cases.contains(c)) {
        return Some(c);
    }
    if cases.len() == 1 {
        return Some(cases[0]);
    }
    let next = tokens.get(i + 1).map(String::as_str);
    let closes = |n: Option<&str>| match n {
        None => true,
        Some(n) => text::is_punct(n) || is_function_word(n) || n.ends_with("ly"),
    };
    Some(match class {
        PronounClass::Feminine => {
            if closes(next) {
                PronounCase::Object
            } else {
                PronounCase::Possessive
            }
        }
        PronounClass::Masculine | PronounClass::Neuter if cases.contains(&PronounCase::Independent) => {
            if closes(next) {
                PronounCase::Independent
            } else {
                PronounCase::Possessive
            }
        }
        _ => {
            // "it": subject before a verb-like token, object otherwise.
            let prev = if i == 0 { None } else { Some(tokens[i - 1].as_str()) };
            let clause_start = prev.is_none_or(|p| text::is_punct(p) || is_function_word(p));
            if next.is_some_and(is_auxiliary) || (clause_start && !closes(next)) {
                PronounCase::Subject
            } else {
                PronounCase::Object
            }
        }
    })
}

/// The form of `class`/`case`, capitalized like `model`.
pub fn render_like(model: &str, class: PronounClass, case: PronounCase) -> String {
    crate::lexicon::match_case(model, form(class, case))
}
