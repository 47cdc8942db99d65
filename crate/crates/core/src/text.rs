//! Word-token helpers shared by the perturbation rules and the scorers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// True for tokens made only of punctuation (".", ",", "!", "'s" is not one).
pub fn is_punct(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '—' | '–'))
}

/// Sentence-final punctuation.
pub fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

fn attaches_left(token: &str) -> bool {
    matches!(token, "'s" | "'" | "n't") || (is_punct(token) && !matches!(token, "(" | "[" | "\"" | "“" | "‘"))
}

/// Joins tokens into display text, attaching punctuation and clitics.
pub fn render(tokens: &[String]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && !attaches_left(t) {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Splits a phrase on whitespace and peels leading/trailing punctuation into
/// separate tokens. Apostrophes inside words stay ("couldn't", "Mark's").
pub fn tokenize_phrase(phrase: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in phrase.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_split_punct(chars[start]) {
            out.push(chars[start].to_string());
            start += 1;
        }
        let mut trailing = Vec::new();
        while end > start && is_split_punct(chars[end - 1]) {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

fn is_split_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')' | '“' | '”')
}

pub fn lower(token: &str) -> String {
    token.to_lowercase()
}

/// Uppercases the first character.
pub fn capitalize(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercases the first character.
pub fn decapitalize(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn eq_ignore_case(a: &str, b: &str) -> bool {
    a.to_lowercase() == b.to_lowercase()
}

/// Token-sequence equality, ignoring case on the first letter of each token.
pub fn words_match(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| decapitalize(x) == decapitalize(y))
}

/// Whether token `i` starts a sentence.
pub fn is_sentence_initial(tokens: &[String], i: usize) -> bool {
    i == 0 || is_sentence_end(&tokens[i - 1]) || (i >= 2 && is_punct(&tokens[i - 1]) && tokens[i - 1] == "\"" && is_sentence_end(&tokens[i - 2]))
}

const FUNCTION_CAPS: &[&str] = &[
    "The", "A", "An", "His", "Her", "Their", "Its", "This", "That", "These", "Those", "He", "She", "They", "It",
    "Him", "Them", "Some", "My", "Our", "Your",
];

/// Capitalizes sentence-initial tokens and lowercases capitalized function
/// words that ended up mid-sentence after a rewrite.
pub fn normalize_case(tokens: &mut [String]) {
    for i in 0..tokens.len() {
        if is_sentence_initial(tokens, i) {
            if tokens[i].chars().next().is_some_and(|c| c.is_lowercase()) {
                tokens[i] = capitalize(&tokens[i]);
            }
        } else if FUNCTION_CAPS.contains(&tokens[i].as_str()) {
            tokens[i] = decapitalize(&tokens[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn render_attaches_punctuation() {
        assert_eq!(
            render(&toks("Sid , which we had seen , explained it to Mark 's son .")),
            "Sid, which we had seen, explained it to Mark's son."
        );
    }

    #[test]
    fn tokenize_phrase_splits_edges() {
        assert_eq!(tokenize_phrase("on the panel, with Chris."), vec!["on", "the", "panel", ",", "with", "Chris", "."]);
        assert_eq!(tokenize_phrase("couldn't"), vec!["couldn't"]);
        assert!(tokenize_phrase("   ").is_empty());
    }

    #[test]
    fn normalize_case_moves_capitals() {
        let mut t = toks("the theory was explained by The man .");
        normalize_case(&mut t);
        assert_eq!(render(&t), "The theory was explained by the man.");
    }
}
