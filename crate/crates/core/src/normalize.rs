//! The single answer normalizer shared by candidate labelling, retrieval
//! deduplication and (by default) evaluation.

/// Lowercases and collapses runs of whitespace to one space.
pub fn normalize_answer(s: &str) -> String {
    normalize_with(s, true, false)
}

pub fn normalize_with(s: &str, lowercase: bool, strip_punct: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        let word: String = if strip_punct { word.chars().filter(|c| !c.is_ascii_punctuation()).collect() } else { word.to_string() };
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        if lowercase {
            out.extend(word.chars().flat_map(char::to_lowercase));
        } else {
            out.push_str(&word);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_and_lowercases() {
        assert_eq!(normalize_answer("  No   Right\tTURN "), "no right turn");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_with("Stop!", false, true), "Stop");
        assert_eq!(normalize_with("a . b", true, true), "a b");
    }
}
