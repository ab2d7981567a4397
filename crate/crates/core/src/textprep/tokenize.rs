/// Splits on whitespace, then peels leading and trailing punctuation off
/// each piece as separate tokens (`"say?"` becomes `["say", "?"]`). A piece
/// made only of punctuation stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let chars: Vec<char> = piece.chars().collect();
        if chars.iter().all(|c| c.is_ascii_punctuation()) {
            out.push(piece.to_string());
            continue;
        }
        let start = chars.iter().position(|c| !c.is_ascii_punctuation()).unwrap_or(0);
        let end = chars.iter().rposition(|c| !c.is_ascii_punctuation()).map_or(chars.len(), |p| p + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peels_punctuation() {
        assert_eq!(tokenize("what does the sign say?"), ["what", "does", "the", "sign", "say", "?"]);
        assert_eq!(tokenize("\"hi\", there..."), ["\"", "hi", "\"", ",", "there", ".", ".", "."]);
        assert_eq!(tokenize(" -- "), ["--"]);
        assert_eq!(tokenize("e.g. U.S.A"), ["e.g", ".", "U.S.A"]);
        assert!(tokenize("   ").is_empty());
    }
}
