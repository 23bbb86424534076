//! Tokenization shared by keyword matching and topic extraction.

/// Case-folded tokens with surrounding punctuation stripped.
pub fn keyword_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|raw| {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            None
        } else {
            Some(t.to_lowercase())
        }
    })
}

/// Whitespace word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_folds_case() {
        let toks: Vec<_> = keyword_tokens("Invite me. BET! ...").collect();
        assert_eq!(toks, vec!["invite", "me", "bet"]);
    }

    #[test]
    fn word_count_uses_unicode_whitespace() {
        assert_eq!(word_count("a\u{3000}b\tc  d\n"), 4);
    }
}
