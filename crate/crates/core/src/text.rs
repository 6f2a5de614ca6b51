//! Tokenization shared by featurization and the template generator.

/// Lowercases `text`, splits on anything that is not alphanumeric and drops
/// tokens shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_lowercase())
        .collect()
}

/// Tokenizes a sequence of raw words, as stored on an item.
pub fn tokenize_words<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    words.iter().flat_map(|w| tokenize(w.as_ref())).collect()
}

/// Splits raw text into stored words (whitespace separated).
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_drops_short_tokens() {
        assert_eq!(
            tokenize("Solar-Cars, a 2023 EV review!"),
            vec!["solar", "cars", "2023", "ev", "review"]
        );
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" - a . b ").is_empty());
    }

    #[test]
    fn tokenizes_stored_words() {
        let w = words("Autos:  electric   pickups");
        assert_eq!(tokenize_words(&w), vec!["autos", "electric", "pickups"]);
    }
}
