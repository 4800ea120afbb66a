use super::vocab::{TokenId, Vocabulary};

/// Lowercased word split: alphanumeric runs (apostrophes kept inside a word)
/// and single punctuation characters.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || (ch == '\'' && !cur.is_empty()) {
            cur.extend(ch.to_lowercase());
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    words(text).iter().map(|w| vocab.id(w)).collect()
}

pub(crate) fn is_sentence_end(word: &str) -> bool {
    matches!(word, "." | "!" | "?")
}

/// Splits text into sentences on `.`, `!`, `?`, keeping the terminator.
pub fn sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for w in words(text) {
        let end = is_sentence_end(&w);
        cur.push(w);
        if end {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::UNK;

    #[test]
    fn empty_text() {
        assert!(tokenize("", &Vocabulary::default()).is_empty());
    }

    #[test]
    fn direct_lookup() {
        let v = Vocabulary::from_tokens(["the", "cat", "."]).unwrap();
        assert_eq!(tokenize("The cat.", &v), vec![5, 6, 7]);
    }

    #[test]
    fn oov_maps_to_unk() {
        let v = Vocabulary::from_tokens(["the", "cat"]).unwrap();
        assert_eq!(tokenize("the dog cat", &v), vec![5, UNK, 6]);
    }

    #[test]
    fn punctuation_and_apostrophes() {
        assert_eq!(
            words("It's  fine, ok?!"),
            ["it's", "fine", ",", "ok", "?", "!"]
        );
        assert_eq!(words("'quoted'"), ["'", "quoted'"]);
    }

    #[test]
    fn sentence_split() {
        let s = sentences("a b. c d! e");
        assert_eq!(s, vec![vec!["a", "b", "."], vec!["c", "d", "!"], vec!["e"]]);
    }
}
