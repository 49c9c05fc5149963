/// Splits text into lowercase word pieces and single punctuation tokens.
/// CamelCase identifiers are split at case boundaries
/// (`getForecastDaily` -> `get`, `forecast`, `daily`; `XMLParser` ->
/// `xml`, `parser`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            split_camel(&chars[start..i], &mut out);
        } else {
            out.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    out
}

fn split_camel(word: &[char], out: &mut Vec<String>) {
    let mut start = 0;
    for j in 1..word.len() {
        let (prev, cur) = (word[j - 1], word[j]);
        let next_lower = word.get(j + 1).is_some_and(|c| c.is_lowercase());
        let boundary = (prev.is_lowercase() && cur.is_uppercase())
            || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
        if boundary {
            out.push(word[start..j].iter().flat_map(|c| c.to_lowercase()).collect());
            start = j;
        }
    }
    out.push(word[start..].iter().flat_map(|c| c.to_lowercase()).collect());
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Function words that never receive the copy bonus or query-feature weight.
pub(crate) const STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "do",
    "does", "for", "from", "get", "give", "how", "i", "in", "is", "it", "me", "my", "need", "of",
    "on", "or", "please", "show", "so", "some", "tell", "that", "the", "their", "them", "then",
    "there", "these", "this", "to", "want", "was", "what", "when", "where", "which", "who", "will",
    "with", "would", "you", "your",
];

pub(crate) fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_camel_case_and_punctuation() {
        assert_eq!(
            tokenize("Tool: Acme | API: getForecastDaily"),
            ["tool", ":", "acme", "|", "api", ":", "get", "forecast", "daily"]
        );
        assert_eq!(tokenize("XMLParser v2"), ["xml", "parser", "v2"]);
        assert_eq!(tokenize("sky's"), ["sky", "'", "s"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn stopwords_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort();
        assert_eq!(sorted, STOPWORDS);
        assert!(is_stopword("the"));
        assert!(!is_stopword("forecast"));
    }

    #[test]
    fn detokenize_joins_with_spaces() {
        assert_eq!(detokenize(&["get", "forecast", "."]), "get forecast .");
    }
}
