use crate::rng::fnv1a64;

pub const NGRAM_MIN: usize = 3;
pub const NGRAM_MAX: usize = 5;

/// Sparse counts over the hashed character n-gram space `[0, dim)`.
/// Entries are sorted by index and every count is positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Lowercases, collapses whitespace runs to one space and trims.
fn normalize(text: &str) -> Vec<char> {
    let lowered = text.to_lowercase();
    let mut out = Vec::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars());
    }
    out
}

/// Hashes all character n-grams (n in `ngrams`) into `dim` buckets with
/// FNV-1a over their UTF-8 bytes.
pub fn featurize_with(text: &str, dim: usize, ngrams: std::ops::RangeInclusive<usize>) -> FeatureVector {
    assert!(dim > 0, "feature space must be non-empty");
    let chars = normalize(text);
    let mut idx = Vec::new();
    let mut buf = String::new();
    for n in ngrams {
        if n == 0 || chars.len() < n {
            continue;
        }
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window);
            idx.push((fnv1a64(buf.as_bytes()) % dim as u64) as usize);
        }
    }
    idx.sort_unstable();
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for i in idx {
        match entries.last_mut() {
            Some((last, c)) if *last == i => *c += 1.0,
            _ => entries.push((i, 1.0)),
        }
    }
    FeatureVector { entries }
}

pub fn featurize(text: &str, dim: usize) -> FeatureVector {
    featurize_with(text, dim, NGRAM_MIN..=NGRAM_MAX)
}
