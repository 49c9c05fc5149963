use std::sync::LazyLock;

use regex::Regex;

const OPEN: &str = "<think>";
const CLOSE: &str = "</think>";

static PREAMBLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(Sure|Okay|Of course|Here is|Here's)[^.]*\.\s+").unwrap());
static LINE_TRAILING_WS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)[ \t\r]+$").unwrap());
static BLANK_RUNS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n{3,}").unwrap());

/// Post-processes generator output before it is embedded.
///
/// 1. Removes `<think>...</think>` blocks, innermost first, along with
///    whitespace directly after each block. A stray `</think>` with no
///    opener is dropped on its own.
/// 2. If a `<think>` is still present the output is rejected and the
///    original query is returned (passed through the same cleaning, with
///    any tags removed).
/// 3. Strips a leading conversational preamble, repeatedly.
/// 4. Trims trailing whitespace on every line and at the end, and
///    collapses runs of blank lines to one.
pub fn clean(text: &str, original_query: &str) -> String {
    let stripped = strip_blocks(text);
    if stripped.contains(OPEN) {
        // removing one tag can splice the pieces of another back together
        let mut q = strip_blocks(original_query);
        while q.contains(OPEN) {
            q = strip_blocks(&q.replace(OPEN, ""));
        }
        return finish(&q);
    }
    finish(&stripped)
}

fn strip_blocks(text: &str) -> String {
    let mut s = text.to_string();
    while let Some(close) = s.find(CLOSE) {
        let mut end = close + CLOSE.len();
        match s[..close].rfind(OPEN) {
            Some(open) => {
                end += s[end..].len() - s[end..].trim_start().len();
                s.replace_range(open..end, "");
            }
            None => s.replace_range(close..end, ""),
        }
    }
    s
}

fn finish(text: &str) -> String {
    let mut s = text.to_string();
    while let Some(m) = PREAMBLE.find(&s) {
        s.replace_range(..m.end(), "");
    }
    let s = LINE_TRAILING_WS.replace_all(&s, "");
    let s = BLANK_RUNS.replace_all(&s, "\n\n");
    s.trim_end().to_string()
}
