//! Token counting used for document truncation and cost accounting.

/// Counts tokens in a piece of text.
///
/// Implementations must be deterministic and monotone in prefix length:
/// a prefix never has more tokens than the text it was cut from.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Offline approximation: one token per four characters, rounded up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharQuarterCounter;

impl TokenCounter for CharQuarterCounter {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

/// Longest prefix of `text` (cut on a char boundary) whose token count is at most `limit`.
pub fn longest_prefix_within<'a>(counter: &dyn TokenCounter, text: &'a str, limit: usize) -> &'a str {
    if counter.count(text) <= limit {
        return text;
    }
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    // binary search for the last boundary that still fits
    let (mut lo, mut hi) = (0usize, boundaries.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if counter.count(&text[..boundaries[mid]]) <= limit {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    &text[..boundaries[lo]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_counter_rounds_up() {
        let c = CharQuarterCounter;
        assert_eq!(c.count(""), 0);
        assert_eq!(c.count("a"), 1);
        assert_eq!(c.count("abcd"), 1);
        assert_eq!(c.count("abcde"), 2);
        // counts chars, not bytes
        assert_eq!(c.count("ééééé"), 2);
    }

    #[test]
    fn prefix_fits_and_is_maximal() {
        let c = CharQuarterCounter;
        let text = "x".repeat(103);
        let p = longest_prefix_within(&c, &text, 10);
        assert_eq!(p.len(), 40);
        assert_eq!(longest_prefix_within(&c, "short", 10), "short");
        assert_eq!(longest_prefix_within(&c, "héllo wörld", 1), "héll");
    }
}
