/// Approximate token counting.
pub trait TokenCounter: Send + Sync {
    fn count_tokens(&self, text: &str) -> usize;
}

/// `ceil(chars / ratio)` estimator. The default ratio is 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharRatio(pub usize);

impl Default for CharRatio {
    fn default() -> Self {
        CharRatio(4)
    }
}

impl TokenCounter for CharRatio {
    fn count_tokens(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.0.max(1))
    }
}

/// Token count under the default estimator.
pub fn count_tokens(text: &str) -> usize {
    CharRatio::default().count_tokens(text)
}
