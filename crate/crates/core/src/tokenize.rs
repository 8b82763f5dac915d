//! Default tokenizer for text payloads: NFC normalization, lowercasing,
//! whitespace splitting.

use unicode_normalization::UnicodeNormalization;

/// Name recorded in manifests for [`tokenize`].
pub const TOKENIZER_NAME: &str = "whitespace-nfc-lower";

pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized.split_whitespace().map(str::to_owned).collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}
