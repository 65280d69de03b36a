//! Small shared helpers: text normalization, stable hashing, compensated sums.

/// Lowercases (optionally), maps typographic apostrophes/quotes to ASCII and
/// collapses every whitespace run to a single space.
pub fn normalize(text: &str, fold_case: bool, collapse_ws: bool) -> String {
    let mapped: String = text
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{02BC}' => '\'',
            '\u{201C}' | '\u{201D}' => '"',
            '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' => '-',
            _ => c,
        })
        .collect();
    let folded = if fold_case {
        mapped.to_lowercase()
    } else {
        mapped
    };
    if collapse_ws {
        folded.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        folded
    }
}

/// Default normalization used for lookups: case folded, whitespace collapsed.
pub fn norm_key(text: &str) -> String {
    normalize(text, true, true)
}

/// Byte offsets of every occurrence of `needle` in `haystack` that starts and
/// ends on a word boundary (alphanumeric characters on neither side).
pub fn word_occurrences(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if needle.is_empty() {
        return out;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .map_or(true, |c| !c.is_alphanumeric());
        let after_ok = haystack[end..]
            .chars()
            .next()
            .map_or(true, |c| !c.is_alphanumeric());
        if before_ok && after_ok {
            out.push((start, end));
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// 64-bit FNV-1a. Stable across platforms and releases, used to derive
/// per-item RNG seeds and run ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for an item-local RNG stream.
pub fn sub_seed(seed: u64, key: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(key.as_bytes());
    fnv1a(&bytes)
}

/// Neumaier-compensated summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Compensated arithmetic mean; zero for an empty input.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let collected: Vec<f64> = values.into_iter().collect();
    if collected.is_empty() {
        return 0.0;
    }
    compensated_sum(collected.iter().copied()) / collected.len() as f64
}

/// Rounds half away from zero to `digits` decimals.
pub fn round_to(value: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (value * scale).round() / scale
}
