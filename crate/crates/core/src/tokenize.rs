//! Whitespace tokenizer used for every token budget in the crate.
//!
//! Model tokenizers split text differently, so counts here are only
//! suitable for budget bookkeeping (prompt limits, feedback limits,
//! near-no-op detection), never for matching a model's own accounting.

/// Whitespace-delimited tokens of `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn token_count(text: &str) -> usize {
    tokens(text).count()
}

/// Levenshtein distance over whitespace tokens (unit insert/delete/substitute).
pub fn token_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = tokens(a).collect();
    let b: Vec<&str> = tokens(b).collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ta != tb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Byte offset just past the `max_tokens`-th token, or `None` if `text` has
/// no more than `max_tokens` tokens.
pub fn prefix_end(text: &str, max_tokens: usize) -> Option<usize> {
    let mut seen = 0usize;
    let mut in_token = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                in_token = false;
                seen += 1;
                if seen == max_tokens {
                    return Some(i);
                }
            }
        } else if !in_token {
            if seen == max_tokens {
                return Some(i);
            }
            in_token = true;
        }
    }
    None
}

/// `text` cut after its first `max_tokens` tokens.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    match prefix_end(text, max_tokens) {
        Some(end) => text[..end].trim_end(),
        None => text,
    }
}
