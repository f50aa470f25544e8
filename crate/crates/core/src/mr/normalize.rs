//! Text normalization used for slot-value matching.
//!
//! Lowercases with Unicode case mapping (diacritics survive), collapses
//! whitespace runs to one space, trims, and drops the space before closing
//! punctuation and after an opening parenthesis. Digits are left as they are.

const CLOSERS: &[char] = &[',', '.', ';', ':', '!', '?', ')'];

pub fn normalize(text: &str) -> String {
    Normalized::new(text).text
}

/// Normalized text with a map back to byte spans of the source.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub text: String,
    /// For each char of `text`, the byte range in the source it came from.
    spans: Vec<(usize, usize)>,
    /// Byte offset of each char of `text`.
    offsets: Vec<usize>,
}

impl Normalized {
    pub fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut spans = Vec::with_capacity(source.len());
        let mut offsets = Vec::with_capacity(source.len());
        let mut pending_space: Option<(usize, usize)> = None;
        let mut last: Option<char> = None;
        for (start, c) in source.char_indices() {
            let end = start + c.len_utf8();
            if c.is_whitespace() {
                pending_space = Some(match pending_space {
                    Some((s, _)) => (s, end),
                    None => (start, end),
                });
                continue;
            }
            if let Some(space) = pending_space.take() {
                if last.is_some() && !CLOSERS.contains(&c) && last != Some('(') {
                    offsets.push(text.len());
                    text.push(' ');
                    spans.push(space);
                }
            }
            for lc in c.to_lowercase() {
                offsets.push(text.len());
                text.push(lc);
                spans.push((start, end));
                last = Some(lc);
            }
        }
        Normalized {
            text,
            spans,
            offsets,
        }
    }

    /// Whether normalized chars `[from, to)` neither start nor end inside a
    /// word.
    pub fn on_word_boundary(&self, from: usize, to: usize) -> bool {
        let char_at = |i: usize| self.text[self.offsets[i]..].chars().next();
        let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
        let left_ok = from == 0 || !word(char_at(from - 1)) || !word(char_at(from));
        let right_ok = to >= self.char_len() || !word(char_at(to)) || !word(char_at(to - 1));
        left_ok && right_ok
    }

    pub fn char_len(&self) -> usize {
        self.spans.len()
    }

    /// Source byte range covering normalized chars `[from, to)`.
    pub fn source_span(&self, from: usize, to: usize) -> (usize, usize) {
        debug_assert!(from < to && to <= self.spans.len());
        (self.spans[from].0, self.spans[to - 1].1)
    }

    /// Start positions (in chars) of every occurrence of `needle`, which must
    /// already be normalized. Overlapping occurrences are all reported.
    pub fn find_all(&self, needle: &str) -> Vec<usize> {
        if needle.is_empty() {
            return Vec::new();
        }
        let needle_chars = needle.chars().count();
        let mut found = Vec::new();
        let mut from = 0;
        while let Some(pos) = self.text[from..].find(needle) {
            let byte = from + pos;
            let ci = self.offsets.partition_point(|&o| o < byte);
            if ci + needle_chars <= self.char_len() {
                found.push(ci);
            }
            from = byte + self.text[byte..].chars().next().map_or(1, char::len_utf8);
        }
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_fold_keeps_diacritics() {
        assert_eq!(normalize("Kočár z VÍDNĚ"), "kočár z vídně");
    }

    #[test]
    fn whitespace_and_punctuation_spacing() {
        assert_eq!(normalize("  Kaprova   38 .\n"), "kaprova 38.");
        assert_eq!(normalize("a ( b ) , c"), "a (b), c");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn digits_verbatim() {
        assert_eq!(normalize("250 625 609"), "250 625 609");
    }

    #[test]
    fn spans_map_back_to_source() {
        let src = "Volejte  NA 250625609 .";
        let n = Normalized::new(src);
        let hits = n.find_all("na 250625609");
        assert_eq!(hits.len(), 1);
        let len = "na 250625609".chars().count();
        let (s, e) = n.source_span(hits[0], hits[0] + len);
        assert_eq!(&src[s..e], "NA 250625609");
    }

    #[test]
    fn word_boundaries() {
        let n = Normalized::new("pivovar pivo, x-pivo");
        assert!(!n.on_word_boundary(0, 4));
        assert!(n.on_word_boundary(8, 12));
        assert!(n.on_word_boundary(16, 20));
    }

    #[test]
    fn overlapping_occurrences() {
        let n = Normalized::new("aaa");
        assert_eq!(n.find_all("aa"), vec![0, 1]);
    }
}
