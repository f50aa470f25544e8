/// Tokenizer shared by all word-overlap metrics.
///
/// Lowercases, splits on whitespace, and peels punctuation off both ends of
/// each chunk as standalone tokens. A character counts as punctuation when it
/// is neither alphanumeric nor whitespace.
pub fn eval_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
        let is_punct = |c: &char| !c.is_alphanumeric();
        let lead = chars.iter().take_while(|c| is_punct(c)).count();
        if lead == chars.len() {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| is_punct(c)).count();
        tokens.extend(chars[..lead].iter().map(|c| c.to_string()));
        tokens.push(chars[lead..chars.len() - trail].iter().collect());
        tokens.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        eval_tokenize(s)
    }

    #[test]
    fn trailing_period_split() {
        assert_eq!(toks("Kaprova 38."), vec!["kaprova", "38", "."]);
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("   \n").is_empty());
    }

    #[test]
    fn standalone_symbol() {
        assert_eq!(toks("Pivo & Basilico"), vec!["pivo", "&", "basilico"]);
    }

    #[test]
    fn inner_punctuation_kept() {
        assert_eq!(toks("(U Fleků), 180-730 Kč!?"), vec!["(", "u", "fleků", ")", ",", "180-730", "kč", "!", "?"]);
    }
}
