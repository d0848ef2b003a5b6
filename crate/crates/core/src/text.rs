//! Tweet-aware tokenization shared by the feature, retrieval and encoder code.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Url,
    Mention,
    Hashtag,
    Punct,
    Symbol,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub kind: TokenKind,
    /// Surface form; hashtags and mentions keep their sigil.
    pub text: String,
}

pub const URL_TOKEN: &str = "<url>";
pub const MENTION_TOKEN: &str = "<user>";

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn trim_trailing_punct(s: &str) -> &str {
    s.trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | ')' | '"' | '\''))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '’' || c == '_'
}

/// Splits text into classified surface tokens.
pub fn scan(text: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            out.push(RawToken { kind: TokenKind::Url, text: trim_trailing_punct(chunk).to_string() });
            continue;
        }
        let sigil = chunk.chars().next();
        if matches!(sigil, Some('@') | Some('#')) && chunk.chars().nth(1).is_some_and(is_word_char) {
            let body: String = chunk[1..].chars().take_while(|&c| is_word_char(c)).collect();
            let kind = if sigil == Some('@') { TokenKind::Mention } else { TokenKind::Hashtag };
            let consumed = 1 + body.len();
            out.push(RawToken { kind, text: format!("{}{}", sigil.unwrap(), body) });
            scan_plain(&chunk[consumed..], &mut out);
            continue;
        }
        scan_plain(chunk, &mut out);
    }
    out
}

fn scan_plain(chunk: &str, out: &mut Vec<RawToken>) {
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<RawToken>| {
        if word.is_empty() {
            return;
        }
        let trimmed = word.trim_matches(|c| c == '\'' || c == '’').to_string();
        word.clear();
        if trimmed.is_empty() {
            return;
        }
        let kind = if trimmed.chars().all(|c| c.is_ascii_digit()) {
            TokenKind::Number
        } else {
            TokenKind::Word
        };
        out.push(RawToken { kind, text: trimmed });
    };
    for c in chunk.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            flush(&mut word, out);
            let kind = if c.is_ascii_punctuation() { TokenKind::Punct } else { TokenKind::Symbol };
            out.push(RawToken { kind, text: c.to_string() });
        }
    }
    flush(&mut word, out);
}

/// Model tokenizer: lowercase words, `<url>`/`<user>` placeholders, hashtag
/// words without `#`, and `!`/`?` kept as tokens. Other punctuation is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    scan(text)
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Word | TokenKind::Number | TokenKind::Symbol => Some(t.text.to_lowercase()),
            TokenKind::Url => Some(URL_TOKEN.to_string()),
            TokenKind::Mention => Some(MENTION_TOKEN.to_string()),
            TokenKind::Hashtag => Some(t.text[1..].to_lowercase()),
            TokenKind::Punct => matches!(t.text.as_str(), "!" | "?").then_some(t.text),
        })
        .collect()
}

/// Lowercase word tokens only (no placeholders or punctuation).
pub fn words(text: &str) -> Vec<String> {
    scan(text)
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Word | TokenKind::Number => Some(t.text.to_lowercase()),
            TokenKind::Hashtag => Some(t.text[1..].to_lowercase()),
            _ => None,
        })
        .collect()
}

pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can",
    "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further",
    "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
    "how", "i", "if", "in", "into", "is", "it", "it's", "its", "itself", "just", "me", "more", "most",
    "my", "myself", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "rt", "same", "she", "should", "so", "some", "such", "than",
    "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your",
    "yours", "yourself", "yourselves",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

/// Splits running text into sentences on terminal punctuation and line breaks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' || c == '\r' {
            push_sentence(&mut current, &mut out);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1).copied();
            if next.is_none_or(char::is_whitespace) {
                push_sentence(&mut current, &mut out);
            }
        }
    }
    push_sentence(&mut current, &mut out);
    out
}

fn push_sentence(current: &mut String, out: &mut Vec<String>) {
    let trimmed = current.trim();
    if trimmed.chars().any(char::is_alphanumeric) {
        out.push(trimmed.to_string());
    }
    current.clear();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_is_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn scan_classifies_tweet_entities() {
        let toks = scan("Wow!! @who says #COVID19 is real: https://who.int/x. 5G?");
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::Word,
                TokenKind::Punct,
                TokenKind::Punct,
                TokenKind::Mention,
                TokenKind::Word,
                TokenKind::Hashtag,
                TokenKind::Word,
                TokenKind::Word,
                TokenKind::Punct,
                TokenKind::Url,
                TokenKind::Word,
                TokenKind::Punct,
            ]
        );
        assert_eq!(toks[9].text, "https://who.int/x");
    }

    #[test]
    fn tokenize_uses_placeholders() {
        assert_eq!(
            tokenize("Masks WORK! see http://x.co @cdc #StayHome"),
            vec!["masks", "work", "!", "see", "<url>", "<user>", "stayhome"]
        );
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let s = split_sentences("Wash hands. Stay home!\nVersion 2.0 is out");
        assert_eq!(s, vec!["Wash hands.", "Stay home!", "Version 2.0 is out"]);
    }
}
