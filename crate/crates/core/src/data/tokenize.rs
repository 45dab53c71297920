use std::ops::Range;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
}

impl Tokenized {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Lowercases, splits on whitespace and peels leading/trailing punctuation
/// off each chunk as one-character tokens. A sentence ends after a chunk
/// whose trailing punctuation contains `.`, `!` or `?`.
pub fn tokenize(text: &str) -> Tokenized {
    let mut tokens = Vec::new();
    let mut sentences = Vec::new();
    let mut start = 0;
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_lowercase();
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        let trail = if lead == chars.len() {
            0
        } else {
            chars.iter().rev().take_while(|c| c.is_ascii_punctuation()).count()
        };
        for c in &chars[..lead] {
            tokens.push(c.to_string());
        }
        if lead < chars.len() {
            tokens.push(chars[lead..chars.len() - trail].iter().collect());
        }
        let tail = &chars[chars.len() - trail..];
        for c in tail {
            tokens.push(c.to_string());
        }
        let ends = if lead == chars.len() {
            chars.iter().any(|&c| is_terminator(c))
        } else {
            tail.iter().any(|&c| is_terminator(c))
        };
        if ends {
            sentences.push(start..tokens.len());
            start = tokens.len();
        }
    }
    if start < tokens.len() {
        sentences.push(start..tokens.len());
    }
    Tokenized { tokens, sentences }
}
