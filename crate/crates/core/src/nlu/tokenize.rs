use serde::{Deserialize, Serialize};

/// Characters split off the end of a whitespace chunk as their own tokens.
pub const TERMINAL_PUNCT: [char; 4] = ['.', ',', '!', '?'];

/// A lowercased token with character offsets into the original utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        let mut chars = self.text.chars();
        matches!((chars.next(), chars.next()), (Some(c), None) if TERMINAL_PUNCT.contains(&c))
    }
}

/// Splits on whitespace, lowercases, and peels trailing `. , ! ?` into
/// separate tokens. A leading sign stays attached to its number.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut word_end = i;
        while word_end > start && TERMINAL_PUNCT.contains(&chars[word_end - 1]) {
            word_end -= 1;
        }
        if word_end > start {
            tokens.push(make_token(&chars, start, word_end));
        }
        for p in word_end..i {
            tokens.push(make_token(&chars, p, p + 1));
        }
    }
    tokens
}

fn make_token(chars: &[char], start: usize, end: usize) -> Token {
    let text: String = chars[start..end].iter().collect();
    Token { text: text.to_lowercase(), start, end }
}

pub fn token_texts(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.text.as_str()).collect()
}
