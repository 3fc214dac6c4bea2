use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenize::Token;
use crate::ontology::parse_attribute;

/// Span categories of the low-level edit request grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Action,
    Refer,
    Attribute,
    Value,
}

impl Category {
    /// Report order, matching the column order of the NLU table.
    pub const ALL: [Category; 4] = [Category::Action, Category::Attribute, Category::Refer, Category::Value];

    pub fn tag(self) -> &'static str {
        match self {
            Category::Action => "ACTION",
            Category::Refer => "REFER",
            Category::Attribute => "ATTRIBUTE",
            Category::Value => "VALUE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BioLabel {
    Outside,
    Begin(Category),
    Inside(Category),
}

impl BioLabel {
    pub fn category(self) -> Option<Category> {
        match self {
            BioLabel::Outside => None,
            BioLabel::Begin(c) | BioLabel::Inside(c) => Some(c),
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::Outside => f.write_str("O"),
            BioLabel::Begin(c) => write!(f, "B-{}", c.tag()),
            BioLabel::Inside(c) => write!(f, "I-{}", c.tag()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a BIO label: `{0}`")]
pub struct BadLabel(pub String);

impl FromStr for BioLabel {
    type Err = BadLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioLabel::Outside);
        }
        let (prefix, cat) = s.split_once('-').ok_or_else(|| BadLabel(s.to_string()))?;
        let cat = Category::ALL
            .into_iter()
            .find(|c| c.tag() == cat)
            .ok_or_else(|| BadLabel(s.to_string()))?;
        match prefix {
            "B" => Ok(BioLabel::Begin(cat)),
            "I" => Ok(BioLabel::Inside(cat)),
            _ => Err(BadLabel(s.to_string())),
        }
    }
}

impl From<BioLabel> for String {
    fn from(l: BioLabel) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for BioLabel {
    type Error = BadLabel;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// True when no `I-X` follows `O` or a label of another category.
pub fn is_valid_bio(labels: &[BioLabel]) -> bool {
    let mut prev: Option<Category> = None;
    for &l in labels {
        match l {
            BioLabel::Inside(c) if prev != Some(c) => return false,
            _ => {}
        }
        prev = l.category();
    }
    true
}

/// Sequence labeller seam. Implementations must return one valid-BIO label per token.
pub trait Tagger: Send + Sync {
    fn tag(&self, tokens: &[Token]) -> Vec<BioLabel>;
}

pub const ACTION_WORDS: [&str; 12] = [
    "increase", "decrease", "raise", "lower", "reduce", "boost", "change", "set", "adjust", "modify", "make", "turn",
];
pub const NEGATIVE_ACTION_WORDS: [&str; 3] = ["decrease", "lower", "reduce"];
pub const REFER_PREPOSITIONS: [&str; 4] = ["of", "on", "in", "for"];
pub const DETERMINERS: [&str; 6] = ["the", "a", "an", "this", "that", "my"];
pub const FUNCTION_WORDS: [&str; 3] = ["by", "to", "please"];
/// High-level edit adjectives. They end a refer span but never fill a slot.
pub const EDIT_ADJECTIVES: [&str; 14] = [
    "brighter", "darker", "lighter", "dimmer", "duller", "warmer", "cooler", "more", "less", "vivid", "vibrant",
    "colorful", "colourful", "sharper",
];

pub fn is_number_token(text: &str) -> bool {
    let digits = text.strip_prefix(['+', '-']).unwrap_or(text);
    let mut parts = digits.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty() && int.bytes().all(|b| b.is_ascii_digit()) && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

/// Deterministic grammar tagger for imperative low-level edit requests.
///
/// Rules, applied in order:
/// 1. numeric tokens are VALUE;
/// 2. the five attribute names are ATTRIBUTE;
/// 3. the first action-lexicon word is ACTION;
/// 4. REFER is the untagged run right after `of/on/in/for` following the
///    attribute, otherwise the untagged run starting at a determiner after
///    the action (or anywhere, when there is no action).
///
/// Runs stop at tagged tokens, punctuation, `by/to/please` and high-level
/// edit adjectives.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTagger;

impl RuleTagger {
    fn can_extend_refer(token: &Token, label: BioLabel) -> bool {
        label == BioLabel::Outside
            && !token.is_punct()
            && !FUNCTION_WORDS.contains(&token.text.as_str())
            && !EDIT_ADJECTIVES.contains(&token.text.as_str())
    }

    fn run_from(tokens: &[Token], labels: &[BioLabel], start: usize) -> usize {
        let mut end = start;
        while end < tokens.len() && Self::can_extend_refer(&tokens[end], labels[end]) {
            end += 1;
        }
        end
    }

    fn refer_span(tokens: &[Token], labels: &[BioLabel], action: Option<usize>) -> Option<(usize, usize)> {
        let attr = labels.iter().position(|l| *l == BioLabel::Begin(Category::Attribute));
        if let Some(a) = attr {
            let prep = a + 1;
            if prep < tokens.len() && REFER_PREPOSITIONS.contains(&tokens[prep].text.as_str()) {
                let end = Self::run_from(tokens, labels, prep + 1);
                if end > prep + 1 {
                    return Some((prep + 1, end));
                }
            }
        }

        let from = action.map_or(0, |a| a + 1);
        for start in from..tokens.len() {
            if labels[start] != BioLabel::Outside || !DETERMINERS.contains(&tokens[start].text.as_str()) {
                continue;
            }
            let end = Self::run_from(tokens, labels, start);
            // a bare determiner is not a noun phrase
            if end > start + 1 {
                return Some((start, end));
            }
        }
        None
    }
}

impl Tagger for RuleTagger {
    fn tag(&self, tokens: &[Token]) -> Vec<BioLabel> {
        let mut labels = vec![BioLabel::Outside; tokens.len()];
        for (label, tok) in labels.iter_mut().zip(tokens) {
            if is_number_token(&tok.text) {
                *label = BioLabel::Begin(Category::Value);
            } else if parse_attribute(&tok.text).is_some() {
                *label = BioLabel::Begin(Category::Attribute);
            }
        }
        let action = tokens
            .iter()
            .zip(&labels)
            .position(|(t, l)| *l == BioLabel::Outside && ACTION_WORDS.contains(&t.text.as_str()));
        if let Some(a) = action {
            labels[a] = BioLabel::Begin(Category::Action);
        }
        if let Some((start, end)) = Self::refer_span(tokens, &labels, action) {
            labels[start] = BioLabel::Begin(Category::Refer);
            for l in &mut labels[start + 1..end] {
                *l = BioLabel::Inside(Category::Refer);
            }
        }
        labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu::tokenize::tokenize;
    use proptest::prelude::*;
    use BioLabel::{Begin as B, Inside as I, Outside as O};
    use Category::*;

    fn tag_str(s: &str) -> Vec<BioLabel> {
        RuleTagger.tag(&tokenize(s))
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(tag_str("decrease brightness by 10"), [B(Action), B(Attribute), O, B(Value)]);
        assert_eq!(
            tag_str("increase the saturation of the left cow by 30"),
            [B(Action), O, B(Attribute), O, B(Refer), I(Refer), I(Refer), O, B(Value)]
        );
        assert_eq!(tag_str("hello"), [O]);
    }

    #[test]
    fn determiner_refer_stops_at_edit_adjective() {
        assert_eq!(tag_str("Hi make the cows brighter"), [O, B(Action), B(Refer), I(Refer), O]);
        assert_eq!(tag_str("make the barn darker"), [B(Action), B(Refer), I(Refer), O]);
        assert_eq!(tag_str("the left cow"), [B(Refer), I(Refer), I(Refer)]);
        assert_eq!(tag_str("increase the brightness by 5"), [B(Action), O, B(Attribute), O, B(Value)]);
    }

    #[test]
    fn bare_refer_after_preposition() {
        assert_eq!(
            tag_str("adjust saturation of bigger cow"),
            [B(Action), B(Attribute), O, B(Refer), I(Refer)]
        );
        assert_eq!(
            tag_str("set the hue on the sky to -40."),
            [B(Action), O, B(Attribute), O, B(Refer), I(Refer), O, B(Value), O]
        );
    }

    #[test]
    fn label_strings() {
        for s in ["O", "B-ACTION", "I-REFER", "B-ATTRIBUTE", "I-VALUE"] {
            assert_eq!(s.parse::<BioLabel>().unwrap().to_string(), s);
        }
        assert!("X-REFER".parse::<BioLabel>().is_err());
        assert!("B-COLOR".parse::<BioLabel>().is_err());
    }

    #[test]
    fn bio_validity() {
        assert!(is_valid_bio(&[B(Refer), I(Refer), O]));
        assert!(!is_valid_bio(&[O, I(Refer)]));
        assert!(!is_valid_bio(&[B(Action), I(Refer)]));
    }

    #[test]
    fn numbers() {
        for ok in ["10", "-10", "+5", "2.5", "-0.5"] {
            assert!(is_number_token(ok), "{ok}");
        }
        for bad in ["", "-", "1.", ".5", "ten", "1e3", "--1"] {
            assert!(!is_number_token(bad), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn output_is_aligned_and_valid(words in prop::collection::vec(
            prop::sample::select(vec![
                "the", "a", "cow", "left", "of", "on", "by", "to", "please", "brightness", "hue",
                "increase", "decrease", "make", "10", "-20", "brighter", ".", "yes", "barn",
            ]), 0..14)
        ) {
            let text = words.join(" ");
            let toks = tokenize(&text);
            let labels = RuleTagger.tag(&toks);
            prop_assert_eq!(labels.len(), toks.len());
            prop_assert!(is_valid_bio(&labels));
        }
    }
}
