//! Natural-language understanding: utterance in, [`TurnFrame`] out.

mod corpus;
mod tagger;
mod tokenize;

pub use corpus::{generate_corpus, generate_illc_ier, CorpusRecord, GenError, IllcIer};
pub use tagger::{
    is_number_token, is_valid_bio, BadLabel, BioLabel, Category, RuleTagger, Tagger, ACTION_WORDS, DETERMINERS,
    EDIT_ADJECTIVES, FUNCTION_WORDS, NEGATIVE_ACTION_WORDS, REFER_PREPOSITIONS,
};
pub use tokenize::{token_texts, tokenize, Token, TERMINAL_PUNCT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{make_edit_value, parse_attribute, Attribute, EditValue, Refer};

pub const AFFIRM_WORDS: [&str; 6] = ["yes", "y", "yeah", "yep", "correct", "sure"];
pub const DENY_WORDS: [&str; 5] = ["no", "n", "nope", "wrong", "incorrect"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Affirm,
    Deny,
}

/// Why a VALUE span could not become an [`EditValue`].
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ValueError {
    #[error("value {0} is outside the range -100 to 100")]
    OutOfRange(i64),
    #[error("`{0}` is not a whole number")]
    NotAnInteger(String),
}

/// Per-utterance NLU output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnFrame {
    pub refer: Option<Refer>,
    pub attribute: Option<Attribute>,
    pub value: Option<EditValue>,
    pub action_negative: bool,
    pub intent: Option<YesNo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_error: Option<ValueError>,
}

impl TurnFrame {
    pub fn intent_only(intent: YesNo) -> Self {
        TurnFrame { intent: Some(intent), ..Default::default() }
    }

    pub fn has_slots(&self) -> bool {
        self.refer.is_some() || self.attribute.is_some() || self.value.is_some()
    }
}

/// Whole-utterance yes/no matcher; trailing punctuation is ignored.
pub fn match_intent(text: &str) -> Option<YesNo> {
    let cleaned = text.trim().trim_end_matches(TERMINAL_PUNCT).trim().to_lowercase();
    if AFFIRM_WORDS.contains(&cleaned.as_str()) {
        Some(YesNo::Affirm)
    } else if DENY_WORDS.contains(&cleaned.as_str()) {
        Some(YesNo::Deny)
    } else {
        None
    }
}

/// Parses a VALUE token. A negative action forces the result to `-|v|`.
pub fn normalize_value(token: &str, action_negative: bool) -> Result<EditValue, ValueError> {
    let body = token.strip_prefix('+').unwrap_or(token);
    let n: i64 = match body.parse() {
        Ok(n) => n,
        Err(e) => {
            return Err(match e.kind() {
                std::num::IntErrorKind::PosOverflow => ValueError::OutOfRange(i64::MAX),
                std::num::IntErrorKind::NegOverflow => ValueError::OutOfRange(i64::MIN),
                _ => ValueError::NotAnInteger(token.to_string()),
            })
        }
    };
    let effective = if action_negative { n.saturating_abs().saturating_neg() } else { n };
    make_edit_value(effective).map_err(|_| ValueError::OutOfRange(effective))
}

/// A labelled token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub category: Category,
    pub start: usize,
    pub end: usize,
}

/// Collects spans from a label sequence. An `I-X` that does not continue an
/// `X` span opens a new one.
pub fn spans(labels: &[BioLabel]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &label) in labels.iter().enumerate() {
        match label {
            BioLabel::Inside(c) if open.is_some_and(|s| s.category == c) => {
                if let Some(s) = open.as_mut() {
                    s.end = i + 1;
                }
            }
            BioLabel::Begin(c) | BioLabel::Inside(c) => {
                out.extend(open.take());
                open = Some(Span { category: c, start: i, end: i + 1 });
            }
            BioLabel::Outside => out.extend(open.take()),
        }
    }
    out.extend(open);
    out
}

/// Runs intent matching, then tagging, and folds the spans into a frame.
/// When a category occurs more than once the first span wins.
pub fn extract_frame(text: &str, tagger: &dyn Tagger) -> TurnFrame {
    if let Some(intent) = match_intent(text) {
        return TurnFrame::intent_only(intent);
    }
    let tokens = tokenize(text);
    let labels = tagger.tag(&tokens);
    let found = spans(&labels);
    let first = |cat: Category| found.iter().find(|s| s.category == cat);
    let join = |s: &Span| tokens[s.start..s.end].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");

    let mut frame = TurnFrame::default();
    if let Some(s) = first(Category::Action) {
        frame.action_negative = NEGATIVE_ACTION_WORDS.contains(&tokens[s.start].text.as_str());
    }
    if let Some(s) = first(Category::Refer) {
        frame.refer = Refer::new(join(s)).ok();
    }
    if let Some(s) = first(Category::Attribute) {
        frame.attribute = parse_attribute(&tokens[s.start].text);
    }
    if let Some(s) = first(Category::Value) {
        match normalize_value(&join(s), frame.action_negative) {
            Ok(v) => frame.value = Some(v),
            Err(e) => frame.value_error = Some(e),
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(s: &str) -> TurnFrame {
        extract_frame(s, &RuleTagger)
    }

    #[test]
    fn intents() {
        assert_eq!(match_intent("yes"), Some(YesNo::Affirm));
        assert_eq!(match_intent("No"), Some(YesNo::Deny));
        assert_eq!(match_intent("  Yep! "), Some(YesNo::Affirm));
        assert_eq!(match_intent("make the barn darker"), None);
        assert_eq!(match_intent("yes please"), None);
    }

    #[test]
    fn value_normalization() {
        assert_eq!(normalize_value("10", true).unwrap().get(), -10);
        assert_eq!(normalize_value("-10", false).unwrap().get(), -10);
        assert_eq!(normalize_value("-10", true).unwrap().get(), -10);
        assert_eq!(normalize_value("+7", false).unwrap().get(), 7);
        assert_eq!(normalize_value("150", false), Err(ValueError::OutOfRange(150)));
        assert_eq!(normalize_value("150", true), Err(ValueError::OutOfRange(-150)));
        assert_eq!(normalize_value("2.5", false), Err(ValueError::NotAnInteger("2.5".into())));
        assert!(matches!(normalize_value("99999999999999999999", false), Err(ValueError::OutOfRange(_))));
    }

    #[test]
    fn frames_from_examples() {
        let f = frame("decrease brightness by 10");
        assert_eq!(f.attribute, Some(Attribute::Brightness));
        assert_eq!(f.value.map(EditValue::get), Some(-10));
        assert!(f.action_negative);
        assert_eq!(f.refer, None);

        assert_eq!(frame("yes"), TurnFrame::intent_only(YesNo::Affirm));

        let f = frame("adjust saturation of bigger cow");
        assert_eq!(f.attribute, Some(Attribute::Saturation));
        assert_eq!(f.refer.unwrap().as_str(), "bigger cow");
        assert_eq!(f.value, None);
    }

    #[test]
    fn bad_value_keeps_other_slots() {
        let f = frame("increase the hue of the dog by 250");
        assert_eq!(f.attribute, Some(Attribute::Hue));
        assert_eq!(f.refer.as_ref().map(Refer::as_str), Some("the dog"));
        assert_eq!(f.value, None);
        assert_eq!(f.value_error, Some(ValueError::OutOfRange(250)));

        let f = frame("change contrast by 12.5");
        assert_eq!(f.value_error, Some(ValueError::NotAnInteger("12.5".into())));
    }

    #[test]
    fn first_span_wins() {
        let f = frame("increase hue by 10 and saturation by 20");
        assert_eq!(f.attribute, Some(Attribute::Hue));
        assert_eq!(f.value.map(EditValue::get), Some(10));
    }

    #[test]
    fn high_level_adjectives_leave_attribute_empty() {
        let f = frame("Hi make the cows brighter");
        assert_eq!(f.refer.unwrap().as_str(), "the cows");
        assert_eq!(f.attribute, None);
        assert_eq!(f.value, None);
    }

    #[test]
    fn span_collection() {
        use BioLabel::{Begin as B, Inside as I, Outside as O};
        let labels = [B(Category::Refer), I(Category::Refer), O, I(Category::Value), B(Category::Value), I(Category::Action)];
        let got = spans(&labels);
        assert_eq!(
            got,
            vec![
                Span { category: Category::Refer, start: 0, end: 2 },
                Span { category: Category::Value, start: 3, end: 4 },
                Span { category: Category::Value, start: 4, end: 5 },
                Span { category: Category::Action, start: 5, end: 6 },
            ]
        );
    }

    proptest! {
        #[test]
        fn extract_frame_is_total(s in "\\PC{0,60}") {
            let f = frame(&s);
            if f.intent.is_some() {
                prop_assert!(!f.has_slots());
            }
        }

        #[test]
        fn sign_equivalence(attr in 0usize..5, k in 1i32..=100) {
            let name = Attribute::ALL[attr].name();
            let a = frame(&format!("decrease {name} by {k}"));
            let b = frame(&format!("change {name} by -{k}"));
            prop_assert_eq!(a.attribute, b.attribute);
            prop_assert_eq!(a.value, b.value);
            prop_assert_eq!(a.value.map(EditValue::get), Some(-k));
        }
    }
}
