//! Seeded generator for imperative, low-level, complete edit requests with
//! gold BIO labels. Every template stays inside [`RuleTagger`](super::RuleTagger)'s
//! grammar, so the reference tagger reproduces the gold labels exactly.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tagger::{
    is_number_token, BioLabel, Category, ACTION_WORDS, DETERMINERS, EDIT_ADJECTIVES, FUNCTION_WORDS,
    NEGATIVE_ACTION_WORDS,
};
use super::tokenize::tokenize;
use crate::ontology::{make_edit_value, parse_attribute, Attribute, EditValue};
use crate::vision::Scene;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("scene has no objects with referring phrases")]
    EmptyScene,
    #[error("no phrase in scene `{0}` fits the request grammar")]
    NoUsablePhrase(String),
}

const POSITIVE_ACTIONS: [&str; 3] = ["increase", "raise", "boost"];
const NEUTRAL_ACTIONS: [&str; 3] = ["change", "adjust", "modify"];

/// Sentence shapes. `{R}` is the refer, `{A}` the attribute, `{V}` the value.
const TEMPLATES: [&[Piece]; 6] = [
    // <action> the <attribute> of <refer> by <value>
    &[Piece::Action, Piece::Word("the"), Piece::Attribute, Piece::Word("of"), Piece::Refer, Piece::Word("by"), Piece::Value],
    // <action> <attribute> of <refer> by <value>
    &[Piece::Action, Piece::Attribute, Piece::Word("of"), Piece::Refer, Piece::Word("by"), Piece::Value],
    // please <action> the <attribute> on <refer> by <value>
    &[Piece::Word("please"), Piece::Action, Piece::Word("the"), Piece::Attribute, Piece::Word("on"), Piece::Refer, Piece::Word("by"), Piece::Value],
    // <action> the <attribute> in <refer> by <value> please
    &[Piece::Action, Piece::Word("the"), Piece::Attribute, Piece::Word("in"), Piece::Refer, Piece::Word("by"), Piece::Value, Piece::Word("please")],
    // <action> <refer with determiner> <attribute> by <value>
    &[Piece::Action, Piece::DeterminedRefer, Piece::Attribute, Piece::Word("by"), Piece::Value],
    // <action> the <attribute> for <refer> by <value>
    &[Piece::Action, Piece::Word("the"), Piece::Attribute, Piece::Word("for"), Piece::Refer, Piece::Word("by"), Piece::Value],
];

#[derive(Debug, Clone, Copy)]
enum Piece {
    Word(&'static str),
    Action,
    Attribute,
    Refer,
    DeterminedRefer,
    Value,
}

/// One generated request with its gold annotation and the slot values it encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct IllcIer {
    pub text: String,
    pub tokens: Vec<String>,
    pub labels: Vec<BioLabel>,
    pub attribute: Attribute,
    pub value: EditValue,
    pub refer: String,
}

/// JSON-lines record of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub text: String,
    pub tokens: Vec<String>,
    pub labels: Vec<BioLabel>,
}

impl From<&IllcIer> for CorpusRecord {
    fn from(s: &IllcIer) -> Self {
        CorpusRecord { text: s.text.clone(), tokens: s.tokens.clone(), labels: s.labels.clone() }
    }
}

fn usable_phrase(phrase: &str) -> Option<Vec<String>> {
    let toks: Vec<String> = tokenize(phrase).into_iter().map(|t| t.text).collect();
    let ok = toks.iter().any(|t| !DETERMINERS.contains(&t.as_str()))
        && toks.iter().all(|t| {
            t.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'')
                && !is_number_token(t)
                && parse_attribute(t).is_none()
                && !FUNCTION_WORDS.contains(&t.as_str())
                && !EDIT_ADJECTIVES.contains(&t.as_str())
        });
    ok.then_some(toks)
}

/// Builds one labelled request from a seed and a scene.
pub fn generate_illc_ier(seed: u64, scene: &Scene) -> Result<IllcIer, GenError> {
    if scene.objects.iter().all(|o| o.phrases.is_empty()) {
        return Err(GenError::EmptyScene);
    }
    let phrases: Vec<Vec<String>> = scene
        .objects
        .iter()
        .flat_map(|o| o.phrases.iter())
        .filter_map(|p| usable_phrase(p))
        .collect();
    if phrases.is_empty() {
        return Err(GenError::NoUsablePhrase(scene.image_id.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
    let attribute = Attribute::ALL[rng.random_range(0..Attribute::ALL.len())];
    let magnitude = rng.random_range(1..=100i64);
    let value = if rng.random_bool(0.5) { -magnitude } else { magnitude };
    let refer_tokens = phrases.choose(&mut rng).expect("non-empty").clone();

    let negative_form = value < 0 && rng.random_bool(0.5);
    let action = if negative_form {
        *NEGATIVE_ACTION_WORDS.choose(&mut rng).expect("non-empty")
    } else if value < 0 || rng.random_bool(0.5) {
        *NEUTRAL_ACTIONS.choose(&mut rng).expect("non-empty")
    } else {
        *POSITIVE_ACTIONS.choose(&mut rng).expect("non-empty")
    };
    debug_assert!(ACTION_WORDS.contains(&action));
    let value_text = if negative_form { value.abs().to_string() } else { value.to_string() };
    let terminal = rng.random_bool(0.3);

    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<BioLabel> = Vec::new();
    let mut refer_out = Vec::new();
    let push_span = |words: &[String], cat: Option<Category>, tokens: &mut Vec<String>, labels: &mut Vec<BioLabel>| {
        for (i, w) in words.iter().enumerate() {
            tokens.push(w.clone());
            labels.push(match (cat, i) {
                (None, _) => BioLabel::Outside,
                (Some(c), 0) => BioLabel::Begin(c),
                (Some(c), _) => BioLabel::Inside(c),
            });
        }
    };
    for piece in template {
        match *piece {
            Piece::Word(w) => push_span(&[w.to_string()], None, &mut tokens, &mut labels),
            Piece::Action => push_span(&[action.to_string()], Some(Category::Action), &mut tokens, &mut labels),
            Piece::Attribute => {
                push_span(&[attribute.name().to_string()], Some(Category::Attribute), &mut tokens, &mut labels)
            }
            Piece::Value => push_span(std::slice::from_ref(&value_text), Some(Category::Value), &mut tokens, &mut labels),
            Piece::Refer => {
                refer_out = refer_tokens.clone();
                push_span(&refer_tokens, Some(Category::Refer), &mut tokens, &mut labels)
            }
            Piece::DeterminedRefer => {
                let mut words = refer_tokens.clone();
                if !DETERMINERS.contains(&words[0].as_str()) {
                    words.insert(0, "the".to_string());
                }
                refer_out = words.clone();
                push_span(&words, Some(Category::Refer), &mut tokens, &mut labels)
            }
        }
    }
    let mut text = tokens.join(" ");
    if terminal {
        text.push('.');
        tokens.push(".".to_string());
        labels.push(BioLabel::Outside);
    }

    Ok(IllcIer {
        text,
        tokens,
        labels,
        attribute,
        value: make_edit_value(value).expect("sampled inside range"),
        refer: refer_out.join(" "),
    })
}

/// `n` requests; request `i` uses scene `i mod len` and a seed mixed from `(seed, i)`.
pub fn generate_corpus(n: usize, seed: u64, scenes: &[Scene]) -> Result<Vec<IllcIer>, GenError> {
    if scenes.is_empty() {
        return Err(GenError::EmptyScene);
    }
    (0..n)
        .map(|i| generate_illc_ier(mix_seed(seed, i as u64), &scenes[i % scenes.len()]))
        .collect()
}

// splitmix64 finalizer
fn mix_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
