//! Domain types shared by every stage of the dialogue loop.
//!
//! The only edit operation is ADJUST. It needs a region (a [`Mask`], which
//! itself depends on a [`Refer`]), an [`Attribute`] and an [`EditValue`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vision::Mask;

pub const VALUE_MIN: i32 = -100;
pub const VALUE_MAX: i32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("value {0} is outside the range -100 to 100")]
    OutOfRange(i64),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("referring expression is empty")]
    EmptyRefer,
    #[error("inconsistent dialogue state: {0}")]
    Inconsistent(&'static str),
}

/// One of the five adjustable image properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Brightness,
    Contrast,
    Hue,
    Saturation,
    Lightness,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Brightness,
        Attribute::Contrast,
        Attribute::Hue,
        Attribute::Saturation,
        Attribute::Lightness,
    ];

    /// Canonical lowercase spelling used on the wire and in files.
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Brightness => "brightness",
            Attribute::Contrast => "contrast",
            Attribute::Hue => "hue",
            Attribute::Saturation => "saturation",
            Attribute::Lightness => "lightness",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_attribute(s).ok_or_else(|| OntologyError::UnknownAttribute(s.to_string()))
    }
}

/// Case-insensitive exact match against the five attribute names.
pub fn parse_attribute(word: &str) -> Option<Attribute> {
    Attribute::ALL
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(word))
}

/// Signed, unit-free adjustment magnitude in `[-100, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i32")]
pub struct EditValue(i32);

impl EditValue {
    pub const ZERO: EditValue = EditValue(0);

    pub fn get(self) -> i32 {
        self.0
    }

    /// Value scaled to `[-1, 1]`.
    pub fn fraction(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

pub fn make_edit_value(n: i64) -> Result<EditValue, OntologyError> {
    if (i64::from(VALUE_MIN)..=i64::from(VALUE_MAX)).contains(&n) {
        Ok(EditValue(n as i32))
    } else {
        Err(OntologyError::OutOfRange(n))
    }
}

impl TryFrom<i64> for EditValue {
    type Error = OntologyError;

    fn try_from(n: i64) -> Result<Self, Self::Error> {
        make_edit_value(n)
    }
}

impl From<EditValue> for i32 {
    fn from(v: EditValue) -> i32 {
        v.0
    }
}

impl fmt::Display for EditValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A referring expression, stored trimmed and never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Refer(String);

impl Refer {
    pub fn new(text: impl AsRef<str>) -> Result<Self, OntologyError> {
        let trimmed = text.as_ref().trim();
        if trimmed.is_empty() {
            Err(OntologyError::EmptyRefer)
        } else {
            Ok(Refer(trimmed.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Two refers name the same thing iff their trimmed, case-folded text is equal.
    pub fn same_as(&self, other: &Refer) -> bool {
        self.0.to_lowercase() == other.0.to_lowercase()
    }
}

impl TryFrom<String> for Refer {
    type Error = OntologyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Refer::new(s)
    }
}

impl From<Refer> for String {
    fn from(r: Refer) -> String {
        r.0
    }
}

impl fmt::Display for Refer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Refer,
    Mask,
    Attribute,
    Value,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Refer => "refer",
            Slot::Mask => "mask",
            Slot::Attribute => "attribute",
            Slot::Value => "value",
        })
    }
}

/// System decision for one step of the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "act", content = "slot", rename_all = "lowercase")]
pub enum DialogueAct {
    Request(Slot),
    Confirm(Slot),
    Query,
    Execute,
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DialogueAct::Request(s) => write!(f, "Request({s})"),
            DialogueAct::Confirm(s) => write!(f, "Confirm({s})"),
            DialogueAct::Query => f.write_str("Query"),
            DialogueAct::Execute => f.write_str("Execute"),
        }
    }
}

/// Complete arguments for one ADJUST edit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustRequest {
    pub mask: Arc<Mask>,
    pub attribute: Attribute,
    pub value: EditValue,
}

/// Plain field bundle for building a [`DialogueState`] from the outside.
#[derive(Debug, Clone, Default)]
pub struct StateParts {
    pub refer: Option<Refer>,
    pub mask: Option<Arc<Mask>>,
    pub mask_confirmed: bool,
    pub attribute: Option<Attribute>,
    pub value: Option<EditValue>,
    pub query_count: u32,
    pub execute_count: u32,
    pub turn_index: u32,
}

/// The tracked slot frame plus lifecycle counters.
///
/// Fields are only mutated through the state tracker, which keeps
/// `mask_confirmed -> mask -> refer` and `execute_count <= query_count`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DialogueState {
    pub(crate) refer: Option<Refer>,
    pub(crate) mask: Option<Arc<Mask>>,
    pub(crate) mask_confirmed: bool,
    pub(crate) attribute: Option<Attribute>,
    pub(crate) value: Option<EditValue>,
    pub(crate) query_count: u32,
    pub(crate) execute_count: u32,
    pub(crate) turn_index: u32,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(parts: StateParts) -> Result<Self, OntologyError> {
        let state = DialogueState {
            refer: parts.refer,
            mask: parts.mask,
            mask_confirmed: parts.mask_confirmed,
            attribute: parts.attribute,
            value: parts.value,
            query_count: parts.query_count,
            execute_count: parts.execute_count,
            turn_index: parts.turn_index,
        };
        state.check()?;
        Ok(state)
    }

    pub fn check(&self) -> Result<(), OntologyError> {
        if self.mask_confirmed && self.mask.is_none() {
            return Err(OntologyError::Inconsistent("confirmed flag set without a mask"));
        }
        if self.mask.is_some() && self.refer.is_none() {
            return Err(OntologyError::Inconsistent("mask present without a refer"));
        }
        if self.execute_count > self.query_count {
            return Err(OntologyError::Inconsistent("more executes than queries"));
        }
        Ok(())
    }

    pub fn refer(&self) -> Option<&Refer> {
        self.refer.as_ref()
    }

    pub fn mask(&self) -> Option<&Arc<Mask>> {
        self.mask.as_ref()
    }

    pub fn mask_confirmed(&self) -> bool {
        self.mask_confirmed
    }

    pub fn attribute(&self) -> Option<Attribute> {
        self.attribute
    }

    pub fn value(&self) -> Option<EditValue> {
        self.value
    }

    pub fn query_count(&self) -> u32 {
        self.query_count
    }

    pub fn execute_count(&self) -> u32 {
        self.execute_count
    }

    pub fn turn_index(&self) -> u32 {
        self.turn_index
    }

    /// True when a mask is tracked but the user has not accepted it yet.
    pub fn awaiting_confirmation(&self) -> bool {
        self.mask.is_some() && !self.mask_confirmed
    }

    /// The edit arguments, once every slot is filled and the mask accepted.
    pub fn adjust_request(&self) -> Option<AdjustRequest> {
        if !self.mask_confirmed {
            return None;
        }
        Some(AdjustRequest {
            mask: Arc::clone(self.mask.as_ref()?),
            attribute: self.attribute?,
            value: self.value?,
        })
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            refer: self.refer.clone(),
            mask: self.mask.as_deref().map(MaskSummary::of),
            mask_confirmed: self.mask_confirmed,
            attribute: self.attribute,
            value: self.value,
            query_count: self.query_count,
            execute_count: self.execute_count,
            turn_index: self.turn_index,
        }
    }
}

/// Serializable view of a [`DialogueState`]; the raster is reduced to a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub refer: Option<Refer>,
    pub mask: Option<MaskSummary>,
    pub mask_confirmed: bool,
    pub attribute: Option<Attribute>,
    pub value: Option<EditValue>,
    pub query_count: u32,
    pub execute_count: u32,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub width: u32,
    pub height: u32,
    pub area: usize,
    pub confidence: f64,
}

impl MaskSummary {
    pub fn of(mask: &Mask) -> Self {
        MaskSummary {
            width: mask.width(),
            height: mask.height(),
            area: mask.area(),
            confidence: mask.confidence(),
        }
    }
}
