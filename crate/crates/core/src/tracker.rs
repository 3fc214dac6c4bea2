//! State updater: folds per-turn NLU frames into the running dialogue state.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlu::{TurnFrame, YesNo};
use crate::ontology::{DialogueState, StateSnapshot};
use crate::vision::Mask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackerError {
    #[error("invalid context: {0}")]
    InvalidContext(&'static str),
}

/// Identifies which update rule changed the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    FillRefer,
    FillAttribute,
    FillValue,
    ClearMaskOnNewRefer,
    ConfirmMask,
    RejectMask,
    StoreMask,
    DropReferOnNoDetection,
    CountExecute,
    ClearAfterExecute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    pub before: DialogueState,
    pub frame: TurnFrame,
    pub after: DialogueState,
    pub rules_fired: Vec<Rule>,
}

/// Log form of a [`StateTransition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub before: StateSnapshot,
    pub frame: TurnFrame,
    pub after: StateSnapshot,
    pub rules_fired: Vec<Rule>,
}

impl StateTransition {
    pub fn record(&self) -> TransitionRecord {
        TransitionRecord {
            before: self.before.snapshot(),
            frame: self.frame.clone(),
            after: self.after.snapshot(),
            rules_fired: self.rules_fired.clone(),
        }
    }
}

/// Like [`update`], but also reports the rules that fired.
pub fn track(state: &DialogueState, frame: &TurnFrame) -> StateTransition {
    let mut next = state.clone();
    let mut rules = Vec::new();

    if let Some(refer) = &frame.refer {
        let is_new = next.refer.as_ref().is_none_or(|old| !old.same_as(refer));
        if is_new && next.mask.is_some() {
            next.mask = None;
            next.mask_confirmed = false;
            rules.push(Rule::ClearMaskOnNewRefer);
        }
        next.refer = Some(refer.clone());
        rules.push(Rule::FillRefer);
    }
    if let Some(attribute) = frame.attribute {
        next.attribute = Some(attribute);
        rules.push(Rule::FillAttribute);
    }
    if let Some(value) = frame.value {
        next.value = Some(value);
        rules.push(Rule::FillValue);
    }
    next.turn_index += 1;

    StateTransition { before: state.clone(), frame: frame.clone(), after: next, rules_fired: rules }
}

/// Overwrites state slots with the frame's slots. A refer that differs from
/// the tracked one drops the tracked mask.
pub fn update(state: &DialogueState, frame: &TurnFrame) -> DialogueState {
    track(state, frame).after
}

/// Applies the user's answer to a pending mask confirmation. A rejection
/// drops both the mask and the refer so the user re-describes the region.
pub fn apply_confirmation(state: &DialogueState, intent: YesNo) -> Result<DialogueState, TrackerError> {
    if !state.awaiting_confirmation() {
        return Err(TrackerError::InvalidContext("no unconfirmed mask to answer for"));
    }
    let mut next = state.clone();
    match intent {
        YesNo::Affirm => next.mask_confirmed = true,
        YesNo::Deny => {
            next.mask = None;
            next.mask_confirmed = false;
            next.refer = None;
        }
    }
    next.turn_index += 1;
    Ok(next)
}

pub fn confirmation_rule(intent: YesNo) -> Rule {
    match intent {
        YesNo::Affirm => Rule::ConfirmMask,
        YesNo::Deny => Rule::RejectMask,
    }
}

/// Records a vision query. A detection is stored unconfirmed; a miss drops
/// the refer so the policy asks for a new one.
pub fn record_query(state: &DialogueState, detection: Option<Mask>) -> (DialogueState, Rule) {
    let mut next = state.clone();
    next.query_count += 1;
    next.mask_confirmed = false;
    let rule = match detection {
        Some(mask) => {
            next.mask = Some(Arc::new(mask));
            Rule::StoreMask
        }
        None => {
            next.mask = None;
            next.refer = None;
            Rule::DropReferOnNoDetection
        }
    };
    (next, rule)
}

/// Counts an executed edit. Only valid once every slot is filled and the mask accepted.
pub fn record_execute(state: &DialogueState) -> Result<DialogueState, TrackerError> {
    if state.adjust_request().is_none() {
        return Err(TrackerError::InvalidContext("edit arguments incomplete"));
    }
    if state.execute_count >= state.query_count {
        return Err(TrackerError::InvalidContext("execute without a matching query"));
    }
    let mut next = state.clone();
    next.execute_count += 1;
    Ok(next)
}

/// Clears refer, mask, attribute and value. Counters survive.
pub fn reset_after_execute(state: &DialogueState) -> DialogueState {
    DialogueState {
        refer: None,
        mask: None,
        mask_confirmed: false,
        attribute: None,
        value: None,
        ..state.clone()
    }
}

/// Forgets the tracked region (refer and mask) without touching other slots.
pub fn drop_region(state: &DialogueState) -> DialogueState {
    DialogueState { refer: None, mask: None, mask_confirmed: false, ..state.clone() }
}

/// Folds a frame sequence through [`update`].
pub fn replay<'a>(initial: &DialogueState, frames: impl IntoIterator<Item = &'a TurnFrame>) -> DialogueState {
    frames.into_iter().fold(initial.clone(), |s, f| update(&s, f))
}
