//! Slot-filling dialogue engine for region-based image adjustments.
//!
//! A user describes an edit in plain text; the engine extracts the refer,
//! attribute and value slots, grounds the refer to a mask, asks the user to
//! confirm it, and applies the adjustment to the masked region.
//!
//! - [`ontology`]: slots, acts and the dialogue state
//! - [`nlu`]: tokenizer, BIO tagger, frame extraction, request generator
//! - [`tracker`]: state update rules
//! - [`manager`]: policy, response templates, turn orchestration
//! - [`vision`]: scene fixtures and refer grounding
//! - [`edit`]: attribute adjustments and mask overlays
//! - [`metrics`]: dialogue logs, vision accuracy, span F1, turn statistics
//! - [`service`]: multi-session store used by the HTTP front end

pub mod edit;
pub mod manager;
pub mod metrics;
pub mod nlu;
pub mod ontology;
pub mod service;
pub mod tracker;
pub mod vision;

pub use edit::{adjust, render_overlay, Image};
pub use manager::{next_act, AppliedEdit, DialogueSession, SessionConfig, SystemTurn, TemplateSet};
pub use nlu::{extract_frame, RuleTagger, Tagger, TurnFrame};
pub use ontology::{Attribute, DialogueAct, DialogueState, EditValue, Refer, Slot};
pub use vision::{load_scene, Grounder, LexicalGrounder, Mask, Scene};
