//! Dialogue manager: rule-based policy, suggestive templates, and the
//! per-turn orchestration loop.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{adjust, Image};
use crate::metrics::{DialogueLog, TurnRecord};
use crate::nlu::{extract_frame, tokenize, RuleTagger, Tagger, TurnFrame, YesNo};
use crate::ontology::{Attribute, DialogueAct, DialogueState, EditValue, Refer, Slot};
use crate::tracker::{self, Rule};
use crate::vision::{Grounder, LexicalGrounder, Scene};

pub const VALUE_RANGE_TEXT: &str = "(-100 to 100)";
pub const CONFIRM_MASK_PROMPT: &str = "Is the current detected region correct? (yes/no)";

/// First unmet requirement in the order refer, mask, mask confirmation,
/// attribute, value; `Execute` once everything is in place.
pub fn next_act(state: &DialogueState) -> DialogueAct {
    if state.refer().is_none() {
        DialogueAct::Request(Slot::Refer)
    } else if state.mask().is_none() {
        DialogueAct::Query
    } else if !state.mask_confirmed() {
        DialogueAct::Confirm(Slot::Mask)
    } else if state.attribute().is_none() {
        DialogueAct::Request(Slot::Attribute)
    } else if state.value().is_none() {
        DialogueAct::Request(Slot::Value)
    } else {
        DialogueAct::Execute
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no template for `{0}`")]
    MissingTemplate(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("template `request_value` must mention the range {VALUE_RANGE_TEXT}")]
    MissingRange,
}

/// Response templates keyed by act (`request_refer`, `confirm_mask`, `query`,
/// `execute`, ...) plus a few auxiliary keys (`greeting`, `no_detection`,
/// `invalid_value`, `rejected`, `confirm_repair`, `edit_failed`, `farewell`).
///
/// Placeholders: `{attributes}`, `{range}`, `{refer}`, `{attribute}`, `{value}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: HashMap<String, String>,
}

const DEFAULT_TEMPLATES: &str = r#"
greeting=Hi! I can find objects in your image and adjust their {attributes}. Which region would you like to edit? For example, "the dog on the left".
request_refer=Which region would you like to edit? Describe the object, e.g. "the man on the left".
query=Looking for {refer}...
confirm_mask=Is the current detected region correct? (yes/no)
request_attribute=What would you like to adjust for {refer}? You can choose one of: {attributes}.
request_value=How much should I change the {attribute}? Please give a number {range}.
execute=Done! I changed the {attribute} of {refer} by {value}. What would you like to edit next?
no_detection=Sorry, I could not find "{refer}" in the image.
rejected=Sorry about that.
confirm_repair=Sorry, I did not catch that.
invalid_value=Sorry, the value must be a whole number {range}.
edit_failed=Sorry, I could not apply that edit.
farewell=We have reached the end of this session. Thank you for editing with me!
"#;

pub const TEMPLATE_KEYS: [&str; 20] = [
    "greeting",
    "request_refer",
    "request_mask",
    "request_attribute",
    "request_value",
    "confirm_refer",
    "confirm_mask",
    "confirm_attribute",
    "confirm_value",
    "query",
    "execute",
    "no_detection",
    "rejected",
    "confirm_repair",
    "invalid_value",
    "edit_failed",
    "farewell",
    // reserved for front ends
    "session_closed",
    "help",
    "unknown",
];

fn act_key(act: DialogueAct) -> String {
    match act {
        DialogueAct::Request(s) => format!("request_{s}"),
        DialogueAct::Confirm(s) => format!("confirm_{s}"),
        DialogueAct::Query => "query".to_string(),
        DialogueAct::Execute => "execute".to_string(),
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::parse(DEFAULT_TEMPLATES).expect("embedded templates parse")
    }
}

impl TemplateSet {
    /// Parses `key=template` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut templates = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| TemplateError::Parse {
                line: i + 1,
                reason: "expected key=template".to_string(),
            })?;
            let key = key.trim();
            if !TEMPLATE_KEYS.contains(&key) {
                return Err(TemplateError::Parse { line: i + 1, reason: format!("unknown key `{key}`") });
            }
            templates.insert(key.to_string(), value.trim().to_string());
        }
        Ok(TemplateSet { templates })
    }

    /// Defaults with the entries of `text` layered on top.
    pub fn with_overrides(text: &str) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        set.templates.extend(TemplateSet::parse(text)?.templates);
        set.validate()?;
        Ok(set)
    }

    /// Every act the policy can emit needs a template, and the value prompt
    /// must show the accepted range.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let emitted = [
            DialogueAct::Request(Slot::Refer),
            DialogueAct::Request(Slot::Attribute),
            DialogueAct::Request(Slot::Value),
            DialogueAct::Confirm(Slot::Mask),
            DialogueAct::Query,
            DialogueAct::Execute,
        ];
        for act in emitted {
            self.get(&act_key(act))?;
        }
        for key in ["greeting", "no_detection", "rejected", "confirm_repair", "invalid_value", "edit_failed", "farewell"] {
            self.get(key)?;
        }
        let value_prompt = fill(self.get("request_value")?, &DialogueState::new());
        if !value_prompt.contains(VALUE_RANGE_TEXT) {
            return Err(TemplateError::MissingRange);
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::MissingTemplate(key.to_string()))
    }

    /// Renders an auxiliary (non-act) template.
    pub fn render_key(&self, key: &str, state: &DialogueState) -> Result<String, TemplateError> {
        Ok(fill(self.get(key)?, state))
    }
}

fn attribute_list() -> String {
    Attribute::ALL.map(Attribute::name).join(", ")
}

fn fill(template: &str, state: &DialogueState) -> String {
    let refer = state.refer().map_or("the region", Refer::as_str);
    let attribute = state.attribute().map_or("attribute", Attribute::name);
    let value = state.value().map(|v| v.to_string()).unwrap_or_else(|| "the requested amount".to_string());
    template
        .replace("{attributes}", &attribute_list())
        .replace("{range}", VALUE_RANGE_TEXT)
        .replace("{refer}", refer)
        .replace("{attribute}", attribute)
        .replace("{value}", &value)
}

pub fn render_response(act: DialogueAct, state: &DialogueState, templates: &TemplateSet) -> Result<String, TemplateError> {
    Ok(fill(templates.get(&act_key(act))?, state))
}

/// What the system says and shows after one user utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTurn {
    pub act: DialogueAct,
    pub utterance: String,
    pub mask_overlay_present: bool,
    pub image_updated: bool,
    /// The edit applied this turn, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<AppliedEdit>,
}

/// One executed adjustment, as the user phrased it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedEdit {
    pub refer: Refer,
    pub attribute: Attribute,
    pub value: EditValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogueError {
    #[error("session is closed")]
    SessionClosed,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Pluggable parts of a dialogue session.
#[derive(Clone)]
pub struct SessionConfig {
    pub tagger: Arc<dyn Tagger>,
    pub grounder: Arc<dyn Grounder>,
    pub templates: Arc<TemplateSet>,
    /// Close after this many user turns.
    pub max_turns: Option<u32>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            tagger: Arc::new(RuleTagger),
            grounder: Arc::new(LexicalGrounder::default()),
            templates: Arc::new(TemplateSet::default()),
            max_turns: None,
        }
    }
}

/// Words that carry no referring content on their own.
const FILLER_WORDS: [&str; 14] = [
    "hi", "hello", "hey", "please", "thanks", "thank", "you", "ok", "okay", "um", "uh", "hmm", "well", "so",
];

/// Treats a slot-less reply to a refer request as the refer itself.
fn bare_refer(text: &str) -> Option<Refer> {
    let words: Vec<String> = tokenize(text).into_iter().filter(|t| !t.is_punct()).map(|t| t.text).collect();
    let first = words.iter().position(|w| !FILLER_WORDS.contains(&w.as_str()))?;
    let last = words.iter().rposition(|w| !FILLER_WORDS.contains(&w.as_str()))?;
    Refer::new(words[first..=last].join(" ")).ok()
}

/// One user's editing dialogue over one scene.
pub struct DialogueSession {
    scene: Arc<Scene>,
    image: Image,
    state: DialogueState,
    log: DialogueLog,
    config: SessionConfig,
    user_turns: u32,
    confirm_repairs: u8,
    last_act: DialogueAct,
    closed: bool,
    opening: SystemTurn,
    edits: Vec<AppliedEdit>,
}

impl DialogueSession {
    /// Opens a session and logs the greeting, which requests a refer.
    pub fn new(session_id: impl Into<String>, scene: Arc<Scene>, config: SessionConfig) -> Result<Self, DialogueError> {
        let state = DialogueState::new();
        let act = next_act(&state);
        let utterance = config.templates.render_key("greeting", &state)?;
        let mut log = DialogueLog::new(session_id, scene.image_id.clone());
        log.push(TurnRecord::system(0, utterance.clone(), vec![act], Vec::new(), &state));
        let opening = SystemTurn { act, utterance, mask_overlay_present: false, image_updated: false, applied: None };
        Ok(DialogueSession {
            image: scene.image.clone(),
            scene,
            state,
            log,
            config,
            user_turns: 0,
            confirm_repairs: 0,
            last_act: act,
            closed: false,
            opening,
            edits: Vec::new(),
        })
    }

    pub fn opening_turn(&self) -> &SystemTurn {
        &self.opening
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn log(&self) -> &DialogueLog {
        &self.log
    }

    /// Executed edits in order. The working image is the original with these applied.
    pub fn edits(&self) -> &[AppliedEdit] {
        &self.edits
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Processes one user utterance.
    pub fn step(&mut self, user_text: &str) -> Result<SystemTurn, DialogueError> {
        if self.closed {
            return Err(DialogueError::SessionClosed);
        }
        let templates = Arc::clone(&self.config.templates);
        self.user_turns += 1;

        let mut frame = extract_frame(user_text, self.config.tagger.as_ref());
        if self.last_act == DialogueAct::Request(Slot::Refer)
            && frame.intent.is_none()
            && !frame.has_slots()
            && frame.value_error.is_none()
        {
            frame.refer = bare_refer(user_text);
        }

        let mut notes: Vec<String> = Vec::new();
        let rules = self.track_user_turn(&frame, &mut notes, &templates)?;
        if frame.value_error.is_some() {
            notes.push(templates.render_key("invalid_value", &self.state)?);
        }
        let index = self.log.next_index();
        self.log.push(TurnRecord::user(index, user_text, frame, rules, &self.state));

        let mut acts = Vec::new();
        let mut system_rules = Vec::new();
        let mut act = next_act(&self.state);
        if act == DialogueAct::Query {
            acts.push(act);
            act = self.query(&mut notes, &mut system_rules, &templates)?;
        }

        let mut applied = None;
        let utterance_state;
        if act == DialogueAct::Execute {
            match self.execute() {
                Ok(before_reset) => {
                    let edit = AppliedEdit {
                        refer: before_reset.refer().expect("executed with a refer").clone(),
                        attribute: before_reset.attribute().expect("executed with an attribute"),
                        value: before_reset.value().expect("executed with a value"),
                    };
                    self.edits.push(edit.clone());
                    applied = Some(edit);
                    system_rules.extend([Rule::CountExecute, Rule::ClearAfterExecute]);
                    utterance_state = before_reset;
                }
                Err(()) => {
                    notes.push(templates.render_key("edit_failed", &self.state)?);
                    self.state = tracker::drop_region(&self.state);
                    system_rules.push(Rule::RejectMask);
                    act = next_act(&self.state);
                    utterance_state = self.state.clone();
                }
            }
        } else {
            utterance_state = self.state.clone();
        }
        acts.push(act);

        notes.push(render_response(act, &utterance_state, &templates)?);
        if self.config.max_turns.is_some_and(|max| self.user_turns >= max) {
            notes.push(templates.render_key("farewell", &self.state)?);
            self.closed = true;
        }
        let utterance = notes.join(" ");

        let index = self.log.next_index();
        self.log.push(TurnRecord::system(index, utterance.clone(), acts, system_rules, &self.state));
        self.last_act = act;

        Ok(SystemTurn {
            act,
            utterance,
            mask_overlay_present: act == DialogueAct::Confirm(Slot::Mask),
            image_updated: applied.is_some(),
            applied,
        })
    }

    fn track_user_turn(
        &mut self,
        frame: &TurnFrame,
        notes: &mut Vec<String>,
        templates: &TemplateSet,
    ) -> Result<Vec<Rule>, DialogueError> {
        let confirming = self.state.awaiting_confirmation();
        if let (Some(intent), true) = (frame.intent, confirming) {
            self.state = tracker::apply_confirmation(&self.state, intent).expect("mask awaiting confirmation");
            self.confirm_repairs = 0;
            if intent == YesNo::Deny {
                notes.push(templates.render_key("rejected", &self.state)?);
            }
            return Ok(vec![tracker::confirmation_rule(intent)]);
        }

        let transition = tracker::track(&self.state, frame);
        self.state = transition.after;
        let mut rules = transition.rules_fired;
        if confirming {
            if rules.contains(&Rule::ClearMaskOnNewRefer) {
                self.confirm_repairs = 0;
            } else {
                self.confirm_repairs += 1;
                notes.push(templates.render_key("confirm_repair", &self.state)?);
                if self.confirm_repairs >= 2 {
                    // second unusable answer: give up on this mask and ask again
                    self.state = tracker::drop_region(&self.state);
                    self.confirm_repairs = 0;
                    rules.push(Rule::RejectMask);
                }
            }
        }
        Ok(rules)
    }

    /// Resolves the tracked refer and returns the follow-up act.
    fn query(
        &mut self,
        notes: &mut Vec<String>,
        rules: &mut Vec<Rule>,
        templates: &TemplateSet,
    ) -> Result<DialogueAct, DialogueError> {
        let refer = self.state.refer().expect("policy queries only with a refer").clone();
        let detection = match self.config.grounder.resolve(&refer, &self.scene) {
            Ok(d) => Some(d.mask),
            Err(_) => {
                notes.push(templates.render_key("no_detection", &self.state)?);
                None
            }
        };
        let (next, rule) = tracker::record_query(&self.state, detection);
        self.state = next;
        rules.push(rule);
        Ok(next_act(&self.state))
    }

    /// Applies the tracked edit; returns the pre-reset state for rendering.
    fn execute(&mut self) -> Result<DialogueState, ()> {
        let request = self.state.adjust_request().ok_or(())?;
        let edited = adjust(&self.image, &request.mask, request.attribute, request.value).map_err(|_| ())?;
        let counted = tracker::record_execute(&self.state).map_err(|_| ())?;
        self.image = edited;
        self.state = tracker::reset_after_execute(&counted);
        Ok(counted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{make_edit_value, StateParts};
    use crate::vision::{Mask, SceneObject};

    fn full_state() -> StateParts {
        StateParts {
            refer: Some(Refer::new("the cow").unwrap()),
            mask: Some(Arc::new(Mask::filled(1, 1, 1.0))),
            mask_confirmed: true,
            attribute: Some(Attribute::Contrast),
            value: Some(make_edit_value(20).unwrap()),
            query_count: 1,
            ..Default::default()
        }
    }

    #[test]
    fn policy_examples() {
        assert_eq!(next_act(&DialogueState::new()), DialogueAct::Request(Slot::Refer));
        let refer_only = DialogueState::from_parts(StateParts {
            refer: Some(Refer::new("cow").unwrap()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(next_act(&refer_only), DialogueAct::Query);
        assert_eq!(next_act(&DialogueState::from_parts(full_state()).unwrap()), DialogueAct::Execute);
    }

    #[test]
    fn default_templates() {
        let t = TemplateSet::default();
        t.validate().unwrap();
        let s = DialogueState::new();
        assert!(render_response(DialogueAct::Request(Slot::Value), &s, &t).unwrap().contains("(-100 to 100)"));
        assert_eq!(render_response(DialogueAct::Confirm(Slot::Mask), &s, &t).unwrap(), CONFIRM_MASK_PROMPT);
        let attr = render_response(DialogueAct::Request(Slot::Attribute), &s, &t).unwrap();
        for a in Attribute::ALL {
            assert!(attr.contains(a.name()));
        }
        let full = DialogueState::from_parts(full_state()).unwrap();
        let done = render_response(DialogueAct::Execute, &full, &t).unwrap();
        assert!(done.contains("contrast") && done.contains("the cow") && done.contains("20"));
    }

    #[test]
    fn template_file_errors() {
        let partial = TemplateSet::parse("request_refer=Which one?").unwrap();
        assert_eq!(
            render_response(DialogueAct::Execute, &DialogueState::new(), &partial),
            Err(TemplateError::MissingTemplate("execute".into()))
        );
        assert!(matches!(TemplateSet::parse("no equals sign"), Err(TemplateError::Parse { line: 1, .. })));
        assert!(matches!(TemplateSet::parse("bogus=x"), Err(TemplateError::Parse { .. })));
        assert_eq!(TemplateSet::with_overrides("request_value=How much?"), Err(TemplateError::MissingRange));
        let custom = TemplateSet::with_overrides("# comment\n\nrequest_value=Amount {range}?").unwrap();
        assert_eq!(
            render_response(DialogueAct::Request(Slot::Value), &DialogueState::new(), &custom).unwrap(),
            "Amount (-100 to 100)?"
        );
    }

    #[test]
    fn bare_refer_strips_fillers() {
        assert_eq!(bare_refer("house or barn").unwrap().as_str(), "house or barn");
        assert_eq!(bare_refer("um, the red car please.").unwrap().as_str(), "the red car");
        assert!(bare_refer("hello!").is_none());
        assert!(bare_refer("").is_none());
    }

    fn tiny_scene() -> Arc<Scene> {
        Arc::new(Scene {
            image_id: "tiny".into(),
            image: Image::from_fn(4, 4, |x, y| [x as u8 * 50, y as u8 * 50, 100]),
            objects: vec![SceneObject {
                object_id: "cow".into(),
                phrases: vec!["left cow".into()],
                mask: Mask::from_fn(4, 4, 1.0, |x, _| x < 2),
            }],
        })
    }

    #[test]
    fn closed_session_rejects() {
        let mut s = DialogueSession::new("s1", tiny_scene(), SessionConfig::default()).unwrap();
        s.close();
        assert_eq!(s.step("yes"), Err(DialogueError::SessionClosed));
    }

    #[test]
    fn turn_limit_closes_with_farewell() {
        let cfg = SessionConfig { max_turns: Some(2), ..Default::default() };
        let mut s = DialogueSession::new("s1", tiny_scene(), cfg).unwrap();
        s.step("the left cow").unwrap();
        let last = s.step("yes").unwrap();
        assert!(last.utterance.contains("end of this session"));
        assert!(s.is_closed());
        assert!(s.step("brightness").is_err());
    }

    #[test]
    fn repair_loop_is_bounded() {
        let mut s = DialogueSession::new("s1", tiny_scene(), SessionConfig::default()).unwrap();
        assert_eq!(s.step("the left cow").unwrap().act, DialogueAct::Confirm(Slot::Mask));
        assert_eq!(s.step("hmm maybe").unwrap().act, DialogueAct::Confirm(Slot::Mask));
        assert_eq!(s.step("not sure").unwrap().act, DialogueAct::Request(Slot::Refer));
        assert!(s.state().refer().is_none());
    }

    #[test]
    fn invalid_value_is_re_requested() {
        let mut s = DialogueSession::new("s1", tiny_scene(), SessionConfig::default()).unwrap();
        s.step("increase the brightness of the left cow by 500").unwrap();
        let t = s.step("yes").unwrap();
        assert_eq!(t.act, DialogueAct::Request(Slot::Value));
        let t = s.step("2.5").unwrap();
        assert_eq!(t.act, DialogueAct::Request(Slot::Value));
        assert!(t.utterance.contains("whole number"));
        let t = s.step("40").unwrap();
        assert_eq!(t.act, DialogueAct::Execute);
        assert!(t.image_updated);
        assert_ne!(s.image(), &s.scene().image);
    }
}
