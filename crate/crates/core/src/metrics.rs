//! Dialogue logs and the evaluation measures computed from them.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlu::{spans, BioLabel, Category, TurnFrame};
use crate::ontology::{DialogueAct, DialogueState, StateSnapshot};
use crate::tracker::Rule;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("no dialogue logs given")]
    EmptyInput,
    #[error("log line {line}: {source}")]
    BadLine { line: usize, source: serde_json::Error },
    #[error("log is missing its session header")]
    MissingHeader,
    #[error("inconsistent log: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: u32,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub frame: Option<TurnFrame>,
    #[serde(default)]
    pub acts: Vec<DialogueAct>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<Rule>,
    pub state_after: StateSnapshot,
}

impl TurnRecord {
    pub fn user(index: u32, text: &str, frame: TurnFrame, rules: Vec<Rule>, state: &DialogueState) -> Self {
        TurnRecord {
            turn_index: index,
            speaker: Speaker::User,
            text: text.to_string(),
            frame: Some(frame),
            acts: Vec::new(),
            rules,
            state_after: state.snapshot(),
        }
    }

    pub fn system(index: u32, text: String, acts: Vec<DialogueAct>, rules: Vec<Rule>, state: &DialogueState) -> Self {
        TurnRecord {
            turn_index: index,
            speaker: Speaker::System,
            text,
            frame: None,
            acts,
            rules,
            state_after: state.snapshot(),
        }
    }

    fn count(&self, act: DialogueAct) -> u32 {
        self.acts.iter().filter(|a| **a == act).count() as u32
    }
}

/// First line of a log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub session_id: String,
    pub image_id: String,
    pub query_count: u32,
    pub execute_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialogueLog {
    pub session_id: String,
    pub image_id: String,
    pub records: Vec<TurnRecord>,
    pub query_count: u32,
    pub execute_count: u32,
}

impl DialogueLog {
    pub fn new(session_id: impl Into<String>, image_id: impl Into<String>) -> Self {
        DialogueLog {
            session_id: session_id.into(),
            image_id: image_id.into(),
            records: Vec::new(),
            query_count: 0,
            execute_count: 0,
        }
    }

    pub fn next_index(&self) -> u32 {
        self.records.last().map_or(0, |r| r.turn_index + 1)
    }

    /// Appends a record and bumps the act counters.
    pub fn push(&mut self, record: TurnRecord) {
        self.query_count += record.count(DialogueAct::Query);
        self.execute_count += record.count(DialogueAct::Execute);
        self.records.push(record);
    }

    /// Re-derives the counters from the records and checks ordering and bounds.
    pub fn check(&self) -> Result<(), MetricsError> {
        let queries: u32 = self.records.iter().map(|r| r.count(DialogueAct::Query)).sum();
        let executes: u32 = self.records.iter().map(|r| r.count(DialogueAct::Execute)).sum();
        if queries != self.query_count || executes != self.execute_count {
            return Err(MetricsError::Inconsistent(format!(
                "stored counters {}/{} but records hold {queries}/{executes}",
                self.query_count, self.execute_count
            )));
        }
        if executes > queries {
            return Err(MetricsError::Inconsistent("more executes than queries".into()));
        }
        if self.records.windows(2).any(|w| w[0].turn_index >= w[1].turn_index) {
            return Err(MetricsError::Inconsistent("turn indices not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn header(&self) -> LogHeader {
        LogHeader {
            session_id: self.session_id.clone(),
            image_id: self.image_id.clone(),
            query_count: self.query_count,
            execute_count: self.execute_count,
        }
    }

    pub fn user_utterances(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter(|r| r.speaker == Speaker::User).map(|r| r.text.as_str())
    }

    /// JSON lines: the header, then one record per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.header())?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, MetricsError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let (_, first) = lines.next().ok_or(MetricsError::MissingHeader)?;
        let header: LogHeader =
            serde_json::from_str(&first?).map_err(|source| MetricsError::BadLine { line: 1, source })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let record = serde_json::from_str(&line?).map_err(|source| MetricsError::BadLine { line: i + 1, source })?;
            records.push(record);
        }
        let log = DialogueLog {
            session_id: header.session_id,
            image_id: header.image_id,
            records,
            query_count: header.query_count,
            execute_count: header.execute_count,
        };
        log.check()?;
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        Self::read_jsonl(BufReader::new(fs::File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Loads every `*.jsonl` log in a directory, sorted by file name.
pub fn load_logs(dir: &Path) -> Result<Vec<DialogueLog>, MetricsError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| DialogueLog::load(p)).collect()
}

/// `#Execute / #Query`; `None` when no query was made.
pub fn vision_accuracy(log: &DialogueLog) -> Option<f64> {
    vision_accuracy_counts(log.execute_count, log.query_count)
}

pub fn vision_accuracy_counts(executes: u32, queries: u32) -> Option<f64> {
    (queries > 0).then(|| f64::from(executes) / f64::from(queries))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryScore {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let predicted = tp + fp;
        let gold = tp + fn_;
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else if gold == 0 { 1.0 } else { 0.0 };
        let recall = if gold > 0 { tp as f64 / gold as f64 } else if predicted == 0 { 1.0 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        CategoryScore { true_positives: tp, false_positives: fp, false_negatives: fn_, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub categories: BTreeMap<Category, CategoryScore>,
    /// Unweighted mean of the four category F1 scores.
    pub mean_f1: f64,
}

impl F1Report {
    pub fn get(&self, category: Category) -> &CategoryScore {
        &self.categories[&category]
    }

    /// Percentages in a one-row table: dataset, four categories, mean.
    pub fn table(&self, dataset: &str) -> String {
        let mut header = format!("{:<12}", "Dataset");
        let mut row = format!("{dataset:<12}");
        for cat in Category::ALL {
            header.push_str(&format!(" | {:>9}", cat.tag()));
            row.push_str(&format!(" | {:>9.2}", self.get(cat).f1 * 100.0));
        }
        header.push_str(&format!(" | {:>7}", "Mean"));
        row.push_str(&format!(" | {:>7.2}", self.mean_f1 * 100.0));
        format!("{header}\n{row}\n")
    }
}

/// Exact-match span F1 per category over aligned label sequences.
pub fn span_f1(gold: &[Vec<BioLabel>], pred: &[Vec<BioLabel>]) -> Result<F1Report, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut counts: HashMap<Category, (usize, usize, usize)> = HashMap::new();
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(MetricsError::LengthMismatch(g.len(), p.len()));
        }
        let gs = spans(g);
        let ps = spans(p);
        for s in &ps {
            let entry = counts.entry(s.category).or_default();
            if gs.contains(s) {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
        for s in gs.iter().filter(|s| !ps.contains(s)) {
            counts.entry(s.category).or_default().2 += 1;
        }
    }
    let categories: BTreeMap<Category, CategoryScore> = Category::ALL
        .into_iter()
        .map(|c| {
            let (tp, fp, fn_) = counts.get(&c).copied().unwrap_or_default();
            (c, CategoryScore::from_counts(tp, fp, fn_))
        })
        .collect();
    let mean_f1 = categories.values().map(|s| s.f1).sum::<f64>() / categories.len() as f64;
    Ok(F1Report { categories, mean_f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnStats {
    pub dialogues: usize,
    /// Both speakers counted.
    pub mean_turns_per_dialogue: f64,
    pub mean_user_turns_per_dialogue: f64,
    /// `None` when no dialogue contains an edit.
    pub mean_turns_per_edit: Option<f64>,
    pub mean_user_turns_per_edit: Option<f64>,
    /// Number of edits -> number of dialogues with that many edits.
    pub edits_per_dialogue: BTreeMap<usize, usize>,
    pub first_edit_turns: Vec<usize>,
    pub second_edit_turns: Vec<usize>,
}

/// Per-edit turn counts of one log: records from the start of each edit
/// cycle through its Execute, inclusive. Returns (all turns, user turns).
pub fn edit_turns(log: &DialogueLog) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut turns, mut user) = (0, 0);
    for r in &log.records {
        turns += 1;
        if r.speaker == Speaker::User {
            user += 1;
        }
        if r.acts.contains(&DialogueAct::Execute) {
            out.push((turns, user));
            turns = 0;
            user = 0;
        }
    }
    out
}

fn mean(xs: impl IntoIterator<Item = usize>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0usize, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

pub fn turn_stats(logs: &[DialogueLog]) -> Result<TurnStats, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let per_edit: Vec<Vec<(usize, usize)>> = logs.iter().map(edit_turns).collect();
    let mut edits_per_dialogue = BTreeMap::new();
    for edits in &per_edit {
        *edits_per_dialogue.entry(edits.len()).or_insert(0) += 1;
    }
    let nth = |n: usize| per_edit.iter().filter_map(|e| e.get(n).map(|t| t.0)).collect::<Vec<_>>();
    Ok(TurnStats {
        dialogues: logs.len(),
        mean_turns_per_dialogue: mean(logs.iter().map(|l| l.records.len())).unwrap_or(0.0),
        mean_user_turns_per_dialogue: mean(
            logs.iter().map(|l| l.records.iter().filter(|r| r.speaker == Speaker::User).count()),
        )
        .unwrap_or(0.0),
        mean_turns_per_edit: mean(per_edit.iter().flatten().map(|t| t.0)),
        mean_user_turns_per_edit: mean(per_edit.iter().flatten().map(|t| t.1)),
        edits_per_dialogue,
        first_edit_turns: nth(0),
        second_edit_turns: nth(1),
    })
}

/// Sample Pearson correlation; `Ok(None)` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort(xs.len()));
    }
    // single-pass co-moment accumulation
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    Ok(d)
}

/// Aggregate over a batch of dialogue logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueReport {
    pub per_dialogue: Vec<DialogueSummary>,
    /// Mean over dialogues where it is defined.
    pub mean_vision_accuracy: Option<f64>,
    pub undefined_vision_accuracy: usize,
    pub turns: TurnStats,
    /// KS statistic between first- and second-edit turn counts.
    pub first_vs_second_edit_ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSummary {
    pub session_id: String,
    pub image_id: String,
    pub turns: usize,
    pub queries: u32,
    pub executes: u32,
    pub vision_accuracy: Option<f64>,
}

pub fn dialogue_report(logs: &[DialogueLog]) -> Result<DialogueReport, MetricsError> {
    let turns = turn_stats(logs)?;
    let per_dialogue: Vec<DialogueSummary> = logs
        .iter()
        .map(|l| DialogueSummary {
            session_id: l.session_id.clone(),
            image_id: l.image_id.clone(),
            turns: l.records.len(),
            queries: l.query_count,
            executes: l.execute_count,
            vision_accuracy: vision_accuracy(l),
        })
        .collect();
    let defined: Vec<f64> = per_dialogue.iter().filter_map(|d| d.vision_accuracy).collect();
    let mean_vision_accuracy = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let first_vs_second_edit_ks =
        ks_statistic(&as_f64(&turns.first_edit_turns), &as_f64(&turns.second_edit_turns)).ok();
    Ok(DialogueReport {
        undefined_vision_accuracy: per_dialogue.len() - defined.len(),
        per_dialogue,
        mean_vision_accuracy,
        turns,
        first_vs_second_edit_ks,
    })
}

impl DialogueReport {
    pub fn text(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        out.push_str(&format!("dialogues: {}\n", self.turns.dialogues));
        out.push_str(&format!(
            "vision accuracy (mean over {} defined): {}\n",
            self.per_dialogue.len() - self.undefined_vision_accuracy,
            fmt_opt(self.mean_vision_accuracy)
        ));
        out.push_str(&format!(
            "turns per dialogue: {:.2} (user only: {:.2})\n",
            self.turns.mean_turns_per_dialogue, self.turns.mean_user_turns_per_dialogue
        ));
        out.push_str(&format!(
            "turns per edit: {} (user only: {})\n",
            fmt_opt(self.turns.mean_turns_per_edit),
            fmt_opt(self.turns.mean_user_turns_per_edit)
        ));
        let hist: Vec<String> = self.turns.edits_per_dialogue.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        out.push_str(&format!("edits per dialogue: {}\n", hist.join(" ")));
        out.push_str(&format!("1st vs 2nd edit KS statistic: {}\n", fmt_opt(self.first_vs_second_edit_ks)));
        for d in &self.per_dialogue {
            out.push_str(&format!(
                "  {} [{}] turns={} query={} execute={} va={}\n",
                d.session_id,
                d.image_id,
                d.turns,
                d.queries,
                d.executes,
                fmt_opt(d.vision_accuracy)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu::BioLabel::{Begin as B, Inside as I, Outside as O};
    use crate::ontology::Slot;

    fn log_with(records: Vec<(Speaker, Vec<DialogueAct>)>) -> DialogueLog {
        let mut log = DialogueLog::new("s", "img");
        let st = DialogueState::new();
        for (i, (speaker, acts)) in records.into_iter().enumerate() {
            let rec = match speaker {
                Speaker::User => TurnRecord::user(i as u32, "u", TurnFrame::default(), vec![], &st),
                Speaker::System => TurnRecord::system(i as u32, "s".into(), acts, vec![], &st),
            };
            log.push(rec);
        }
        log
    }

    #[test]
    fn vision_accuracy_examples() {
        assert!((vision_accuracy_counts(2, 3).unwrap() - 0.6667).abs() < 1e-4);
        assert!((vision_accuracy_counts(2, 3).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(vision_accuracy_counts(3, 3), Some(1.0));
        assert_eq!(vision_accuracy_counts(0, 0), None);
    }

    #[test]
    fn f1_conventions() {
        let gold = vec![vec![B(Category::Action), O, B(Category::Refer), I(Category::Refer), I(Category::Refer)]];
        let r = span_f1(&gold, &gold).unwrap();
        assert_eq!(r.mean_f1, 1.0);
        let pred = vec![vec![B(Category::Action), O, B(Category::Refer), I(Category::Refer), O]];
        let r = span_f1(&gold, &pred).unwrap();
        let refer = r.get(Category::Refer);
        assert_eq!((refer.true_positives, refer.false_positives, refer.false_negatives), (0, 1, 1));
        assert_eq!(refer.f1, 0.0);
        // ATTRIBUTE and VALUE have no spans on either side
        assert_eq!(r.get(Category::Value).f1, 1.0);
        assert!((r.mean_f1 - 0.75).abs() < 1e-12);

        let empty = span_f1(&[], &[]).unwrap();
        assert!(empty.categories.values().all(|c| c.f1 == 1.0));

        let missed = span_f1(&[vec![B(Category::Value)]], &[vec![O]]).unwrap();
        assert_eq!(missed.get(Category::Value).f1, 0.0);

        assert!(matches!(span_f1(&gold, &[]), Err(MetricsError::LengthMismatch(1, 0))));
        assert!(matches!(span_f1(&gold, &[vec![O]]), Err(MetricsError::LengthMismatch(5, 1))));
    }

    #[test]
    fn turn_segmentation() {
        use Speaker::*;
        let mut recs = Vec::new();
        for i in 1..=10 {
            let speaker = if i % 2 == 1 { User } else { System };
            let acts = if i == 6 || i == 10 { vec![DialogueAct::Execute] } else { vec![] };
            recs.push((speaker, acts));
        }
        let log = log_with(recs);
        let stats = turn_stats(std::slice::from_ref(&log)).unwrap();
        assert_eq!(stats.mean_turns_per_edit, Some(5.0));
        assert_eq!(stats.first_edit_turns, [6]);
        assert_eq!(stats.second_edit_turns, [4]);

        let idle = log_with(vec![(System, vec![DialogueAct::Request(Slot::Refer)]), (User, vec![])]);
        let stats = turn_stats(std::slice::from_ref(&idle)).unwrap();
        assert_eq!(stats.edits_per_dialogue.get(&0), Some(&1));
        assert_eq!(stats.mean_turns_per_edit, None);

        let a = log_with(vec![(User, vec![]); 16]);
        let b = log_with(vec![(User, vec![]); 18]);
        assert_eq!(turn_stats(&[a, b]).unwrap().mean_turns_per_dialogue, 17.0);
        assert!(matches!(turn_stats(&[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1., 1., 1.], &[4., 0., 2.]).unwrap(), None);
        assert!(pearson(&[1., 2.], &[1.]).is_err());
        assert!(pearson(&[1.], &[1.]).is_err());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1., 2., 3.], &[3., 1., 2.]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[1., 2.], &[5., 6.]).unwrap(), 1.0);
        assert!((ks_statistic(&[1., 2., 3., 4.], &[3., 4., 5., 6.]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_round_trip_and_check() {
        use Speaker::*;
        let log = log_with(vec![
            (System, vec![DialogueAct::Request(Slot::Refer)]),
            (User, vec![]),
            (System, vec![DialogueAct::Query, DialogueAct::Confirm(Slot::Mask)]),
        ]);
        assert_eq!(log.query_count, 1);
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        let back = DialogueLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, log);

        let mut bad = log.clone();
        bad.execute_count = 1;
        assert!(bad.check().is_err());
        assert!(DialogueLog::read_jsonl(bad.to_jsonl().as_bytes()).is_err());
        assert!(matches!(DialogueLog::read_jsonl(&b""[..]), Err(MetricsError::MissingHeader)));
    }
}
