//! Subcommand bodies, kept free of argument parsing so tests can drive them.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use slotedit_core::metrics::{dialogue_report, load_logs, span_f1, DialogueLog, F1Report};
use slotedit_core::nlu::{generate_corpus, tokenize, CorpusRecord};
use slotedit_core::service::{FixtureStore, SessionStore};
use slotedit_core::vision::LexicalGrounder;
use slotedit_core::{load_scene, DialogueSession, Image, RuleTagger, Scene, SessionConfig, Tagger, TemplateSet};

/// Knobs shared by every command that runs dialogues.
#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    pub templates: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub max_turns: Option<u32>,
}

impl EngineOptions {
    pub fn session_config(&self) -> Result<SessionConfig> {
        let mut config = SessionConfig { max_turns: self.max_turns, ..Default::default() };
        if let Some(path) = &self.templates {
            let text = fs::read_to_string(path).with_context(|| format!("reading templates {}", path.display()))?;
            let set = TemplateSet::with_overrides(&text).with_context(|| format!("templates {}", path.display()))?;
            config.templates = Arc::new(set);
        }
        if let Some(threshold) = self.threshold {
            if !(0.0..=1.0).contains(&threshold) {
                bail!("grounding threshold must lie in [0, 1], got {threshold}");
            }
            config.grounder = Arc::new(LexicalGrounder { threshold });
        }
        Ok(config)
    }
}

pub fn load_fixtures(dir: &Path) -> Result<FixtureStore> {
    let store = FixtureStore::load(dir).with_context(|| format!("loading fixtures from {}", dir.display()))?;
    if store.is_empty() {
        bail!("no scene fixtures found under {}", dir.display());
    }
    Ok(store)
}

fn fixture_scene(dir: &Path, image_id: &str) -> Result<Arc<Scene>> {
    let store = load_fixtures(dir)?;
    match store.get(image_id) {
        Some(scene) => Ok(Arc::clone(scene)),
        None => bail!("unknown image `{image_id}`; available: {}", store.ids().join(", ")),
    }
}

pub async fn serve(addr: SocketAddr, fixtures: &Path, logs: &Path, options: &EngineOptions) -> Result<()> {
    let store = load_fixtures(fixtures)?;
    fs::create_dir_all(logs).with_context(|| format!("creating log directory {}", logs.display()))?;
    tracing::info!(images = store.len(), fixtures = %fixtures.display(), "fixtures loaded");
    let sessions = SessionStore::new(Arc::new(store), options.session_config()?, Some(logs.to_path_buf()));
    let app = crate::router(Arc::new(sessions));
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).await?;
    Ok(())
}

/// Terminal loop: one utterance per input line until EOF or `/quit`.
pub fn chat(
    fixtures: &Path,
    image_id: &str,
    options: &EngineOptions,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<DialogueLog> {
    let scene = fixture_scene(fixtures, image_id)?;
    let mut session = DialogueSession::new(format!("chat-{}", timestamp_id()), scene, options.session_config()?)?;
    writeln!(out, "system: {}", session.opening_turn().utterance)?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text == "/quit" {
            break;
        }
        if text.is_empty() {
            continue;
        }
        let turn = session.step(text)?;
        writeln!(out, "system: {}", turn.utterance)?;
        if turn.mask_overlay_present {
            let area = session.state().mask().map_or(0, |m| m.area());
            writeln!(out, "  [region highlighted: {area} pixels]")?;
        }
        if let Some(edit) = &turn.applied {
            writeln!(out, "  [applied {} {:+} to {}]", edit.attribute, edit.value.get(), edit.refer)?;
        }
        if session.is_closed() {
            break;
        }
    }
    session.close();
    Ok(session.log().clone())
}

fn timestamp_id() -> String {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    format!("{nanos:x}")
}

/// Feeds newline-separated utterances through a fresh session. Blank lines
/// and lines starting with `#` are skipped.
pub fn replay(scene: Arc<Scene>, script: &str, session_id: &str, options: &EngineOptions) -> Result<(DialogueLog, Image)> {
    let mut session = DialogueSession::new(session_id, scene, options.session_config()?)?;
    for line in script.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if session.is_closed() {
            break;
        }
        session.step(line)?;
    }
    session.close();
    Ok((session.log().clone(), session.image().clone()))
}

pub struct ReplayArgs<'a> {
    pub script: &'a Path,
    pub fixtures: &'a Path,
    pub image_id: &'a str,
    pub out: Option<&'a Path>,
    pub image_out: Option<&'a Path>,
}

pub fn replay_file(args: &ReplayArgs<'_>, options: &EngineOptions, stdout: impl Write) -> Result<DialogueLog> {
    let script = fs::read_to_string(args.script).with_context(|| format!("reading {}", args.script.display()))?;
    let scene = fixture_scene(args.fixtures, args.image_id)?;
    let session_id = args.script.file_stem().map_or("replay".into(), |s| s.to_string_lossy().into_owned());
    let (log, image) = replay(scene, &script, &session_id, options)?;
    match args.out {
        Some(path) => log.save(path)?,
        None => log.write_jsonl(stdout)?,
    }
    if let Some(path) = args.image_out {
        image.save_png(path)?;
    }
    Ok(log)
}

pub fn eval_dialogues(logs: &Path, mut out: impl Write) -> Result<()> {
    let logs = load_logs(logs).with_context(|| format!("reading logs from {}", logs.display()))?;
    if logs.is_empty() {
        bail!("no *.jsonl logs found");
    }
    let report = dialogue_report(&logs)?;
    write!(out, "{}", report.text())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Scores a tagger against gold corpus labels.
pub fn score_corpus(records: &[CorpusRecord], tagger: &dyn Tagger) -> Result<F1Report> {
    let mut gold = Vec::with_capacity(records.len());
    let mut pred = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let tokens = tokenize(&r.text);
        if tokens.iter().map(|t| t.text.as_str()).ne(r.tokens.iter().map(String::as_str)) {
            bail!("record {}: stored tokens do not match the tokenized text", i + 1);
        }
        if r.labels.len() != r.tokens.len() {
            bail!("record {}: {} labels for {} tokens", i + 1, r.labels.len(), r.tokens.len());
        }
        pred.push(tagger.tag(&tokens));
        gold.push(r.labels.clone());
    }
    Ok(span_f1(&gold, &pred)?)
}

pub fn eval_nlu(corpus: &Path, mut out: impl Write) -> Result<F1Report> {
    let records = read_corpus(corpus)?;
    let report = score_corpus(&records, &RuleTagger)?;
    let name = corpus.file_stem().map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
    write!(out, "{}", report.table(&name))?;
    Ok(report)
}

pub fn gen_corpus(n: usize, seed: u64, scenes_dir: &Path, out: &Path) -> Result<usize> {
    let scenes: Vec<Scene> = if scenes_dir.join(slotedit_core::vision::MANIFEST_FILE).is_file() {
        vec![load_scene(scenes_dir)?]
    } else {
        load_fixtures(scenes_dir)?.scenes().map(|s| (**s).clone()).collect()
    };
    let corpus = generate_corpus(n, seed, &scenes)?;
    let mut w = BufWriter::new(fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
    for ier in &corpus {
        serde_json::to_writer(&mut w, &CorpusRecord::from(ier))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(corpus.len())
}
