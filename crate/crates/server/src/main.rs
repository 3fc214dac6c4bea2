use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use slotedit_server::commands::{self, EngineOptions, ReplayArgs};

#[derive(Parser)]
#[command(name = "slotedit", version, about = "Dialogue-driven region editing for images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Engine {
    /// Template overrides (`key=text` per line)
    #[arg(long, env = "SLOTEDIT_TEMPLATES")]
    templates: Option<PathBuf>,
    /// Minimum grounding score for a detection
    #[arg(long, env = "SLOTEDIT_THRESHOLD")]
    threshold: Option<f64>,
    /// End each dialogue after this many user turns
    #[arg(long, env = "SLOTEDIT_MAX_TURNS")]
    max_turns: Option<u32>,
}

impl From<&Engine> for EngineOptions {
    fn from(e: &Engine) -> Self {
        EngineOptions { templates: e.templates.clone(), threshold: e.threshold, max_turns: e.max_turns }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API
    Serve {
        #[arg(long, env = "SLOTEDIT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "SLOTEDIT_HOST", default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = "SLOTEDIT_FIXTURES")]
        fixtures: PathBuf,
        #[arg(long, env = "SLOTEDIT_LOGS")]
        logs: PathBuf,
        #[command(flatten)]
        engine: Engine,
    },
    /// Talk to the editor in the terminal
    Chat {
        #[arg(long, env = "SLOTEDIT_FIXTURES")]
        fixtures: PathBuf,
        #[arg(long, env = "SLOTEDIT_IMAGE")]
        image: String,
        /// Directory to write the session log into
        #[arg(long, env = "SLOTEDIT_LOGS")]
        logs: Option<PathBuf>,
        #[command(flatten)]
        engine: Engine,
    },
    /// Run a script of user utterances and emit the dialogue log
    Replay {
        #[arg(long, env = "SLOTEDIT_SCRIPT")]
        script: PathBuf,
        #[arg(long, env = "SLOTEDIT_FIXTURES")]
        fixtures: PathBuf,
        #[arg(long, env = "SLOTEDIT_IMAGE")]
        image: String,
        /// Log file (stdout when omitted)
        #[arg(long, env = "SLOTEDIT_OUT")]
        out: Option<PathBuf>,
        /// Where to write the final edited image
        #[arg(long, env = "SLOTEDIT_IMAGE_OUT")]
        image_out: Option<PathBuf>,
        #[command(flatten)]
        engine: Engine,
    },
    /// Metrics over logs or tagged corpora
    #[command(subcommand)]
    Eval(Eval),
    /// Generate a synthetic tagged request corpus
    GenCorpus {
        #[arg(long, env = "SLOTEDIT_N", default_value_t = 1000)]
        n: usize,
        #[arg(long, env = "SLOTEDIT_SEED", default_value_t = 0)]
        seed: u64,
        /// A scene directory or a directory of scenes
        #[arg(long, env = "SLOTEDIT_SCENES")]
        scenes: PathBuf,
        #[arg(long, env = "SLOTEDIT_OUT")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Eval {
    /// Vision accuracy and turn statistics over a log directory
    Dialogues {
        #[arg(long, env = "SLOTEDIT_LOGS")]
        logs: PathBuf,
    },
    /// Span F1 of the rule tagger against a corpus file
    Nlu {
        #[arg(long, env = "SLOTEDIT_CORPUS")]
        corpus: PathBuf,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    match cli.command {
        Command::Serve { port, host, fixtures, logs, engine } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(commands::serve(SocketAddr::new(host, port), &fixtures, &logs, &(&engine).into()))
        }
        Command::Chat { fixtures, image, logs, engine } => {
            let log = commands::chat(&fixtures, &image, &(&engine).into(), io::stdin().lock(), stdout.lock())?;
            if let Some(dir) = logs {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{}.jsonl", log.session_id));
                log.save(&path)?;
                eprintln!("log written to {}", path.display());
            }
            Ok(())
        }
        Command::Replay { script, fixtures, image, out, image_out, engine } => {
            let args = ReplayArgs {
                script: &script,
                fixtures: &fixtures,
                image_id: &image,
                out: out.as_deref(),
                image_out: image_out.as_deref(),
            };
            commands::replay_file(&args, &(&engine).into(), stdout.lock())?;
            Ok(())
        }
        Command::Eval(Eval::Dialogues { logs }) => commands::eval_dialogues(&logs, stdout.lock()),
        Command::Eval(Eval::Nlu { corpus }) => commands::eval_nlu(&corpus, stdout.lock()).map(|_| ()),
        Command::GenCorpus { n, seed, scenes, out } => {
            let written = commands::gen_corpus(n, seed, &scenes, &out)?;
            eprintln!("wrote {written} requests to {}", out.display());
            Ok(())
        }
    }
}
