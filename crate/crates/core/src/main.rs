use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use vidact::classify::{train_action_head, ActionModelKind, LinearHead, TrainConfig};
use vidact::compose::{detect_activities, parse_rules};
use vidact::eval::{parse_clips, score_clips};
use vidact::graph::{build_video_graph, parse_observations};
use vidact::kb::{load_knowledge_base, KbError, KnowledgeBase};
use vidact::reason::{explain, reason, ActionEvent, Backend, ReasonerConfig};
use vidact::refine::RefinementConfig;
use vidact::synth::{parse_script, synthesize_observations};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit codes: 0 success, 2 parse/validation failure, 3 runtime failure.
const EXIT_INVALID: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "vidact", version, about = "Explainable action reasoning over video state transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a knowledge file and print its cardinalities.
    ValidateKb {
        /// Knowledge file (JSON).
        kb: PathBuf,
    },
    /// Train an action head from the knowledge base's enumerated transitions.
    Train(TrainArgs),
    /// Build a video graph from observations and explain its transitions.
    Reason(ReasonArgs),
    /// Score predicted events against ground-truth clips.
    Eval(EvalArgs),
    /// Render a scenario script into an observation stream.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long, value_enum)]
    which: WhichHead,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 50000)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Head file to write (JSON); stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum WhichHead {
    Aar,
    Rar,
}

#[derive(Copy, Clone, ValueEnum)]
enum BackendArg {
    Rule,
    Learned,
}

#[derive(Args)]
struct ReasonArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    observations: PathBuf,
    /// Refinement window width.
    #[arg(long, default_value_t = 5)]
    theta: usize,
    #[arg(long, value_enum, default_value = "rule")]
    backend: BackendArg,
    #[arg(long)]
    aar_head: Option<PathBuf>,
    #[arg(long)]
    rar_head: Option<PathBuf>,
    /// Add a human-readable sentence to each event.
    #[arg(long)]
    explain: bool,
    /// Include null-classified transitions in the event list.
    #[arg(long)]
    emit_null: bool,
    /// Activity rules file; adds an `activities` section to the output.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Events JSON (reason output or bare event array).
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth clips CSV: clip_id,start,end,action.
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// Overrides the script's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Observation stream output (JSONL); stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional file for the clean ground-truth transition list.
    #[arg(long)]
    events_out: Option<PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let text = read_file(path)?;
    load_knowledge_base(&text).map_err(|e| match e {
        KbError::Parse(_) | KbError::Validation(_) => CliError::invalid(e.to_string()),
        other => CliError::runtime(other.to_string()),
    })
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    inputs: BTreeMap<&'static str, String>,
    config: BTreeMap<&'static str, serde_json::Value>,
    version: &'static str,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateKb { kb } => cmd_validate_kb(&kb),
        Command::Train(args) => cmd_train(args),
        Command::Reason(args) => cmd_reason(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_validate_kb(path: &Path) -> Result<()> {
    let kb = load_kb(path)?;
    let (m, s, n, k) = kb.cardinalities();
    let attr = kb.enumerate_attribute_transitions().len();
    let rel = kb.enumerate_relationship_transitions().len();
    println!("M={m} S={s} N={n} K={k}; attr transitions {attr}; rel transitions {rel}");
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let kb = load_kb(&args.kb)?;
    let which = match args.which {
        WhichHead::Aar => ActionModelKind::Aar,
        WhichHead::Rar => ActionModelKind::Rar,
    };
    let cfg = TrainConfig { learning_rate: args.lr, epochs: args.epochs, seed: args.seed };
    let trained = train_action_head(&kb, which, cfg)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let manifest = RunManifest {
        command: "train",
        inputs: BTreeMap::from([("kb", args.kb.display().to_string())]),
        config: BTreeMap::from([
            ("which", json!(match args.which {
                WhichHead::Aar => "aar",
                WhichHead::Rar => "rar",
            })),
            ("lr", json!(args.lr)),
            ("epochs", json!(args.epochs)),
            ("seed", json!(args.seed)),
        ]),
        version: VERSION,
    };
    let doc = json!({
        "manifest": manifest,
        "training_accuracy": trained.training_accuracy,
        "epochs_run": trained.epochs_run,
        "head": trained.head,
    });
    write_output(args.output.as_deref(), &pretty(&doc)?)?;
    eprintln!("training accuracy {:.3}", trained.training_accuracy);
    Ok(())
}

fn load_head(path: &Path) -> Result<LinearHead> {
    let text = read_file(path)?;
    // Accept either a bare head or a train-command output document.
    if let Ok(head) = serde_json::from_str::<LinearHead>(&text) {
        return Ok(head);
    }
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_value(doc["head"].clone())
        .map_err(|e| CliError::invalid(format!("{}: not a head file: {e}", path.display())))
}

fn cmd_reason(args: ReasonArgs) -> Result<()> {
    let kb = load_kb(&args.kb)?;
    if args.theta < 1 {
        return Err(CliError::invalid("--theta must be at least 1"));
    }
    let obs_text = read_file(&args.observations)?;
    let records =
        parse_observations(&obs_text).map_err(|e| CliError::invalid(e.to_string()))?;
    let empty_stream = records.is_empty();
    let mut cfg = ReasonerConfig {
        backend: match args.backend {
            BackendArg::Rule => Backend::Rule,
            BackendArg::Learned => Backend::Learned,
        },
        refinement: RefinementConfig::new(args.theta),
        emit_null: args.emit_null,
        aar_head: None,
        rar_head: None,
    };
    if cfg.backend == Backend::Learned {
        let (Some(aar), Some(rar)) = (&args.aar_head, &args.rar_head) else {
            return Err(CliError::invalid(
                "learned backend requires --aar-head and --rar-head",
            ));
        };
        cfg.aar_head = Some(load_head(aar)?);
        cfg.rar_head = Some(load_head(rar)?);
    }

    let (events, out) = if empty_stream {
        (Vec::new(), Default::default())
    } else {
        let vg = build_video_graph(&kb, &records)
            .map_err(|e| CliError::invalid(e.to_string()))?;
        let out = reason(&vg, &kb, &cfg).map_err(|e| CliError::runtime(e.to_string()))?;
        (out.events.clone(), out)
    };

    let mut event_docs = Vec::new();
    for ev in &events {
        let mut doc = serde_json::to_value(ev).expect("serializable event");
        if args.explain {
            doc["sentence"] = json!(explain(ev));
        }
        event_docs.push(doc);
    }

    let mut inputs = BTreeMap::from([
        ("kb", args.kb.display().to_string()),
        ("observations", args.observations.display().to_string()),
    ]);
    let mut config = BTreeMap::from([
        ("theta", json!(args.theta)),
        ("backend", json!(match args.backend {
            BackendArg::Rule => "rule",
            BackendArg::Learned => "learned",
        })),
        ("emit_null", json!(args.emit_null)),
    ]);
    if let Some(p) = &args.aar_head {
        inputs.insert("aar_head", p.display().to_string());
    }
    if let Some(p) = &args.rar_head {
        inputs.insert("rar_head", p.display().to_string());
    }
    let mut doc = json!({
        "manifest": RunManifest { command: "reason", inputs: BTreeMap::new(), config: BTreeMap::new(), version: VERSION },
        "events": event_docs,
        "diagnostics": {
            "transitions_total": out.transitions_total,
            "null_transitions": out.null_transitions,
            "unexplainable": out.unexplainable,
        },
    });
    if let Some(rules_path) = &args.rules {
        let rules_text = read_file(rules_path)?;
        let rules = parse_rules(&rules_text).map_err(|e| CliError::invalid(e.to_string()))?;
        let activities = detect_activities(&events, &rules, &kb)
            .map_err(|e| CliError::invalid(e.to_string()))?;
        inputs.insert("rules", rules_path.display().to_string());
        config.insert("rules", json!(rules_path.display().to_string()));
        doc["activities"] = serde_json::to_value(&activities).expect("serializable");
    }
    doc["manifest"] = serde_json::to_value(RunManifest {
        command: "reason",
        inputs,
        config,
        version: VERSION,
    })
    .expect("serializable manifest");
    write_output(args.output.as_deref(), &pretty(&doc)?)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pred_text = read_file(&args.predictions)?;
    let events = parse_events(&pred_text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", args.predictions.display())))?;
    let clips_text = read_file(&args.clips)?;
    let clips = parse_clips(&clips_text).map_err(|e| CliError::invalid(e.to_string()))?;

    // Bucket events into clips by transition time.
    let mut per_clip: BTreeMap<String, Vec<String>> =
        clips.iter().map(|c| (c.id.clone(), Vec::new())).collect();
    let mut unassigned = 0usize;
    for ev in &events {
        match clips.iter().find(|c| c.start <= ev.time && ev.time <= c.end) {
            Some(c) => per_clip.get_mut(&c.id).unwrap().push(ev.action.clone()),
            None => unassigned += 1,
        }
    }
    let metrics =
        score_clips(&per_clip, &clips).map_err(|e| CliError::invalid(e.to_string()))?;
    let doc = json!({
        "manifest": RunManifest {
            command: "eval",
            inputs: BTreeMap::from([
                ("predictions", args.predictions.display().to_string()),
                ("clips", args.clips.display().to_string()),
            ]),
            config: BTreeMap::new(),
            version: VERSION,
        },
        "per_action": metrics.per_action,
        "overall": metrics.overall,
        "unassigned_events": unassigned,
    });
    write_output(args.output.as_deref(), &pretty(&doc)?)
}

fn parse_events(text: &str) -> std::result::Result<Vec<ActionEvent>, serde_json::Error> {
    if let Ok(events) = serde_json::from_str::<Vec<ActionEvent>>(text) {
        return Ok(events);
    }
    let doc: serde_json::Value = serde_json::from_str(text)?;
    serde_json::from_value(doc["events"].clone())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let kb = load_kb(&args.kb)?;
    let script_text = read_file(&args.script)?;
    let mut script =
        parse_script(&script_text).map_err(|e| CliError::invalid(e.to_string()))?;
    if let Some(seed) = args.seed {
        if let Some(noise) = &mut script.noise {
            noise.seed = seed;
        }
    }
    let out = synthesize_observations(&kb, &script)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    match &args.output {
        Some(p) => fs::write(p, &out.observations_jsonl)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{}", out.observations_jsonl),
    }
    if let Some(p) = &args.events_out {
        let events: Vec<serde_json::Value> = out
            .clean_events
            .iter()
            .map(|e| {
                json!({
                    "kind": e.kind,
                    "participants": e.participants,
                    "pre": e.pre,
                    "eff": e.eff,
                    "time": e.time,
                })
            })
            .collect();
        let doc = json!({
            "manifest": RunManifest {
                command: "synth",
                inputs: BTreeMap::from([
                    ("script", args.script.display().to_string()),
                    ("kb", args.kb.display().to_string()),
                ]),
                config: BTreeMap::from([("seed", json!(args.seed))]),
                version: VERSION,
            },
            "clean_transitions": events,
        });
        fs::write(p, pretty(&doc)?)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn pretty(doc: &serde_json::Value) -> Result<String> {
    serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::runtime(format!("serialization failed: {e}")))
}
