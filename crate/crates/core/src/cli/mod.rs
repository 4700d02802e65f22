//! Command-line surface: synth, train, generate, evaluate, ablate.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::corpus::{
    expand_all, generate_synthetic, load_dataset, split_80_10_10, write_jsonl, Instance, RawRecord, SignalLocation,
    SynthConfig, Vocabulary,
};
use crate::error::{Error, Result};
use crate::inference::{generate, BeamConfig};
use crate::metrics::{evaluate, read_predictions, MatchConfig, MetricsReport};
use crate::model::{checkpoint, Model, ModelConfig, Variant};
use crate::training::{fit, FitOutcome, TrainConfig};

pub use config::{RunConfig, DEFAULTS};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hashgen", version, about = "Conversation-aware hashtag generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key=value config file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus split 80/10/10 plus its vocabulary.
    Synth,
    /// Train one model variant.
    Train,
    /// Beam-search predictions for a dataset split.
    Generate,
    /// Score a prediction file against a dataset split.
    Evaluate,
    /// Train, generate, and evaluate all six variants.
    Ablate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Generate => "generate",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
        }
    }
}

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        2
    } else {
        1
    }
}

pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path, overwrite: bool, planned: &[&str]) -> Result<Self> {
        if !overwrite {
            if let Some(f) = planned.iter().find(|f| dir.join(f).exists()) {
                return Err(Error::Contract(format!(
                    "{} already exists; pass --overwrite to replace it",
                    dir.join(f).display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    fn manifest(mut self, command: Command, cfg: &RunConfig) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'c> {
            command: &'static str,
            seed: u64,
            config: &'c std::collections::BTreeMap<String, String>,
            format_versions: serde_json::Value,
            outputs: Vec<String>,
        }
        let m = Manifest {
            command: command.name(),
            seed: cfg.get("seed")?,
            config: cfg.values(),
            format_versions: serde_json::json!({
                "checkpoint": checkpoint::FORMAT_VERSION,
                "manifest": MANIFEST_VERSION,
            }),
            outputs: std::mem::take(&mut self.written),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        self.write("manifest.json", &text)
    }
}

pub fn synth_config(cfg: &RunConfig) -> Result<SynthConfig> {
    Ok(SynthConfig {
        n_topics: cfg.get("n_topics")?,
        n_instances: cfg.get("n_instances")?,
        vocab_size: cfg.get("synth_vocab")?,
        signal_location: cfg.get::<SignalLocation>("signal_location")?,
        seed: cfg.get("seed")?,
        indicative_per_topic: cfg.get("indicative_per_topic")?,
        post_len: (cfg.get("post_len_min")?, cfg.get("post_len_max")?),
        turns: (cfg.get("turns_min")?, cfg.get("turns_max")?),
        turn_len: (cfg.get("turn_len_min")?, cfg.get("turn_len_max")?),
        planted: cfg.get("planted")?,
    })
}

pub fn model_config(cfg: &RunConfig, vocab_size: usize, variant: Variant) -> Result<ModelConfig> {
    Ok(ModelConfig {
        vocab_size,
        hidden: cfg.get("hidden")?,
        embed: cfg.get("embed")?,
        layers: cfg.get("layers")?,
        variant,
        share_embeddings: cfg.get("share_embeddings")?,
    })
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        batch_size: cfg.get("batch_size")?,
        max_epochs: cfg.get("max_epochs")?,
        lr: cfg.get("lr")?,
        clip: cfg.get("clip")?,
        dropout: cfg.get("dropout")?,
        seed: cfg.get("seed")?,
        patience: cfg.get("patience")?,
        max_halvings: cfg.get("max_halvings")?,
        lr_floor: cfg.get("lr_floor")?,
        ..TrainConfig::default()
    })
}

pub fn beam_config(cfg: &RunConfig) -> Result<BeamConfig> {
    let b = BeamConfig {
        beam_width: cfg.get("beam_width")?,
        max_len: cfg.get("max_len")?,
        top_k: cfg.get("top_k")?,
    };
    b.validate()?;
    Ok(b)
}

pub fn match_config(cfg: &RunConfig) -> Result<MatchConfig> {
    Ok(MatchConfig {
        stemming: cfg.get("stemming")?,
        char_mode: cfg.get("char_mode")?,
        ..MatchConfig::default()
    })
}

fn split_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.path("data").join(format!("{split}.jsonl"))
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<Instance>> {
    let data = load_dataset(&split_path(cfg, split), cfg.get("max_conv_len")?)?;
    if data.is_empty() {
        return Err(Error::Contract(format!("{} has no usable records", split_path(cfg, split).display())));
    }
    Ok(data)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::load(&cfg.path("data").join("vocab.txt"))
}

pub fn run_synth(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<String> {
    let files = ["train.jsonl", "dev.jsonl", "test.jsonl", "vocab.txt", "manifest.json"];
    let mut o = Outputs::new(out, overwrite, &files)?;
    let instances = generate_synthetic(&synth_config(cfg)?)?;
    let splits = split_80_10_10(instances, cfg.get("seed")?);
    let vocab = Vocabulary::build(&splits.train, cfg.get("max_vocab")?)?;
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let records: Vec<RawRecord> = part.iter().map(Instance::to_record).collect();
        write_jsonl(&o.path(&format!("{name}.jsonl")), &records)?;
    }
    vocab.save(&o.path("vocab.txt"))?;
    o.manifest(Command::Synth, cfg)?;
    Ok(format!(
        "wrote {} train / {} dev / {} test instances and {} vocabulary entries to {}\n",
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        vocab.len(),
        out.display()
    ))
}

/// Trains one variant into `dir`, writing the best checkpoint and the loss log.
fn train_into(cfg: &RunConfig, variant: Variant, o: &mut Outputs) -> Result<FitOutcome> {
    let vocab = load_vocab(cfg)?;
    let train = expand_all(&load_split(cfg, "train")?, &vocab);
    let dev = expand_all(&load_split(cfg, "dev")?, &vocab);
    let model = Model::new(model_config(cfg, vocab.len(), variant)?, cfg.get("seed")?)?;
    info!("training {variant} with {} parameters on {} examples", model.num_params(), train.len());
    let tc = TrainConfig {
        checkpoint: Some(o.path("model.ckpt")),
        ..train_config(cfg)?
    };
    let outcome = fit(model, &train, &dev, &tc)?;
    checkpoint::save(&outcome.best, &o.dir.join("model.ckpt"))?;
    o.write("metrics.csv", &outcome.metrics_csv())?;
    Ok(outcome)
}

pub fn run_train(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<String> {
    let mut o = Outputs::new(out, overwrite, &["model.ckpt", "metrics.csv", "manifest.json"])?;
    let variant: Variant = cfg.get("variant")?;
    let outcome = train_into(cfg, variant, &mut o)?;
    o.manifest(Command::Train, cfg)?;
    let summary = format!(
        "{variant}: {} epochs, stop {:?}, best dev loss {:.4} at epoch {:?}\n",
        outcome.history.len(),
        outcome.stop,
        outcome.best_dev_loss,
        outcome.best_epoch
    );
    if outcome.diverged() {
        return Err(Error::Numeric(format!(
            "training diverged; last good checkpoint kept at {}",
            out.join("model.ckpt").display()
        )));
    }
    Ok(summary)
}

pub fn run_generate(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<String> {
    let beam = beam_config(cfg)?;
    let mut o = Outputs::new(out, overwrite, &["predictions.jsonl", "manifest.json"])?;
    let model = checkpoint::load(&cfg.path("checkpoint"))?;
    let vocab = load_vocab(cfg)?;
    let split: String = cfg.get("split")?;
    let data = load_split(cfg, &split)?;
    let preds = generate(&model, &vocab, &data, &beam)?;
    write_jsonl(&o.path("predictions.jsonl"), &preds)?;
    o.manifest(Command::Generate, cfg)?;
    Ok(format!("wrote {} prediction lines for {split}\n", preds.len()))
}

pub fn run_evaluate(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<String> {
    let mut o = Outputs::new(out, overwrite, &["report.json", "manifest.json"])?;
    let split: String = cfg.get("split")?;
    let data = load_split(cfg, &split)?;
    let preds = read_predictions(&cfg.path("predictions"))?;
    let report = evaluate(&data, &preds, &match_config(cfg)?)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    o.write("report.json", &json)?;
    o.manifest(Command::Evaluate, cfg)?;
    Ok(report.table())
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// `None` when training diverged.
    pub report: Option<MetricsReport>,
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<22} {:>7} {:>7} {:>7} {:>8} {:>9}\n",
        "variant", "F1@1", "F1@5", "MAP@5", "ROUGE-1", "ROUGE-SU4"
    );
    for row in rows {
        match &row.report {
            Some(r) => writeln!(
                out,
                "{:<22} {:>7.2} {:>7.2} {:>7.2} {:>8.2} {:>9.2}",
                row.variant.as_str(),
                100.0 * r.f1_at_1,
                100.0 * r.f1_at_5,
                100.0 * r.map_at_5,
                100.0 * r.rouge1_f1,
                100.0 * r.rouge_su4_f1
            ),
            None => writeln!(out, "{:<22} {:>7}", row.variant.as_str(), "failed"),
        }
        .unwrap();
    }
    out
}

/// Signal location recorded by `synth` next to the data, if any.
fn data_signal_location(cfg: &RunConfig) -> Option<String> {
    let text = fs::read_to_string(cfg.path("data").join("manifest.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v["config"]["signal_location"].as_str().map(str::to_string)
}

pub fn run_ablate(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<String> {
    let mut o = Outputs::new(out, overwrite, &["ablation.json", "ablation.txt", "manifest.json"])?;
    let vocab = load_vocab(cfg)?;
    let split: String = cfg.get("split")?;
    let eval_data = load_split(cfg, &split)?;
    let (beam, matching) = (beam_config(cfg)?, match_config(cfg)?);
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let dir = out.join(variant.as_str());
        let mut vo = Outputs::new(&dir, overwrite, &["model.ckpt", "metrics.csv"])?;
        let outcome = train_into(cfg, variant, &mut vo)?;
        let report = if outcome.diverged() {
            log::warn!("{variant} diverged; row marked failed");
            None
        } else {
            let preds = generate(&outcome.best, &vocab, &eval_data, &beam)?;
            Some(evaluate(&eval_data, &preds, &matching)?)
        };
        rows.push(AblationRow { variant, report });
    }
    let mut table = ablation_table(&rows);
    o.write("ablation.txt", &table)?;
    let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
    o.write("ablation.json", &json)?;
    o.manifest(Command::Ablate, cfg)?;

    let signal = data_signal_location(cfg);
    if matches!(signal.as_deref(), Some("conversation" | "conv")) {
        let f1 = |v: Variant| rows.iter().find(|r| r.variant == v).and_then(|r| r.report).map(|r| r.f1_at_1);
        let ok = matches!((f1(Variant::Full), f1(Variant::PostOnly)), (Some(a), Some(b)) if a > b);
        writeln!(table, "check full > post_only on F1@1: {}", if ok { "PASS" } else { "FAIL" }).unwrap();
        if !ok {
            print!("{table}");
            return Err(Error::Contract("full variant did not beat post_only on a conversation-signal corpus".into()));
        }
    }
    Ok(table)
}

/// Runs a parsed command and returns its stdout summary.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = effective_config(cli)?;
    let (out, ow) = (cli.out.as_path(), cli.overwrite);
    match cli.command {
        Command::Synth => run_synth(&cfg, out, ow),
        Command::Train => run_train(&cfg, out, ow),
        Command::Generate => run_generate(&cfg, out, ow),
        Command::Evaluate => run_evaluate(&cfg, out, ow),
        Command::Ablate => run_ablate(&cfg, out, ow),
    }
}
