use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hibert_cli::commands::{cmd_build_vocab, cmd_evaluate, cmd_finetune, cmd_label, cmd_pretrain};
use hibert_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "hibert", version, about = "Hierarchical document encoder: pre-training and extractive summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn BPE merges and a vocabulary from a corpus.
    BuildVocab(Shared),
    /// Masked-sentence pre-training over the configured stages.
    Pretrain(Shared),
    /// Fine-tune the sentence classifier on a labeled corpus.
    Finetune(Shared),
    /// Produce oracle sentence labels from reference summaries.
    Label(Shared),
    /// Score top-K summaries and the Lead-K baseline.
    Evaluate(Shared),
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Checkpoint to resume from or initialize with.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Input corpus (JSON lines).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Override any config key, e.g. `--set lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Shared {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        for (key, value) in [("out_dir", &self.out_dir), ("checkpoint", &self.checkpoint), ("corpus", &self.corpus)] {
            if let Some(v) = value {
                overrides.push(format!("{key}={}", v.display()));
            }
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildVocab(s) => {
            let out = cmd_build_vocab(&s.resolve()?)?;
            println!(
                "vocab size {} ({} merges) -> {}, {}",
                out.vocab_size,
                out.merges,
                out.vocab_path.display(),
                out.merges_path.display()
            );
        }
        Command::Pretrain(s) => {
            let out = cmd_pretrain(&s.resolve()?)?;
            for ((tag, ppl), path) in out.final_val_ppl.iter().zip(&out.checkpoints) {
                let ppl = ppl.map_or("n/a".to_string(), |p| format!("{p:.4}"));
                println!("stage {tag}: validation perplexity {ppl} -> {}", path.display());
            }
            println!("log -> {}", out.log_path.display());
        }
        Command::Finetune(s) => {
            let out = cmd_finetune(&s.resolve()?)?;
            let init = if out.pretrained { "checkpoint" } else { "random" };
            println!("{} steps from {init} initialization -> {}", out.steps, out.checkpoint.display());
            if let Some(v) = out.val_nll.last() {
                println!("validation label NLL {v:.4}");
            }
        }
        Command::Label(s) => {
            let out = cmd_label(&s.resolve()?)?;
            println!("labeled {} documents -> {}", out.written, out.path.display());
            if out.skipped > 0 {
                eprintln!("warning: skipped {} records without a summary", out.skipped);
            }
            if out.greedy_fallbacks > 0 {
                eprintln!(
                    "warning: {} documents were too long for exhaustive search and were labeled greedily",
                    out.greedy_fallbacks
                );
            }
        }
        Command::Evaluate(s) => {
            let r = cmd_evaluate(&s.resolve()?)?;
            println!("documents {}  K {}{}", r.documents, r.k, if r.k_tuned { " (tuned)" } else { "" });
            for (name, t) in [("model", r.model), ("lead", r.lead)] {
                println!(
                    "{name:<6} R-1 {:.2}  R-2 {:.2}  R-L {:.2}",
                    100.0 * t.rouge1.f1,
                    100.0 * t.rouge2.f1,
                    100.0 * t.rouge_l.f1
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
