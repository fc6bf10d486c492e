use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use vlcorpus::resampler::DemoConfig;
use vlcorpus::schedules::Stage;
use vlcorpus_cli::commands::{self, CleanKind};
use vlcorpus_cli::{CliError, PipelineConfig, Result, RunReport};

#[derive(Parser)]
#[command(name = "vlcorpus", version, about = "Vision-language corpus tooling over JSON Lines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Batch {
    /// Input JSON Lines file; repeat for several.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON config with `filters`, `packer`, `tokenizer` and `workers`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Where to write the JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Batch {
    fn pipeline(&self, side_outputs: &[&Path]) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::from_file(self.config.as_deref(), self.workers)?;
        cfg.inputs = self.input.clone();
        cfg.output = self.output.clone();
        cfg.report = self.report.clone();
        cfg.side_outputs = side_outputs.iter().map(|p| p.to_path_buf()).collect();
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter corpus records and write the kept ones.
    Clean {
        #[command(flatten)]
        batch: Batch,
        /// pair, pdf or html
        #[arg(long, default_value = "pair")]
        kind: CleanKind,
        /// Per-record `{id, decision, rule_id, detail}` lines.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Render ChatML dialogues into masked token records.
    BuildChat {
        #[command(flatten)]
        batch: Batch,
    },
    /// Render multi-task samples into masked token records.
    BuildTask {
        #[command(flatten)]
        batch: Batch,
    },
    /// Pack samples into fixed-length same-task sequences.
    Pack {
        #[command(flatten)]
        batch: Batch,
    },
    /// Fill statistics of packed sequences.
    Stats {
        #[command(flatten)]
        batch: Batch,
    },
    /// Validate grounding markup, one string per line.
    CheckMarkup {
        #[command(flatten)]
        batch: Batch,
    },
    /// Write the learning-rate curve of a stage preset as CSV.
    LrCurve {
        #[arg(long)]
        stage: Stage,
        #[arg(long, alias = "output")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        every: u64,
    },
    /// Compare resampler gradients with finite differences.
    GradCheck {
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        heads: usize,
    },
    /// Overfit the resampler on a toy regression and report the loss curve.
    DemoResampler {
        #[arg(long, default_value_t = 2000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV of `step,loss`.
        #[arg(long, alias = "output")]
        out: Option<PathBuf>,
    },
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(mut report: RunReport, started: Instant, path: Option<&Path>) -> Result<()> {
    report.wall_time_secs = started.elapsed().as_secs_f64();
    debug_assert!(report.balanced());
    eprintln!(
        "{}: {} in, {} kept, {} dropped, {} errors",
        report.command,
        report.records_in,
        report.records_kept,
        report.drops.values().sum::<u64>(),
        report.errors
    );
    match path {
        Some(p) => report.write(p),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Clean { batch, kind, verdicts } => {
            let sides: Vec<&Path> = verdicts.as_deref().into_iter().collect();
            let cfg = batch.pipeline(&sides)?;
            let report = commands::clean(&cfg, kind, verdicts.as_deref())?;
            finish(report, started, cfg.report.as_deref())
        }
        Command::BuildChat { batch } => {
            let cfg = batch.pipeline(&[])?;
            finish(commands::build_chat(&cfg)?, started, cfg.report.as_deref())
        }
        Command::BuildTask { batch } => {
            let cfg = batch.pipeline(&[])?;
            finish(commands::build_task(&cfg)?, started, cfg.report.as_deref())
        }
        Command::Pack { batch } => {
            let cfg = batch.pipeline(&[])?;
            finish(commands::pack(&cfg)?, started, cfg.report.as_deref())
        }
        Command::Stats { batch } => {
            let cfg = batch.pipeline(&[])?;
            let (util, report) = commands::stats(&cfg)?;
            let text = serde_json::to_string_pretty(&util).expect("report serializes") + "\n";
            write_or_print(cfg.output.as_deref(), &text)?;
            finish(report, started, cfg.report.as_deref())
        }
        Command::CheckMarkup { batch } => {
            let cfg = batch.pipeline(&[])?;
            finish(commands::check_markup(&cfg)?, started, cfg.report.as_deref())
        }
        Command::LrCurve { stage, out, every } => write_or_print(out.as_deref(), &commands::lr_curve(stage, every)?),
        Command::GradCheck { seeds, heads } => {
            let mut worst: f64 = 0.0;
            for (seed, rep) in commands::grad_check(&seeds, heads)? {
                println!("seed {seed}: max relative error {:.3e} over {} entries", rep.max_rel_error, rep.entries_checked);
                for (name, err) in &rep.per_param {
                    println!("  {name:<8} {err:.3e}");
                }
                worst = worst.max(rep.max_rel_error);
            }
            println!("{} (worst {worst:.3e}, tolerance 1e-4)", if worst < 1e-4 { "PASS" } else { "FAIL" });
            Ok(())
        }
        Command::DemoResampler { steps, seed, out } => {
            let base = DemoConfig::default();
            let cfg = DemoConfig {
                steps,
                resampler: vlcorpus::resampler::ResamplerConfig { seed, ..base.resampler },
                schedule: vlcorpus::schedules::ScheduleConfig { total_steps: steps.max(base.schedule.warmup_steps + 1), ..base.schedule },
                ..base
            };
            let rep = commands::demo_resampler(&cfg)?;
            println!("steps         {}", rep.losses.len() - 1);
            println!("initial loss  {:.6e}", rep.initial_loss());
            println!("final loss    {:.6e}", rep.final_loss());
            println!("ratio         {:.3e}", rep.ratio());
            if let Some(p) = out {
                write_or_print(Some(&p), &rep.to_csv())?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage mistakes are configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
