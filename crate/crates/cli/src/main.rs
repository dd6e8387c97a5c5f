use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use osamtl::experiment::{self, ExperimentConfig, Solution};
use osamtl::logic::{run_reasoning_suite, run_shipped_suite, ValidityReport};
use osamtl::synthgen::gen_corpus;

#[derive(Parser)]
#[command(name = "osamtl", version, about = "Multi-target learning from abduced segmentation labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus into --out-dir.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Check the reasoning proofs; exit 0 if all are valid, 1 if any is not,
    /// 2 if the directory cannot be read.
    Prove {
        /// Directory with reasoning1.proof ... reasoning7.proof; the built-in
        /// copies are checked when omitted.
        dir: Option<PathBuf>,
    },
    /// Abduce Target1 and Target2 for a corpus.
    Abduce {
        #[command(flatten)]
        common: Common,
        /// Corpus directory written by `gen`.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train one solution, e.g. None_OSAMTLF or SCE_T2.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "None_OSAMTLF")]
        solution: String,
    },
    /// Evaluate a saved model on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run every configured solution and write tables and charts.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Render charts and overlays for a finished run in --out-dir.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        c.set_seed(seed);
    }
    c.validate()?;
    Ok(c)
}

fn print_proof_reports(reports: &[(String, ValidityReport)]) -> bool {
    let mut ok = true;
    for (name, r) in reports {
        match &r.first_failure {
            None if r.valid => println!("{name}: valid"),
            Some(f) => {
                ok = false;
                println!("{name}: invalid at step {}: {}", f.step, f.reason);
            }
            None => {
                ok = false;
                println!("{name}: invalid");
            }
        }
    }
    ok
}

fn prove(dir: Option<&Path>) -> ExitCode {
    let reports = match dir {
        None => run_shipped_suite(),
        Some(d) => match run_reasoning_suite(d) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    if print_proof_reports(&reports) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prove { .. } => unreachable!("handled before dispatch"),
        Command::Gen { common, n_train, n_val, n_test } => {
            let c = load_config(&common)?;
            let m = gen_corpus(
                &c.corpus.params,
                n_train.unwrap_or(c.corpus.n_train),
                n_val.unwrap_or(c.corpus.n_val),
                n_test.unwrap_or(c.corpus.n_test),
                &common.out_dir,
            )?;
            println!("wrote {} train, {} val, {} test patches to {}", m.train.len(), m.val.len(), m.test.len(), common.out_dir.display());
        }
        Command::Abduce { common, corpus } => {
            let c = load_config(&common)?;
            let [q1, q2] = experiment::cmd_abduce(&corpus, &c.abduction, &c.objective.alphas, &common.out_dir)?;
            println!("target1 oracle precision {:.4} recall {:.4}", q1.precision, q1.recall);
            println!("target2 oracle precision {:.4} recall {:.4}", q2.precision, q2.recall);
        }
        Command::Train { common, solution } => {
            let c = load_config(&common)?;
            let s: Solution = solution.parse()?;
            let r = experiment::cmd_train(&c, s, &common.out_dir)?;
            println!("{s}: best epoch {}, test LfIoU {:.4}", r.best_epoch, r.laf.lfiou);
        }
        Command::Eval { common, model } => {
            let c = load_config(&common)?;
            let (laf, oracle) = experiment::cmd_eval(&c, &model, &common.out_dir)?;
            println!(
                "Lprecision {:.4} Lrecall {:.4} Lf1 {:.4} LfIoU {:.4} oracle IoU {:.4}",
                laf.lprecision, laf.lrecall, laf.lf1, laf.lfiou, oracle.iou
            );
        }
        Command::Run { common } => {
            let c = load_config(&common)?;
            let table = experiment::cmd_run(&c, &common.out_dir).context("run failed")?;
            println!("{:<20} {:>8} {:>8} {:>8} {:>8}", "solution", "Lprec", "Lrec", "Lf1", "LfIoU");
            for r in &table.rows {
                println!("{:<20} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", r.solution.to_string(), r.laf.lprecision, r.laf.lrecall, r.laf.lf1, r.laf.lfiou);
            }
            println!("results in {}", common.out_dir.display());
        }
        Command::Report { common } => {
            let written = experiment::cmd_report(&common.out_dir)?;
            println!("wrote {} files under {}", written.len(), common.out_dir.join("report").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Prove { dir } = &cli.command {
        return prove(dir.as_deref());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
