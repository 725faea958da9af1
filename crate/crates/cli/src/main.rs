use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use heterospec::harness::{Arm, CompareReport, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "heterospec",
    version,
    about = "Entropy-binned speculative decoding experiments"
)]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config,
    /// Write the corpus into the output directory.
    GenCorpus,
    /// Train target and draft n-gram models on the corpus.
    TrainModel,
    /// Run the baseline on calibration prompts and fit entropy bins.
    Calibrate,
    /// Decode the evaluation prompts with one controller.
    Run {
        #[arg(long, value_enum, default_value_t = ArmArg::Heterospec)]
        arm: ArmArg,
    },
    /// Paired baseline/adaptive runs with an output identity check and alpha sweep.
    Compare,
    /// Histogram, TCR bucket, and bin occupancy tables from the iteration files.
    Report,
    /// All stages in order.
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Baseline,
    Heterospec,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Baseline => Arm::Baseline,
            ArmArg::Heterospec => Arm::Heterospec,
        }
    }
}

fn exit_code(kind: &str) -> u8 {
    match kind {
        "config" => 3,
        "contract" => 4,
        "parse" => 5,
        "calibration" => 6,
        "identity" => 7,
        "missing-records" => 8,
        "io" => 9,
        "csv" => 10,
        "json" => 11,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn print_compare(report: &CompareReport) {
    println!(
        "{:<12} {:>8} {:>10} {:>8} {:>9}",
        "arm", "calls", "tokens", "tau", "speedup"
    );
    for r in &report.rows {
        println!(
            "{:<12} {:>8} {:>10} {:>8.4} {:>9.4}",
            r.arm, r.calls, r.tokens, r.tau, r.estimated_speedup
        );
    }
    for (name, q) in [
        ("baseline", &report.baseline_tcr),
        ("heterospec", &report.heterospec_tcr),
    ] {
        if let Some(q) = q {
            println!(
                "tcr {name}: p25={} p50={} p75={} p95={}",
                q.p25, q.p50, q.p75, q.p95
            );
        }
    }
    for s in &report.alpha_sweep {
        println!(
            "alpha={} calls={} tokens={} tau={:.4}",
            s.alpha, s.calls, s.tokens, s.tau
        );
    }
    println!("outputs identical: {}", report.outputs_identical);
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let exp = Experiment::new(cfg)?;
    match &cli.command {
        Command::Config => unreachable!(),
        Command::GenCorpus => {
            let docs = exp.gen_corpus()?;
            println!(
                "wrote {} documents to {}",
                docs.len(),
                exp.path("corpus.txt").display()
            );
        }
        Command::TrainModel => {
            let models = exp.train_models().context("training models")?;
            println!(
                "vocabulary {} symbols, target order {}",
                models.vocab().len(),
                models.target.order()
            );
        }
        Command::Calibrate => {
            let models = exp.load_models()?;
            let bins = exp.calibrate(&models)?;
            println!("{} bins from {} samples", bins.len(), bins.samples());
        }
        Command::Run { arm } => {
            let models = exp.load_models()?;
            let bins = exp.load_bins()?;
            let res = exp.run(&models, &bins, (*arm).into())?;
            let s = &res.summary;
            println!(
                "calls={} tokens={} tau={:.4} emitted={}",
                s.calls, s.tokens, s.tau, s.emitted
            );
        }
        Command::Compare => {
            let models = exp.load_models()?;
            let bins = exp.load_bins()?;
            print_compare(&exp.compare(&models, &bins)?);
        }
        Command::Report => {
            for p in exp.report()? {
                println!("wrote {}", p.display());
            }
        }
        Command::All => print_compare(&exp.run_all()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<heterospec::Error>())
                .map(heterospec::Error::kind)
                .unwrap_or("other");
            let msg = format!("{err:#}")
                .replace('\\', "\\\\")
                .replace('"', "\\\"")
                .replace('\n', " ");
            eprintln!("error: kind={kind} msg=\"{msg}\"");
            ExitCode::from(exit_code(kind))
        }
    }
}
