use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rppg::pipeline::{
    cmd_augment, cmd_estimate, cmd_evaluate, cmd_preprocess, cmd_stats, cmd_synth, AugmentConfig, EstimateConfig,
    EvaluateConfig, PreprocessConfig, StatsConfig, SynthConfig,
};

/// Remote photoplethysmography pipeline.
#[derive(Parser)]
#[command(name = "rppg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known heart rate.
    Synth(SynthConfig),
    /// Face-crop and rate-normalize every session into clip tensors.
    Preprocess(PreprocessConfig),
    /// Augment one clip and write the clip, waveform and provenance.
    Augment(AugmentConfig),
    /// Run a pulse estimator over preprocessed clips.
    Estimate(EstimateConfig),
    /// Compute heart-rate and waveform metrics against ground truth.
    Evaluate(EvaluateConfig),
    /// Summarize a dataset's duration and heart-rate statistics.
    Stats(StatsConfig),
}

fn run(cli: Cli) -> rppg::Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let paths = cmd_synth(&c)?;
            println!("wrote {} sessions to {}", paths.len(), c.out.display());
        }
        Command::Preprocess(c) => {
            let paths = cmd_preprocess(&c)?;
            println!("wrote {} clips to {}", paths.len(), c.out.display());
        }
        Command::Augment(c) => {
            let r = cmd_augment(&c)?;
            println!(
                "{}: L={} f={:.4} realized {:.2}->{:.2} BPM",
                r.session_id, r.source_len, r.f, r.realized_hr_start, r.realized_hr_end
            );
        }
        Command::Estimate(c) => {
            let paths = cmd_estimate(&c)?;
            println!("wrote {} prediction files to {}", paths.len(), c.out.display());
        }
        Command::Evaluate(c) => {
            let r = cmd_evaluate(&c)?;
            let a = r.aggregate;
            println!(
                "{} sessions: ME {:.3}±{:.3} MAE {:.3}±{:.3} RMSE {:.3}±{:.3} r {:.3}±{:.3}",
                a.sessions, a.me.mean, a.me.ci95, a.mae.mean, a.mae.ci95, a.rmse.mean, a.rmse.ci95, a.r_wave.mean,
                a.r_wave.ci95
            );
        }
        Command::Stats(c) => {
            let r = cmd_stats(&c)?;
            if c.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&r).expect("stats serialize"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
