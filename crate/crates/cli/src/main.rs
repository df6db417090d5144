use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use djscc_core::harness::checks::{run_cvie_check, run_mi_check, run_posterior_check};
use djscc_core::harness::pipeline::PipelineSummary;
use djscc_core::harness::sweeps::{count_inversions, papr_rows, sweep_csi_error, sweep_papr, sweep_scs_vs_snr};
use djscc_core::harness::{emit_csv, run_toy_pipeline, write_csv, CsvRow, ExperimentConfig};
use djscc_core::signal::SeededRng;

/// Simulator for two-view transmission over OFDM fading links with
/// imperfect CSI.
#[derive(Parser)]
#[command(name = "djscc-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the trial / instance / draw count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Per-trial records of the end-to-end pipeline.
    Pipeline,
    /// Mean SCS of the equalized views over the SNR grid.
    ScsSweep,
    /// PAPR samples and decoder MSE per clipping ratio.
    PaprSweep,
    /// Decoder MSE against pilot count and CSI error variance.
    CsiSweep,
    /// Mutual information along random processing chains never increases.
    MiCheck,
    /// CVIE with the analytic weights reproduces direct convolution.
    CvieCheck,
    /// Monte Carlo check of the closed-form fusion posterior.
    PosteriorCheck {
        /// Samples per parameter draw.
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        /// Extra zero-mean draws with multiplicative CSI error.
        #[arg(long, default_value_t = 5)]
        multiplicative: u64,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn output<R: CsvRow>(rows: &[R], out: Option<&Path>) -> djscc_core::Result<()> {
    match out {
        Some(path) => emit_csv(rows, path),
        None => write_csv(rows, std::io::stdout().lock()),
    }
}

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            let _ = writeln!(std::io::stderr(), $($arg)*);
        }
    };
}

/// Returns `Ok(false)` when a check ran but did not pass.
fn run(cli: &Cli) -> djscc_core::Result<bool> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let master = SeededRng::new(cfg.seed);
    let out = c.out.as_deref();
    let q = c.quiet;

    match &cli.command {
        Command::Pipeline => {
            let recs = run_toy_pipeline(&cfg, &master)?;
            output(&recs, out)?;
            let s = PipelineSummary::of(&recs);
            say!(q, "trials {}  csi {}", s.trials, cfg.csi_mode().name());
            say!(q, "view 1: mse {:.6}  theory {:.6}  single-view {:.6}", s.mse1, s.theory_var1, s.mse_single1);
            say!(q, "view 2: mse {:.6}  theory {:.6}  single-view {:.6}", s.mse2, s.theory_var2, s.mse_single2);
            say!(q, "r' {:.4}  empirical {:.4}  scs {:.4}", s.r_prime, s.empirical_corr, s.scs);
            Ok(true)
        }
        Command::ScsSweep => {
            let pts = sweep_scs_vs_snr(&cfg, &master)?;
            output(&pts, out)?;
            for p in &pts {
                say!(q, "{:>6.2} dB  scs {:.5}", p.snr_db, p.mean_scs);
            }
            let means: Vec<f64> = pts.iter().map(|p| p.mean_scs).collect();
            say!(q, "adjacent inversions: {}", count_inversions(&means));
            Ok(true)
        }
        Command::PaprSweep => {
            let pts = sweep_papr(&cfg, &master)?;
            output(&papr_rows(&pts), out)?;
            for p in &pts {
                let mut v = p.papr_db.clone();
                v.sort_by(f64::total_cmp);
                say!(
                    q,
                    "rho {:>4}  median papr {:.3} dB  max {:.3} dB  mse {:.6}",
                    p.ratio,
                    v[v.len() / 2],
                    v[v.len() - 1],
                    p.summary.mse()
                );
            }
            Ok(true)
        }
        Command::CsiSweep => {
            let pts = sweep_csi_error(&cfg, &master)?;
            output(&pts, out)?;
            for p in &pts {
                say!(
                    q,
                    "{:<9} Np {}  sigma_e2 {:<5}  csi mse {:.5}  mse {:.6}",
                    p.mode,
                    p.n_pilots,
                    p.error_variance,
                    p.csi_mse,
                    p.mse
                );
            }
            Ok(true)
        }
        Command::MiCheck => {
            let n = c.trials.unwrap_or(1000) as u64;
            let rows = run_mi_check(n, &master)?;
            output(&rows, out)?;
            let bad = rows.iter().filter(|r| r.violation).count();
            let worst = rows.iter().map(|r| r.max_increase_bits).fold(f64::NEG_INFINITY, f64::max);
            say!(q, "{n} chains, {bad} violations, largest stage increase {worst:e} bits");
            Ok(bad == 0)
        }
        Command::CvieCheck => {
            let n = c.trials.unwrap_or(100) as u64;
            let rows = run_cvie_check(&[1, 3, 5], n, &master)?;
            output(&rows, out)?;
            let worst = rows.iter().map(|r| r.max_abs_err).fold(0.0, f64::max);
            say!(q, "max |cvie - conv2d| over {} instances: {worst:e}", 3 * n);
            Ok(worst < 1e-10)
        }
        Command::PosteriorCheck { samples, multiplicative } => {
            let draws = c.trials.unwrap_or(20) as u64;
            let rows = run_posterior_check(draws, *multiplicative, *samples, &master)?;
            output(&rows, out)?;
            let worst = rows.iter().map(|r| r.worst()).fold(0.0, f64::max);
            say!(q, "{} draws x {samples} samples, worst relative error {worst:.2e}", rows.len());
            Ok(worst < 0.01)
        }
    }
}
