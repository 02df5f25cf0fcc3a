//! `psbm`: command-line front end for the PSBM link simulator.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{FrameDesign, FrameParams, PsdScheme, VerificationFailed};
use config::{load_ber_plan, load_params, source_text};

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "psbm", version, about = "Pulse-shape binary multiplex link simulator")]
struct Cli {
    /// TOML config for the command (a frame file for `frame`, or a result JSON for `ber`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled figure preset: fig1, fig2, fig5, fig7, fig8, fig9, fig10.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Affects speed only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated pulse autocorrelations against their closed forms.
    PulseVerify {
        #[arg(long)]
        d_max: Option<f64>,
    },
    /// ISI component counts over the roll-off/packing plane.
    IsiMap,
    /// Power spectral density with i.i.d. symbols.
    Psd {
        #[arg(long, value_enum)]
        scheme: Option<PsdScheme>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        f_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Validate and echo a frame file, or build one.
    Frame {
        #[arg(long, value_enum, default_value = "pilot-frame")]
        design: FrameDesign,
        #[arg(long, default_value_t = 4)]
        ld: usize,
        #[arg(long, default_value_t = 1)]
        lp: usize,
        #[arg(long, default_value_t = 2)]
        groups: usize,
    },
    /// Orthogonality probabilities of random spreading sequences.
    SpreadProb {
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        kappa: Option<Vec<f64>>,
    },
    /// Monte Carlo BER curves.
    Ber {
        /// Run all experiments on the first one's seed and report the SNR gap
        /// between the first two.
        #[arg(long)]
        paired: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let source = || source_text(cli.config.as_deref(), cli.preset.as_deref());
    let out = cli.out.as_path();
    match cli.command {
        Command::PulseVerify { d_max } => {
            let mut params: commands::PulseVerifyParams = load_params(source()?)?;
            if let Some(d) = d_max {
                params.d_max = d;
            }
            commands::pulse_verify(params, out)
        }
        Command::IsiMap => commands::isi_map(load_params(source()?)?, out),
        Command::Psd {
            scheme,
            alpha,
            f_max,
            points,
        } => {
            let mut params: commands::PsdParams = load_params(source()?)?;
            params.scheme = scheme.unwrap_or(params.scheme);
            params.alpha = alpha.unwrap_or(params.alpha);
            params.f_max = f_max.unwrap_or(params.f_max);
            params.points = points.unwrap_or(params.points);
            commands::psd_cmd(params, out)
        }
        Command::Frame { design, ld, lp, groups } => {
            let text = source()?;
            let params = FrameParams {
                source: text.as_ref().map(|(label, _)| label.clone()),
                design,
                ld,
                lp,
                groups,
            };
            commands::frame_cmd(params, text.map(|(_, t)| t), out)
        }
        Command::SpreadProb { n_max, kappa } => {
            let mut params: commands::SpreadProbParams = load_params(source()?)?;
            params.n_max = n_max.unwrap_or(params.n_max);
            if let Some(k) = kappa {
                params.kappa = k;
            }
            commands::spread_prob(params, out)
        }
        Command::Ber { paired } => {
            let json = cli
                .config
                .as_ref()
                .is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
            let plan = load_ber_plan(source()?, json)?;
            commands::ber(plan, cli.seed, paired, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let io = e.chain().any(|c| {
                c.is::<std::io::Error>() || matches!(c.downcast_ref::<psbm::Error>(), Some(psbm::Error::Io(_)))
            });
            let code = if e.is::<VerificationFailed>() {
                EXIT_VERIFICATION
            } else if io {
                EXIT_IO
            } else {
                EXIT_CONFIG
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
