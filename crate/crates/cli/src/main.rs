//! `synthscope`: dataset generation, previews, validation, the preview
//! service and the classical analysis baselines.
//!
//! Exit status: 0 on success, 1 when a config fails validation, 2 on any
//! runtime failure. Usage errors also exit with 2. The log level is read
//! from `SYNTHSCOPE_LOG` (for example `SYNTHSCOPE_LOG=debug`).

mod analyze;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use synthscope::io::{
    generate_dataset, load_config_with, preview_png, ConfigError, ExportFormat, PipelineConfig, Registry,
};
use synthscope::pipeline::SampleContext;
use synthscope_service::{ServiceConfig, DEFAULT_BODY_LIMIT};

pub const LOG_ENV: &str = "SYNTHSCOPE_LOG";

#[derive(Parser)]
#[command(name = "synthscope", version, about = "Seed-deterministic synthetic microscopy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Npy,
    Png,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset of image/label pairs with manifests.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Overrides the config's export format.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Record failing samples instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Render one sample to a display-normalised PNG.
    Preview {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the label preview here.
        #[arg(long)]
        label: Option<PathBuf>,
    },
    /// Validate a config and print its findings as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Print the canonical config instead of the findings.
        #[arg(long)]
        canonical: bool,
    },
    /// Run the HTTP preview service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Config used by requests that carry none.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest accepted request body in bytes.
        #[arg(long, default_value_t = DEFAULT_BODY_LIMIT)]
        body_limit: usize,
    },
    /// Classical baselines over a generated dataset.
    Analyze {
        #[command(subcommand)]
        method: analyze::Method,
    },
}

enum Failure {
    Validation(ConfigError),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Failure::Validation(c),
            Err(e) => Failure::Runtime(e),
        }
    }
}

fn read_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (config, report) = load_config_with(&text, &Registry::standard())?;
    for w in report.warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(config)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { config, count, seed, out, workers, format, lenient } => {
            let mut c = read_config(&config)?;
            match format {
                Some(Format::Npy) => c.export.format = ExportFormat::Npy,
                Some(Format::Png) => c.export.format = ExportFormat::Png,
                None => {}
            }
            c.export.lenient |= lenient;
            let workers = match workers {
                0 => std::thread::available_parallelism().map_or(1, usize::from),
                n => n,
            };
            let summary = generate_dataset(&c, count, seed, &out, workers).map_err(anyhow::Error::from)?;
            log::info!("{} samples in {:.2}s ({:.1}/s)", summary.count, summary.elapsed_seconds, summary.samples_per_second);
            print_json(&summary)?;
        }
        Command::Preview { config, seed, index, out, label } => {
            let c = read_config(&config)?;
            let pair = c
                .build(&Registry::standard())
                .map_err(anyhow::Error::from)?
                .sample(SampleContext::new(seed, index))
                .context("sample evaluation failed")?;
            let mut written = vec![];
            for (img, path) in std::iter::once((&pair.image, &out)).chain(label.as_ref().map(|p| (&pair.label, p))) {
                let (png, range) = preview_png(&img.data).context("cannot encode the preview")?;
                std::fs::write(path, png).with_context(|| format!("cannot write {}", path.display()))?;
                written.push(json!({ "file": path, "range": range, "shape": img.data.shape() }));
            }
            print_json(&written)?;
        }
        Command::Validate { config, canonical } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("cannot read {}", config.display()))?;
            match load_config_with(&text, &Registry::standard()) {
                Ok((c, _)) if canonical => print!("{}", c.to_json_string()),
                Ok((c, report)) => {
                    print_json(&json!({ "valid": true, "config_hash": c.hash(), "findings": report.findings }))?;
                }
                Err(e) => {
                    print_json(&json!({ "valid": false, "findings": e.report().findings }))?;
                    return Err(Failure::Validation(e));
                }
            }
        }
        Command::Serve { port, host, config, body_limit } => {
            let default_config = config.as_deref().map(read_config).transpose()?;
            let service = ServiceConfig { body_limit, default_config, ..ServiceConfig::default() };
            let rt = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
            rt.block_on(synthscope_service::serve(SocketAddr::new(host, port), service))
                .with_context(|| format!("cannot serve on {host}:{port}"))?;
        }
        Command::Analyze { method } => print_json(&analyze::run(method)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            for f in e.report().errors() {
                eprintln!("error: {f}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
