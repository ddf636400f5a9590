use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cvdep::clock::ClockMode;
use cvdep::harness::{ReportFormat, DEFAULT_SEEDS};
use cvdep_cli::commands::{self, RunArgs, SweepArgs};
use cvdep_cli::gateway::{self, Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "cvdep", version, about = "Connected-vehicle edge platform: scenario runs, sweeps and the HTTP gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report and warehouse.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        clock: Option<ClockArg>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Run a template scenario for each mobile-edge count.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        mobile: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        fixed: usize,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds pooled per count.
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: u64,
    },
    /// Serve the HTTP/JSON API and event stream.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        policies: Option<PathBuf>,
        #[arg(long)]
        manifests: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Virtual,
    Wall,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { scenario, out, seed, clock, format } => {
            let args = RunArgs {
                scenario,
                out,
                seed,
                clock: clock.map(|c| match c {
                    ClockArg::Virtual => ClockMode::Virtual,
                    ClockArg::Wall => ClockMode::Wall,
                }),
                format: match format {
                    FormatArg::Csv => ReportFormat::Csv,
                    FormatArg::Json => ReportFormat::Json,
                },
            };
            print!("{}", commands::run(&args)?);
        }
        Command::Sweep { mobile, fixed, template, out, seeds } => {
            print!("{}", commands::sweep(&SweepArgs { template, mobile, fixed, seeds, out })?);
        }
        Command::Serve { port, host, policies, manifests } => {
            let cfg = match &policies {
                Some(p) => GatewayConfig::load(p, &manifests)?,
                None => GatewayConfig { policies: gateway::fallback_policies(), principals: GatewayConfig::load_principals(&manifests)? },
            };
            cfg.validate()?;
            if cfg.principals.is_empty() {
                log::warn!("no principals in {}; nobody can log in", manifests.display());
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            serve(addr, cfg)?;
        }
    }
    Ok(())
}

fn serve(addr: SocketAddr, cfg: GatewayConfig) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let app = gateway::router(Arc::new(Gateway::new(cfg)));
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("gateway listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
