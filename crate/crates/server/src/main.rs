use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use metaroute::agent::ProviderSpec;
use metaroute_server::{serve, ServerConfig, ServerError};

/// Serves pipeline sessions over HTTP.
#[derive(Debug, Parser)]
#[command(name = "metaroute-server", version)]
struct Args {
    /// TOML config file; the flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, default_value = "fixtures/catalog.json")]
    catalog: PathBuf,
    #[arg(long, default_value = "fixtures/gazetteer.json")]
    gazetteer: PathBuf,
    #[arg(long, default_value = "fixtures/data")]
    data_root: PathBuf,
    #[arg(long)]
    vqa: Option<PathBuf>,
    /// scripted:PATH or wire:URL
    #[arg(long)]
    provider: Option<ProviderSpec>,
    /// Model name for a wire provider.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 1024)]
    max_sessions: usize,
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn config(args: Args) -> Result<ServerConfig, ServerError> {
    if let Some(path) = args.config {
        return ServerConfig::load(path);
    }
    let provider = args
        .provider
        .ok_or_else(|| ServerError::Config("--provider is required without --config".into()))?;
    Ok(ServerConfig {
        bind: args.bind,
        catalog: args.catalog,
        gazetteer: args.gazetteer,
        data_root: args.data_root,
        vqa: args.vqa,
        provider: match args.model {
            Some(m) => provider.with_model(m),
            None => provider,
        },
        max_sessions: args.max_sessions,
        snapshot: args.snapshot,
    })
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let result = match config(Args::parse()) {
        Ok(c) => serve(c).await,
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
