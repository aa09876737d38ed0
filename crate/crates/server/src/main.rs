use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use promptlab_core::gateway::{Backend, MockBackend};
use tracing_subscriber::EnvFilter;

/// Serve the mock scoring backend over HTTP.
#[derive(Parser)]
#[command(name = "promptlab-server", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8787)]
    port: u16,
    /// Closed mask-fill vocabulary, one token per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let mut backend = match &args.vocab {
        Some(path) => {
            let raw = std::fs::read_to_string(path)?;
            MockBackend::with_vocab(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from))
        }
        None => MockBackend::new(),
    };
    if let Some(d) = args.embed_dim {
        backend = backend.with_dim(d);
    }
    let backend: Arc<dyn Backend> = Arc::new(backend);
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    tracing::info!("serving {} on {}", backend.id(), listener.local_addr()?);
    promptlab_server::serve(listener, backend, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
