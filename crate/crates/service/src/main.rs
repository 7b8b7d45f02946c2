use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use rla_service::app::{router, AppState, DEFAULT_MAX_BODY_BYTES};
use rla_service::store::Store;

#[derive(Parser)]
#[command(name = "rla-service", about = "HTTP API for live audit sessions")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    /// Directory of session logs.
    #[arg(long, default_value = "rla-sessions", conflicts_with = "memory")]
    data_dir: PathBuf,
    /// Keep sessions in memory only.
    #[arg(long)]
    memory: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    max_body_bytes: usize,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let store = if args.memory {
        Ok(Store::Memory)
    } else {
        Store::open(&args.data_dir)
    };
    let state = match store.and_then(AppState::recover) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(&args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot listen on {}: {e}", args.listen);
            return ExitCode::from(2);
        }
    };
    eprintln!("listening on {}", args.listen);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match axum::serve(listener, router(state, args.max_body_bytes))
        .with_graceful_shutdown(shutdown)
        .await
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
