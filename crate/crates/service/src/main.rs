use std::net::IpAddr;
use std::path::PathBuf;

use clap::Parser;
use fdem_service::{app, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "fdem-service", version, about = "Local HTTP job service for FDEM inversions")]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Jobs run at the same time.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Finished results are saved here and served again after a restart.
    #[arg(long, default_value = "fdem-jobs")]
    data_dir: PathBuf,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let router = app(&ServiceConfig {
        workers: args.workers,
        data_dir: Some(args.data_dir),
    })?;
    let listener = tokio::net::TcpListener::bind((args.host, args.port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).await
}
