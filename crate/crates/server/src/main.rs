use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rand::Rng;
use voxsearch_core::api::CreateRecordRequest;
use voxsearch_core::blobcrypt::{SealedBlob, SealedBlobJson, Nonce};
use voxsearch_core::mfcc::FEATURE_DIM;
use voxsearch_core::ringhe::{Ciphertext, HeParams};
use voxsearch_server::Store;

#[derive(Parser)]
#[command(name = "voxsearch-server", version, about = "Encrypted voice record server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty store with public HE parameters.
    Init {
        #[arg(long)]
        store: PathBuf,
        /// JSON file with parameters as served by GET /v1/params.
        #[arg(long, conflicts_with = "degree")]
        params: Option<PathBuf>,
        /// Ring degree for the recommended parameter set.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "VOXSEARCH_STORE")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8700")]
        listen: SocketAddr,
    },
    /// Append random well-formed records forever (crash testing).
    #[command(hide = true)]
    StressPut {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
}

fn random_record(params: &HeParams) -> CreateRecordRequest {
    let mut rng = rand::rng();
    let poly = |rng: &mut rand::rngs::ThreadRng| -> Vec<u128> {
        (0..params.n).map(|_| rng.random_range(0..params.q)).collect()
    };
    let features = (0..FEATURE_DIM)
        .map(|_| Ciphertext::from_polys(vec![poly(&mut rng), poly(&mut rng)]).expect("non-empty"))
        .collect();
    let mut ct = vec![0u8; 64 + 16];
    rng.fill(&mut ct[..]);
    let blob = SealedBlob {
        nonce: Nonce::from_counter(rng.random()),
        ciphertext: ct,
        key_id: "00000000".into(),
    };
    CreateRecordRequest {
        device_id: "stress".into(),
        meta: Default::default(),
        blob: SealedBlobJson::from(&blob),
        features,
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Init {
            store,
            params,
            degree,
        } => {
            let params = match (params, degree) {
                (Some(path), _) => serde_json::from_slice(
                    &std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?,
                )?,
                (None, Some(n)) => HeParams::recommended(n)?,
                (None, None) => HeParams::default(),
            };
            Store::create(&store, params)?;
            println!("created store at {}", store.display());
        }
        Command::Serve { store, listen } => {
            let store = Arc::new(Store::open(&store).context("opening store")?);
            let removed = store.sweep_orphans()?;
            if removed > 0 {
                tracing::info!(removed, "removed incomplete uploads");
            }
            let listener = tokio::net::TcpListener::bind(listen).await?;
            tracing::info!(addr = %listener.local_addr()?, records = store.len(), "serving");
            voxsearch_server::serve(listener, store, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        }
        Command::StressPut { store, count } => {
            let store = Store::open(&store)?;
            let mut i = 0;
            while count.is_none_or(|c| i < c) {
                let id = store.put(random_record(store.params()))?;
                println!("{id}");
                i += 1;
            }
        }
    }
    Ok(())
}
