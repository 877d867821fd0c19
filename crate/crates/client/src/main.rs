use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use voxsearch_client::caregiver::{ClassifiedRecord, SweepLevel};
use voxsearch_client::ui::{self, UiState};
use voxsearch_client::{Caregiver, ClientConfig, Device, QuerySource};
use voxsearch_core::evaluation::Label;
use voxsearch_core::keyfile::Keys;
use voxsearch_core::matching::{sweep_csv, Thresholds};
use voxsearch_core::ringhe::HeParams;

#[derive(Parser)]
#[command(name = "voxsearch", version, about = "Private voice search clients")]
struct Cli {
    /// TOML configuration file (default: ./voxsearch.toml if present).
    #[arg(long, global = true, env = "VOXSEARCH_CONFIG")]
    config: Option<PathBuf>,
    /// Override the server URL.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Override the key file path.
    #[arg(long, global = true)]
    key_file: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key file for one device and its caregiver.
    Keygen {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ring degree; the server store must use the same parameters.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    #[command(subcommand)]
    Device(DeviceCmd),
    #[command(subcommand)]
    Care(CareCmd),
}

#[derive(Subcommand)]
enum DeviceCmd {
    /// Encrypt and upload one WAV file.
    Ingest { wav: PathBuf },
    /// Upload every WAV file in a directory.
    Batch { dir: PathBuf },
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, requires = "tw")]
    tm: Option<f64>,
    #[arg(long, requires = "tm")]
    tw: Option<f64>,
}

impl ThresholdArgs {
    fn resolve(&self, care: &Caregiver) -> anyhow::Result<Option<Thresholds>> {
        Ok(match (self.tm, self.tw) {
            (Some(tm), Some(tw)) => Some(Thresholds::new(tm, tw)?),
            _ => care.thresholds()?,
        })
    }
}

#[derive(Subcommand)]
enum CareCmd {
    /// List stored records with local labels.
    List,
    /// Fetch and decrypt a record's audio.
    Play {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label a record locally.
    Label {
        id: String,
        #[arg(long)]
        word: String,
        #[arg(long)]
        mood: String,
        #[arg(long)]
        background: Option<String>,
        #[arg(long)]
        notes: Option<String>,
    },
    /// Similarity query against all stored records.
    Query {
        #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
        record: Option<String>,
        #[arg(long)]
        wav: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Learn T_m and T_w from all labeled pairs and save them.
    LearnThresholds,
    /// Per-level accuracy, sensitivity and specificity on a held-out split.
    Evaluate {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Sensitivity and specificity across thresholds, as CSV.
    Sweep {
        #[arg(long, default_value = "same-mood")]
        level: SweepLevel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the localhost console API.
    Serve {
        #[arg(long, default_value_t = 8701)]
        port: u16,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<ClientConfig> {
    let mut cfg = ClientConfig::load_or_default(cli.config.as_deref())?;
    if let Some(s) = &cli.server {
        cfg.server_url = s.clone();
    }
    if let Some(k) = &cli.key_file {
        cfg.key_file = k.clone();
    }
    Ok(cfg)
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    } else {
        print!("{}", human());
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render_results(rows: &[ClassifiedRecord]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!("{}  {:>14.4}  {:?}\n", r.record_id, r.distance, r.class));
    }
    out
}

async fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = load_config(&cli)?;
    let json = cli.json;
    match cli.command {
        Command::Keygen { out, degree, force } => {
            let path = out.unwrap_or_else(|| cfg.key_file.clone());
            if path.exists() && !force {
                bail!("{} exists; pass --force to replace it", path.display());
            }
            let params = match degree {
                Some(n) => HeParams::recommended(n)?,
                None => HeParams::default(),
            };
            let keys = Keys::generate(params, &mut rand::rng())?;
            keys.save(&path)?;
            let summary = serde_json::json!({
                "key_file": path.display().to_string(),
                "blob_key_id": keys.blob_key().key_id(),
                "params": keys.params(),
            });
            emit(json, &summary, || format!("wrote {}\n", path.display()));
        }
        Command::Device(cmd) => {
            let mut device = Device::open(cfg)?;
            match cmd {
                DeviceCmd::Ingest { wav } => {
                    let id = device.ingest(&wav).await?;
                    emit(json, &serde_json::json!({ "record_id": id }), || format!("{id}\n"));
                }
                DeviceCmd::Batch { dir } => {
                    let items = device.batch_ingest(&dir).await?;
                    let ok = items.iter().all(|i| i.error.is_none());
                    emit(json, &items, || {
                        items
                            .iter()
                            .map(|i| match (&i.record_id, &i.error) {
                                (Some(id), _) => format!("{}  {id}\n", i.file),
                                (_, Some(e)) => format!("{}  error: {e}\n", i.file),
                                _ => String::new(),
                            })
                            .collect()
                    });
                    return Ok(ok);
                }
            }
        }
        Command::Care(cmd) => {
            let care = Caregiver::open(cfg)?;
            match cmd {
                CareCmd::List => {
                    let records = care.list_records().await?;
                    emit(json, &records, || {
                        records
                            .iter()
                            .map(|r| {
                                let label = r.label.as_ref().map_or(String::from("-"), |l| {
                                    format!(
                                        "{}/{}/{}",
                                        l.word,
                                        l.mood,
                                        l.background.as_deref().unwrap_or("-")
                                    )
                                });
                                format!(
                                    "{}  {}  {}  {label}\n",
                                    r.summary.record_id,
                                    r.summary.created_at.to_rfc3339(),
                                    r.summary.device_id
                                )
                            })
                            .collect()
                    });
                }
                CareCmd::Play { id, out } => {
                    let bytes = care.fetch_audio(&id).await?;
                    let path = out.unwrap_or_else(|| PathBuf::from(format!("{id}.wav")));
                    std::fs::write(&path, &bytes)
                        .with_context(|| format!("writing {}", path.display()))?;
                    emit(
                        json,
                        &serde_json::json!({ "record_id": id, "path": path.display().to_string(), "bytes": bytes.len() }),
                        || format!("wrote {}\n", path.display()),
                    );
                }
                CareCmd::Label {
                    id,
                    word,
                    mood,
                    background,
                    notes,
                } => {
                    let label = Label {
                        word,
                        mood,
                        background,
                        notes,
                    };
                    care.set_label(&id, label.clone()).await?;
                    emit(json, &serde_json::json!({ "record_id": id, "label": label }), || {
                        format!("labeled {id}\n")
                    });
                }
                CareCmd::Query {
                    record,
                    wav,
                    thresholds,
                } => {
                    let t = thresholds
                        .resolve(&care)?
                        .ok_or(voxsearch_client::CaregiverError::ThresholdsUnset)?;
                    let source = match (record, wav) {
                        (Some(id), _) => QuerySource::Record(id),
                        (None, Some(p)) => QuerySource::Wav(
                            std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?,
                        ),
                        (None, None) => bail!("give --record or --wav"),
                    };
                    let session = care.run_query(&source, t).await?;
                    let rows = session.classified();
                    emit(
                        json,
                        &serde_json::json!({ "session_id": session.session_id, "thresholds": t, "results": rows }),
                        || render_results(&rows),
                    );
                }
                CareCmd::LearnThresholds => {
                    let t = care.learn_thresholds().await?;
                    emit(json, &t, || format!("T_m = {}\nT_w = {}\n", t.tm, t.tw));
                }
                CareCmd::Evaluate {
                    out_dir,
                    thresholds,
                } => {
                    let fixed = match (thresholds.tm, thresholds.tw) {
                        (Some(_), Some(_)) => thresholds.resolve(&care)?,
                        _ => None,
                    };
                    let report = care.evaluate(fixed).await?;
                    if let Some(dir) = &out_dir {
                        std::fs::create_dir_all(dir)?;
                        std::fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
                        std::fs::write(dir.join("sweep.csv"), sweep_csv(&report.sweep))?;
                    }
                    emit(json, &report, || {
                        format!(
                            "T_m = {}  T_w = {}  train pairs = {}  test pairs = {}\n{}",
                            report.thresholds.tm,
                            report.thresholds.tw,
                            report.train_pairs,
                            report.test_pairs,
                            report.metrics_csv()
                        )
                    });
                }
                CareCmd::Sweep { level, out } => {
                    let points = care.sweep(level).await?;
                    write_or_print(out.as_deref(), &sweep_csv(&points))?;
                }
                CareCmd::Serve { port } => {
                    care.check_params().await?;
                    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                    eprintln!("console API on http://{}", listener.local_addr()?);
                    ui::serve(listener, UiState::new(care), async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                }
            }
        }
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
