use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use riskview::artifact::{read_model_file, write_model_file};
use riskview::service::{cors, router, AppState};
use riskview::{load_csv, load_model_for_schema, load_schema, render_schema, save_csv};
use riskview_core::ingest::gen_synthetic;
use riskview_core::model::fit;
use riskview_core::{Hyperparameters, Schema};

#[derive(Parser)]
#[command(version, about = "Explainable diabetes-risk engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic patient CSV.
    GenData {
        /// Number of patients.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Schema TOML; the built-in diabetes schema if omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write the artifact.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Fraction of patients held out for testing.
        #[arg(long, default_value_t = 0.2)]
        test_split: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        l2: Option<f64>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Allowed browser origin, or `*`.
        #[arg(long)]
        cors: Option<String>,
    },
    /// Print the built-in schema as TOML.
    InitSchema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn schema_from(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => Ok(load_schema(p)?),
        None => Ok(Schema::default_diabetes()),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::GenData {
            n,
            seed,
            schema,
            out,
        } => {
            let schema = schema_from(schema.as_deref())?;
            let data = gen_synthetic(n, seed, &schema);
            save_csv(&out, &data)?;
            println!(
                "wrote {} records for {n} patients to {}",
                data.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            schema,
            test_split,
            seed,
            out,
            learning_rate,
            epochs,
            l2,
        } => {
            let schema = schema_from(schema.as_deref())?;
            let data = load_csv(&data, &schema)?;
            let (train, test) = data.split_by_patient(test_split, seed)?;
            let defaults = Hyperparameters::default();
            let hyper = Hyperparameters {
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                epochs: epochs.unwrap_or(defaults.epochs),
                l2: l2.unwrap_or(defaults.l2),
            };
            let model = fit(&train, &test, &hyper).context("training failed")?;
            write_model_file(&out, &model)?;
            let m = model.metrics();
            println!(
                "train accuracy: {:.4} ({} records)",
                m.train_accuracy,
                train.len()
            );
            println!(
                "test accuracy: {:.4} ({} records)",
                m.test_accuracy,
                test.len()
            );
            println!("model written to {}", out.display());
        }
        Command::Serve {
            model,
            data,
            schema,
            host,
            port,
            cors: origin,
        } => {
            let schema = schema_from(schema.as_deref())?;
            let model = load_model_for_schema(&read_model_file(&model)?, &schema)?;
            let data = load_csv(&data, &schema)?;
            let state = AppState::new(model, data)?;
            let mut app = router(Arc::new(state));
            if let Some(origin) = origin {
                app = app.layer(cors(&origin).context("bad --cors origin")?);
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
        Command::InitSchema { out } => {
            let text = render_schema(&Schema::default_diabetes());
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
