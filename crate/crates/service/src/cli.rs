//! Command-line entry points. Exit codes: 0 success, 2 invalid input, 1 engine
//! or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use diffscope::pipeline::{catalog_prompt, prompt_catalog, serialize_trajectory, DEFAULT_GUIDANCE_SCALE};
use diffscope::{generate, Engine, GenerationConfig};

use crate::api::{router, AppState};
use crate::cache::{resolve_cache_dir, write_atomic, TrajectoryCache, CACHE_DIR_ENV};

pub const DEFAULT_PORT: u16 = 7860;

#[derive(Debug, Parser)]
#[command(name = "diffscope", version, about = "Deterministic diffusion trajectories for explainers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the prompt catalog, one "id<TAB>text" line per entry.
    Prompts,
    /// Generate one trajectory and write it to a file; prints its id.
    Generate {
        #[arg(long)]
        prompt_id: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_GUIDANCE_SCALE)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also store the trajectory in this cache directory.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Cache directory [default: $DIFFSCOPE_CACHE_DIR or ./cache]
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Disable permissive cross-origin headers.
        #[arg(long)]
        no_cors: bool,
    },
    /// Copy a cached trajectory file out of the cache.
    Export {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(2),
            CliError::Failed(_) => ExitCode::from(1),
        }
    }
}

impl From<diffscope::Error> for CliError {
    fn from(e: diffscope::Error) -> Self {
        if e.is_validation() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Failed(e.to_string())
        }
    }
}

fn io_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Failed(format!("{what}: {e}"))
}

pub fn run(cli: Cli) -> ExitCode {
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Invalid(m) | CliError::Failed(m)) = &e;
            eprintln!("error: {m}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prompts => {
            for p in prompt_catalog() {
                println!("{}\t{}", p.id, p.text);
            }
            Ok(())
        }
        Command::Generate {
            prompt_id,
            seed,
            scale,
            out,
            cache,
        } => {
            let prompt = catalog_prompt(prompt_id).ok_or_else(|| {
                CliError::Invalid(format!("--prompt-id must be in 1..={}", prompt_catalog().len()))
            })?;
            let cfg = GenerationConfig::new(prompt.text.clone(), seed, scale)?;
            let engine = Engine::new_default()?;
            let t = generate(&engine, &cfg)?;
            write_atomic(&out, &serialize_trajectory(&t)).map_err(|e| io_err("writing output", e))?;
            if let Some(dir) = cache {
                TrajectoryCache::new(dir)
                    .store(&t)
                    .map_err(|e| io_err("writing cache", e))?;
            }
            println!("{}", t.id);
            Ok(())
        }
        Command::Serve {
            port,
            host,
            cache,
            no_cors,
        } => serve(host, port, resolve_cache_dir(cache), !no_cors),
        Command::Export { id, out, cache } => {
            let cache = TrajectoryCache::new(resolve_cache_dir(cache));
            if cache.path(&id).is_none() {
                return Err(CliError::Invalid(format!("{id:?} is not a trajectory id")));
            }
            let t = cache
                .load(&id)
                .map_err(|e| io_err("reading cache", e))?
                .ok_or_else(|| {
                    CliError::Invalid(format!("trajectory {id} is not in {}", cache.dir().display()))
                })?;
            write_atomic(&out, &serialize_trajectory(&t)).map_err(|e| io_err("writing output", e))?;
            Ok(())
        }
    }
}

fn serve(host: String, port: u16, cache_dir: PathBuf, cors: bool) -> Result<(), CliError> {
    let engine = Arc::new(Engine::new_default()?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| io_err("starting runtime", e))?;
    runtime.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| io_err(&format!("binding {addr}"), e))?;
        eprintln!(
            "diffscope {} listening on http://{} (cache {}, override with ${CACHE_DIR_ENV})",
            engine.version(),
            listener.local_addr().map_err(|e| io_err("local address", e))?,
            cache_dir.display()
        );
        let app = router(AppState::new(engine, TrajectoryCache::new(cache_dir)), cors);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| io_err("server", e))
    })
}
