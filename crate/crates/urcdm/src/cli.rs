//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use urcdm_core::synthdata::{gen_pyramid, Magnification, ModelSlot};

use crate::config::{self, resolve_output, DatasetConfig, MetricsConfig, SampleConfig, ServeConfig, TrainConfig};
use crate::error::{AppError, AppResult};
use crate::{evalsvc, report, sample, store, train};

pub const LOG_ENV: &str = "URCDM_LOG";

#[derive(Debug, Parser)]
#[command(name = "urcdm", version, about = "Desk-scale ultra-resolution cascaded diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a corpus of synthetic slide pyramids.
    DatasetGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model, or all nine with --all.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage: Option<String>,
        #[arg(long)]
        slot: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        all: bool,
    },
    /// Synthesize one slide pyramid.
    Sample {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Print the stage plan and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare a generated corpus with a real one.
    Metrics {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the blinded study service.
    EvalServe {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print the tiling plan of a sampling configuration.
    Plan {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

pub fn init_logging() {
    let env = env_logger::Env::default().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp_millis().try_init();
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::DatasetGen { config, out } => {
            let cfg: DatasetConfig = config::load(config.as_deref())?;
            cfg.validate()?;
            dataset_gen(&cfg, &resolve_output(&out))
        }
        Command::Train {
            config,
            corpus,
            out,
            stage,
            slot,
            steps,
            all,
        } => {
            let mut cfg: TrainConfig = config::load(config.as_deref())?;
            if let Some(s) = stage {
                cfg.stage = s;
            }
            if let Some(s) = slot {
                cfg.slot = s;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            cfg.validate()?;
            let pyramids = store::read_corpus(&corpus)?;
            let out = resolve_output(&out);
            let jobs: Vec<(Magnification, ModelSlot)> = if all {
                Magnification::ALL
                    .into_iter()
                    .flat_map(|m| ModelSlot::ALL.into_iter().map(move |s| (m, s)))
                    .collect()
            } else {
                vec![(cfg.magnification()?, cfg.model_slot()?)]
            };
            for (m, s) in jobs {
                let job = TrainConfig {
                    stage: m.name().into(),
                    slot: s.name().into(),
                    ..cfg.clone()
                };
                let outcome = train::train(&job, &pyramids, &out)?;
                let last = outcome.records.last().map_or_else(String::new, |r| r.line());
                println!("{} {last}", outcome.checkpoint.display());
            }
            Ok(())
        }
        Command::Sample {
            config,
            out,
            seed,
            workers,
            checkpoints,
            dry_run,
        } => {
            let mut cfg: SampleConfig = config::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(c) = checkpoints {
                cfg.checkpoints = c;
            }
            let geometry = cfg.validate()?;
            if dry_run {
                print!("{}", sample::format_plan(&geometry)?);
                return Ok(());
            }
            let out = out.ok_or_else(|| AppError::validation("arguments", "--out is required unless --dry-run"))?;
            let outcome = sample::sample(&cfg, &resolve_output(&out))?;
            println!(
                "{} sha256={} white_tiles={}",
                outcome.dir.display(),
                outcome.digest,
                outcome.white_tiles
            );
            Ok(())
        }
        Command::Metrics {
            config,
            real,
            generated,
            out,
        } => {
            let cfg: MetricsConfig = config::load(config.as_deref())?;
            cfg.validate()?;
            let real = store::read_corpus(&real)?;
            let generated = store::read_corpus(&generated)?;
            let r = report::evaluate(&real, &generated, &cfg)?;
            r.write(&resolve_output(&out), &cfg)?;
            print!("{}", r.to_text());
            Ok(())
        }
        Command::EvalServe {
            config,
            port,
            pools,
            log,
        } => {
            let mut cfg: ServeConfig = config::load(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(p) = pools {
                cfg.pools = p;
            }
            if let Some(l) = log {
                cfg.log = l;
            }
            let study = evalsvc::Study::open(&cfg)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| AppError::io("tokio runtime", e))?;
            rt.block_on(async {
                let listener = evalsvc::bind(&cfg).await?;
                evalsvc::serve(listener, study).await
            })
        }
        Command::Plan { config } => {
            let cfg: SampleConfig = config::load(config.as_deref())?;
            print!("{}", sample::format_plan(&cfg.validate()?)?);
            Ok(())
        }
    }
}

/// Writes `cfg.count` pyramids under `out` plus the config snapshot.
pub fn dataset_gen(cfg: &DatasetConfig, out: &Path) -> AppResult<()> {
    let params = cfg.generator();
    for k in 0..cfg.count as u64 {
        let seed = cfg.first_seed + k;
        let p = gen_pyramid(seed, &params)?;
        let dir = store::write_pyramid(out, &p, cfg.tile_size)?;
        log::info!("wrote {}", dir.display());
    }
    config::write_snapshot(&out.join(config::SNAPSHOT), cfg)
}
