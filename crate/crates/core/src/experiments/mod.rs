//! Config-driven experiment runners with reproducible parallel replicates.
//!
//! Replicate `i` of a run draws only from a stream keyed by (seed, kind,
//! purpose, i), and results are merged in replicate order, so outcomes do not
//! depend on the worker count.

pub mod config;
pub mod record;
mod runners;
pub mod sampling;
mod tails;

use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentKind, Tolerances};
pub use record::{Gate, ReplicateRecord, RunRecord, Stat, Table};
pub use tails::{tail_points, top_decade, TailPoint};

use crate::error::{Error, Result};
use crate::numeric::rng::StreamId;

/// Samples per replicate in pooled tail studies.
pub const CHUNK: u64 = 1 << 14;

/// Run with the worker count from the config (all cores when unset).
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    run_with_workers(config, config.workers())
}

/// Run on a dedicated pool of `workers` threads.
pub fn run_with_workers(config: &ExperimentConfig, workers: usize) -> Result<RunRecord> {
    let model = config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let start = Instant::now();
    let mut ctx = Context {
        config,
        model: &model,
        root: StreamId::root(config.seed()?).child(config.kind as u64),
        out: RunRecord {
            schema: record::RUN_SCHEMA.into(),
            config: config.clone(),
            config_digest: config.digest()?,
            workers: workers.max(1),
            replicates: Vec::new(),
            summary: Vec::new(),
            tables: Vec::new(),
            gates: Vec::new(),
            censored: 0,
            wall_time_s: 0.0,
            notes: Vec::new(),
        },
    };
    pool.install(|| -> Result<()> {
        match config.kind {
            ExperimentKind::Simulate => runners::simulate(&mut ctx),
            ExperimentKind::Constants => runners::constants(&mut ctx),
            ExperimentKind::LimitCheck => runners::limit_check(&mut ctx),
            ExperimentKind::ValleyStats => runners::valley_stats(&mut ctx),
            ExperimentKind::QuenchedGate => runners::quenched_gate(&mut ctx),
            ExperimentKind::InterarrivalDiag => runners::interarrival(&mut ctx),
            ExperimentKind::IglehartTail => tails::iglehart_tail(&mut ctx),
            ExperimentKind::ZTail => tails::z_tail(&mut ctx),
            ExperimentKind::OccupationTail => tails::occupation_tail(&mut ctx),
            ExperimentKind::GoodEnv => tails::good_env(&mut ctx),
        }
    })?;
    let mut out = ctx.out;
    out.censored = out.replicates.iter().filter(|r| r.censored).count() as u64;
    out.wall_time_s = start.elapsed().as_secs_f64();
    Ok(out)
}

pub(crate) struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub model: &'a crate::env_model::EnvironmentModel,
    pub root: StreamId,
    pub out: RunRecord,
}

/// `f(i)` for i in 0..count on the current pool, in index order.
pub(crate) fn replicate_map<T, F>(count: u64, f: F) -> Result<Vec<(T, f64)>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let t0 = Instant::now();
            f(i).map(|v| (v, t0.elapsed().as_secs_f64()))
        })
        .collect()
}

/// Chunk sizes covering `samples`.
pub(crate) fn chunk_len(samples: u64, c: u64) -> u64 {
    CHUNK.min(samples - c * CHUNK)
}
