//! Configuration-driven replication harness.
//!
//! Replications run on a rayon pool; every random draw comes from a stream
//! keyed by the master seed and the replication coordinates, and results are
//! collected in replication order, so outputs do not depend on the number of
//! worker threads.

mod config;
mod scenarios;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{
    default_out_dir, preset, ContrastConfig, ExposurePair, DesignConfig, ExperimentConfig, MapConfig, NamedContrast, PopulationConfig,
    Scale, Scenario, SizeBound, SizeRule, TimeRule, TimeSteps, VarianceChoice,
};

use crate::error::{Error, Result};

/// One output metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub reps: usize,
    /// `key=value/` qualifiers followed by the metric name, e.g. `r=8/jarque_bera`.
    pub metric: String,
    pub value: f64,
    pub se: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// Q-Q points of standardized estimates for one cell of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct QqSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scale: Scale,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    /// Configuration actually run, with scaled reps and the effective seed.
    pub config: ExperimentConfig,
    pub scale: Scale,
    pub threads: usize,
    pub rows: Vec<ResultRow>,
    pub qq: Vec<QqSeries>,
    pub wall_seconds: f64,
}

impl RunOutput {
    /// Value of the first row whose metric is `metric` at size `n`.
    pub fn value(&self, n: usize, metric: &str) -> Option<f64> {
        self.row(n, metric).map(|r| r.value)
    }

    pub fn row(&self, n: usize, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.n == n && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["scenario", "n", "T", "reps", "metric", "value", "se", "seed", "config_hash"])?;
        for r in &self.rows {
            wtr.write_record([
                r.scenario.clone(),
                r.n.to_string(),
                r.t.to_string(),
                r.reps.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                r.se.map(|s| s.to_string()).unwrap_or_default(),
                r.seed.to_string(),
                r.config_hash.clone(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<results>", e))?;
        Ok(())
    }

    /// Writes `<scenario>.csv`, `<scenario>_manifest.json` and any Q-Q files
    /// into `dir`, returning the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let name = self.scenario.name();
        let mut written = Vec::new();
        let csv_path = dir.join(format!("{name}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        written.push(csv_path);
        for qq in &self.qq {
            let path = dir.join(format!("{name}_qq_{}.csv", qq.label));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
            wtr.write_record(["theoretical_quantile", "sample_quantile"])?;
            for (a, b) in &qq.points {
                wtr.write_record([a.to_string(), b.to_string()])?;
            }
            wtr.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        let manifest_path = dir.join(format!("{name}_manifest.json"));
        let manifest = serde_json::json!({
            "scenario": name,
            "config_hash": self.config.hash(),
            "seed": self.config.seed,
            "scale": self.scale.name(),
            "reps": self.config.reps,
            "threads": self.threads,
            "wall_seconds": self.wall_seconds,
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": written.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
            "config": self.config,
        });
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
        written.push(manifest_path);
        Ok(written)
    }
}

/// Runs the configured scenario.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let mut cfg = config.clone();
    cfg.reps = opts.scale.apply(cfg.reps);
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let (rows, qq) = pool.install(|| scenarios::dispatch(&cfg))?;
    Ok(RunOutput {
        scenario: cfg.scenario,
        config: cfg,
        scale: opts.scale,
        threads: pool.current_num_threads(),
        rows,
        qq,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
