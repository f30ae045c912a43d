//! Run configuration, read from JSON. Every field is optional and falls back to the
//! reference system.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDateTime;
use microgrid_core::{Bins64, Hyperparams64, MicrogridParams64};
use serde::{Deserialize, Serialize};

use crate::synth::{default_start, synth_trace, DiurnalProfile};
use crate::trace::{load_trace, ExogenousTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    Csv {
        path: PathBuf,
    },
    Synthetic {
        seed: u64,
        hours: usize,
        #[serde(default = "default_start")]
        start: NaiveDateTime,
    },
}

impl Default for TraceSource {
    fn default() -> Self {
        Self::Synthetic {
            seed: 2018,
            hours: 24 * 30,
            start: default_start(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: MicrogridParams64,
    pub bins: Bins64,
    pub hyperparams: Hyperparams64,
    pub trace: TraceSource,
    pub price_scale: f64,
    /// Number of final records held out for validation.
    pub validation_hours: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: MicrogridParams64::reference(),
            bins: Bins64::reference(),
            hyperparams: Hyperparams64::reference(),
            trace: TraceSource::default(),
            price_scale: 1.0,
            validation_hours: 24,
            seeds: (0..10).collect(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // Relative trace paths are taken relative to the config file.
        if let TraceSource::Csv { path: trace_path } = &mut cfg.trace {
            if trace_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *trace_path = dir.join(&*trace_path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate()?;
        self.hyperparams.validate()?;
        if !(self.price_scale > 0.0 && self.price_scale.is_finite()) {
            bail!("price_scale must be positive, got {}", self.price_scale);
        }
        if self.validation_hours == 0 {
            bail!("validation_hours must be at least 1");
        }
        if let TraceSource::Synthetic { hours, .. } = self.trace {
            self.check_split(hours)?;
        }
        Ok(())
    }

    /// Split boundaries must leave at least two training records.
    pub fn check_split(&self, trace_len: usize) -> anyhow::Result<()> {
        if trace_len < self.validation_hours + 2 {
            bail!(
                "trace of {trace_len} records cannot hold {} validation records and 2 training records",
                self.validation_hours
            );
        }
        Ok(())
    }

    pub fn load_trace(&self) -> anyhow::Result<ExogenousTrace> {
        let raw = match &self.trace {
            TraceSource::Csv { path } => {
                load_trace(path).with_context(|| format!("loading trace {}", path.display()))?
            }
            TraceSource::Synthetic { seed, hours, start } => {
                synth_trace(*seed, *hours, *start, &DiurnalProfile::reference())
            }
        };
        self.check_split(raw.len())?;
        Ok(raw.scale_prices(self.price_scale)?)
    }
}
