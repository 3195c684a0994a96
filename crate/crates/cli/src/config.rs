//! Config file envelope and flag overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use stepwise_core::crf::KernelMode;
use stepwise_core::io::{read_versioned, VERSION};
use stepwise_core::pipeline::{PipelineConfig, SweepSpec};
use stepwise_core::scoring::MaskMode;
use stepwise_core::Error;

use crate::{Kernel, Overrides, Result};

/// `{"format": "config", "version": 1, "pipeline": {...}, "sweep": {...}}`; both sections optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
}

impl ConfigFile {
    pub const FORMAT: &'static str = "config";

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(&existing(path)?, Self::FORMAT)?;
        if f.version != VERSION {
            return Err(Error::InvalidFile(format!("unsupported config version {}", f.version)));
        }
        Ok(f)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self {
                format: Self::FORMAT.into(),
                version: VERSION,
                pipeline: PipelineConfig::default(),
                sweep: SweepSpec::default(),
            }),
        }
    }
}

/// Missing inputs are reported as validation errors rather than I/O failures.
pub fn existing(path: &Path) -> Result<std::path::PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::InvalidFile(format!("input file {} not found", path.display())))
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.world.seed = seed;
            cfg.erasion.seed = seed;
        }
        if let Some(tau) = self.tau {
            cfg.erasion.mask = MaskMode::soft(tau)?;
        }
        if self.no_mask {
            cfg.erasion.mask = MaskMode::Off;
        }
        if let Some(w) = self.omega {
            cfg.crf.omega = w;
        }
        if let Some(s) = self.sigma {
            cfg.crf.sigma = s;
        }
        if let Some(t) = self.threshold {
            cfg.detect.threshold = t;
        }
        if let Some(t) = self.t_max {
            cfg.erasion.t_max = t;
        }
        if let Some(eta) = self.eta {
            cfg.erasion.eta = eta;
        }
        if let Some(l) = self.l_min {
            cfg.erasion.l_min = l;
        }
        if self.no_crf {
            cfg.use_crf = false;
        }
        match self.kernel {
            Some(Kernel::Naive) => cfg.crf.kernel = KernelMode::Naive,
            Some(Kernel::Truncated) if !matches!(cfg.crf.kernel, KernelMode::Truncated { .. }) => {
                cfg.crf.kernel = KernelMode::truncated()
            }
            _ => {}
        }
        cfg.validate()
    }
}
