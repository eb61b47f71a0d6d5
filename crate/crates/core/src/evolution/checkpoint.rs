//! Checkpoint files: a JSON header followed by the flat genome, in one document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RolloutConfig;
use crate::error::{Error, GenomeError, Result};
use crate::evolution::cma::CmaSnapshot;
use crate::genome::{Genome, GenomeLayout};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub n: usize,
    pub r: usize,
    pub l: usize,
    pub h: usize,
    pub genome_length: usize,
    pub schema_version: u32,
    /// Generations completed when the file was written.
    #[serde(default)]
    pub generation: u64,
    /// Evaluated fitness of `genome`, absent for the untrained mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cma_state: Option<CmaSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub genome: Genome,
}

impl Checkpoint {
    pub fn new(layout: GenomeLayout, genome: Genome) -> Result<Self, GenomeError> {
        if genome.len() != layout.len() {
            return Err(GenomeError::Length {
                expected: layout.len(),
                actual: genome.len(),
            });
        }
        Ok(Self {
            header: CheckpointHeader {
                n: layout.n,
                r: layout.r,
                l: layout.l,
                h: layout.h,
                genome_length: layout.len(),
                schema_version: SCHEMA_VERSION,
                generation: 0,
                fitness: None,
                cma_state: None,
            },
            genome,
        })
    }

    pub fn layout(&self) -> GenomeLayout {
        GenomeLayout {
            n: self.header.n,
            r: self.header.r,
            l: self.header.l,
            h: self.header.h,
        }
    }

    /// Checks internal consistency and the schema version.
    pub fn validate(&self) -> Result<()> {
        if self.header.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(self.header.schema_version));
        }
        let layout = self.layout();
        if self.header.genome_length != layout.len() {
            return Err(GenomeError::Length {
                expected: layout.len(),
                actual: self.header.genome_length,
            }
            .into());
        }
        if self.genome.len() != layout.len() {
            return Err(GenomeError::Length {
                expected: layout.len(),
                actual: self.genome.len(),
            }
            .into());
        }
        Ok(())
    }

    /// Fails unless the checkpoint dimensions match `cfg`.
    pub fn check_compatible(&self, cfg: &RolloutConfig) -> Result<(), GenomeError> {
        let want = GenomeLayout::from_config(cfg);
        let have = self.layout();
        if want != have {
            return Err(GenomeError::Dimensions {
                expected: format!("n={} r={} l={} h={}", want.n, want.r, want.l, want.h),
                found: format!("n={} r={} l={} h={}", have.n, have.r, have.l, have.h),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
