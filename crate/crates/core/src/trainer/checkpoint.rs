//! Versioned binary checkpoints: the 8-byte magic `BIOANNCK`, a little-endian
//! `u32` format version, then a bincode payload.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AccuracyMatrix, RunConfig, StepLog, Trainer};
use crate::consolidation::SiState;
use crate::context::ContextStore;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::RngStreams;
use crate::replay::ReplayBuffer;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BIOANNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Full trainer state between tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub cfg: RunConfig,
    pub model: Model,
    pub store: ContextStore,
    pub si: Option<SiState>,
    pub buffer: ReplayBuffer,
    pub rngs: RngStreams,
    pub tasks_done: usize,
    pub accuracy: AccuracyMatrix,
}

impl Trainer {
    pub fn checkpoint(&self, accuracy: &AccuracyMatrix) -> Checkpoint {
        Checkpoint {
            cfg: self.cfg.clone(),
            model: self.model.clone(),
            store: self.store.clone(),
            si: self.si.clone(),
            buffer: self.buffer.clone(),
            rngs: self.rngs.clone(),
            tasks_done: self.tasks_done,
            accuracy: accuracy.clone(),
        }
    }

    /// Resumes from a checkpoint; the step log starts empty.
    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        Self {
            cfg: ck.cfg,
            model: ck.model,
            store: ck.store,
            si: ck.si,
            buffer: ck.buffer,
            rngs: ck.rngs,
            tasks_done: ck.tasks_done,
            steps: Vec::<StepLog>::new(),
        }
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let payload = bincode::serialize(ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(CHECKPOINT_MAGIC)
        .and_then(|_| f.write_all(&CHECKPOINT_VERSION.to_le_bytes()))
        .and_then(|_| f.write_all(&payload))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mechanisms, ModelConfig};

    fn trainer() -> Trainer {
        let cfg = RunConfig {
            model: ModelConfig {
                hidden: vec![8, 8],
                k_ratio: vec![0.5, 0.5],
                ..ModelConfig::default()
            },
            mechanisms: Mechanisms::all(),
            ..RunConfig::default()
        };
        Trainer::new(cfg, 784, 10, 2, 9).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let t = trainer();
        let ck = t.checkpoint(&vec![vec![Some(0.5), None]]);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let resumed = Trainer::from_checkpoint(back);
        assert_eq!(resumed.model.snapshot(), t.model.snapshot());
    }

    #[test]
    fn rejects_foreign_files_and_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));

        let mut bytes = CHECKPOINT_MAGIC.to_vec();
        bytes.extend(99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(m)) => assert!(m.contains("version")),
            other => panic!("{other:?}"),
        }
    }
}
