//! JSON checkpoint container: network spec, named parameter segments stored as
//! base64 little-endian `f32`, training config and loss trace.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::network::{Network, ParamSegment};
use super::spec::NetworkSpec;
use super::train::{EpochRecord, TrainConfig, TrainedModel};
use super::CnnError;
use crate::model::Task;

pub const FORMAT: &str = "brainqc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredSegment {
    pub name: String,
    pub dims: Vec<usize>,
    /// Base64 of the little-endian `f32` values.
    pub data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub task: Option<Task>,
    pub fold_index: usize,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub class_weights: Vec<f64>,
    pub config: TrainConfig,
    pub trace: Vec<EpochRecord>,
    pub parameters: Vec<StoredSegment>,
    pub buffers: Vec<StoredSegment>,
}

fn encode(values: &[f32], segments: &[ParamSegment]) -> Vec<StoredSegment> {
    segments
        .iter()
        .map(|s| {
            let bytes: Vec<u8> = values[s.range()].iter().flat_map(|v| v.to_le_bytes()).collect();
            StoredSegment { name: s.name.clone(), dims: s.dims.clone(), data: STANDARD.encode(bytes) }
        })
        .collect()
}

fn decode(stored: &[StoredSegment], expected: &[ParamSegment], kind: &str) -> Result<Vec<f32>, CnnError> {
    if stored.len() != expected.len() {
        return Err(CnnError::Checkpoint(format!("{} {kind} segments, network has {}", stored.len(), expected.len())));
    }
    let mut out = Vec::with_capacity(expected.iter().map(ParamSegment::len).sum());
    for (s, e) in stored.iter().zip(expected) {
        if s.name != e.name || s.dims != e.dims {
            return Err(CnnError::Checkpoint(format!(
                "segment {} {:?} does not match network segment {} {:?}",
                s.name, s.dims, e.name, e.dims
            )));
        }
        let bytes = STANDARD.decode(&s.data).map_err(|err| CnnError::Checkpoint(format!("{}: {err}", s.name)))?;
        if bytes.len() != 4 * e.len() {
            return Err(CnnError::Checkpoint(format!("{}: {} bytes for {} values", s.name, bytes.len(), e.len())));
        }
        out.extend(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(CnnError::NonFinite("checkpoint values"));
    }
    Ok(out)
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        let net = &model.network;
        Self {
            format: FORMAT.into(),
            version: VERSION,
            spec: net.spec().clone(),
            task: model.task,
            fold_index: model.fold_index,
            best_validation_loss: model.best_validation_loss,
            best_epoch: model.best_epoch,
            epochs_run: model.epochs_run,
            class_weights: model.class_weights.clone(),
            config: model.config.clone(),
            trace: model.trace.clone(),
            parameters: encode(net.params(), net.param_segments()),
            buffers: encode(net.buffers(), net.buffer_segments()),
        }
    }

    pub fn into_model(self) -> Result<TrainedModel, CnnError> {
        if self.format != FORMAT {
            return Err(CnnError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(CnnError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut network = Network::<f32>::new(self.spec, 0)?;
        let params = decode(&self.parameters, network.param_segments(), "parameter")?;
        let buffers = decode(&self.buffers, network.buffer_segments(), "buffer")?;
        network.load(params, buffers)?;
        Ok(TrainedModel {
            network,
            task: self.task,
            best_validation_loss: self.best_validation_loss,
            best_epoch: self.best_epoch,
            epochs_run: self.epochs_run,
            fold_index: self.fold_index,
            class_weights: self.class_weights,
            config: self.config,
            trace: self.trace,
        })
    }
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<(), CnnError> {
    let json = serde_json::to_vec(&Checkpoint::from_model(model)).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| CnnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<TrainedModel, CnnError> {
    let bytes = std::fs::read(path).map_err(|e| CnnError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}
