//! Generator, spatial and temporal critics, and the learned label embedding.

pub mod layers;
mod models;
mod toy;

pub use layers::{Bindings, InitKind, Param, BN_EPS, BN_MOMENTUM};
pub use models::{
    Generator, LabelEmbedding, SpatialDiscriminator, TemporalDiscriminator, EMBED_DIM,
    EMBED_MONTH_DIM, EMBED_PERIOD_DIM, EMBED_REGION_DIM, NOISE_DIM, PERIOD_SCALE, REGION_SCALE,
};
pub use toy::{ToyGenerator, ToySpatialCritic, ToyTemporalCritic};

use crate::error::{Error, Result};
use crate::grid::{ConditionLabel, LABEL_DIM};
use crate::tensor::checkpoint::ParamBlob;
use crate::tensor::{Tape, Tensor};

/// Forward-pass mode; batch norm is the only mode-sensitive layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Common surface for parameterized networks: deterministic parameter order,
/// checkpoint conversion, and name-based loading.
pub trait Net {
    /// Learnable parameters in a fixed order.
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Non-learnable buffers persisted with checkpoints (running statistics).
    fn buffers(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Total learnable parameter count.
    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameters plus buffers as checkpoint blobs.
    fn to_blobs(&self) -> Vec<ParamBlob> {
        self.params()
            .into_iter()
            .chain(self.buffers())
            .map(Param::to_blob)
            .collect()
    }

    /// Load parameters and buffers by name, requiring an exact match.
    fn load_blobs(&mut self, blobs: &[ParamBlob]) -> Result<()> {
        let mut by_name: std::collections::HashMap<&str, &ParamBlob> =
            blobs.iter().map(|b| (b.name.as_str(), b)).collect();
        let mut targets = self.params_mut();
        targets.extend(self.buffers_mut());
        for p in targets {
            let blob = by_name.remove(p.name.as_str()).ok_or_else(|| {
                Error::data(format!("checkpoint is missing parameter '{}'", p.name))
            })?;
            if blob.shape != p.shape {
                return Err(Error::ShapeMismatch {
                    op: "load_blobs",
                    lhs: p.shape.clone(),
                    rhs: blob.shape.clone(),
                });
            }
            p.data = blob.data.iter().map(|&v| v as f64).collect();
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::data(format!(
                "checkpoint has unknown parameter '{extra}'"
            )));
        }
        Ok(())
    }
}

/// Conditional generator surface used by the trainer and the sampler.
pub trait GeneratorNet: Net {
    fn noise_dim(&self) -> usize;

    /// Architecture tag recorded in checkpoint metadata.
    fn arch_name(&self) -> &'static str;

    /// Run the generator on a noise batch (N, noise_dim) with one label per
    /// sample, returning the (N, 24, 8, 8) output and the parameter bindings
    /// used, for backpropagation.
    fn forward(
        &mut self,
        tape: &mut Tape,
        z: Tensor,
        labels: &[ConditionLabel],
        mode: Mode,
    ) -> Result<(Tensor, Bindings)>;
}

/// Conditional Wasserstein critic surface: unbounded real score per sample.
pub trait Critic: Net {
    /// Architecture tag for diagnostics.
    fn arch_name(&self) -> &'static str;

    /// Score a batch (N, 24, 8, 8) under pre-bound parameters -> (N, 1).
    fn score(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        labels: &[ConditionLabel],
    ) -> Result<Tensor>;

    /// Bind this critic's parameters on a tape.
    fn bind(&self, tape: &mut Tape) -> Result<Bindings> {
        Bindings::bind(tape, &self.params())
    }
}

/// Raw (N, 15) conditioning leaf for a label batch.
pub fn label_leaf(tape: &mut Tape, labels: &[ConditionLabel]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(labels.len() * LABEL_DIM);
    for l in labels {
        data.extend_from_slice(&l.raw_vector());
    }
    tape.leaf(data, &[labels.len(), LABEL_DIM])
}

#[cfg(test)]
mod tests;
