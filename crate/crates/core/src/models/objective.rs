//! Gradient checking of whole networks.

use super::network::{Batch, Network};
use crate::error::Result;
use crate::nn::{batch_cross_entropy, Objective};

/// A network with a fixed batch under mean cross-entropy; every branch is
/// differentiated, frozen or not.
#[derive(Debug, Clone)]
pub struct NetworkObjective {
    pub net: Network,
    pub batch: Batch,
}

impl Objective for NetworkObjective {
    fn block_names(&self) -> Vec<String> {
        self.net.named_params().into_iter().map(|(n, _)| n).collect()
    }

    fn block_mut(&mut self, block: usize) -> &mut [f64] {
        self.net.named_params_mut().swap_remove(block).1.data_mut()
    }

    fn loss(&self) -> Result<f64> {
        let logits = self.net.forward(&self.batch)?;
        Ok(batch_cross_entropy(&logits, &self.batch.labels)?.0)
    }

    fn loss_and_grads(&mut self) -> Result<(f64, Vec<Vec<f64>>)> {
        self.net.zero_grad();
        let (logits, trace) = self.net.forward_trace(&self.batch)?;
        let (loss, g) = batch_cross_entropy(&logits, &self.batch.labels)?;
        self.net.backward(&trace, g, &[])?;
        let grads = self
            .net
            .named_params()
            .into_iter()
            .map(|(_, t)| t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        Ok((loss, grads))
    }
}
