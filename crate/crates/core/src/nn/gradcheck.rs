//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layer::Sequential;
use super::loss::batch_cross_entropy;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Something with parameter blocks and a scalar loss.
pub trait Objective {
    fn block_names(&self) -> Vec<String>;
    fn block_mut(&mut self, block: usize) -> &mut [f64];
    /// Loss at the current parameters.
    fn loss(&self) -> Result<f64>;
    /// Loss plus analytic gradients of every block, in `block_names` order.
    fn loss_and_grads(&mut self) -> Result<(f64, Vec<Vec<f64>>)>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many entries per block (seeded sample).
    pub max_entries_per_block: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            tolerance: 1e-4,
            max_entries_per_block: None,
            seed: 0,
        }
    }
}

/// Largest parameter count that is perturbed exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub size: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Analytic and numeric values at the worst entry.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error < self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub fn grad_check<O: Objective + ?Sized>(obj: &mut O, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (loss, grads) = obj.loss_and_grads()?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at the check point")));
    }
    let names = obj.block_names();
    let total: usize = grads.iter().map(Vec::len).sum();
    if cfg.max_entries_per_block.is_none() && total >= EXHAUSTIVE_LIMIT {
        return Err(Error::Usage(format!(
            "{total} parameters is too many to perturb exhaustively; request a sampled check"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let size = grads[b].len();
        let indices: Vec<usize> = match cfg.max_entries_per_block {
            Some(k) if k < size => {
                let mut v = sample(&mut rng, size, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..size).collect(),
        };
        let mut max_rel = 0.0f64;
        let mut worst = (0.0, 0.0);
        for &i in &indices {
            let orig = obj.block_mut(b)[i];
            obj.block_mut(b)[i] = orig + cfg.step;
            let plus = obj.loss()?;
            obj.block_mut(b)[i] = orig - cfg.step;
            let minus = obj.loss()?;
            obj.block_mut(b)[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {name}[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let rel = relative_error(grads[b][i], numeric);
            if rel > max_rel || indices.len() == 1 {
                max_rel = rel.max(max_rel);
                worst = (grads[b][i], numeric);
            }
        }
        blocks.push(BlockReport {
            name,
            size,
            checked: indices.len(),
            max_rel_error: max_rel,
            worst,
        });
    }
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        blocks,
    })
}

/// Loss attached to a [`Sequential`] for checking.
#[derive(Debug, Clone)]
pub enum CheckLoss {
    /// Mean softmax cross-entropy against class labels.
    CrossEntropy(Vec<usize>),
    /// `Σ pᵢ·yᵢ` against a fixed projection of the output; exercises every
    /// output gradient entry independently.
    Projection(Vec<f64>),
}

/// A network, a fixed input and a loss. The input itself is checked as the
/// first block when `check_input` is set.
#[derive(Debug, Clone)]
pub struct SequentialObjective {
    pub net: Sequential,
    pub input: Tensor,
    pub loss: CheckLoss,
    pub check_input: bool,
}

impl SequentialObjective {
    fn eval(&self, out: &Tensor) -> Result<(f64, Tensor)> {
        match &self.loss {
            CheckLoss::CrossEntropy(labels) => batch_cross_entropy(out, labels),
            CheckLoss::Projection(p) => {
                if p.len() != out.numel() {
                    return Err(Error::shape("projection", &[out.numel()], &[p.len()]));
                }
                let l = out.data().iter().zip(p).map(|(a, b)| a * b).sum();
                Ok((l, Tensor::new(out.shape(), p.clone())?))
            }
        }
    }
}

impl Objective for SequentialObjective {
    fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.net.named_params().into_iter().map(|(n, _)| n).collect();
        if self.check_input {
            names.insert(0, "input".into());
        }
        names
    }

    fn block_mut(&mut self, block: usize) -> &mut [f64] {
        if self.check_input {
            if block == 0 {
                return self.input.data_mut();
            }
            return self.net.named_params_mut().swap_remove(block - 1).1.data_mut();
        }
        self.net.named_params_mut().swap_remove(block).1.data_mut()
    }

    fn loss(&self) -> Result<f64> {
        let out = self.net.forward(&self.input)?;
        Ok(self.eval(&out)?.0)
    }

    fn loss_and_grads(&mut self) -> Result<(f64, Vec<Vec<f64>>)> {
        self.net.zero_grad();
        let (out, trace) = self.net.forward_trace(&self.input)?;
        let (loss, g) = self.eval(&out)?;
        let gx = self.net.backward(&trace, g)?;
        let mut grads: Vec<Vec<f64>> = self
            .net
            .named_params()
            .into_iter()
            .map(|(_, t)| t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        if self.check_input {
            grads.insert(0, gx.into_data());
        }
        Ok((loss, grads))
    }
}
