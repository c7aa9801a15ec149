//! Mini-batch training with Adam and softmax cross-entropy.
//!
//! Fusion models train in two steps: step 1 fits the global branch plus a
//! linear classifier; step 2 loads that global branch, freezes it, and trains
//! the semantic head and fused classifier on top.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::heads::SemanticHead;
use super::network::{Architecture, Network, GLOBAL};
use crate::data::{batch_iter, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{batch_cross_entropy, Adam, AdamConfig, Checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Global branch and a linear classifier.
    Step1,
    /// Fusion model on top of a frozen step-1 global branch.
    Step2,
    /// Semantic head and classifier, no global features.
    Semantic,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Step1 => "step1",
            Stage::Step2 => "step2",
            Stage::Semantic => "semantic",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step1" | "global" => Ok(Stage::Step1),
            "step2" | "fusion" => Ok(Stage::Step2),
            "semantic" => Ok(Stage::Semantic),
            other => Err(Error::Usage(format!("unknown stage {other:?} (expected step1, step2 or semantic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Branches that receive no updates.
    pub frozen: Vec<String>,
}

impl TrainPlan {
    /// Batch 32, default Adam settings; step 2 freezes the global branch.
    pub fn new(stage: Stage, epochs: usize, seed: u64) -> Self {
        TrainPlan {
            stage,
            epochs,
            batch_size: crate::data::batch::DEFAULT_BATCH,
            optimizer: AdamConfig::default(),
            seed,
            frozen: match stage {
                Stage::Step2 => vec![GLOBAL.to_string()],
                _ => Vec::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) || !(o.weight_decay >= 0.0) {
            return Err(Error::Usage(format!(
                "learning rate must be positive and weight decay non-negative, got {} and {}",
                o.lr, o.weight_decay
            )));
        }
        Ok(())
    }
}

/// One JSON line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochMetrics>,
    /// `(branch, hash before training, hash after training)` per frozen branch.
    pub frozen_hashes: Vec<(String, String, String)>,
}

impl TrainOutcome {
    pub fn final_metrics(&self, split: Split) -> Option<&EpochMetrics> {
        self.history.iter().rev().find(|m| m.split == split)
    }
}

/// Trains `net` on the train split, evaluating both splits after every epoch.
/// `on_epoch` sees each metrics record as soon as it exists. A non-finite
/// loss aborts with [`Error::NonFinite`].
pub fn train(
    mut net: Network,
    data: &Dataset,
    plan: &TrainPlan,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    plan.validate()?;
    if data.num_classes != net.num_classes() {
        return Err(Error::Usage(format!(
            "dataset has {} classes, network {}",
            data.num_classes,
            net.num_classes()
        )));
    }
    for f in &plan.frozen {
        if net.branch(f).is_none() {
            return Err(Error::Usage(format!("cannot freeze missing branch {f:?}")));
        }
    }
    let before: Vec<(String, String)> = plan
        .frozen
        .iter()
        .map(|b| (b.clone(), net.branch_hash(b).unwrap_or_default()))
        .collect();
    let test = data.split(Split::Test);
    let mut adam = Adam::new(plan.optimizer);
    let mut history = Vec::with_capacity(plan.epochs * 2);
    for epoch in 0..plan.epochs {
        let batches = batch_iter(data, Split::Train, plan.batch_size, plan.seed, epoch as u64)?;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for examples in &batches {
            let batch = net.make_batch(examples)?;
            let (logits, trace) = net.forward_trace(&batch)?;
            let (loss, grad) = batch_cross_entropy(&logits, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss {loss} at epoch {}", epoch + 1)));
            }
            let c = net.num_classes();
            correct += logits
                .data()
                .chunks_exact(c)
                .zip(&batch.labels)
                .filter(|(row, &l)| super::network::argmax(row) == l)
                .count();
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            net.zero_grad();
            net.backward(&trace, grad, &plan.frozen)?;
            adam.step(&mut net.trainable_params_mut(&plan.frozen))?;
        }
        let train_metrics = EpochMetrics {
            epoch: epoch + 1,
            split: Split::Train,
            loss: loss_sum / seen as f64,
            accuracy: correct as f64 / seen as f64,
        };
        on_epoch(&train_metrics);
        history.push(train_metrics);
        if !test.is_empty() {
            let s = net.score(&test, plan.batch_size)?;
            if !s.loss.is_finite() {
                return Err(Error::NonFinite(format!("test loss {} at epoch {}", s.loss, epoch + 1)));
            }
            let m = EpochMetrics {
                epoch: epoch + 1,
                split: Split::Test,
                loss: s.loss,
                accuracy: s.accuracy,
            };
            on_epoch(&m);
            history.push(m);
        }
    }
    let mut frozen_hashes = Vec::with_capacity(before.len());
    for (b, h0) in before {
        let h1 = net.branch_hash(&b).unwrap_or_default();
        if h0 != h1 {
            return Err(Error::Checkpoint(format!("frozen branch {b} changed during training")));
        }
        frozen_hashes.push((b, h0, h1));
    }
    Ok(TrainOutcome {
        network: net,
        history,
        frozen_hashes,
    })
}

/// Step-2 network: a fusion architecture whose global branch is copied from
/// a step-1 checkpoint. Other parameters are freshly drawn from `seed`.
pub fn fusion_from_step1(step1: &Checkpoint, head: SemanticHead, fc3: usize, seed: u64) -> Result<Network> {
    let arch: Architecture = serde_json::from_str(&step1.architecture)
        .map_err(|e| Error::Checkpoint(format!("architecture descriptor: {e}")))?;
    let Architecture::Global {
        input_width,
        features,
        num_classes,
    } = arch
    else {
        return Err(Error::Checkpoint(
            "step 2 needs a step-1 (global branch) checkpoint".into(),
        ));
    };
    let mut net = Network::new(
        Architecture::Fusion {
            input_width,
            global_features: features,
            head,
            fc3,
            num_classes,
        },
        seed,
    )?;
    let loaded = net.load_blocks(step1, "global.")?;
    if loaded == 0 {
        return Err(Error::Checkpoint("step-1 checkpoint has no global parameters".into()));
    }
    if net.branch_hash(GLOBAL) != Some(step1.hash_blocks("global.")) {
        return Err(Error::Checkpoint("global branch differs after loading".into()));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synthetic_dataset, SynthSpec};
    use crate::models::heads::SemanticHead;
    use crate::ssf::FeatureSubset;

    #[test]
    fn stage_parsing_and_defaults() {
        assert_eq!("step2".parse::<Stage>().unwrap(), Stage::Step2);
        assert!("step3".parse::<Stage>().is_err());
        let p = TrainPlan::new(Stage::Step2, 3, 0);
        assert_eq!(p.frozen, vec!["global".to_string()]);
        assert_eq!(p.batch_size, 32);
        assert!(TrainPlan { epochs: 0, ..p }.validate().is_err());
    }

    #[test]
    fn nn_head_learns_easy_data() {
        let spec = SynthSpec::standard(3, 6, 16, 20, 0.0, 4).unwrap();
        let data = synthetic_dataset(&spec).unwrap();
        let net = Network::new(
            Architecture::Semantic {
                head: SemanticHead::nn(6, FeatureSubset::FULL),
                num_classes: 3,
            },
            1,
        )
        .unwrap();
        let mut plan = TrainPlan::new(Stage::Semantic, 15, 1);
        plan.optimizer.lr = 1e-3;
        let mut lines = 0;
        let out = train(net, &data, &plan, |_| lines += 1).unwrap();
        assert_eq!(lines, 30);
        let first = out.history[0].loss;
        let last = out.final_metrics(Split::Train).unwrap().loss;
        assert!(last < first, "{first} -> {last}");
        assert!(out.final_metrics(Split::Test).unwrap().accuracy > 0.9);
    }

    #[test]
    fn step2_requires_global_checkpoint() {
        let net = Network::new(
            Architecture::Semantic {
                head: SemanticHead::nn(3, FeatureSubset::FULL),
                num_classes: 2,
            },
            0,
        )
        .unwrap();
        let err = fusion_from_step1(&net.to_checkpoint(), SemanticHead::nn(3, FeatureSubset::FULL), 8, 0);
        assert!(matches!(err, Err(Error::Checkpoint(_))));
    }
}
