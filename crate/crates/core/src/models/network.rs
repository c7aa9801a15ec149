//! Scene classifiers: a semantic head alone, a global-feature branch alone,
//! or both fused by concatenation.
//!
//! Parameters are grouped into branches named `global`, `semantic` and
//! `classifier`; a parameter's full name is `<branch>.<layer>.<weight|bias>`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heads::{HeadKind, SemanticHead, SEMANTIC_FEATURES};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::nn::checkpoint::hash_params;
use crate::nn::{batch_cross_entropy, Checkpoint, LayerSpec, ParamBlock, Sequential, Tensor, Trace};
use crate::par;
use crate::ssf::{select_columns_flat, SSF_COLUMNS};

pub const GLOBAL: &str = "global";
pub const SEMANTIC: &str = "semantic";
pub const CLASSIFIER: &str = "classifier";

/// Default width of the fused hidden layer.
pub const DEFAULT_FC3: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Architecture {
    /// Semantic head followed by a linear classifier.
    Semantic { head: SemanticHead, num_classes: usize },
    /// `FC(input_width → features)-ReLU` then a linear classifier.
    Global {
        input_width: usize,
        features: usize,
        num_classes: usize,
    },
    /// Global branch and semantic head, concatenated (global first), then
    /// `FC3-ReLU-FC4`.
    Fusion {
        input_width: usize,
        global_features: usize,
        head: SemanticHead,
        fc3: usize,
        num_classes: usize,
    },
}

impl Architecture {
    pub fn num_classes(&self) -> usize {
        match *self {
            Architecture::Semantic { num_classes, .. }
            | Architecture::Global { num_classes, .. }
            | Architecture::Fusion { num_classes, .. } => num_classes,
        }
    }

    pub fn head(&self) -> Option<&SemanticHead> {
        match self {
            Architecture::Semantic { head, .. } | Architecture::Fusion { head, .. } => Some(head),
            Architecture::Global { .. } => None,
        }
    }

    pub fn global_input(&self) -> Option<usize> {
        match *self {
            Architecture::Global { input_width, .. } | Architecture::Fusion { input_width, .. } => Some(input_width),
            Architecture::Semantic { .. } => None,
        }
    }

    fn global_specs(input_width: usize, features: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::fc(input_width, features), LayerSpec::Relu]
    }

    fn branch_specs(&self) -> Result<Vec<(&'static str, Vec<LayerSpec>)>> {
        if self.num_classes() == 0 {
            return Err(Error::InvalidDimensions("need at least one class".into()));
        }
        Ok(match self {
            Architecture::Semantic { head, num_classes } => vec![
                (SEMANTIC, head.layer_specs()?),
                (CLASSIFIER, vec![LayerSpec::fc(SEMANTIC_FEATURES, *num_classes)]),
            ],
            Architecture::Global {
                input_width,
                features,
                num_classes,
            } => vec![
                (GLOBAL, Self::global_specs(*input_width, *features)),
                (CLASSIFIER, vec![LayerSpec::fc(*features, *num_classes)]),
            ],
            Architecture::Fusion {
                input_width,
                global_features,
                head,
                fc3,
                num_classes,
            } => vec![
                (GLOBAL, Self::global_specs(*input_width, *global_features)),
                (SEMANTIC, head.layer_specs()?),
                (
                    CLASSIFIER,
                    vec![
                        LayerSpec::fc(global_features + SEMANTIC_FEATURES, *fc3),
                        LayerSpec::Relu,
                        LayerSpec::fc(*fc3, *num_classes),
                    ],
                ),
            ],
        })
    }
}

/// Concatenates one sample's global and semantic features, global first.
pub fn fuse_concat(global: &[f64], semantic: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(global.len() + semantic.len());
    v.extend_from_slice(global);
    v.extend_from_slice(semantic);
    v
}

/// Row-wise [`fuse_concat`] of two `[N, *]` tensors.
pub fn fuse_concat_batch(global: &Tensor, semantic: &Tensor) -> Result<Tensor> {
    let (gs, ss) = (global.shape(), semantic.shape());
    if gs.len() != 2 || ss.len() != 2 || gs[0] != ss[0] {
        return Err(Error::shape("fusion inputs", gs, ss));
    }
    let n = gs[0];
    let mut data = Vec::with_capacity(n * (gs[1] + ss[1]));
    for (g, s) in global.data().chunks_exact(gs[1].max(1)).zip(semantic.data().chunks_exact(ss[1].max(1))) {
        data.extend(fuse_concat(g, s));
    }
    Tensor::new(&[n, gs[1] + ss[1]], data)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Network inputs for one batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Semantic head input, shaped for the head.
    pub ssf: Option<Tensor>,
    /// `[N, l_G]` global features.
    pub global: Option<Tensor>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Layer inputs recorded by [`Network::forward_trace`].
#[derive(Debug, Clone)]
pub struct NetTrace {
    global: Option<(Trace, usize)>,
    semantic: Option<(Trace, usize)>,
    classifier: Trace,
}

#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    global: Option<Sequential>,
    semantic: Option<Sequential>,
    classifier: Sequential,
}

/// Loss, accuracy and predictions over a list of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

impl Network {
    /// Fresh He-uniform weights drawn from `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut global = None;
        let mut semantic = None;
        let mut classifier = None;
        for (name, specs) in arch.branch_specs()? {
            let net = Sequential::new(&specs, &mut rng)?;
            match name {
                GLOBAL => global = Some(net),
                SEMANTIC => semantic = Some(net),
                _ => classifier = Some(net),
            }
        }
        let net = Network {
            arch,
            global,
            semantic,
            classifier: classifier.expect("every architecture has a classifier"),
        };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<()> {
        let mut width = 0;
        if let (Some(g), Some(w)) = (&self.global, self.arch.global_input()) {
            width += g.output_shape(&[1, w])?[1];
        }
        if let (Some(s), Some(h)) = (&self.semantic, self.arch.head()) {
            width += s.output_shape(&h.input_shape(1))?[1];
        }
        let out = self.classifier.output_shape(&[1, width])?;
        if out[1] != self.arch.num_classes() {
            return Err(Error::shape("classifier output", &[1, self.arch.num_classes()], &out));
        }
        Ok(())
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes()
    }

    pub fn branch(&self, name: &str) -> Option<&Sequential> {
        match name {
            GLOBAL => self.global.as_ref(),
            SEMANTIC => self.semantic.as_ref(),
            CLASSIFIER => Some(&self.classifier),
            _ => None,
        }
    }

    fn branches(&self) -> Vec<(&'static str, &Sequential)> {
        let mut v = Vec::new();
        if let Some(g) = &self.global {
            v.push((GLOBAL, g));
        }
        if let Some(s) = &self.semantic {
            v.push((SEMANTIC, s));
        }
        v.push((CLASSIFIER, &self.classifier));
        v
    }

    fn branches_mut(&mut self) -> Vec<(&'static str, &mut Sequential)> {
        let mut v = Vec::new();
        if let Some(g) = &mut self.global {
            v.push((GLOBAL, g));
        }
        if let Some(s) = &mut self.semantic {
            v.push((SEMANTIC, s));
        }
        v.push((CLASSIFIER, &mut self.classifier));
        v
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.branches()
            .into_iter()
            .flat_map(|(b, net)| net.named_params().into_iter().map(move |(n, t)| (format!("{b}.{n}"), t)))
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.branches_mut()
            .into_iter()
            .flat_map(|(b, net)| {
                net.named_params_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("{b}.{n}"), t))
            })
            .collect()
    }

    /// Parameters of every branch not listed in `frozen`.
    pub fn trainable_params_mut(&mut self, frozen: &[String]) -> Vec<&mut Tensor> {
        self.branches_mut()
            .into_iter()
            .filter(|(b, _)| !frozen.iter().any(|f| f == b))
            .flat_map(|(_, net)| net.named_params_mut().into_iter().map(|(_, t)| t))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.branches().iter().map(|(_, n)| n.param_count()).sum()
    }

    /// Analytic FLOPs of one forward pass on a single sample.
    pub fn flops(&self) -> Result<u64> {
        let mut total = 0;
        let mut width = 0;
        if let (Some(g), Some(w)) = (&self.global, self.arch.global_input()) {
            total += g.flops(&[1, w])?;
            width += g.output_shape(&[1, w])?[1];
        }
        if let (Some(s), Some(h)) = (&self.semantic, self.arch.head()) {
            total += s.flops(&h.input_shape(1))?;
            width += SEMANTIC_FEATURES;
        }
        Ok(total + self.classifier.flops(&[1, width])?)
    }

    /// SHA-256 of a branch's parameters; equals
    /// [`Checkpoint::hash_blocks`] with prefix `"<branch>."`.
    pub fn branch_hash(&self, branch: &str) -> Option<String> {
        let net = self.branch(branch)?;
        let named: Vec<(String, &Tensor)> = net
            .named_params()
            .into_iter()
            .map(|(n, t)| (format!("{branch}.{n}"), t))
            .collect();
        Some(hash_params(named.iter().map(|(n, t)| (n.as_str(), t.shape(), t.data()))))
    }

    pub fn zero_grad(&mut self) {
        for (_, n) in self.branches_mut() {
            n.zero_grad();
        }
    }

    /// Builds network inputs from examples (feature matrices are row-major
    /// `L × 5`; the head's subset columns are selected here).
    pub fn make_batch(&self, examples: &[&Example]) -> Result<Batch> {
        let n = examples.len();
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_classes()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes: self.num_classes(),
            });
        }
        let ssf = match self.arch.head() {
            Some(head) => {
                let l = head.num_categories;
                let mut data = Vec::with_capacity(n * l * head.subset.width());
                for e in examples {
                    if e.ssf.len() != l * SSF_COLUMNS {
                        return Err(Error::shape(
                            format!("features of sample {}", e.id),
                            &[l, SSF_COLUMNS],
                            &[e.ssf.len() / SSF_COLUMNS, SSF_COLUMNS],
                        ));
                    }
                    if e.ssf.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("feature matrix of sample {}", e.id)));
                    }
                    select_columns_flat(&e.ssf, head.subset, &mut data);
                }
                Some(Tensor::new(&head.input_shape(n), data)?)
            }
            None => None,
        };
        let global = match self.arch.global_input() {
            Some(w) => {
                let mut data = Vec::with_capacity(n * w);
                for e in examples {
                    let g = e.global.as_ref().ok_or_else(|| {
                        Error::InvalidDimensions(format!("sample {} has no global feature vector", e.id))
                    })?;
                    if g.len() != w {
                        return Err(Error::shape(format!("global vector of sample {}", e.id), &[w], &[g.len()]));
                    }
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("global vector of sample {}", e.id)));
                    }
                    data.extend_from_slice(g);
                }
                Some(Tensor::new(&[n, w], data)?)
            }
            None => None,
        };
        Ok(Batch { ssf, global, labels })
    }

    fn inputs<'a>(&self, batch: &'a Batch) -> Result<(Option<&'a Tensor>, Option<&'a Tensor>)> {
        let g = match (&self.global, &batch.global) {
            (Some(_), None) => return Err(Error::Usage("batch lacks global features".into())),
            (Some(_), Some(t)) => Some(t),
            _ => None,
        };
        let s = match (&self.semantic, &batch.ssf) {
            (Some(_), None) => return Err(Error::Usage("batch lacks semantic features".into())),
            (Some(_), Some(t)) => Some(t),
            _ => None,
        };
        Ok((g, s))
    }

    fn join(g: Option<Tensor>, s: Option<Tensor>) -> Result<Tensor> {
        match (g, s) {
            (Some(g), Some(s)) => fuse_concat_batch(&g, &s),
            (Some(x), None) | (None, Some(x)) => Ok(x),
            (None, None) => Err(Error::Usage("network has no input branch".into())),
        }
    }

    /// Logits `[N, C]`.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor> {
        let (gi, si) = self.inputs(batch)?;
        let g = match (&self.global, gi) {
            (Some(net), Some(x)) => Some(net.forward(x)?),
            _ => None,
        };
        let s = match (&self.semantic, si) {
            (Some(net), Some(x)) => Some(net.forward(x)?),
            _ => None,
        };
        self.classifier.forward(&Self::join(g, s)?)
    }

    pub fn forward_trace(&self, batch: &Batch) -> Result<(Tensor, NetTrace)> {
        let (gi, si) = self.inputs(batch)?;
        let g = match (&self.global, gi) {
            (Some(net), Some(x)) => Some(net.forward_trace(x)?),
            _ => None,
        };
        let s = match (&self.semantic, si) {
            (Some(net), Some(x)) => Some(net.forward_trace(x)?),
            _ => None,
        };
        let gw = g.as_ref().map(|(t, _)| t.item_len());
        let sw = s.as_ref().map(|(t, _)| t.item_len());
        let (g_out, g_trace) = g.map_or((None, None), |(o, t)| (Some(o), Some(t)));
        let (s_out, s_trace) = s.map_or((None, None), |(o, t)| (Some(o), Some(t)));
        let (logits, c_trace) = self.classifier.forward_trace(&Self::join(g_out, s_out)?)?;
        Ok((
            logits,
            NetTrace {
                global: g_trace.zip(gw),
                semantic: s_trace.zip(sw),
                classifier: c_trace,
            },
        ))
    }

    /// Backpropagates `grad_logits`, accumulating gradients in every branch
    /// except those named in `frozen`.
    pub fn backward(&mut self, trace: &NetTrace, grad_logits: Tensor, frozen: &[String]) -> Result<()> {
        let is_frozen = |b: &str| frozen.iter().any(|f| f == b);
        let g_join = self.classifier.backward(&trace.classifier, grad_logits)?;
        let n = g_join.batch();
        let total = g_join.item_len();
        let gw = trace.global.as_ref().map_or(0, |(_, w)| *w);
        let split = |lo: usize, hi: usize| -> Result<Tensor> {
            let mut d = Vec::with_capacity(n * (hi - lo));
            for row in g_join.data().chunks_exact(total) {
                d.extend_from_slice(&row[lo..hi]);
            }
            Tensor::new(&[n, hi - lo], d)
        };
        if let (Some(net), Some((t, w))) = (self.global.as_mut(), trace.global.as_ref()) {
            if !is_frozen(GLOBAL) {
                net.backward(t, split(0, *w)?)?;
            }
        }
        if let (Some(net), Some((t, w))) = (self.semantic.as_mut(), trace.semantic.as_ref()) {
            if !is_frozen(SEMANTIC) {
                net.backward(t, split(gw, gw + w)?)?;
            }
        }
        Ok(())
    }

    /// Predicted class per sample.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        let c = self.num_classes();
        Ok(logits.data().chunks_exact(c).map(argmax).collect())
    }

    /// Mean loss, accuracy and predictions over `examples`, in order.
    /// Batches are evaluated in parallel.
    pub fn score(&self, examples: &[&Example], batch_size: usize) -> Result<Score> {
        if examples.is_empty() {
            return Err(Error::EmptySplit("evaluation".into()));
        }
        let chunks: Vec<&[&Example]> = examples.chunks(batch_size.max(1)).collect();
        let parts = par::map(&chunks, |chunk| -> Result<(f64, Vec<usize>)> {
            let batch = self.make_batch(chunk)?;
            let logits = self.forward(&batch)?;
            let (loss, _) = batch_cross_entropy(&logits, &batch.labels)?;
            let preds = logits.data().chunks_exact(self.num_classes()).map(argmax).collect();
            Ok((loss * chunk.len() as f64, preds))
        });
        let mut total = 0.0;
        let mut predictions = Vec::with_capacity(examples.len());
        for p in parts {
            let (l, preds) = p?;
            total += l;
            predictions.extend(preds);
        }
        let correct = predictions.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
        Ok(Score {
            loss: total / examples.len() as f64,
            accuracy: correct as f64 / examples.len() as f64,
            predictions,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            architecture: serde_json::to_string(&self.arch).expect("architecture serializes"),
            blocks: self
                .named_params()
                .into_iter()
                .map(|(name, t)| ParamBlock {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let arch: Architecture = serde_json::from_str(&ckpt.architecture)
            .map_err(|e| Error::Checkpoint(format!("architecture descriptor: {e}")))?;
        let mut net = Network::new(arch, 0)?;
        let expected = net.named_params().len();
        if ckpt.blocks.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} parameter blocks for an architecture with {expected}",
                ckpt.blocks.len()
            )));
        }
        net.load_blocks(ckpt, "")?;
        Ok(net)
    }

    /// Copies every parameter whose name starts with `prefix` from `ckpt`.
    pub fn load_blocks(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<usize> {
        let mut loaded = 0;
        for (name, t) in self.named_params_mut() {
            if !name.starts_with(prefix) {
                continue;
            }
            let b = ckpt
                .block(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter block {name}")))?;
            if b.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "block {name} has shape {:?}, expected {:?}",
                    b.shape,
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(&b.values);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Network::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// Default semantic-only architecture for a head kind and subset.
pub fn semantic_arch(kind: HeadKind, num_categories: usize, subset: crate::ssf::FeatureSubset, num_classes: usize) -> Architecture {
    Architecture::Semantic {
        head: SemanticHead::of_kind(kind, num_categories, subset),
        num_classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::ssf::FeatureSubset;

    fn example(l: usize, gw: usize, label: usize, seed: usize) -> Example {
        Example {
            id: format!("e{seed}"),
            ssf: (0..l * 5).map(|i| ((i + seed) as f64 * 0.37).sin().abs()).collect(),
            global: Some((0..gw).map(|i| ((i * 3 + seed) as f64 * 0.11).cos()).collect()),
            label,
            split: Split::Train,
        }
    }

    fn fusion(l: usize, gw: usize) -> Architecture {
        Architecture::Fusion {
            input_width: gw,
            global_features: 16,
            head: SemanticHead::nn(l, FeatureSubset::FULL),
            fc3: 32,
            num_classes: 3,
        }
    }

    #[test]
    fn concat_order_is_global_first() {
        assert_eq!(fuse_concat(&[1.0, 2.0], &[3.0]), vec![1.0, 2.0, 3.0]);
        let g = Tensor::new(&[2, 1], vec![1.0, 2.0]).unwrap();
        let s = Tensor::new(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(fuse_concat_batch(&g, &s).unwrap().data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn checkpoint_round_trip_preserves_logits() {
        let net = Network::new(fusion(4, 6), 11).unwrap();
        let ex: Vec<Example> = (0..3).map(|i| example(4, 6, i, i)).collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let batch = net.make_batch(&refs).unwrap();
        let back = Network::from_checkpoint(&Checkpoint::decode(&net.to_checkpoint().encode(), Path::new("x")).unwrap())
            .unwrap();
        assert_eq!(net.forward(&batch).unwrap().data(), back.forward(&batch).unwrap().data());
        assert_eq!(net.branch_hash(GLOBAL), back.branch_hash(GLOBAL));
    }

    #[test]
    fn frozen_branch_gets_no_gradient() {
        let mut net = Network::new(fusion(4, 6), 2).unwrap();
        let ex: Vec<Example> = (0..2).map(|i| example(4, 6, i, i)).collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let batch = net.make_batch(&refs).unwrap();
        let (logits, trace) = net.forward_trace(&batch).unwrap();
        let (_, g) = batch_cross_entropy(&logits, &batch.labels).unwrap();
        net.zero_grad();
        net.backward(&trace, g, &[GLOBAL.to_string()]).unwrap();
        for (name, t) in net.named_params() {
            let nonzero = t.grad().is_some_and(|g| g.iter().any(|v| *v != 0.0));
            if name.starts_with("global.") {
                assert!(!nonzero, "{name}");
            }
        }
        assert!(net
            .named_params()
            .iter()
            .any(|(n, t)| n.starts_with("semantic.") && t.grad().is_some_and(|g| g.iter().any(|v| *v != 0.0))));
    }

    #[test]
    fn missing_global_vector_is_an_error() {
        let net = Network::new(fusion(4, 6), 2).unwrap();
        let mut e = example(4, 6, 0, 0);
        e.global = None;
        assert!(net.make_batch(&[&e]).is_err());
        let e2 = example(4, 5, 0, 0);
        assert!(net.make_batch(&[&e2]).is_err());
    }
}
