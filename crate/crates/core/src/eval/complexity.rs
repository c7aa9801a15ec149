//! Parameter counts, analytic FLOPs and measured single-sample throughput.

use std::time::Instant;

use serde::Serialize;

use crate::data::{Example, Split};
use crate::error::Result;
use crate::models::{Architecture, HeadKind, Network, SemanticHead};
use crate::ssf::{FeatureSubset, SSF_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub model: String,
    pub params: usize,
    /// Analytic FLOPs per sample, a multiply-accumulate counting as 2.
    pub flops: u64,
    /// Samples per second at batch size 1.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub num_categories: usize,
    pub num_classes: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub rows: Vec<ComplexityRow>,
}

impl ComplexityReport {
    pub fn row(&self, model: &str) -> Option<&ComplexityRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<10}  {:>12}  {:>10}  {:>14}\n",
            "model", "params (M)", "GFLOPs", "samples/s"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10}  {:>12.4}  {:>10.4}  {:>14.1}\n",
                r.model,
                r.params as f64 / 1e6,
                r.flops as f64 / 1e9,
                r.throughput
            ));
        }
        s
    }
}

/// Forward passes per second on a single fixed sample, after `warmup` passes.
pub fn measure_throughput(net: &Network, warmup: usize, iterations: usize) -> Result<f64> {
    let arch = net.architecture();
    let l = arch.head().map_or(1, |h| h.num_categories);
    let ex = Example {
        id: "probe".into(),
        ssf: (0..l * SSF_COLUMNS).map(|i| (i as f64 * 0.618).fract()).collect(),
        global: arch.global_input().map(|w| (0..w).map(|i| (i as f64 * 0.414).fract()).collect()),
        label: 0,
        split: Split::Test,
    };
    let batch = net.make_batch(&[&ex])?;
    for _ in 0..warmup {
        std::hint::black_box(net.forward(&batch)?);
    }
    let start = Instant::now();
    for _ in 0..iterations {
        std::hint::black_box(net.forward(&batch)?);
    }
    Ok(iterations as f64 / start.elapsed().as_secs_f64())
}

/// SSF-CNN and SSF-NN on the full feature matrix, each with its classifier.
pub fn measure_complexity(
    num_categories: usize,
    num_classes: usize,
    warmup: usize,
    iterations: usize,
    seed: u64,
) -> Result<ComplexityReport> {
    let mut rows = Vec::new();
    for kind in [HeadKind::Cnn, HeadKind::Nn] {
        let net = Network::new(
            Architecture::Semantic {
                head: SemanticHead::of_kind(kind, num_categories, FeatureSubset::FULL),
                num_classes,
            },
            seed,
        )?;
        rows.push(ComplexityRow {
            model: format!("SSFs-{}", kind.label()),
            params: net.param_count(),
            flops: net.flops()?,
            throughput: measure_throughput(&net, warmup, iterations)?,
        });
    }
    Ok(ComplexityReport {
        num_categories,
        num_classes,
        warmup,
        iterations,
        rows,
    })
}
