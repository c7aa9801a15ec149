//! Every feature subset crossed with both semantic heads, trained under one
//! shared configuration.

use serde::Serialize;

use crate::data::{Dataset, Split};
use crate::error::Result;
use crate::models::{train, Architecture, HeadKind, Network, SemanticHead, Stage, TrainPlan};
use crate::nn::AdamConfig;
use crate::par;
use crate::ssf::FeatureSubset;

/// Heads of each subset row, in table order.
pub const ABLATION_HEADS: [HeadKind; 2] = [HeadKind::Cnn, HeadKind::Nn];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub subsets: Vec<FeatureSubset>,
}

impl AblationConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        AblationConfig {
            epochs,
            batch_size: crate::data::batch::DEFAULT_BATCH,
            optimizer: AdamConfig::default(),
            seed,
            subsets: FeatureSubset::ABLATION_ORDER.to_vec(),
        }
    }

    fn cells(&self) -> Vec<(FeatureSubset, HeadKind)> {
        self.subsets
            .iter()
            .flat_map(|&s| ABLATION_HEADS.iter().map(move |&h| (s, h)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    /// Row label such as `PC&AP-CNN`.
    pub label: String,
    pub subset: String,
    pub head: HeadKind,
    pub params: Option<usize>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, label: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let w = self.cells.iter().map(|c| c.label.len()).max().unwrap_or(0).max(5);
        let mut s = format!("{:<w$}  {:>10}  {:>8}\n", "model", "params", "accuracy");
        for c in &self.cells {
            let params = c.params.map_or("-".to_string(), |p| p.to_string());
            match (c.accuracy, &c.error) {
                (Some(a), _) => s.push_str(&format!("{:<w$}  {params:>10}  {:>8.4}\n", c.label, a)),
                (None, Some(e)) => s.push_str(&format!("{:<w$}  {params:>10}  {:>8}  {e}\n", c.label, "error")),
                (None, None) => s.push_str(&format!("{:<w$}  {params:>10}  {:>8}\n", c.label, "-")),
            }
        }
        s
    }
}

fn run_cell(data: &Dataset, cfg: &AblationConfig, subset: FeatureSubset, head: HeadKind) -> Result<(usize, f64)> {
    let net = Network::new(
        Architecture::Semantic {
            head: SemanticHead::of_kind(head, data.num_categories, subset),
            num_classes: data.num_classes,
        },
        cfg.seed,
    )?;
    let params = net.param_count();
    let plan = TrainPlan {
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        ..TrainPlan::new(Stage::Semantic, cfg.epochs, cfg.seed)
    };
    let out = train(net, data, &plan, |_| {})?;
    let acc = crate::eval::evaluate(&out.network, data, Split::Test, cfg.batch_size)?.accuracy;
    Ok((params, acc))
}

/// Trains and scores every cell. Cells run in parallel; a failing cell is
/// recorded with its error and the rest still run. Output order is fixed.
pub fn run_ablation(data: &Dataset, cfg: &AblationConfig) -> AblationReport {
    let cells = cfg.cells();
    let results = par::map(&cells, |&(subset, head)| run_cell(data, cfg, subset, head));
    let cells = cells
        .into_iter()
        .zip(results)
        .map(|((subset, head), r)| {
            let label = format!("{}-{}", subset.label(), head.label());
            let (params, accuracy, error) = match r {
                Ok((p, a)) => (Some(p), Some(a), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            AblationCell {
                label,
                subset: subset.label(),
                head,
                params,
                accuracy,
                error,
            }
        })
        .collect();
    AblationReport {
        config: cfg.clone(),
        cells,
    }
}
