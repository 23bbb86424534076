use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::{
    classification_metrics, pr_curve, ConfusionMatrix, Conventions, Metrics, PrPoint,
};
use super::split::{stratified_split, SplitSpec};
use super::LabeledRecord;
use crate::adapt::{sample_and_pair, train_adapter, AdapterConfig, AdapterMap, AnchorExample};
use crate::baselines::KnnConfig;
use crate::linalg::rows_to_matrix;
use crate::model::{fit, ModelKind, SavedModel};
use crate::rng::derive_seed;
use crate::saam::{AnchorBank, SaamConfig};
use crate::{BinaryLabel, Error, Result};

const PAIR_TAG: u64 = 0x5A17_0002;
const ADAPTER_TAG: u64 = 0x5A17_0003;
const MODEL_TAG: u64 = 0x5A17_0004;

/// Everything that determines an experiment's outcome. Seeds inside
/// `adapter` and `saam` are replaced per split by values derived from
/// `split.base_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kind: ModelKind,
    pub split: SplitSpec,
    pub adapter: AdapterConfig,
    pub saam: SaamConfig,
    pub knn: KnnConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::KOnly,
            split: SplitSpec::default(),
            adapter: AdapterConfig::default(),
            saam: SaamConfig::default(),
            knn: KnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub index: usize,
    pub seed: u64,
    pub n_anchors: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub conventions: Conventions,
    /// First and last adapter training loss.
    pub adapter_loss: [f64; 2],
    /// First and last scorer training loss; absent for parameter-free scorers.
    pub train_loss: Option<[f64; 2]>,
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: Metrics,
    /// Sample standard deviation (n - 1 denominator; 0 for a single split).
    pub std: Metrics,
}

impl Aggregate {
    pub fn from_metrics(per_split: &[Metrics]) -> Self {
        let stat = |f: fn(&Metrics) -> f64| -> (f64, f64) {
            let xs: Vec<f64> = per_split.iter().map(f).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        };
        let (a, sa) = stat(|m| m.auroc);
        let (f, sf) = stat(|m| m.f1_bin);
        let (p, sp) = stat(|m| m.precision);
        let (r, sr) = stat(|m| m.recall);
        Self {
            mean: Metrics {
                auroc: a,
                f1_bin: f,
                precision: p,
                recall: r,
            },
            std: Metrics {
                auroc: sa,
                f1_bin: sf,
                precision: sp,
                recall: sr,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Invocation details supplied by the caller, echoed verbatim.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    pub config: PipelineConfig,
    pub splits: Vec<SplitReport>,
    pub aggregate: Aggregate,
}

/// A trained pipeline: adapter, bank and scorer, plus their loss traces.
#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub saved: SavedModel,
    pub adapter_loss: Vec<f64>,
    pub train_loss: Vec<f64>,
}

pub(crate) fn to_anchors(records: &[LabeledRecord], idx: &[usize]) -> Vec<AnchorExample> {
    idx.iter()
        .map(|&i| AnchorExample {
            id: records[i].id.clone(),
            embedding: records[i].embedding.clone(),
            label: records[i].label,
            keyword: records[i].keyword.clone(),
        })
        .collect()
}

fn matrix_of(records: &[LabeledRecord], idx: &[usize]) -> Result<Array2<f64>> {
    let rows: Vec<&[f64]> = idx
        .iter()
        .map(|&i| records[i].embedding.as_slice())
        .collect();
    rows_to_matrix(&rows)
}

/// Adapt the anchors, build the bank and train the scorer. `seed` drives
/// every random choice.
pub fn fit_pipeline(
    anchors: &[AnchorExample],
    config: &PipelineConfig,
    seed: u64,
) -> Result<PipelineFit> {
    if anchors.is_empty() {
        return Err(Error::NoAnchors);
    }
    let d = anchors[0].embedding.len();
    let (adapter, adapter_loss) = if config.adapter.epochs == 0 {
        (
            AdapterMap::identity(d, config.adapter.activation),
            Vec::new(),
        )
    } else {
        let pairs = sample_and_pair(
            anchors,
            config.adapter.per_class,
            derive_seed(seed, PAIR_TAG),
        )?;
        let cfg = AdapterConfig {
            seed: derive_seed(seed, ADAPTER_TAG),
            ..config.adapter
        };
        let t = train_adapter(&pairs, anchors, &cfg)?;
        (t.map, t.loss_trace)
    };
    let raw = rows_to_matrix(
        &anchors
            .iter()
            .map(|a| a.embedding.as_slice())
            .collect::<Vec<_>>(),
    )?;
    let bank = AnchorBank::new(
        anchors.iter().map(|a| a.id.clone()).collect(),
        anchors.iter().map(|a| a.label).collect(),
        adapter.apply_matrix(raw.view())?,
    )?;
    let saam = SaamConfig {
        seed: derive_seed(seed, MODEL_TAG),
        ..config.saam
    };
    let fitted = fit(config.kind, &bank, &saam, &config.knn)?;
    Ok(PipelineFit {
        saved: SavedModel {
            scorer: fitted.scorer,
            bank,
            adapter: Some(adapter),
        },
        adapter_loss,
        train_loss: fitted.loss_trace,
    })
}

/// Treat every record as an anchor, e.g. to train a model for deployment.
pub fn all_as_anchors(records: &[LabeledRecord]) -> Vec<AnchorExample> {
    to_anchors(records, &(0..records.len()).collect::<Vec<_>>())
}

fn first_last(trace: &[f64]) -> Option<[f64; 2]> {
    Some([*trace.first()?, *trace.last()?])
}

fn run_split(
    records: &[LabeledRecord],
    labels: &[BinaryLabel],
    config: &PipelineConfig,
    index: usize,
) -> Result<SplitReport> {
    let split = stratified_split(labels, &config.split, index)?;
    let seed = config.split.split_seed(index);
    let anchors = to_anchors(records, &split.anchor);
    let fitted = fit_pipeline(&anchors, config, seed)?;
    let test = matrix_of(records, &split.test)?;
    let scores = fitted.saved.score(test.view())?;
    let test_labels: Vec<BinaryLabel> = split.test.iter().map(|&i| labels[i]).collect();
    let c = classification_metrics(&scores, &test_labels, fitted.saved.scorer.threshold())?;
    Ok(SplitReport {
        index,
        seed,
        n_anchors: split.anchor.len(),
        n_test: split.test.len(),
        metrics: c.metrics,
        confusion: c.confusion,
        conventions: c.conventions,
        adapter_loss: first_last(&fitted.adapter_loss).unwrap_or([0.0; 2]),
        train_loss: first_last(&fitted.train_loss),
        pr_curve: pr_curve(&scores, &test_labels)?,
    })
}

fn check_records(records: &[LabeledRecord]) -> Result<()> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let d = first.embedding.len();
    if d == 0 {
        return Err(Error::Precondition("records have empty embeddings".into()));
    }
    if let Some(r) = records.iter().find(|r| r.embedding.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            actual: r.embedding.len(),
        });
    }
    Ok(())
}

/// Run every split (in parallel) and aggregate. Deterministic given the
/// records and `config`.
pub fn run_experiment(records: &[LabeledRecord], config: &PipelineConfig) -> Result<EvalReport> {
    check_records(records)?;
    config.split.validate()?;
    let labels: Vec<BinaryLabel> = records.iter().map(|r| r.label).collect();
    let results: Vec<Result<SplitReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.split.n_splits)
            .map(|i| {
                let labels = &labels;
                s.spawn(move || run_split(records, labels, config, i).map_err(|e| e.in_split(i)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    let splits = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_metrics(&splits.iter().map(|s| s.metrics).collect::<Vec<_>>());
    Ok(EvalReport {
        plan: None,
        config: *config,
        splits,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub config: PipelineConfig,
    pub per_split_auroc: Vec<f64>,
    pub aggregate: Aggregate,
    /// `(row mean AUROC - full mean AUROC) / full mean AUROC`.
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    pub config: PipelineConfig,
    pub rows: Vec<AblationRow>,
}

/// The five ablation rows: no attention, no adaptation, 10% and 15% anchors,
/// and the full pipeline as configured.
pub fn ablation_suite(
    records: &[LabeledRecord],
    config: &PipelineConfig,
) -> Result<AblationReport> {
    let with_frac = |f: f64| PipelineConfig {
        split: SplitSpec {
            anchor_frac: f,
            ..config.split
        },
        ..*config
    };
    let variants = vec![
        (
            "w/o attention".to_string(),
            PipelineConfig {
                kind: ModelKind::NoAttention,
                ..*config
            },
        ),
        (
            "w/o fine-tuning".to_string(),
            PipelineConfig {
                adapter: AdapterConfig {
                    epochs: 0,
                    ..config.adapter
                },
                ..*config
            },
        ),
        ("10% anchors".to_string(), with_frac(0.10)),
        ("15% anchors".to_string(), with_frac(0.15)),
        (
            format!("full ({:.0}% anchors)", config.split.anchor_frac * 100.0),
            *config,
        ),
    ];
    let reports = variants
        .iter()
        .map(|(_, c)| run_experiment(records, c))
        .collect::<Result<Vec<_>>>()?;
    let full = reports.last().expect("five rows").aggregate.mean.auroc;
    let rows = variants
        .into_iter()
        .zip(reports)
        .map(|((name, cfg), r)| AblationRow {
            name,
            config: cfg,
            per_split_auroc: r.splits.iter().map(|s| s.metrics.auroc).collect(),
            aggregate: r.aggregate,
            relative_change: (r.aggregate.mean.auroc - full) / full,
        })
        .collect();
    Ok(AblationReport {
        plan: None,
        config: *config,
        rows,
    })
}
