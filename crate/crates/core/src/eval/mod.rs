//! Split protocol, metrics and the experiment drivers.

mod experiment;
mod metrics;
pub mod report;
mod split;

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::{BinaryLabel, Error, Result};

pub use experiment::{
    ablation_suite, all_as_anchors, fit_pipeline, run_experiment, AblationReport, AblationRow,
    Aggregate, EvalReport, PipelineConfig, PipelineFit, SplitReport,
};
pub use metrics::{
    auroc, classification_metrics, f1, pr_curve, write_pr_csv, Classification, ConfusionMatrix,
    Conventions, Metrics, PrPoint,
};
pub use split::{stratified_split, Split, SplitSpec};

/// Annotation labels before binarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawLabel {
    Prosocial,
    Unclear,
    NotProsocial,
}

impl RawLabel {
    /// Unclear items join the not-prosocial class.
    pub fn binarize(self) -> BinaryLabel {
        match self {
            RawLabel::Prosocial => BinaryLabel::Positive,
            RawLabel::Unclear | RawLabel::NotProsocial => BinaryLabel::Negative,
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RawLabel::Prosocial => "prosocial",
            RawLabel::Unclear => "unclear",
            RawLabel::NotProsocial => "not-prosocial",
        })
    }
}

impl FromStr for RawLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['_', ' '], "-")
            .as_str()
        {
            "prosocial" => Ok(RawLabel::Prosocial),
            "unclear" => Ok(RawLabel::Unclear),
            "not-prosocial" => Ok(RawLabel::NotProsocial),
            _ => Err(Error::BadLabel(s.to_string())),
        }
    }
}

pub fn binarize(label: &str) -> Result<BinaryLabel> {
    Ok(label.parse::<RawLabel>()?.binarize())
}

/// Accept annotation labels or already-binary ones.
pub fn parse_any_label(label: &str) -> Result<BinaryLabel> {
    binarize(label).or_else(|_| label.parse::<BinaryLabel>())
}

/// One annotated history before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub id: String,
    pub label: BinaryLabel,
    pub keyword: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub label: BinaryLabel,
    pub keyword: String,
    pub embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLabeledLine {
    id: String,
    label: String,
    #[serde(default)]
    keyword: String,
    #[serde(default)]
    text: String,
}

/// Parse `{id, label, keyword, text}` lines. Blank lines are skipped; any
/// malformed line is an error naming its 1-based line number.
pub fn parse_labeled_jsonl<R: BufRead>(reader: R) -> Result<Vec<LabeledText>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLabeledLine = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptFile(format!("line {}: {e}", i + 1)))?;
        let label = parse_any_label(&raw.label)
            .map_err(|_| Error::BadLabel(format!("line {}: {:?}", i + 1, raw.label)))?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::CorruptFile(format!(
                "line {}: duplicate id {:?}",
                i + 1,
                raw.id
            )));
        }
        out.push(LabeledText {
            id: raw.id,
            label,
            keyword: raw.keyword,
            text: raw.text,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Join labeled texts with their vectors by id.
pub fn attach_embeddings(
    texts: &[LabeledText],
    vectors: &[EmbeddingVector],
) -> Result<Vec<LabeledRecord>> {
    let by_id: std::collections::HashMap<&str, &EmbeddingVector> =
        vectors.iter().map(|v| (v.id.as_str(), v)).collect();
    texts
        .iter()
        .map(|t| {
            let v = by_id
                .get(t.id.as_str())
                .ok_or_else(|| Error::MissingVector(t.id.clone()))?;
            Ok(LabeledRecord {
                id: t.id.clone(),
                label: t.label,
                keyword: t.keyword.clone(),
                embedding: v.values.clone(),
            })
        })
        .collect()
}
