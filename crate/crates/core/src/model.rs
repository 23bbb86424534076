//! Trained scorers of every kind and the self-contained model file.
//!
//! ```text
//! saam v1 variant=<v> d=<d> d_k=<dk> heads=<h> n_anchors=<n> [hidden=.. k=..] threshold=<t> adapter=<0|1>
//! param <block>
//! dim=<cols> count=<rows>
//! ...
//! labels <label> <label> ...
//! dim=<d> count=<n>
//! <anchor id>\t<row>
//! [adapter section]
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::adapt::AdapterMap;
use crate::baselines::{
    knn_probability, knn_scores, no_attention_baseline, KnnConfig, LogisticHead,
};
use crate::embed::io::{
    format_row, format_value, header_usize, header_value, read_embedding_block, write_embeddings,
};
use crate::embed::EmbeddingVector;
use crate::linalg::rows_to_matrix;
use crate::saam::{predict, train, AnchorBank, Block, ParamLayout, SaamConfig, SaamModel, Variant};
use crate::{BinaryLabel, Error, Result};

const MAGIC: &str = "saam v1";

/// Every scorer the pipeline can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "qkv")]
    Qkv,
    #[serde(rename = "k-only")]
    KOnly,
    #[serde(rename = "cossim")]
    Cossim,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "no-attn")]
    NoAttention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Qkv,
        ModelKind::KOnly,
        ModelKind::Cossim,
        ModelKind::Knn,
        ModelKind::NoAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qkv => "qkv",
            ModelKind::KOnly => "k-only",
            ModelKind::Cossim => "cossim",
            ModelKind::Knn => "knn",
            ModelKind::NoAttention => "no-attn",
        }
    }

    pub fn saam_variant(self) -> Option<Variant> {
        match self {
            ModelKind::Qkv => Some(Variant::Qkv),
            ModelKind::KOnly => Some(Variant::KOnly),
            ModelKind::Cossim => Some(Variant::Cossim),
            ModelKind::Knn | ModelKind::NoAttention => None,
        }
    }
}

impl From<Variant> for ModelKind {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Qkv => ModelKind::Qkv,
            Variant::KOnly => ModelKind::KOnly,
            Variant::Cossim => ModelKind::Cossim,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "no-attn" | "no_attn" => Ok(ModelKind::NoAttention),
            other => other
                .parse::<Variant>()
                .map(ModelKind::from)
                .map_err(|_| Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Saam(SaamModel),
    Knn { config: KnnConfig, threshold: f64 },
    NoAttention(LogisticHead),
}

impl Scorer {
    pub fn kind(&self) -> ModelKind {
        match self {
            Scorer::Saam(m) => m.variant().into(),
            Scorer::Knn { .. } => ModelKind::Knn,
            Scorer::NoAttention(_) => ModelKind::NoAttention,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Scorer::Saam(m) => m.threshold,
            Scorer::Knn { threshold, .. } => *threshold,
            Scorer::NoAttention(h) => h.threshold,
        }
    }

    /// Scores in [0, 1], higher meaning more likely positive.
    pub fn predict(&self, bank: &AnchorBank, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            Scorer::Saam(m) => predict(m, bank, x),
            Scorer::Knn { config, .. } => {
                if x.nrows() == 0 {
                    return Ok(Vec::new());
                }
                Ok(knn_scores(x, bank, config)?
                    .into_iter()
                    .map(knn_probability)
                    .collect())
            }
            Scorer::NoAttention(h) => h.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub scorer: Scorer,
    /// Training loss trace; empty for the parameter-free nearest-anchor scorer.
    pub loss_trace: Vec<f64>,
}

/// Train a scorer of the given kind on `bank`. `saam.variant` is ignored in
/// favour of `kind`.
pub fn fit(
    kind: ModelKind,
    bank: &AnchorBank,
    saam: &SaamConfig,
    knn: &KnnConfig,
) -> Result<Fitted> {
    match kind.saam_variant() {
        Some(variant) => {
            let t = train(bank, &SaamConfig { variant, ..*saam })?;
            Ok(Fitted {
                scorer: Scorer::Saam(t.model),
                loss_trace: t.loss_trace,
            })
        }
        None if kind == ModelKind::Knn => {
            if knn.k == 0 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            if !bank.has_both_classes() {
                return Err(Error::DegenerateLabels);
            }
            Ok(Fitted {
                scorer: Scorer::Knn {
                    config: *knn,
                    threshold: saam.threshold,
                },
                loss_trace: Vec::new(),
            })
        }
        None => {
            let t = no_attention_baseline(bank, saam)?;
            Ok(Fitted {
                scorer: Scorer::NoAttention(t.head),
                loss_trace: t.loss_trace,
            })
        }
    }
}

/// Everything needed to score new embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub scorer: Scorer,
    pub bank: AnchorBank,
    /// Map applied to raw embeddings before scoring, if one was trained.
    pub adapter: Option<AdapterMap>,
}

impl SavedModel {
    /// Apply the adapter (if any) and score raw embeddings.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match &self.adapter {
            Some(a) if x.nrows() > 0 => self.scorer.predict(&self.bank, a.apply_matrix(x)?.view()),
            _ => self.scorer.predict(&self.bank, x),
        }
    }
}

fn block_name(b: Block) -> &'static str {
    match b {
        Block::WQ => "w_q",
        Block::WK => "w_k",
        Block::WV => "w_v",
        Block::HeadW => "head_w",
        Block::HeadB => "head_b",
        Block::H1 => "h1",
        Block::B1 => "b1",
        Block::H2 => "h2",
        Block::B2 => "b2",
    }
}

fn write_block<W: Write>(w: &mut W, name: &str, rows: ArrayView2<f64>) -> Result<()> {
    writeln!(w, "param {name}")?;
    writeln!(w, "dim={} count={}", rows.ncols(), rows.nrows())?;
    for (i, row) in rows.axis_iter(Axis(0)).enumerate() {
        writeln!(w, "{i}\t{}", format_row(&row.to_vec()))?;
    }
    Ok(())
}

pub fn write_model<W: Write>(mut w: W, saved: &SavedModel) -> Result<()> {
    let SavedModel {
        scorer,
        bank,
        adapter,
    } = saved;
    let (d, n) = (bank.dim(), bank.len());
    let mut header = format!("{MAGIC} variant={}", scorer.kind());
    match scorer {
        Scorer::Saam(m) => {
            let l = &m.layout;
            if l.d != d || l.n_anchors != n {
                return Err(Error::Precondition(format!(
                    "bank is {n}x{d}, model expects {}x{}",
                    l.n_anchors, l.d
                )));
            }
            header += &format!(
                " d={d} d_k={} heads={} n_anchors={n} hidden={}",
                l.d_k, l.heads, l.hidden
            );
        }
        Scorer::Knn { config, .. } => {
            header += &format!(" d={d} d_k=0 heads=0 n_anchors={n} k={}", config.k)
        }
        Scorer::NoAttention(h) => {
            if h.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: h.dim(),
                });
            }
            header += &format!(" d={d} d_k=0 heads=0 n_anchors={n}");
        }
    }
    writeln!(
        w,
        "{header} threshold={} adapter={}",
        format_value(scorer.threshold()),
        u8::from(adapter.is_some())
    )?;
    match scorer {
        Scorer::Saam(m) => {
            for (b, _) in m.layout.blocks() {
                write_block(&mut w, block_name(b), m.block(b))?;
            }
        }
        Scorer::Knn { .. } => {}
        Scorer::NoAttention(h) => {
            write_block(&mut w, "head_w", h.weights.view().insert_axis(Axis(0)))?;
            write_block(
                &mut w,
                "head_b",
                ArrayView2::from_shape((1, 1), std::slice::from_ref(&h.bias)).expect("1x1"),
            )?;
        }
    }
    let labels: Vec<String> = bank.labels.iter().map(|l| l.to_string()).collect();
    writeln!(w, "labels {}", labels.join(" "))?;
    let rows: Vec<EmbeddingVector> = bank
        .ids
        .iter()
        .zip(bank.rows.axis_iter(Axis(0)))
        .map(|(id, r)| EmbeddingVector {
            id: id.clone(),
            values: r.to_vec(),
        })
        .collect();
    write_embeddings(&mut w, &rows)?;
    if let Some(a) = adapter {
        a.write(&mut w)?;
    }
    Ok(())
}

fn next_line<I>(lines: &mut I, what: &str) -> Result<String>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    lines
        .next()
        .ok_or_else(|| Error::CorruptFile(format!("model file ends before {what}")))?
        .map_err(Error::from)
}

fn read_block<I>(lines: &mut I, name: &str, shape: (usize, usize)) -> Result<Vec<f64>>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let tag = next_line(lines, name)?;
    if tag.trim() != format!("param {name}") {
        return Err(Error::CorruptFile(format!(
            "expected param {name}, got {tag:?}"
        )));
    }
    let block = read_embedding_block(lines)?;
    if block.len() != shape.0 || block.iter().any(|r| r.values.len() != shape.1) {
        return Err(Error::CorruptFile(format!(
            "{name} must be {}x{}",
            shape.0, shape.1
        )));
    }
    let flat: Vec<f64> = block.into_iter().flat_map(|r| r.values).collect();
    if flat.iter().any(|p| !p.is_finite()) {
        return Err(Error::CorruptFile(format!("non-finite value in {name}")));
    }
    Ok(flat)
}

pub fn read_model<R: BufRead>(reader: R) -> Result<SavedModel> {
    let mut lines = reader.lines();
    let header = next_line(&mut lines, "header")?;
    if !header.starts_with(MAGIC) {
        return Err(Error::CorruptFile(format!(
            "not a saam v1 model: {header:?}"
        )));
    }
    let kind: ModelKind = header_value(&header, "variant")
        .ok_or_else(|| Error::CorruptFile("header lacks variant".into()))?
        .parse()
        .map_err(|_| Error::CorruptFile(format!("bad variant in {header:?}")))?;
    let d = header_usize(&header, "d")?;
    let n = header_usize(&header, "n_anchors")?;
    let opt_usize = |key: &str| -> Result<Option<usize>> {
        header_value(&header, key)
            .map(|_| header_usize(&header, key))
            .transpose()
    };
    let threshold = match header_value(&header, "threshold") {
        Some(t) => t
            .parse::<f64>()
            .map_err(|_| Error::CorruptFile(format!("bad threshold {t:?}")))?,
        None => 0.5,
    };
    let has_adapter = header_value(&header, "adapter") == Some("1");

    let scorer = match kind.saam_variant() {
        Some(variant) => {
            let layout = ParamLayout::new(
                variant,
                d,
                header_usize(&header, "d_k")?,
                header_usize(&header, "heads")?,
                opt_usize("hidden")?.unwrap_or(0),
                n,
            );
            let mut params = vec![0.0; layout.len()];
            let blocks: Vec<_> = layout.blocks().collect();
            for (b, shape) in blocks {
                let flat = read_block(&mut lines, block_name(b), shape)?;
                params[layout.range(b)].copy_from_slice(&flat);
            }
            Scorer::Saam(SaamModel {
                layout,
                params,
                threshold,
            })
        }
        None if kind == ModelKind::Knn => Scorer::Knn {
            config: KnnConfig {
                k: opt_usize("k")?.unwrap_or(crate::baselines::DEFAULT_K),
            },
            threshold,
        },
        None => {
            let weights = read_block(&mut lines, "head_w", (1, d))?;
            let bias = read_block(&mut lines, "head_b", (1, 1))?[0];
            Scorer::NoAttention(LogisticHead {
                weights: Array1::from(weights),
                bias,
                threshold,
            })
        }
    };

    let label_line = next_line(&mut lines, "labels")?;
    let labels = label_line
        .strip_prefix("labels")
        .ok_or_else(|| Error::CorruptFile(format!("expected labels line, got {label_line:?}")))?
        .split_whitespace()
        .map(|t| {
            t.parse::<BinaryLabel>()
                .map_err(|_| Error::CorruptFile(format!("bad label {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = read_embedding_block(&mut lines)?;
    if rows.len() != n || labels.len() != n {
        return Err(Error::CorruptFile(format!(
            "header says n_anchors={n}, found {} rows and {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if rows.iter().any(|r| r.values.len() != d) {
        return Err(Error::CorruptFile(format!(
            "bank rows must have width d={d}"
        )));
    }
    let matrix = rows_to_matrix(&rows.iter().map(|r| r.values.as_slice()).collect::<Vec<_>>())?;
    let bank = AnchorBank::new(rows.into_iter().map(|r| r.id).collect(), labels, matrix)
        .map_err(|e| Error::CorruptFile(e.to_string()))?;

    let adapter = if has_adapter {
        Some(AdapterMap::read_from_lines(&mut lines)?)
    } else {
        None
    };
    Ok(SavedModel {
        scorer,
        bank,
        adapter,
    })
}

pub fn save_model(path: impl AsRef<Path>, saved: &SavedModel) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut w = BufWriter::new(f);
    write_model(&mut w, saved)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_model(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::Activation;
    use crate::BinaryLabel::{Negative, Positive};
    use ndarray::array;

    fn bank() -> AnchorBank {
        let rows = array![
            [1.0, 0.1, 0.0],
            [0.9, -0.1, 0.1],
            [-1.0, 0.1, 0.0],
            [-0.9, 0.0, 0.1],
        ];
        let ids = (0..4).map(|i| format!("p{i}:m")).collect();
        AnchorBank::new(ids, vec![Positive, Positive, Negative, Negative], rows).unwrap()
    }

    fn config() -> SaamConfig {
        SaamConfig {
            d_k: 2,
            hidden: 3,
            threshold: 0.35,
            epochs: 5,
            lr: 0.05,
            ..SaamConfig::default()
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert_eq!("k_only".parse::<ModelKind>().unwrap(), ModelKind::KOnly);
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn model_file_round_trip_for_every_kind() {
        let b = bank();
        let x = array![[0.8, 0.3, -0.2], [-0.5, 0.5, 0.5]];
        for kind in ModelKind::ALL {
            let fitted = fit(kind, &b, &config(), &KnnConfig { k: 2 }).unwrap();
            let saved = SavedModel {
                scorer: fitted.scorer,
                bank: b.clone(),
                adapter: (kind == ModelKind::Cossim)
                    .then(|| AdapterMap::identity(3, Activation::Tanh)),
            };
            let mut buf = Vec::new();
            write_model(&mut buf, &saved).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(
                text.starts_with(&format!("saam v1 variant={kind} d=3 ")),
                "{text}"
            );
            let back = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, saved);
            let p = back.score(x.view()).unwrap();
            assert_eq!(p, saved.score(x.view()).unwrap());
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn corrupt_model_files_are_rejected() {
        assert!(matches!(
            read_model("hello\n".as_bytes()),
            Err(Error::CorruptFile(_))
        ));
        let b = bank();
        let fitted = fit(ModelKind::KOnly, &b, &config(), &KnnConfig::default()).unwrap();
        let saved = SavedModel {
            scorer: fitted.scorer,
            bank: b,
            adapter: None,
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &saved).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_model(truncated.as_bytes()),
            Err(Error::CorruptFile(_))
        ));
        let bad = text.replacen("variant=k-only", "variant=svm", 1);
        assert!(matches!(
            read_model(bad.as_bytes()),
            Err(Error::CorruptFile(_))
        ));
    }

    #[test]
    fn knn_fit_checks_labels() {
        let b = bank();
        let one_class = AnchorBank::new(b.ids.clone(), vec![Positive; 4], b.rows.clone()).unwrap();
        assert!(matches!(
            fit(ModelKind::Knn, &one_class, &config(), &KnnConfig::default()),
            Err(Error::DegenerateLabels)
        ));
    }
}
