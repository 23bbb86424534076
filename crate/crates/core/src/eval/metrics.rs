use serde::Serialize;

use crate::{BinaryLabel, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub auroc: f64,
    pub f1_bin: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_predictions(predicted: &[bool], labels: &[BinaryLabel]) -> Self {
        let mut cm = Self::default();
        for (&p, l) in predicted.iter().zip(labels) {
            match (p, l.is_positive()) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        cm
    }

    /// Precision, recall and F1 with zero-denominator conventions applied.
    pub fn rates(&self) -> (f64, f64, f64, Conventions) {
        let mut flags = Conventions::default();
        let precision = if self.tp + self.fp == 0 {
            flags.precision_undefined = true;
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let recall = if self.tp + self.fn_ == 0 {
            flags.recall_undefined = true;
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        (precision, recall, f1(precision, recall), flags)
    }
}

/// Which zero-denominator conventions fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Conventions {
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
    /// Only one class present; AUROC reported as 0.5.
    pub auroc_undefined: bool,
}

impl Conventions {
    pub fn any(&self) -> bool {
        self.precision_undefined || self.recall_undefined || self.auroc_undefined
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn check_inputs(scores: &[f64], labels: &[BinaryLabel]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Precondition("scores contain NaN".into()));
    }
    Ok(())
}

/// Area under the ROC curve from mid-ranks (Mann-Whitney U).
pub fn auroc(scores: &[f64], labels: &[BinaryLabel]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid
            * order[i..=j]
                .iter()
                .filter(|&&k| labels[k].is_positive())
                .count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub conventions: Conventions,
}

/// Threshold the scores (positive iff `score >= threshold`) and compute
/// metrics. AUROC falls back to 0.5, flagged, when one class is absent.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[BinaryLabel],
    threshold: f64,
) -> Result<Classification> {
    check_inputs(scores, labels)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let confusion = ConfusionMatrix::from_predictions(&predicted, labels);
    let (precision, recall, f1_bin, mut conventions) = confusion.rates();
    let auroc = match auroc(scores, labels) {
        Ok(a) => a,
        Err(Error::DegenerateLabels) => {
            conventions.auroc_undefined = true;
            0.5
        }
        Err(e) => return Err(e),
    };
    Ok(Classification {
        metrics: Metrics {
            auroc,
            f1_bin,
            precision,
            recall,
        },
        confusion,
        conventions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    /// Cutoff producing this point; `None` for the start point where nothing
    /// is predicted positive.
    pub threshold: Option<f64>,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall at every distinct score, from the highest cutoff
/// down, preceded by the (recall 0, precision 1) start point.
pub fn pr_curve(scores: &[f64], labels: &[BinaryLabel]) -> Result<Vec<PrPoint>> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![PrPoint {
        threshold: None,
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: Some(t),
            recall: tp as f64 / n_pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

pub fn write_pr_csv<W: std::io::Write>(mut w: W, points: &[PrPoint]) -> Result<()> {
    writeln!(w, "threshold,recall,precision")?;
    for p in points {
        let t = p
            .threshold
            .map(crate::embed::io::format_value)
            .unwrap_or_default();
        writeln!(
            w,
            "{t},{},{}",
            crate::embed::io::format_value(p.recall),
            crate::embed::io::format_value(p.precision)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::BinaryLabel::{Negative, Positive};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const PPNN: [BinaryLabel; 4] = [Positive, Positive, Negative, Negative];

    fn brute_force(scores: &[f64], labels: &[BinaryLabel]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if li.is_positive() && !lj.is_positive() {
                    pairs += 1.0;
                    total += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &PPNN).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.4, 0.6, 0.1], &PPNN).unwrap(), 0.75);
        assert_eq!(auroc(&[0.3; 4], &PPNN).unwrap(), 0.5);
        assert!(matches!(
            auroc(&[0.3, 0.2], &[Positive, Positive]),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(auroc(&[], &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn f1_from_published_precision_and_recall() {
        // tp / (tp + fp) = 0.807 and tp / (tp + fn) = 0.816 exactly
        let cm = ConfusionMatrix {
            tp: 27438,
            fp: 6562,
            tn: 1000,
            fn_: 6187,
        };
        let (p, r, f, flags) = cm.rates();
        assert_abs_diff_eq!(p, 0.807, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.816, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.811, epsilon = 1e-3);
        assert!(!flags.any());
    }

    #[test]
    fn conventions_fire_and_are_flagged() {
        let c = classification_metrics(&[0.1, 0.2, 0.3, 0.4], &PPNN, 0.5).unwrap();
        assert_eq!(c.metrics.precision, 0.0);
        assert!(c.conventions.precision_undefined);
        assert_eq!(c.metrics.f1_bin, 0.0);
        let c = classification_metrics(&[0.9, 0.8], &[Negative, Negative], 0.5).unwrap();
        assert!(c.conventions.recall_undefined && c.conventions.auroc_undefined);
        let c = classification_metrics(&[0.9, 0.8, 0.2, 0.1], &PPNN, 0.5).unwrap();
        assert_eq!(
            (c.metrics.precision, c.metrics.recall, c.metrics.f1_bin),
            (1.0, 1.0, 1.0)
        );
        assert!(matches!(
            classification_metrics(&[], &[], 0.5),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = classification_metrics(&[0.5, 0.49], &[Positive, Negative], 0.5).unwrap();
        assert_eq!(
            c.confusion,
            ConfusionMatrix {
                tp: 1,
                fp: 0,
                tn: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn pr_curve_examples() {
        let pts = pr_curve(&[0.9, 0.4, 0.6, 0.1], &PPNN).unwrap();
        let at = pts.iter().find(|p| p.threshold == Some(0.6)).unwrap();
        assert_eq!((at.recall, at.precision), (0.5, 0.5));
        assert_eq!(pts[0].threshold, None);
        assert_eq!(pts.last().unwrap().recall, 1.0);

        let pts = pr_curve(&[0.9, 0.8, 0.2, 0.1], &PPNN).unwrap();
        for p in &pts {
            assert!(pts
                .iter()
                .any(|q| q.recall == p.recall && q.precision == 1.0));
        }
        let mut buf = Vec::new();
        write_pr_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "threshold,recall,precision\n,0.0000000000000000e0,1.0000000000000000e0\n"
        ));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<BinaryLabel>)> {
        (2usize..=50).prop_flat_map(|n| {
            (
                prop::collection::vec(
                    prop_oneof![Just(0.0), Just(0.5), Just(1.0), -1.0f64..1.0],
                    n,
                ),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(|(s, pos)| {
                    let mut l: Vec<BinaryLabel> = pos
                        .iter()
                        .map(|&p| if p { Positive } else { Negative })
                        .collect();
                    l[0] = Positive;
                    l[1] = Negative;
                    (s, l)
                })
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_counting((s, l) in instance()) {
            prop_assert!((auroc(&s, &l).unwrap() - brute_force(&s, &l)).abs() <= 1e-9);
        }

        #[test]
        fn auroc_ignores_monotone_transforms((s, l) in instance()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 2.0).collect();
            prop_assert!((auroc(&s, &l).unwrap() - auroc(&t, &l).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn pr_recall_is_non_decreasing((s, l) in instance()) {
            let pts = pr_curve(&s, &l).unwrap();
            prop_assert!(pts.windows(2).all(|w| w[0].recall <= w[1].recall));
        }

        #[test]
        fn reported_f1_matches_confusion((s, l) in instance(), t in 0.01f64..0.99) {
            let c = classification_metrics(&s, &l, t).unwrap();
            let cm = c.confusion;
            prop_assert_eq!(cm.total(), s.len());
            let p = if cm.tp + cm.fp == 0 { 0.0 } else { cm.tp as f64 / (cm.tp + cm.fp) as f64 };
            let r = cm.tp as f64 / (cm.tp + cm.fn_) as f64;
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            prop_assert_eq!(c.metrics.f1_bin, f);
        }
    }
}
