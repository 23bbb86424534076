use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::linalg::cosine_similarity;
use crate::text::keyword_tokens;
use crate::{Error, Result};

pub const DEFAULT_SOFT_TAU: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Soft,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordFilterSpec {
    pub keywords: Vec<String>,
    pub mode: MatchMode,
    /// Cosine threshold for soft matching; ignored in exact mode.
    pub tau: f64,
}

impl KeywordFilterSpec {
    pub fn exact(keywords: Vec<String>) -> Self {
        Self {
            keywords,
            mode: MatchMode::Exact,
            tau: DEFAULT_SOFT_TAU,
        }
    }

    pub fn soft(keywords: Vec<String>, tau: f64) -> Self {
        Self {
            keywords,
            mode: MatchMode::Soft,
            tau,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() {
            return Err(Error::Config("keyword list is empty".into()));
        }
        if let Some(k) = self.keywords.iter().find(|k| **k != k.to_lowercase()) {
            return Err(Error::Config(format!("keyword {k:?} is not lowercase")));
        }
        if self.mode == MatchMode::Soft && !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterResult {
    /// Indices of matching histories, ascending.
    pub matched: Vec<usize>,
    /// Histories matching each keyword, in keyword-list order.
    pub per_keyword: Vec<(String, usize)>,
    pub total: usize,
    /// `matched.len() / total` (0 for empty input).
    pub matched_fraction: f64,
}

impl FilterResult {
    pub fn keyword_fraction(&self, i: usize) -> f64 {
        fraction(self.per_keyword[i].1, self.total)
    }
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

struct SoftMatcher<'a> {
    vectors: &'a HashMap<String, Vec<f64>>,
    tau: f64,
    cache: HashMap<(String, usize), bool>,
}

impl SoftMatcher<'_> {
    fn matches(&mut self, token: &str, kw_idx: usize, keyword: &str) -> bool {
        // identical tokens always match: cos(v, v) = 1 >= tau
        if token == keyword {
            return true;
        }
        if let Some(&hit) = self.cache.get(&(token.to_string(), kw_idx)) {
            return hit;
        }
        let hit = match (self.vectors.get(token), self.vectors.get(keyword)) {
            (Some(t), Some(k)) => cosine_similarity(t, k)
                .map(|c| c >= self.tau)
                .unwrap_or(false),
            _ => false,
        };
        self.cache.insert((token.to_string(), kw_idx), hit);
        hit
    }
}

/// Match histories against a keyword list. A history matches a keyword when
/// any of its case-folded tokens does; in soft mode a token also matches when
/// its word vector has cosine at least `tau` with the keyword's vector.
pub fn keyword_filter<S: AsRef<str>>(
    histories: &[S],
    spec: &KeywordFilterSpec,
    word_vectors: Option<&HashMap<String, Vec<f64>>>,
) -> Result<FilterResult> {
    spec.validate()?;
    let mut soft = match spec.mode {
        MatchMode::Exact => None,
        MatchMode::Soft => {
            let vectors = word_vectors
                .ok_or_else(|| Error::Config("soft matching needs word vectors".into()))?;
            if let Some(k) = spec.keywords.iter().find(|k| !vectors.contains_key(*k)) {
                return Err(Error::MissingVector(k.clone()));
            }
            Some(SoftMatcher {
                vectors,
                tau: spec.tau,
                cache: HashMap::new(),
            })
        }
    };

    let mut matched = Vec::new();
    let mut counts = vec![0usize; spec.keywords.len()];
    for (i, h) in histories.iter().enumerate() {
        let tokens: BTreeSet<String> = keyword_tokens(h.as_ref()).collect();
        let mut any = false;
        for (k, kw) in spec.keywords.iter().enumerate() {
            let hit = match soft.as_mut() {
                None => tokens.contains(kw),
                Some(m) => tokens.iter().any(|t| m.matches(t, k, kw)),
            };
            if hit {
                counts[k] += 1;
                any = true;
            }
        }
        if any {
            matched.push(i);
        }
    }
    let total = histories.len();
    Ok(FilterResult {
        matched_fraction: fraction(matched.len(), total),
        matched,
        per_keyword: spec.keywords.iter().cloned().zip(counts).collect(),
        total,
    })
}

/// Per-keyword exact and soft match counts; the last row (`*`) counts
/// histories matching any keyword.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchStatsRow {
    pub keyword: String,
    pub exact_count: usize,
    pub exact_pct: f64,
    pub soft: Option<(usize, f64)>,
}

pub fn match_stats<S: AsRef<str>>(
    histories: &[S],
    keywords: &[String],
    tau: f64,
    word_vectors: Option<&HashMap<String, Vec<f64>>>,
) -> Result<Vec<MatchStatsRow>> {
    let exact = keyword_filter(
        histories,
        &KeywordFilterSpec::exact(keywords.to_vec()),
        None,
    )?;
    let soft = word_vectors
        .map(|wv| {
            keyword_filter(
                histories,
                &KeywordFilterSpec::soft(keywords.to_vec(), tau),
                Some(wv),
            )
        })
        .transpose()?;
    let mut rows: Vec<MatchStatsRow> = (0..keywords.len())
        .map(|i| MatchStatsRow {
            keyword: keywords[i].clone(),
            exact_count: exact.per_keyword[i].1,
            exact_pct: exact.keyword_fraction(i),
            soft: soft
                .as_ref()
                .map(|s| (s.per_keyword[i].1, s.keyword_fraction(i))),
        })
        .collect();
    rows.push(MatchStatsRow {
        keyword: "*".into(),
        exact_count: exact.matched.len(),
        exact_pct: exact.matched_fraction,
        soft: soft.as_ref().map(|s| (s.matched.len(), s.matched_fraction)),
    });
    Ok(rows)
}

/// CSV `keyword,exact_count,exact_pct,soft_count,soft_pct`; soft columns are
/// empty when no word vectors were supplied.
pub fn write_match_stats_csv<W: Write>(mut w: W, rows: &[MatchStatsRow]) -> Result<()> {
    writeln!(w, "keyword,exact_count,exact_pct,soft_count,soft_pct")?;
    for r in rows {
        let (sc, sp) = match r.soft {
            Some((c, p)) => (c.to_string(), p.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            r.keyword, r.exact_count, r.exact_pct, sc, sp
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::{shipped_list, KeywordCategory};
    use proptest::prelude::*;

    fn toy_vectors() -> HashMap<String, Vec<f64>> {
        // cos(ally, team) = 0.8, cos(noob, team) = 0
        HashMap::from([
            ("team".to_string(), vec![1.0, 0.0]),
            ("ally".to_string(), vec![0.8, 0.6]),
            ("noob".to_string(), vec![0.0, 1.0]),
        ])
    }

    #[test]
    fn exact_match_on_community_builder_list() {
        let spec = KeywordFilterSpec::exact(shipped_list(KeywordCategory::CommunityBuilderCluster));
        let r = keyword_filter(&["invite me. bet.", "nothing here"], &spec, None).unwrap();
        assert_eq!(r.matched, vec![0]);
        let invite = r.per_keyword.iter().find(|p| p.0 == "invite").unwrap();
        assert_eq!(invite.1, 1);
        assert_eq!(r.matched_fraction, 0.5);
    }

    #[test]
    fn soft_match_via_cosine() {
        let wv = toy_vectors();
        assert!((cosine_similarity(&wv["ally"], &wv["team"]).unwrap() - 0.8).abs() < 1e-12);
        let spec = KeywordFilterSpec::soft(vec!["team".into()], 0.6);
        let r = keyword_filter(&["ally up", "noob"], &spec, Some(&wv)).unwrap();
        assert_eq!(r.matched, vec![0]);
        let strict = KeywordFilterSpec::soft(vec!["team".into()], 0.9);
        assert!(keyword_filter(&["ally up"], &strict, Some(&wv))
            .unwrap()
            .matched
            .is_empty());
    }

    #[test]
    fn unmatched_history() {
        let spec = KeywordFilterSpec::exact(vec!["invite".into()]);
        assert!(keyword_filter(&["gg ez"], &spec, None)
            .unwrap()
            .matched
            .is_empty());
    }

    #[test]
    fn missing_keyword_vector() {
        let spec = KeywordFilterSpec::soft(vec!["regroup".into()], 0.6);
        assert!(matches!(
            keyword_filter(&["x"], &spec, Some(&toy_vectors())),
            Err(Error::MissingVector(k)) if k == "regroup"
        ));
    }

    #[test]
    fn stats_rows_and_csv() {
        let wv = toy_vectors();
        let rows = match_stats(
            &["ally up", "team go", "noob"],
            &["team".to_string()],
            0.6,
            Some(&wv),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].exact_count, 1);
        assert_eq!(rows[0].soft, Some((2, 2.0 / 3.0)));
        let mut buf = Vec::new();
        write_match_stats_csv(&mut buf, &rows[..1]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!(
                "keyword,exact_count,exact_pct,soft_count,soft_pct\nteam,1,{},2,{}\n",
                1.0 / 3.0,
                2.0 / 3.0
            )
        );
    }

    proptest! {
        #[test]
        fn exact_subset_of_soft(
            docs in proptest::collection::vec("(ally|team|noob|gg|up)( (ally|team|noob|gg|up)){0,4}", 1..12),
            tau in 0.05f64..1.0,
        ) {
            let wv = toy_vectors();
            let kws = vec!["team".to_string(), "noob".to_string()];
            let exact = keyword_filter(&docs, &KeywordFilterSpec::exact(kws.clone()), None).unwrap();
            let soft = keyword_filter(&docs, &KeywordFilterSpec::soft(kws, tau), Some(&wv)).unwrap();
            prop_assert!(exact.matched.iter().all(|i| soft.matched.contains(i)));
            prop_assert!((0.0..=1.0).contains(&soft.matched_fraction));
        }
    }
}
