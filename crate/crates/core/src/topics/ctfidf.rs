use std::collections::BTreeMap;

use crate::text::keyword_tokens;
use crate::{Error, Result};

/// Ranked `(term, score)` lists, indexed by topic id.
pub type TopicKeywords = Vec<Vec<(String, f64)>>;

/// Class-based TF-IDF.
///
/// Each topic's documents are pooled into one class document. A term's score
/// in topic `c` is `tf(t, c) * ln(1 + A / f(t))`, where `tf` is the term count
/// in `c` over the token count of `c`, `f(t)` the term's corpus count and `A`
/// the mean token count per topic. Terms are ranked by score, ties broken
/// lexicographically; topics without tokens get an empty list.
pub fn ctfidf_keywords<S: AsRef<str>>(
    assignment: &[usize],
    documents: &[S],
    n_topics: usize,
    top_m: usize,
) -> Result<TopicKeywords> {
    if assignment.len() != documents.len() {
        return Err(Error::Precondition(format!(
            "{} assignments for {} documents",
            assignment.len(),
            documents.len()
        )));
    }
    if top_m == 0 {
        return Err(Error::Config("top_m must be at least 1".into()));
    }
    if let Some(&bad) = assignment.iter().find(|&&t| t >= n_topics) {
        return Err(Error::Precondition(format!(
            "topic id {bad} out of range for {n_topics} topics"
        )));
    }

    let mut per_topic: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); n_topics];
    let mut corpus: BTreeMap<String, usize> = BTreeMap::new();
    for (&topic, doc) in assignment.iter().zip(documents) {
        for tok in keyword_tokens(doc.as_ref()) {
            *corpus.entry(tok.clone()).or_default() += 1;
            *per_topic[topic].entry(tok).or_default() += 1;
        }
    }
    let total_tokens: usize = corpus.values().sum();
    let avg = total_tokens as f64 / n_topics.max(1) as f64;

    Ok(per_topic
        .into_iter()
        .map(|counts| {
            let topic_tokens: usize = counts.values().sum();
            let mut scored: Vec<(String, f64)> = counts
                .into_iter()
                .map(|(term, c)| {
                    let tf = c as f64 / topic_tokens as f64;
                    let idf = (1.0 + avg / corpus[&term] as f64).ln();
                    (term, tf * idf)
                })
                .collect();
            // BTreeMap iteration is already lexicographic; a stable sort keeps it for ties
            scored.sort_by(|a, b| b.1.total_cmp(&a.1));
            scored.truncate(top_m);
            scored
        })
        .collect())
}
