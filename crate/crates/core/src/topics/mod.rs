//! Topic discovery over history embeddings and keyword-based candidate
//! filtering.

mod ctfidf;
mod filter;
mod keywords;
mod kmeans;

pub use ctfidf::{ctfidf_keywords, TopicKeywords};
pub use filter::{
    keyword_filter, match_stats, write_match_stats_csv, FilterResult, KeywordFilterSpec, MatchMode,
    MatchStatsRow, DEFAULT_SOFT_TAU,
};
pub use keywords::{parse_keyword_list, shipped_list, KeywordCategory};
pub use kmeans::{cluster_embeddings, KMeansConfig, KMeansResult, TopicAssignment};
