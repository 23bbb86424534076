use std::str::FromStr;

use crate::{Error, Result};

/// Bundled keyword lists, one per prosocial category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeywordCategory {
    Sportsmanship,
    Sharing,
    GoodCommunicator,
    Reciprocity,
    CommunityBuilder,
    /// Top terms of the discovered community-builder cluster.
    CommunityBuilderCluster,
}

impl KeywordCategory {
    pub const ALL: [KeywordCategory; 6] = [
        KeywordCategory::Sportsmanship,
        KeywordCategory::Sharing,
        KeywordCategory::GoodCommunicator,
        KeywordCategory::Reciprocity,
        KeywordCategory::CommunityBuilder,
        KeywordCategory::CommunityBuilderCluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KeywordCategory::Sportsmanship => "sportsmanship",
            KeywordCategory::Sharing => "sharing",
            KeywordCategory::GoodCommunicator => "good-communicator",
            KeywordCategory::Reciprocity => "reciprocity",
            KeywordCategory::CommunityBuilder => "community-builder",
            KeywordCategory::CommunityBuilderCluster => "community-builder-cluster",
        }
    }

    fn raw(self) -> &'static str {
        match self {
            KeywordCategory::Sportsmanship => include_str!("../../data/keywords/sportsmanship.txt"),
            KeywordCategory::Sharing => include_str!("../../data/keywords/sharing.txt"),
            KeywordCategory::GoodCommunicator => {
                include_str!("../../data/keywords/good_communicator.txt")
            }
            KeywordCategory::Reciprocity => include_str!("../../data/keywords/reciprocity.txt"),
            KeywordCategory::CommunityBuilder => {
                include_str!("../../data/keywords/community_builder.txt")
            }
            KeywordCategory::CommunityBuilderCluster => {
                include_str!("../../data/keywords/community_builder_cluster.txt")
            }
        }
    }
}

impl FromStr for KeywordCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KeywordCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown keyword list {s:?}")))
    }
}

/// One lowercase term per line; `#` starts a comment. Duplicates are dropped,
/// first occurrence wins.
pub fn parse_keyword_list(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let term = line.split('#').next().unwrap_or("").trim().to_lowercase();
        if !term.is_empty() && !out.contains(&term) {
            out.push(term);
        }
    }
    out
}

pub fn shipped_list(category: KeywordCategory) -> Vec<String> {
    parse_keyword_list(category.raw())
}
