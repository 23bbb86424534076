//! Chat log ingestion and cleaning.
//!
//! Raw chat arrives as JSONL, one message per line. Messages are grouped per
//! (player, match); a group is discarded when any message carries contact
//! spam (email, phone number, URL), when every message in the group has the
//! same character length, or when the platform sanitizer masked part of the
//! text with asterisks. Surviving groups are concatenated in `seq` order and
//! kept only when the result is longer than ten words.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::word_count;
use crate::{Error, Result};

pub const MESSAGE_SEPARATOR: &str = ". ";
pub const MIN_WORDS_EXCLUSIVE: usize = 10;

static EMAIL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap());
static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(https?://|www\.)\S+").unwrap());
// seven or more digits, optionally separated by - . ( ) or spaces
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d(?:[-. ()]*\d){6,}").unwrap());
static SANITIZED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\*{3,}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub player_id: String,
    pub match_id: String,
    pub seq: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordErrorReason {
    InvalidJson(String),
    MissingField(&'static str),
    InvalidField(&'static str),
    EmptyText,
    DuplicateKey,
}

impl fmt::Display for RecordErrorReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordErrorReason::InvalidJson(e) => write!(f, "invalid-json: {e}"),
            RecordErrorReason::MissingField(name) => write!(f, "missing-field: {name}"),
            RecordErrorReason::InvalidField(name) => write!(f, "invalid-field: {name}"),
            RecordErrorReason::EmptyText => f.write_str("empty-text"),
            RecordErrorReason::DuplicateKey => f.write_str("duplicate-key"),
        }
    }
}

/// A rejected input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub reason: RecordErrorReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SpamFlags {
    pub has_email: bool,
    pub has_phone: bool,
    pub has_url: bool,
    pub zero_length_variance: bool,
}

impl SpamFlags {
    pub fn is_spam(&self) -> bool {
        self.has_email || self.has_phone || self.has_url || self.zero_length_variance
    }

    fn scan(&mut self, text: &str) {
        self.has_email |= EMAIL_RE.is_match(text);
        self.has_phone |= PHONE_RE.is_match(text);
        self.has_url |= URL_RE.is_match(text);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlayerMatchHistory {
    pub player_id: String,
    pub match_id: String,
    pub message_count: usize,
    pub text: String,
    pub word_count: usize,
    pub char_count: usize,
}

impl PlayerMatchHistory {
    /// Stable identifier used when histories are embedded.
    pub fn id(&self) -> String {
        format!("{}:{}", self.player_id, self.match_id)
    }
}

pub fn has_sanitized_text(text: &str) -> bool {
    SANITIZED_RE.is_match(text)
}

fn field_str(
    obj: &serde_json::Map<String, serde_json::Value>,
    name: &'static str,
) -> Result<String, RecordErrorReason> {
    match obj.get(name) {
        None | Some(serde_json::Value::Null) => Err(RecordErrorReason::MissingField(name)),
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(serde_json::Value::Number(n)) if name != "text" => Ok(n.to_string()),
        Some(_) => Err(RecordErrorReason::InvalidField(name)),
    }
}

fn parse_record(line: &str) -> Result<ChatMessage, RecordErrorReason> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordErrorReason::InvalidJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| RecordErrorReason::InvalidJson("not an object".into()))?;
    let player_id = field_str(obj, "player_id")?;
    let match_id = field_str(obj, "match_id")?;
    let seq = match obj.get("seq") {
        None | Some(serde_json::Value::Null) => return Err(RecordErrorReason::MissingField("seq")),
        Some(v) => v.as_u64().ok_or(RecordErrorReason::InvalidField("seq"))?,
    };
    let text = field_str(obj, "text")?;
    let text = text.trim();
    if text.is_empty() {
        return Err(RecordErrorReason::EmptyText);
    }
    Ok(ChatMessage {
        player_id,
        match_id,
        seq,
        text: text.to_string(),
    })
}

/// Parse a JSONL chat log. Bad lines are collected, never fatal; blank lines
/// are skipped.
pub fn parse_chat_log<R: BufRead>(reader: R) -> Result<(Vec<ChatMessage>, Vec<RecordError>)> {
    let mut messages = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(msg) => {
                if seen.insert((msg.player_id.clone(), msg.match_id.clone(), msg.seq)) {
                    messages.push(msg);
                } else {
                    errors.push(RecordError {
                        line: i + 1,
                        reason: RecordErrorReason::DuplicateKey,
                    });
                }
            }
            Err(reason) => errors.push(RecordError {
                line: i + 1,
                reason,
            }),
        }
    }
    Ok((messages, errors))
}

/// Spam flags for one player-match group.
pub fn spam_flags(group: &[&ChatMessage]) -> Result<SpamFlags> {
    let first = group
        .first()
        .ok_or_else(|| Error::Precondition("spam_flags needs a non-empty group".into()))?;
    if group
        .iter()
        .any(|m| m.player_id != first.player_id || m.match_id != first.match_id)
    {
        return Err(Error::Precondition(
            "spam_flags group mixes player-match keys".into(),
        ));
    }
    let mut flags = SpamFlags::default();
    for m in group {
        flags.scan(&m.text);
    }
    if group.len() >= 2 {
        let len0 = first.text.chars().count();
        flags.zero_length_variance = group.iter().all(|m| m.text.chars().count() == len0);
    }
    Ok(flags)
}

/// A player-match group before the word-count threshold.
#[derive(Debug, Clone)]
pub struct GroupSummary {
    pub history: PlayerMatchHistory,
    pub flags: SpamFlags,
    pub sanitized: bool,
}

impl GroupSummary {
    pub fn is_clean(&self) -> bool {
        !self.flags.is_spam() && !self.sanitized
    }
}

/// Group messages per (player, match) in key order, concatenating each group
/// in `seq` order. No filtering is applied.
pub fn group_histories(messages: &[ChatMessage]) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&ChatMessage>> = BTreeMap::new();
    for m in messages {
        groups
            .entry((m.player_id.as_str(), m.match_id.as_str()))
            .or_default()
            .push(m);
    }
    groups
        .into_values()
        .map(|mut group| {
            group.sort_by_key(|m| m.seq);
            let mut flags = spam_flags(&group)?;
            let sanitized = group.iter().any(|m| has_sanitized_text(&m.text));
            let text = group
                .iter()
                .map(|m| m.text.as_str())
                .collect::<Vec<_>>()
                .join(MESSAGE_SEPARATOR);
            // separators can join digit runs from neighbouring messages
            flags.scan(&text);
            let history = PlayerMatchHistory {
                player_id: group[0].player_id.clone(),
                match_id: group[0].match_id.clone(),
                message_count: group.len(),
                word_count: word_count(&text),
                char_count: text.chars().count(),
                text,
            };
            Ok(GroupSummary {
                history,
                flags,
                sanitized,
            })
        })
        .collect()
}

/// Clean histories: spam and sanitized groups dropped, then groups of at most
/// ten words dropped.
pub fn aggregate_histories(messages: &[ChatMessage]) -> Result<Vec<PlayerMatchHistory>> {
    Ok(group_histories(messages)?
        .into_iter()
        .filter(|g| g.is_clean() && g.history.word_count > MIN_WORDS_EXCLUSIVE)
        .map(|g| g.history)
        .collect())
}

pub const HISTOGRAM_BUCKETS: [(&str, usize, usize); 8] = [
    ("<5", 0, 5),
    ("5-10", 5, 10),
    ("10-20", 10, 20),
    ("20-50", 20, 50),
    ("50-100", 50, 100),
    ("100-500", 100, 500),
    ("500-1k", 500, 1000),
    ("1k+", 1000, usize::MAX),
];

/// Share of histories per word-count bucket, buckets left-closed.
pub fn word_count_histogram<I>(word_counts: I) -> Result<Vec<(&'static str, f64)>>
where
    I: IntoIterator<Item = usize>,
{
    let mut counts = [0usize; HISTOGRAM_BUCKETS.len()];
    let mut total = 0usize;
    for wc in word_counts {
        let idx = HISTOGRAM_BUCKETS
            .iter()
            .position(|&(_, lo, hi)| wc >= lo && wc < hi)
            .expect("buckets cover all counts");
        counts[idx] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(HISTOGRAM_BUCKETS
        .iter()
        .zip(counts)
        .map(|(&(label, _, _), c)| (label, c as f64 / total as f64))
        .collect())
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::CorruptFile(format!(
                    "bad escape sequence \\{}",
                    other.map(String::from).unwrap_or_default()
                )))
            }
        }
    }
    Ok(out)
}

/// Write histories as `player_id\tmatch_id\tmessage_count\tword_count\ttext`.
pub fn write_histories_tsv<W: Write>(mut w: W, histories: &[PlayerMatchHistory]) -> Result<()> {
    for h in histories {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            escape_field(&h.player_id),
            escape_field(&h.match_id),
            h.message_count,
            h.word_count,
            escape_field(&h.text)
        )?;
    }
    Ok(())
}

pub fn read_histories_tsv<R: BufRead>(reader: R) -> Result<Vec<PlayerMatchHistory>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::CorruptFile(format!(
                "history line {}: expected 5 columns, found {}",
                i + 1,
                cols.len()
            )));
        }
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::CorruptFile(format!("history line {}: bad count {s:?}", i + 1)))
        };
        let text = unescape_field(cols[4])?;
        out.push(PlayerMatchHistory {
            player_id: unescape_field(cols[0])?,
            match_id: unescape_field(cols[1])?,
            message_count: parse_count(cols[2])?,
            word_count: parse_count(cols[3])?,
            char_count: text.chars().count(),
            text,
        });
    }
    Ok(out)
}
