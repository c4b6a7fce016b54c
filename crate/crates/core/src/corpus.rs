//! Tweet ingestion, cleaning and per-channel statistics.
//!
//! Input files hold one record per line, `id|timestamp|text`, one file per
//! channel. Text may itself contain the delimiter; everything after the
//! second delimiter is rejoined into the text field.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamp layout used by the Twitter API, e.g. `Thu Apr 09 01:31:50 +0000 2015`.
pub const TWITTER_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

/// Display names for the channel files of the public health-news tweet dataset.
const KNOWN_CHANNELS: &[(&str, &str)] = &[
    ("bbchealth", "BBC Health"),
    ("cbchealth", "CBC Health"),
    ("cnnhealth", "CNN Health"),
    ("everydayhealth", "Everyday Health"),
    ("foxnewshealth", "Fox News Health"),
    ("gdnhealthcare", "Guardian Healthcare"),
    ("goodhealth", "Goodhealth"),
    ("kaiserhealthnews", "Kaiser Health"),
    ("latimeshealth", "LA Times Health"),
    ("msnhealthnews", "MSN Health"),
    ("nbchealth", "NBC Health"),
    ("nprhealth", "NPR Health"),
    ("nytimeshealth", "NY Times Health"),
    ("reuters_health", "Reuters Health"),
    ("usnewshealth", "US News Health"),
    ("wsjhealth", "WSJ Health"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub channel: String,
    pub timestamp: DateTime<Utc>,
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
}

impl Tweet {
    /// True when cleaning removed every token.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelStats {
    pub channel: String,
    pub tweet_count: usize,
    pub word_count: usize,
    pub unique_word_count: usize,
    pub mean_word_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub channels: Vec<ChannelStats>,
}

impl CorpusStats {
    pub fn total_tweets(&self) -> usize {
        self.channels.iter().map(|c| c.tweet_count).sum()
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelStats> {
        self.channels.iter().find(|c| c.channel == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,tweets,words,unique_words,mean_words\n");
        for c in &self.channels {
            out.push_str(&format!(
                "{},{},{},{},{:.4}\n",
                c.channel, c.tweet_count, c.word_count, c.unique_word_count, c.mean_word_count
            ));
        }
        out
    }
}

/// Result of ingesting one or more channel files.
#[derive(Debug, Default, Clone)]
pub struct Ingested {
    pub tweets: Vec<Tweet>,
    /// Lines dropped because the timestamp did not parse.
    pub bad_timestamps: usize,
    /// Lines dropped because they had fewer than three fields.
    pub malformed: usize,
}

impl Ingested {
    /// Indices of tweets whose text was empty after cleaning.
    pub fn empty_after_cleaning(&self) -> Vec<usize> {
        self.tweets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    fn absorb(&mut self, other: Ingested) {
        self.tweets.extend(other.tweets);
        self.bad_timestamps += other.bad_timestamps;
        self.malformed += other.malformed;
    }
}

/// Maps a file stem to the channel name used in reports.
pub fn channel_name(stem: &str) -> String {
    let lower = stem.to_lowercase();
    KNOWN_CHANNELS
        .iter()
        .find(|(k, _)| *k == lower)
        .map(|(_, v)| v.to_string())
        .unwrap_or_else(|| stem.to_string())
}

/// Reads one channel file. The channel is taken from the file stem.
pub fn ingest(path: &Path, delimiter: char) -> Result<Ingested> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let channel = channel_name(&stem);

    let mut reader = BufReader::new(file);
    let mut out = Ingested::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        // The public dump has a handful of non-UTF-8 bytes.
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, delimiter, &channel) {
            LineOutcome::Tweet(t) => out.tweets.push(*t),
            LineOutcome::BadTimestamp => out.bad_timestamps += 1,
            LineOutcome::Malformed => out.malformed += 1,
        }
    }
    if out.bad_timestamps > 0 || out.malformed > 0 {
        log::warn!(
            "{}: skipped {} lines with bad timestamps, {} malformed",
            path.display(),
            out.bad_timestamps,
            out.malformed
        );
    }
    Ok(out)
}

/// Ingests a single file, or every `.txt` file of a directory in name order.
pub fn ingest_path(path: &Path, delimiter: char) -> Result<Ingested> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return ingest(path, delimiter);
    }
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut out = Ingested::default();
    for f in files {
        out.absorb(ingest(&f, delimiter)?);
    }
    Ok(out)
}

enum LineOutcome {
    Tweet(Box<Tweet>),
    BadTimestamp,
    Malformed,
}

fn parse_line(line: &str, delimiter: char, channel: &str) -> LineOutcome {
    let mut parts = line.splitn(3, delimiter);
    let (Some(id), Some(ts), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
        return LineOutcome::Malformed;
    };
    let timestamp = match DateTime::parse_from_str(ts.trim(), TWITTER_TIME_FORMAT) {
        Ok(t) => t.with_timezone(&Utc),
        Err(_) => return LineOutcome::BadTimestamp,
    };
    let clean_text = clean(text);
    let tokens = tokenize(&clean_text);
    LineOutcome::Tweet(Box::new(Tweet {
        id: id.trim().to_string(),
        channel: channel.to_string(),
        timestamp,
        raw_text: text.to_string(),
        clean_text,
        tokens,
    }))
}

// Any run starting with "http" up to the next whitespace. This also catches
// URLs glued to preceding text and truncated links ("http…").
static SCHEME_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)http\S*").unwrap());

// Bare shortener links such as "bbc.in/1CimpJF" or "t.co/x1".
static BARE_URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(www\.)?[a-z0-9-]+(\.[a-z0-9-]+)*\.[a-z]{2,}/\S*$").unwrap()
});

/// Strips URLs, the retweet marker, mentions and hash signs, then
/// normalises whitespace.
pub fn clean(raw: &str) -> String {
    let mut current = clean_pass(raw);
    // A pass can expose a new match (e.g. "#@user" -> "@user"), so iterate.
    // Every changing pass after the first strictly shortens the string.
    loop {
        let next = clean_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn clean_pass(raw: &str) -> String {
    let no_scheme = SCHEME_URL.replace_all(raw, " ");
    let mut tokens: Vec<&str> = no_scheme
        .split_whitespace()
        .filter(|t| !BARE_URL.is_match(t))
        .collect();
    if tokens.first() == Some(&"RT") {
        tokens.remove(0);
    }
    let kept: Vec<String> = tokens
        .into_iter()
        .filter(|t| !t.contains('@'))
        .map(|t| t.replace('#', ""))
        .filter(|t| !t.is_empty())
        .collect();
    kept.join(" ")
}

const EDGE_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')', '[', ']'];

/// Lowercases, splits on whitespace and trims edge punctuation.
pub fn tokenize(clean: &str) -> Vec<String> {
    clean
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .map(|t| t.trim_matches(EDGE_PUNCTUATION).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Per-channel counts. Channels are reported in name order.
pub fn stats(tweets: &[Tweet]) -> Result<CorpusStats> {
    if tweets.is_empty() {
        return Err(Error::invalid(
            "cannot compute statistics of an empty corpus",
        ));
    }
    #[derive(Default)]
    struct Acc<'a> {
        tweets: usize,
        words: usize,
        unique: BTreeSet<&'a str>,
    }
    let mut by_channel: BTreeMap<&str, Acc> = BTreeMap::new();
    for t in tweets {
        let acc = by_channel.entry(t.channel.as_str()).or_default();
        acc.tweets += 1;
        acc.words += t.tokens.len();
        acc.unique.extend(t.tokens.iter().map(String::as_str));
    }
    let channels = by_channel
        .into_iter()
        .map(|(name, acc)| ChannelStats {
            channel: name.to_string(),
            tweet_count: acc.tweets,
            word_count: acc.words,
            unique_word_count: acc.unique.len(),
            mean_word_count: acc.words as f64 / acc.tweets as f64,
        })
        .collect();
    Ok(CorpusStats { channels })
}

pub fn write_jsonl(tweets: &[Tweet], mut w: impl Write) -> Result<()> {
    for t in tweets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<jsonl writer>", e))?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Tweet>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tweets = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Tweet = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        tweets.push(t);
    }
    Ok(tweets)
}
