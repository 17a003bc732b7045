//! Post-processing of per-frame OCR output into one clean text per video:
//! character cleaning, near-duplicate removal, overlap merging, and an
//! optional stopword pass.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default English stopword list shipped with the crate.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.9;
pub const DEFAULT_MIN_OVERLAP: usize = 5;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed OCR segment file {path}: {message}")]
    Parse {
        path: std::path::PathBuf,
        message: String,
    },
    #[error("dedup threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("stopword list is empty")]
    EmptyStopwords,
}

/// Raw text read from one sampled frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrSegment {
    pub frame_index: u64,
    pub text: String,
}

fn allowed(c: char) -> bool {
    c.is_ascii_alphanumeric()
        || matches!(c, ' ' | '.' | ',' | '!' | '?' | ';' | ':' | '\'' | '"' | '(' | ')' | '-')
}

/// Keeps only ASCII letters, digits, space and `. , ! ? ; : ' " ( ) -`, then
/// collapses whitespace runs and trims.
pub fn clean_text(raw: &str) -> String {
    let kept: String = raw
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|&c| allowed(c))
        .collect();
    collapse_whitespace(&kept)
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Longest common contiguous run in `a[alo..ahi]` × `b[blo..bhi]`. Ties go
/// to the earliest start in `a`, then in `b`. Returns `(i, j, len)`.
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best) = (alo, blo, 0);
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            let run = cur[k];
            if run > best {
                best = run;
                best_i = i + 1 - run;
                best_j = j + 1 - run;
            } else if run == best && run > 0 {
                let (si, sj) = (i + 1 - run, j + 1 - run);
                if (si, sj) < (best_i, best_j) {
                    best_i = si;
                    best_j = sj;
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.iter_mut().for_each(|v| *v = 0);
    }
    (best_i, best_j, best)
}

/// Characters covered by the recursive longest-match decomposition.
fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut stack = vec![(0, a.len(), 0, b.len())];
    let mut total = 0;
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        total += k;
        stack.push((alo, i, blo, j));
        stack.push((i + k, ahi, j + k, bhi));
    }
    total
}

/// Matching-blocks ratio `2M / (|a| + |b|)`. `M` is taken as the larger of
/// the two argument orders so the score is symmetric. Two empty strings
/// score 1.0.
pub fn segment_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let m = matched_chars(&a, &b).max(matched_chars(&b, &a));
    2.0 * m as f64 / (a.len() + b.len()) as f64
}

/// Single forward pass: a segment is kept unless it is identical to, or more
/// than `threshold` similar to, some already retained segment.
pub fn dedup_segments<S: AsRef<str>>(segments: &[S], threshold: f64) -> Result<Vec<String>, OcrError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(OcrError::BadThreshold(threshold));
    }
    let mut kept: Vec<String> = Vec::new();
    for seg in segments {
        let seg = seg.as_ref();
        let redundant = kept
            .iter()
            .any(|k| k == seg || segment_similarity(k, seg) > threshold);
        if !redundant {
            kept.push(seg.to_string());
        }
    }
    Ok(kept)
}

/// Length of the longest suffix of `acc` that is also a prefix of `next`.
fn suffix_prefix_overlap(acc: &[char], next: &[char]) -> usize {
    (1..=acc.len().min(next.len()))
        .rev()
        .find(|&k| acc[acc.len() - k..] == next[..k])
        .unwrap_or(0)
}

/// Folds segments left to right, splicing on suffix/prefix overlaps of at
/// least `min_overlap` characters and joining with a space otherwise.
pub fn merge_overlaps<S: AsRef<str>>(segments: &[S], min_overlap: usize) -> String {
    let mut acc: Vec<char> = Vec::new();
    for seg in segments {
        let next: Vec<char> = seg.as_ref().chars().collect();
        if next.is_empty() {
            continue;
        }
        if acc.is_empty() {
            acc = next;
            continue;
        }
        let k = suffix_prefix_overlap(&acc, &next);
        if k >= min_overlap.max(1) {
            acc.extend_from_slice(&next[k..]);
        } else {
            acc.push(' ');
            acc.extend(next);
        }
    }
    acc.into_iter().collect()
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// Drops whole words whose lowercase form (ignoring surrounding
/// punctuation) is in `stopwords`, then re-collapses whitespace.
pub fn remove_stopwords(text: &str, stopwords: &HashSet<String>) -> String {
    text.split_whitespace()
        .filter(|tok| {
            let core = tok.trim_matches(|c: char| !(c.is_alphanumeric() || c == '\''));
            !stopwords.contains(&core.to_lowercase())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug)]
pub struct OcrPipeline {
    pub threshold: f64,
    pub min_overlap: usize,
    pub stopwords: Option<HashSet<String>>,
}

impl Default for OcrPipeline {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_DEDUP_THRESHOLD,
            min_overlap: DEFAULT_MIN_OVERLAP,
            stopwords: None,
        }
    }
}

impl OcrPipeline {
    pub fn with_stopwords(mut self, words: HashSet<String>) -> Result<Self, OcrError> {
        if words.is_empty() {
            return Err(OcrError::EmptyStopwords);
        }
        self.stopwords = Some(words);
        Ok(self)
    }

    /// Orders by frame, cleans, drops empty segments, de-duplicates, merges,
    /// and finally applies the stopword pass when enabled.
    pub fn process(&self, segments: &[OcrSegment]) -> Result<String, OcrError> {
        let mut ordered: Vec<&OcrSegment> = segments.iter().collect();
        ordered.sort_by_key(|s| s.frame_index);
        let cleaned: Vec<String> = ordered
            .iter()
            .map(|s| clean_text(&s.text))
            .filter(|s| !s.is_empty())
            .collect();
        let kept = dedup_segments(&cleaned, self.threshold)?;
        let merged = merge_overlaps(&kept, self.min_overlap);
        Ok(match &self.stopwords {
            Some(words) => remove_stopwords(&merged, words),
            None => merged,
        })
    }

    /// Processes every `*.json` segment list in `input` into `<stem>.txt`
    /// under `output`. Returns the number of files written.
    pub fn process_dir(&self, input: &Path, output: &Path) -> Result<usize, OcrError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| OcrError::Io { path, source }
        };
        fs::create_dir_all(output).map_err(io(output))?;
        let mut entries: Vec<_> = fs::read_dir(input)
            .map_err(io(input))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        entries.sort();
        for path in &entries {
            let text = fs::read_to_string(path).map_err(io(path))?;
            let segments: Vec<OcrSegment> =
                serde_json::from_str(&text).map_err(|e| OcrError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            let merged = self.process(&segments)?;
            let stem = path.file_stem().unwrap_or_default();
            let out = output.join(stem).with_extension("txt");
            fs::write(&out, merged).map_err(io(&out))?;
        }
        Ok(entries.len())
    }
}
