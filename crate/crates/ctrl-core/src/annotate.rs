//! Semi-automatic sentence annotation: decompose long descriptions into
//! sub-sentences, match them against keyword-tagged activity annotations,
//! and build complex multi-activity queries.
//!
//! Subjects are supplied by the caller; no parsing happens here.

use crate::data::SentenceAnnotation;
use crate::error::{Error, Result};
use crate::geometry::Interval;

/// Conjunctions that split a description into sub-sentences, alongside
/// commas and periods.
pub const DEFAULT_CONJUNCTIONS: [&str; 5] = ["then", "while", "after", "and", "but"];

/// A pre-defined activity with its keywords and temporal span.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityAnnotation {
    pub video_id: String,
    pub category: String,
    /// Lowercase tokens that must all occur in a matching sub-sentence.
    pub keywords: Vec<String>,
    pub span: Interval,
}

impl ActivityAnnotation {
    pub fn new(
        video_id: impl Into<String>,
        category: impl Into<String>,
        keywords: Vec<String>,
        span: Interval,
    ) -> Result<Self> {
        if keywords.is_empty() {
            return Err(Error::InvalidArgument("activity annotation without keywords".into()));
        }
        Ok(ActivityAnnotation {
            video_id: video_id.into(),
            category: category.into(),
            keywords: keywords.into_iter().map(|k| k.to_lowercase()).collect(),
            span,
        })
    }
}

/// A run of at least two consecutive sub-queries whose union span is under
/// half the video length.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexQuery {
    pub video_id: String,
    /// The component texts joined by single spaces.
    pub text: String,
    /// Union span of the components.
    pub span: Interval,
    /// The component annotations, consecutive and in source order.
    pub components: Vec<SentenceAnnotation>,
}

fn is_delimiter_char(c: char) -> bool {
    c == ',' || c == '.' || c == ';'
}

/// Strip punctuation from a raw whitespace token.
fn clean_token(t: &str) -> String {
    t.chars().filter(|c| !is_delimiter_char(*c)).collect()
}

/// Split a description into sub-sentences on commas, periods and the given
/// conjunction words, prepending `subject` to any fragment that does not
/// already start with it. Fragments shorter than two tokens are dropped.
pub fn decompose(description: &str, subject: &str, conjunctions: &[String]) -> Vec<String> {
    let conj: Vec<String> = conjunctions.iter().map(|c| c.to_lowercase()).collect();
    let subject_tokens: Vec<String> =
        subject.split_whitespace().map(|t| t.to_lowercase()).collect();

    let mut fragments: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for raw in description.split_whitespace() {
        let had_trailing_delim = raw.chars().rev().take_while(|c| is_delimiter_char(*c)).count() > 0;
        let word = clean_token(raw);
        if word.is_empty() || conj.contains(&word.to_lowercase()) {
            fragments.push(std::mem::take(&mut current));
        } else {
            current.push(word);
            if had_trailing_delim {
                fragments.push(std::mem::take(&mut current));
            }
        }
    }
    fragments.push(current);

    fragments
        .into_iter()
        .filter(|f| f.len() >= 2)
        .map(|mut tokens| {
            let starts_with_subject = !subject_tokens.is_empty()
                && tokens.len() >= subject_tokens.len()
                && tokens
                    .iter()
                    .zip(&subject_tokens)
                    .all(|(t, s)| t.to_lowercase() == *s);
            if !starts_with_subject {
                let mut with_subject: Vec<String> =
                    subject.split_whitespace().map(str::to_string).collect();
                with_subject.append(&mut tokens);
                tokens = with_subject;
            }
            tokens.join(" ")
        })
        .collect()
}

/// Whether every keyword occurs as a substring of some lowercase token.
fn all_keywords_present(tokens: &[String], keywords: &[String]) -> bool {
    keywords.iter().all(|k| tokens.iter().any(|t| t.contains(k.as_str())))
}

/// Match sub-sentences against activities: a sub-sentence gets an activity's
/// span when all of the activity's keywords occur as lowercase token
/// substrings. When several activities match, the one with the most matched
/// keyword characters wins (ties: earliest span start).
///
/// Embedding refs on the produced annotations are left empty; dataset
/// loading assigns them.
pub fn match_keywords(
    sub_sentences: &[String],
    activities: &[ActivityAnnotation],
) -> Result<Vec<SentenceAnnotation>> {
    if let Some(first) = activities.first() {
        if let Some(bad) = activities.iter().find(|a| a.video_id != first.video_id) {
            return Err(Error::InvalidArgument(format!(
                "match_keywords: activities span videos `{}` and `{}`",
                first.video_id, bad.video_id
            )));
        }
    }
    let mut out = Vec::new();
    for sentence in sub_sentences {
        let tokens: Vec<String> =
            sentence.split_whitespace().map(|t| clean_token(t).to_lowercase()).collect();
        let mut best: Option<(&ActivityAnnotation, usize)> = None;
        for activity in activities {
            if !all_keywords_present(&tokens, &activity.keywords) {
                continue;
            }
            let chars: usize = activity.keywords.iter().map(String::len).sum();
            let better = match best {
                None => true,
                Some((prev, prev_chars)) => {
                    chars > prev_chars
                        || (chars == prev_chars && activity.span.start() < prev.span.start())
                }
            };
            if better {
                best = Some((activity, chars));
            }
        }
        if let Some((activity, _)) = best {
            out.push(SentenceAnnotation {
                video_id: activity.video_id.clone(),
                text: sentence.clone(),
                span: activity.span,
                embedding_ref: String::new(),
            });
        }
    }
    Ok(out)
}

/// Enumerate every run of two or more consecutive annotations whose union
/// span is strictly shorter than half the video. Annotations are ordered by
/// start time before runs are taken.
pub fn build_complex(
    annotations: &[SentenceAnnotation],
    video_length: f64,
) -> Result<Vec<ComplexQuery>> {
    if let Some(first) = annotations.first() {
        if let Some(bad) = annotations.iter().find(|a| a.video_id != first.video_id) {
            return Err(Error::InvalidArgument(format!(
                "build_complex: annotations span videos `{}` and `{}`",
                first.video_id, bad.video_id
            )));
        }
    }
    let mut sorted: Vec<&SentenceAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| a.span.start().partial_cmp(&b.span.start()).unwrap());

    let mut out = Vec::new();
    for first in 0..sorted.len() {
        for last in first + 1..sorted.len() {
            let run = &sorted[first..=last];
            let start = run.iter().map(|a| a.span.start()).fold(f64::INFINITY, f64::min);
            let end = run.iter().map(|a| a.span.end()).fold(f64::NEG_INFINITY, f64::max);
            if end - start >= video_length / 2.0 {
                continue;
            }
            let text: Vec<&str> = run.iter().map(|a| a.text.as_str()).collect();
            out.push(ComplexQuery {
                video_id: run[0].video_id.clone(),
                text: text.join(" "),
                span: Interval::new(start, end).expect("run spans are valid"),
                components: run.iter().map(|&a| a.clone()).collect(),
            });
        }
    }
    Ok(out)
}
