use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Normalised word sequence: lowercase, non-alphanumeric characters
/// (apostrophes excepted) become spaces, whitespace collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    tokens: Vec<String>,
}

impl Transcript {
    pub fn parse(text: &str) -> Self {
        let cleaned: String = text
            .chars()
            .flat_map(char::to_lowercase)
            .map(|c| {
                if c.is_alphanumeric() || c == '\'' {
                    c
                } else {
                    ' '
                }
            })
            .collect();
        Self {
            tokens: cleaned
                .split_whitespace()
                .map(|t| t.trim_matches('\''))
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect(),
        }
    }

    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads `id text...` lines; blank lines and `#` comments are skipped.
pub fn read_transcripts(path: &Path) -> Result<BTreeMap<String, Transcript>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_transcripts(&text)
}

pub fn parse_transcripts(text: &str) -> Result<BTreeMap<String, Transcript>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        if out.insert(id.to_owned(), Transcript::parse(rest)).is_some() {
            return Err(Error::Manifest(format!(
                "duplicate transcript id {id:?} on line {}",
                i + 1
            )));
        }
    }
    Ok(out)
}

/// Unit-cost token edit distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate: edit distance over reference length.
pub fn wer(reference: &Transcript, hypothesis: &Transcript) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("empty reference transcript".into()));
    }
    Ok(edit_distance(&reference.tokens, &hypothesis.tokens) as f64 / reference.len() as f64)
}
