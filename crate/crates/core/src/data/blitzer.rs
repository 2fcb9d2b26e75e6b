//! Reader and writer for the `token:count ... #label#:polarity` corpus format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::feature::Polarity;
use crate::error::{Error, Result};

const LABEL_KEY: &str = "#label#";

/// One document: token multiset plus optional polarity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawDoc {
    pub counts: BTreeMap<String, u64>,
    pub label: Option<Polarity>,
}

impl RawDoc {
    pub fn total_tokens(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Parses a single non-empty line. `line_no` is 1-based and only used for errors.
pub fn parse_line(line: &str, line_no: usize) -> Result<RawDoc> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let pairs: Vec<&str> = line.split_whitespace().collect();
    let mut doc = RawDoc::default();
    for (pos, pair) in pairs.iter().enumerate() {
        let (token, value) = pair
            .split_once(':')
            .ok_or_else(|| err(format!("`{pair}` is not a token:count pair")))?;
        if token == LABEL_KEY {
            if pos + 1 != pairs.len() {
                return Err(err("label pair must be the last pair on the line".into()));
            }
            doc.label = Some(
                Polarity::parse(value)
                    .ok_or_else(|| err(format!("unknown label `{value}`")))?,
            );
            continue;
        }
        if token.is_empty() {
            return Err(err(format!("empty token in `{pair}`")));
        }
        if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(format!("count `{value}` for `{token}` is not a positive integer")));
        }
        let count: u64 = value
            .parse()
            .map_err(|_| err(format!("count `{value}` for `{token}` is out of range")))?;
        if count == 0 {
            return Err(err(format!("count for `{token}` must be positive")));
        }
        *doc.counts.entry(token.to_string()).or_insert(0) += count;
    }
    Ok(doc)
}

/// Parses a whole corpus. Blank lines are skipped with a warning.
pub fn parse_str(text: &str) -> Result<Vec<RawDoc>> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            log::warn!("line {}: empty line skipped", i + 1);
            continue;
        }
        docs.push(parse_line(line, i + 1)?);
    }
    Ok(docs)
}

pub fn parse_file(path: impl AsRef<Path>) -> Result<Vec<RawDoc>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

/// Serializes a document as one line (without the trailing newline).
/// Tokens are written in lexicographic order.
pub fn format_doc(doc: &RawDoc, with_label: bool) -> String {
    let mut line = String::new();
    for (tok, count) in &doc.counts {
        if !line.is_empty() {
            line.push(' ');
        }
        let _ = write!(line, "{tok}:{count}");
    }
    if let (true, Some(label)) = (with_label, doc.label) {
        if !line.is_empty() {
            line.push(' ');
        }
        let _ = write!(line, "{LABEL_KEY}:{}", label.as_str());
    }
    line
}

/// Reads a label sidecar: one `positive`/`negative` per line, blank lines ignored.
pub fn parse_labels(text: &str) -> Result<Vec<Polarity>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            Polarity::parse(l.trim()).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("unknown label `{}`", l.trim()),
            })
        })
        .collect()
}

pub fn format_labels(labels: &[Polarity]) -> String {
    labels.iter().map(|l| format!("{}\n", l.as_str())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labeled_lines() {
        let d = parse_line("great:2 movie:1 #label#:positive", 1).unwrap();
        assert_eq!(d.counts.get("great"), Some(&2));
        assert_eq!(d.counts.get("movie"), Some(&1));
        assert_eq!(d.counts.len(), 2);
        assert_eq!(d.label, Some(Polarity::Positive));

        let d = parse_line("bad:1 #label#:negative", 1).unwrap();
        assert_eq!(d.counts.len(), 1);
        assert_eq!(d.label, Some(Polarity::Negative));
    }

    #[test]
    fn unlabeled_and_duplicates() {
        let d = parse_line("a:1 b_c:2 a:3", 1).unwrap();
        assert_eq!(d.label, None);
        assert_eq!(d.counts.get("a"), Some(&4));
    }

    #[test]
    fn empty_lines_are_skipped() {
        let docs = parse_str("a:1\n\n   \nb:2 #label#:negative\n").unwrap();
        assert_eq!(docs.len(), 2);
    }

    #[test]
    fn malformed_counts_report_line() {
        for bad in ["a:0", "a:-1", "a:x", "a:", "a", ":3", "a:+2", "a:1.5"] {
            let text = format!("ok:1\n{bad}\n");
            match parse_str(&text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 2, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
        assert!(parse_line("#label#:positive a:1", 1).is_err());
        assert!(parse_line("a:1 #label#:neutral", 1).is_err());
    }

    #[test]
    fn format_round_trips() {
        let d = parse_line("z:3 a:1 #label#:negative", 1).unwrap();
        let line = format_doc(&d, true);
        assert_eq!(line, "a:1 z:3 #label#:negative");
        assert_eq!(parse_line(&line, 1).unwrap(), d);
        assert_eq!(format_doc(&d, false), "a:1 z:3");
    }

    #[test]
    fn labels_sidecar() {
        let l = parse_labels("positive\nnegative\n\n").unwrap();
        assert_eq!(l, vec![Polarity::Positive, Polarity::Negative]);
        assert_eq!(format_labels(&l), "positive\nnegative\n");
        assert!(parse_labels("maybe\n").is_err());
    }
}
