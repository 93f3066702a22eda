//! CoNLL-U ingestion restricted to the columns the probing tasks use:
//! ID, FORM, UPOS, HEAD and DEPREL.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One syntactic word. Multiword ranges and empty nodes never produce records.
///
/// `tok` is the CoNLL-U word ID (1-based); `head` is 0 for the root.
/// Missing UPOS, DEPREL or HEAD (`_`) are kept as `None` and make the record
/// ineligible for tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub sent: usize,
    pub tok: usize,
    pub form: String,
    pub upos: Option<String>,
    pub deprel: Option<String>,
    pub head: Option<usize>,
}

impl TokenRecord {
    pub fn is_complete(&self) -> bool {
        self.upos.is_some() && self.deprel.is_some() && self.head.is_some()
    }
}

fn optional(field: &str) -> Option<String> {
    (field != "_").then(|| field.to_string())
}

struct SentenceBuffer {
    records: Vec<TokenRecord>,
    /// Line number of each record, for head-bound errors.
    lines: Vec<usize>,
}

impl SentenceBuffer {
    fn flush(&mut self, out: &mut Vec<TokenRecord>) -> Result<()> {
        let words = self.records.len();
        for (record, &line) in self.records.iter().zip(&self.lines) {
            if let Some(head) = record.head {
                if head > words {
                    return Err(Error::Parse {
                        line,
                        message: format!("head {head} outside a sentence of {words} words"),
                    });
                }
            }
        }
        out.append(&mut self.records);
        self.lines.clear();
        Ok(())
    }
}

/// Parses CoNLL-U text into token records, preserving sentence boundaries.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<TokenRecord>> {
    let mut out = Vec::new();
    let mut sentence = SentenceBuffer {
        records: Vec::new(),
        lines: Vec::new(),
    };
    let mut sent = 0;
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !sentence.records.is_empty() {
                sentence.flush(&mut out)?;
                sent += 1;
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            // multiword range or empty node
            continue;
        }
        let tok: usize = id.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid word id `{id}`"),
        })?;
        let expected = sentence.records.len() + 1;
        if tok != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("word id {tok} out of sequence, expected {expected}"),
            });
        }
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid head `{h}`"),
            })?),
        };
        sentence.records.push(TokenRecord {
            sent,
            tok,
            form: cols[1].to_string(),
            upos: optional(cols[3]),
            deprel: optional(cols[7]),
            head,
        });
        sentence.lines.push(line_no);
    }
    if !sentence.records.is_empty() {
        sentence.flush(&mut out)?;
    }
    Ok(out)
}

pub fn parse_conllu_str(text: &str) -> Result<Vec<TokenRecord>> {
    parse_conllu(text.as_bytes())
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Vec<TokenRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(std::io::BufReader::new(file))
}

/// Canonical CoNLL-U for the consumed columns; other columns are `_`.
pub fn to_conllu(records: &[TokenRecord]) -> String {
    let mut out = String::new();
    let mut current = None;
    for r in records {
        if current.is_some_and(|s| s != r.sent) {
            out.push('\n');
        }
        current = Some(r.sent);
        let head = r.head.map_or_else(|| "_".to_string(), |h| h.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
            r.tok,
            r.form,
            r.upos.as_deref().unwrap_or("_"),
            head,
            r.deprel.as_deref().unwrap_or("_"),
        );
    }
    if current.is_some() {
        out.push('\n');
    }
    out
}

/// Strips a relation subtype: `nmod:poss` becomes `nmod`.
pub fn universal_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}
