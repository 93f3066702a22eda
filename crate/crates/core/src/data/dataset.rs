//! Token-level probing datasets: representation vectors paired with labels,
//! split into a training pool and a fixed held-out test set.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conllu::{universal_relation, TokenRecord};
use super::embeddings::EmbeddingStore;
use crate::error::{Error, Result};

/// Which column of the treebank supplies the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// UPOS; the input is the token's own vector.
    Pos,
    /// DEPREL with subtypes stripped; the input is the dependent's vector
    /// followed by its head's (zeros for the root).
    Deprel,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Pos => "pos",
            Task::Deprel => "deprel",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(Task::Pos),
            "deprel" => Ok(Task::Deprel),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

/// Row-aligned inputs and label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Examples {
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DomainMismatch(format!(
                "{} input rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            x: Array2::zeros((0, dim)),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// The examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(ndarray::Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    fn from_rows(rows: Vec<Vec<f64>>, y: Vec<usize>, dim: usize) -> Self {
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let x = Array2::from_shape_vec((y.len(), dim), flat).expect("rows share the dimension");
        Self { x, y }
    }
}

/// A probing dataset for one representation and one task.
///
/// Labels are indices into `label_names`, which is sorted and frozen from
/// the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDataset {
    repr: String,
    task: String,
    label_names: Vec<String>,
    train: Examples,
    test: Examples,
    dropped_test_tokens: usize,
}

impl TokenDataset {
    pub fn new(
        repr: impl Into<String>,
        task: impl Into<String>,
        label_names: Vec<String>,
        train: Examples,
        test: Examples,
    ) -> Result<Self> {
        if label_names.is_empty() {
            return Err(Error::Empty("label inventory"));
        }
        if train.dim() != test.dim() {
            return Err(Error::DomainMismatch(format!(
                "train inputs have dimension {} but test inputs {}",
                train.dim(),
                test.dim()
            )));
        }
        let k = label_names.len();
        if let Some(&bad) = train.y.iter().chain(&test.y).find(|&&y| y >= k) {
            return Err(Error::IndexOutOfRange { index: bad, size: k });
        }
        if train.x.iter().chain(test.x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite input value".into()));
        }
        Ok(Self {
            repr: repr.into(),
            task: task.into(),
            label_names,
            train,
            test,
            dropped_test_tokens: 0,
        })
    }

    /// Builds a task dataset from aligned treebank tokens.
    ///
    /// `alignment[i]` is the vector of `records[i]`. The final
    /// `test_fraction` of sentences (at least one) forms the test set.
    /// Incomplete records are skipped; test tokens whose label never occurs
    /// in training are dropped and counted.
    pub fn from_treebank(
        repr: impl Into<String>,
        task: Task,
        records: &[TokenRecord],
        store: &EmbeddingStore,
        alignment: &[usize],
        test_fraction: f64,
    ) -> Result<Self> {
        if records.len() != alignment.len() {
            return Err(Error::DomainMismatch(format!(
                "{} records but {} alignment entries",
                records.len(),
                alignment.len()
            )));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} must lie strictly between 0 and 1"
            )));
        }
        let sentences: BTreeSet<usize> = records.iter().map(|r| r.sent).collect();
        if sentences.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a train/test split needs at least 2 sentences, found {}",
                sentences.len()
            )));
        }
        let n_test = ((sentences.len() as f64 * test_fraction).round() as usize).clamp(1, sentences.len() - 1);
        let first_test = *sentences.iter().nth(sentences.len() - n_test).expect("n_test < len");

        let positions: HashMap<(usize, usize), usize> =
            records.iter().enumerate().map(|(i, r)| ((r.sent, r.tok), i)).collect();
        let d = store.dim();
        let input_dim = match task {
            Task::Pos => d,
            Task::Deprel => 2 * d,
        };

        let mut train_rows = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_rows = Vec::new();
        let mut test_labels = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if !r.is_complete() {
                continue;
            }
            let own = store.vector(alignment[i])?;
            let (label, row) = match task {
                Task::Pos => (r.upos.clone().expect("complete"), own.iter().map(|&v| v as f64).collect::<Vec<_>>()),
                Task::Deprel => {
                    let label = universal_relation(r.deprel.as_deref().expect("complete")).to_string();
                    let mut row: Vec<f64> = own.iter().map(|&v| v as f64).collect();
                    match r.head.expect("complete") {
                        0 => row.extend(std::iter::repeat_n(0.0, d)),
                        h => {
                            let j = positions.get(&(r.sent, h)).ok_or_else(|| {
                                Error::DomainMismatch(format!("head {h} of token ({}, {}) has no record", r.sent, r.tok))
                            })?;
                            row.extend(store.vector(alignment[*j])?.iter().map(|&v| v as f64));
                        }
                    }
                    (label, row)
                }
            };
            if r.sent >= first_test {
                test_rows.push(row);
                test_labels.push(label);
            } else {
                train_rows.push(row);
                train_labels.push(label);
            }
        }
        if train_rows.is_empty() {
            return Err(Error::Empty("training tokens"));
        }

        let label_names: Vec<String> = train_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let lookup: HashMap<&str, usize> = label_names.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let train_y: Vec<usize> = train_labels.iter().map(|l| lookup[l.as_str()]).collect();

        let mut kept_rows = Vec::new();
        let mut test_y = Vec::new();
        let mut dropped = 0;
        for (row, label) in test_rows.into_iter().zip(&test_labels) {
            match lookup.get(label.as_str()) {
                Some(&y) => {
                    kept_rows.push(row);
                    test_y.push(y);
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} test tokens whose label does not occur in training");
        }
        if test_y.is_empty() {
            return Err(Error::Empty("test tokens"));
        }

        let train = Examples::from_rows(train_rows, train_y, input_dim);
        let test = Examples::from_rows(kept_rows, test_y, input_dim);
        let mut dataset = Self::new(repr, task.as_str(), label_names, train, test)?;
        dataset.dropped_test_tokens = dropped;
        Ok(dataset)
    }

    pub fn repr(&self) -> &str {
        &self.repr
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn train(&self) -> &Examples {
        &self.train
    }

    pub fn test(&self) -> &Examples {
        &self.test
    }

    pub fn dropped_test_tokens(&self) -> usize {
        self.dropped_test_tokens
    }

    pub fn with_repr(mut self, repr: impl Into<String>) -> Self {
        self.repr = repr.into();
        self
    }

    /// SHA-256 over labels and the exact bits of every input, hex encoded.
    /// The representation name does not enter the hash.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.as_bytes());
        h.update([0]);
        for name in &self.label_names {
            h.update(name.as_bytes());
            h.update([0]);
        }
        for split in [&self.train, &self.test] {
            h.update((split.len() as u64).to_le_bytes());
            h.update((split.dim() as u64).to_le_bytes());
            for v in split.x.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            for &y in &split.y {
                h.update((y as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
