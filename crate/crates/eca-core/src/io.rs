//! File formats: the UCI bag-of-words layout (three header lines D, W, NNZ
//! followed by `docID wordID count` triplets, all 1-indexed), tab-separated
//! topic matrices, and JSON run records. Indices convert to 0-based at this
//! boundary; everything internal is 0-based.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Corpus, Document, RecoveryResult, RecoveryStatus};

/// Reads a UCI bag-of-words file into a corpus. Documents without triplets
/// come back empty (they are filtered later by the moment preconditions).
pub fn read_uci_bagofwords(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let mut header = [0usize; 3];
    for slot in &mut header {
        let (line_no, line) = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
                None => return Err(Error::MalformedHeader("missing header line".into())),
            }
        };
        *slot = line.trim().parse::<usize>().map_err(|_| {
            Error::MalformedHeader(format!("line {line_no}: expected an integer, got {line:?}"))
        })?;
    }
    let [n_docs, vocab, nnz] = header;
    if vocab == 0 {
        return Err(Error::MalformedHeader("vocabulary size W must be >= 1".into()));
    }

    let mut counts: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_docs];
    let mut seen = 0usize;
    for (i, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut parts = trimmed.split_whitespace();
        let mut next_int = |what: &'static str| -> Result<i64> {
            parts
                .next()
                .ok_or_else(|| {
                    Error::MalformedHeader(format!("line {line_no}: missing {what}"))
                })?
                .parse::<i64>()
                .map_err(|_| {
                    Error::MalformedHeader(format!("line {line_no}: {what} is not an integer"))
                })
        };
        let doc = next_int("docID")?;
        let word = next_int("wordID")?;
        let count = next_int("count")?;
        if parts.next().is_some() {
            return Err(Error::MalformedHeader(format!(
                "line {line_no}: expected exactly three fields"
            )));
        }
        if doc < 1 || doc as usize > n_docs {
            return Err(Error::IndexOutOfRange {
                what: "docID",
                value: doc,
                max: n_docs,
                line: line_no,
            });
        }
        if word < 1 || word as usize > vocab {
            return Err(Error::IndexOutOfRange {
                what: "wordID",
                value: word,
                max: vocab,
                line: line_no,
            });
        }
        if count < 1 {
            return Err(Error::CountNonPositive { value: count, line: line_no });
        }
        counts[(doc - 1) as usize].push(((word - 1) as u32, count as u32));
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::MalformedHeader(format!(
            "header declares {nnz} triplets, file holds {seen}"
        )));
    }
    let docs = counts.into_iter().map(Document::from_counts).collect::<Result<Vec<_>>>()?;
    Corpus::new(vocab, docs)
}

/// Writes a corpus in the UCI bag-of-words layout.
pub fn write_uci_bagofwords(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let nnz: usize = corpus.docs().iter().map(|d| d.counts().len()).sum();
    writeln!(out, "{}", corpus.n_docs())?;
    writeln!(out, "{}", corpus.d())?;
    writeln!(out, "{nnz}")?;
    for (i, doc) in corpus.docs().iter().enumerate() {
        for &(word, count) in doc.counts() {
            writeln!(out, "{} {} {}", i + 1, word + 1, count)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a vocabulary file (one token per line) and checks its length.
pub fn read_vocab(path: &Path, expected: usize) -> Result<Vec<String>> {
    let file = File::open(path)?;
    let names: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.len() != expected {
        return Err(Error::VocabLengthMismatch { got: names.len(), expected });
    }
    Ok(names)
}

pub fn write_vocab(names: &[String], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for n in names {
        writeln!(out, "{n}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes columns as a TSV matrix, d rows by k columns.
pub fn write_topics_tsv(columns: &[DVector<f64>], path: &Path) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::InvalidParameter("no columns to write".into()));
    }
    let d = columns[0].len();
    if columns.iter().any(|c| c.len() != d) {
        return Err(Error::DimensionMismatch("columns of unequal length".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..d {
        let row: Vec<String> = columns.iter().map(|c| format!("{:.17e}", c[i])).collect();
        writeln!(out, "{}", row.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a TSV matrix back into columns.
pub fn read_topics_tsv(path: &Path) -> Result<Vec<DVector<f64>>> {
    let file = File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::MalformedHeader(format!("line {}: bad float {tok:?}", i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::DimensionMismatch(format!(
                    "line {}: {} fields, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MalformedHeader("empty topic matrix".into()));
    }
    let k = rows[0].len();
    let d = rows.len();
    Ok((0..k).map(|j| DVector::from_fn(d, |i, _| rows[i][j])).collect())
}

/// Serializable mirror of [`RecoveryResult`] minus the columns (those go to
/// the TSV); everything needed to rerun and audit a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub n_columns: usize,
    pub singular_values: Vec<f64>,
    pub skewness_estimates: Vec<f64>,
    pub scale_estimates: Vec<f64>,
    pub alpha_hat: Option<Vec<f64>>,
    pub theta_used: Vec<f64>,
    pub whitening_residual: f64,
    pub singular_value_gaps: Vec<f64>,
    pub dropped_columns: usize,
    pub unreliable_columns: Vec<usize>,
    pub theta_draws: usize,
    pub skipped_documents: usize,
    pub status: RecoveryStatus,
}

impl From<&RecoveryResult> for RecoveryRecord {
    fn from(r: &RecoveryResult) -> Self {
        Self {
            n_columns: r.n_columns(),
            singular_values: r.singular_values.clone(),
            skewness_estimates: r.skewness_estimates.clone(),
            scale_estimates: r.scale_estimates.clone(),
            alpha_hat: r.alpha_hat.as_ref().map(|a| a.iter().cloned().collect()),
            theta_used: r.theta_used.iter().cloned().collect(),
            whitening_residual: r.diagnostics.whitening_residual,
            singular_value_gaps: r.diagnostics.singular_value_gaps.clone(),
            dropped_columns: r.diagnostics.dropped_columns,
            unreliable_columns: r.diagnostics.unreliable_columns.clone(),
            theta_draws: r.diagnostics.theta_draws,
            skipped_documents: r.diagnostics.skipped_documents,
            status: r.diagnostics.status,
        }
    }
}

/// Writes a value as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
    out.flush()?;
    Ok(())
}

/// Per-topic top words by probability, for vocabulary inspection.
pub fn top_words(
    columns: &[DVector<f64>],
    vocab: &[String],
    count: usize,
) -> Vec<Vec<(String, f64)>> {
    columns
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..col.len()).collect();
            idx.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).expect("finite entries"));
            idx.into_iter().take(count).map(|i| (vocab[i].clone(), col[i])).collect()
        })
        .collect()
}
