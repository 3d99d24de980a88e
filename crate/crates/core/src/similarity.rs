//! Attribute similarity: lexical (edit distance), semantic (embedding cosine)
//! and distributional (Jensen-Shannon) signals, their average, and the
//! dense source-by-target matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::embedding::{EmbeddingProvider, ProviderError};
use crate::par::{map_range, ExecMode};
use crate::table::{Cell, Table};

fn normalize(s: &str) -> Vec<char> {
    s.nfc().collect::<String>().to_lowercase().chars().collect()
}

/// Edit distance over Unicode scalar values (two-row DP).
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)` on NFC-normalized, lowercased text.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// Cosine similarity clamped to `[0, 1]`. A zero vector scores 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
}

pub fn semantic_similarity(
    a: &str,
    b: &str,
    embedder: &dyn EmbeddingProvider,
) -> Result<f64, ProviderError> {
    if a == b {
        return Ok(1.0);
    }
    let v = embedder.embed(&[a.to_string(), b.to_string()])?;
    match v.as_slice() {
        [x, y] if x.len() == y.len() => Ok(cosine(x, y)),
        [x, y] => Err(ProviderError::Dimension(x.len(), y.len())),
        _ => Err(ProviderError::Malformed(format!("{} vectors for 2 inputs", v.len()))),
    }
}

/// Value histogram of an integer-valued column.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl Histogram {
    /// `None` unless every non-missing cell is an integer and at least one is
    /// present.
    pub fn from_cells<'a>(cells: impl IntoIterator<Item = &'a Cell>) -> Option<Histogram> {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for c in cells {
            match c {
                Cell::Integer(i) => {
                    *counts.entry(*i).or_insert(0) += 1;
                    total += 1;
                }
                Cell::Missing => {}
                _ => return None,
            }
        }
        (total > 0).then_some(Histogram { counts, total })
    }

    /// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
    pub fn js_divergence(&self, other: &Histogram) -> f64 {
        let (np, nq) = (self.total as f64, other.total as f64);
        let mut jsd = 0.0;
        let mut term = |p: f64, q: f64| {
            let m = 0.5 * (p + q);
            if p > 0.0 {
                jsd += 0.5 * p * (p / m).log2();
            }
            if q > 0.0 {
                jsd += 0.5 * q * (q / m).log2();
            }
        };
        let mut a = self.counts.iter().peekable();
        let mut b = other.counts.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (Some((ka, ca)), Some((kb, cb))) => {
                    if ka == kb {
                        term(**ca as f64 / np, **cb as f64 / nq);
                        a.next();
                        b.next();
                    } else if ka < kb {
                        term(**ca as f64 / np, 0.0);
                        a.next();
                    } else {
                        term(0.0, **cb as f64 / nq);
                        b.next();
                    }
                }
                (Some((_, ca)), None) => {
                    term(**ca as f64 / np, 0.0);
                    a.next();
                }
                (None, Some((_, cb))) => {
                    term(0.0, **cb as f64 / nq);
                    b.next();
                }
                (None, None) => break,
            }
        }
        jsd.clamp(0.0, 1.0)
    }

    pub fn similarity(&self, other: &Histogram) -> f64 {
        1.0 - self.js_divergence(other)
    }
}

/// `1 - JSD` of the two value distributions, or `None` unless both columns
/// are integer-valued with at least one value each.
pub fn distributional_similarity(va: &[Cell], vb: &[Cell]) -> Option<f64> {
    let ha = Histogram::from_cells(va)?;
    let hb = Histogram::from_cells(vb)?;
    Some(ha.similarity(&hb))
}

/// Arithmetic mean of the present components.
pub fn combine(lexical: f64, semantic: f64, distributional: Option<f64>) -> f64 {
    match distributional {
        Some(d) => (lexical + semantic + d) / 3.0,
        None => (lexical + semantic) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub lexical: f64,
    pub semantic: f64,
    pub distributional: Option<f64>,
    pub combined: f64,
}

impl SimilarityBreakdown {
    pub fn new(lexical: f64, semantic: f64, distributional: Option<f64>) -> Self {
        SimilarityBreakdown {
            lexical,
            semantic,
            distributional,
            combined: combine(lexical, semantic, distributional),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    source_attrs: Vec<String>,
    target_attrs: Vec<String>,
    scores: Vec<SimilarityBreakdown>,
}

impl SimilarityMatrix {
    /// Matrix from raw combined scores (all other components set equal).
    /// Handy for assignment tests and callers that bring their own scores.
    pub fn from_combined(
        source_attrs: Vec<String>,
        target_attrs: Vec<String>,
        combined: &[Vec<f64>],
    ) -> Self {
        assert_eq!(combined.len(), source_attrs.len(), "row count");
        let scores = combined
            .iter()
            .flat_map(|row| {
                assert_eq!(row.len(), target_attrs.len(), "column count");
                row.iter().map(|&c| SimilarityBreakdown {
                    lexical: c,
                    semantic: c,
                    distributional: None,
                    combined: c,
                })
            })
            .collect();
        SimilarityMatrix {
            source_attrs,
            target_attrs,
            scores,
        }
    }

    /// Anonymous matrix with indices as attribute names.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        SimilarityMatrix::from_combined(
            (0..m).map(|i| format!("s{i}")).collect(),
            (0..n).map(|j| format!("t{j}")).collect(),
            rows,
        )
    }

    pub fn source_attrs(&self) -> &[String] {
        &self.source_attrs
    }

    pub fn target_attrs(&self) -> &[String] {
        &self.target_attrs
    }

    pub fn rows(&self) -> usize {
        self.source_attrs.len()
    }

    pub fn cols(&self) -> usize {
        self.target_attrs.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &SimilarityBreakdown {
        &self.scores[i * self.target_attrs.len() + j]
    }

    pub fn combined(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).combined
    }

    /// CSV with target attributes as header and source attributes as row
    /// labels; cells are combined scores.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.target_attrs.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (i, s) in self.source_attrs.iter().enumerate() {
            let mut row = vec![s.clone()];
            row.extend((0..self.cols()).map(|j| format!("{:.6}", self.combined(i, j))));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixOptions {
    /// Only the first `row_cap` records feed the value histograms.
    pub row_cap: usize,
    pub exec: ExecMode,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            row_cap: usize::MAX,
            exec: ExecMode::default(),
        }
    }
}

/// Text sent to the embedder for an attribute: its name, plus its
/// description when one exists.
pub fn embedding_text(t: &Table, attr: &str) -> String {
    match t.description(attr) {
        Some(d) => format!("{attr}: {d}"),
        None => attr.to_string(),
    }
}

fn histograms(t: &Table, cap: usize) -> Vec<Option<Histogram>> {
    (0..t.attributes().len())
        .map(|i| Histogram::from_cells(t.records().iter().take(cap).map(|r| &r[i])))
        .collect()
}

pub fn build_matrix(
    left: &Table,
    right: &Table,
    embedder: &dyn EmbeddingProvider,
) -> Result<SimilarityMatrix, ProviderError> {
    build_matrix_with(left, right, embedder, &MatrixOptions::default())
}

/// Dense similarity matrix between every left and right attribute. One
/// embedding call per table.
pub fn build_matrix_with(
    left: &Table,
    right: &Table,
    embedder: &dyn EmbeddingProvider,
    opts: &MatrixOptions,
) -> Result<SimilarityMatrix, ProviderError> {
    let l_text: Vec<String> = left.attributes().iter().map(|a| embedding_text(left, a)).collect();
    let r_text: Vec<String> = right.attributes().iter().map(|a| embedding_text(right, a)).collect();
    let l_vec = embedder.embed(&l_text)?;
    let r_vec = embedder.embed(&r_text)?;
    if l_vec.len() != l_text.len() || r_vec.len() != r_text.len() {
        return Err(ProviderError::Malformed("embedding count mismatch".into()));
    }
    if let (Some(a), Some(b)) = (l_vec.first(), r_vec.first()) {
        if a.len() != b.len() {
            return Err(ProviderError::Dimension(a.len(), b.len()));
        }
    }
    let l_hist = histograms(left, opts.row_cap);
    let r_hist = histograms(right, opts.row_cap);
    let l_norm: Vec<Vec<char>> = left.attributes().iter().map(|a| normalize(a)).collect();
    let r_norm: Vec<Vec<char>> = right.attributes().iter().map(|a| normalize(a)).collect();

    let n = right.attributes().len();
    let rows = map_range(opts.exec, left.attributes().len(), |i| {
        (0..n)
            .map(|j| {
                let (a, b) = (&l_norm[i], &r_norm[j]);
                let longest = a.len().max(b.len());
                let lexical = if longest == 0 {
                    1.0
                } else {
                    1.0 - levenshtein(a, b) as f64 / longest as f64
                };
                let semantic = if l_text[i] == r_text[j] {
                    1.0
                } else {
                    cosine(&l_vec[i], &r_vec[j])
                };
                let distributional = match (&l_hist[i], &r_hist[j]) {
                    (Some(p), Some(q)) => Some(p.similarity(q)),
                    _ => None,
                };
                SimilarityBreakdown::new(lexical, semantic, distributional)
            })
            .collect::<Vec<_>>()
    });
    Ok(SimilarityMatrix {
        source_attrs: left.attributes().to_vec(),
        target_attrs: right.attributes().to_vec(),
        scores: rows.into_iter().flatten().collect(),
    })
}
