//! Candidate evaluation: unpivot the source table with a candidate operator,
//! score it against the target, and solve the assignment.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError, Matching};
use crate::embedding::{EmbeddingProvider, ProviderError};
use crate::par::ExecMode;
use crate::similarity::{build_matrix_with, MatrixOptions};
use crate::table::{apply_unpivot, Table, TableError, UnpivotOperator};

pub const DEFAULT_ROW_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("{0}")]
    Other(String),
}

/// A scored candidate operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub operator: UnpivotOperator,
    pub matching: Matching,
    pub unpivoted_attr_count: usize,
}

impl Evaluation {
    pub fn reward(&self) -> f64 {
        self.matching.reward
    }
}

/// Anything that can score a candidate operator with a deterministic reward
/// in `[0, 1]`. The search only talks to this trait.
pub trait CandidateEvaluator: Send + Sync {
    fn evaluate(&self, op: &UnpivotOperator) -> Result<Evaluation, MatchError>;
}

/// Unpivot, build the similarity matrix, and solve the assignment.
pub fn evaluate(
    source: &Table,
    target: &Table,
    op: &UnpivotOperator,
    embedder: &dyn EmbeddingProvider,
) -> Result<Evaluation, MatchError> {
    evaluate_with(source, target, op, embedder, &MatrixOptions {
        row_cap: DEFAULT_ROW_CAP,
        exec: ExecMode::default(),
    })
}

pub fn evaluate_with(
    source: &Table,
    target: &Table,
    op: &UnpivotOperator,
    embedder: &dyn EmbeddingProvider,
    opts: &MatrixOptions,
) -> Result<Evaluation, MatchError> {
    let unpivoted = apply_unpivot(source, op)?;
    let matrix = build_matrix_with(&unpivoted, target, embedder, opts)?;
    let matching = solve_assignment(&matrix)?;
    Ok(Evaluation {
        operator: op.clone(),
        matching,
        unpivoted_attr_count: unpivoted.attributes().len(),
    })
}

type CacheKey = (Vec<String>, String, String);

/// Evaluator bound to one (source, target) pair, caching results by the
/// canonical operator. Safe to share between search workers.
pub struct Matcher {
    source: Arc<Table>,
    target: Arc<Table>,
    embedder: Arc<dyn EmbeddingProvider>,
    options: MatrixOptions,
    cache: DashMap<CacheKey, Evaluation>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Matcher {
    pub fn new(source: Arc<Table>, target: Arc<Table>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Matcher {
            source,
            target,
            embedder,
            options: MatrixOptions {
                row_cap: DEFAULT_ROW_CAP,
                exec: ExecMode::default(),
            },
            cache: DashMap::new(),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn with_options(mut self, options: MatrixOptions) -> Self {
        self.options = options;
        self
    }

    pub fn source(&self) -> &Table {
        &self.source
    }

    pub fn target(&self) -> &Table {
        &self.target
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn cache_misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn key(op: &UnpivotOperator) -> CacheKey {
        let set = op.canonical_set();
        if set.is_empty() {
            // var/value names are irrelevant when nothing is unpivoted
            return (set, String::new(), String::new());
        }
        (set, op.var_name.clone(), op.value_name.clone())
    }
}

impl CandidateEvaluator for Matcher {
    fn evaluate(&self, op: &UnpivotOperator) -> Result<Evaluation, MatchError> {
        let key = Matcher::key(op);
        if let Some(hit) = self.cache.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            let mut e = hit.clone();
            e.operator = op.clone();
            return Ok(e);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let e = evaluate_with(&self.source, &self.target, op, self.embedder.as_ref(), &self.options)?;
        self.cache.insert(key, e.clone());
        Ok(e)
    }
}
