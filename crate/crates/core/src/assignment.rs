//! Rectangular maximum-weight bipartite assignment.
//!
//! The solver is the shortest-augmenting-path method with row/column
//! potentials (Jonker-Volgenant family, no initialization heuristic). Among
//! optimal assignments the lexicographically smallest sequence of
//! `(source, target)` index pairs is returned; candidates for that pass are
//! filtered by dual tightness so only edges that can appear in an optimum
//! are re-checked.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::SimilarityMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("similarity matrix is empty ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("non-finite weight at ({0}, {1})")]
    NonFinite(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub source: String,
    pub target: Option<String>,
    pub score: f64,
}

/// One-to-one matching of source attributes to target attributes or Null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// In source attribute order; every source appears exactly once.
    pub pairs: Vec<MatchPair>,
    pub total_weight: f64,
    /// `total_weight / |target attributes|`.
    pub reward: f64,
}

impl Matching {
    pub fn target_of(&self, source: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|p| p.source == source)
            .and_then(|p| p.target.as_deref())
    }

    pub fn contains_source(&self, source: &str) -> bool {
        self.pairs.iter().any(|p| p.source == source)
    }
}

/// Index-level result: `row_to_col[i]` is the column matched to row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

struct Solved {
    total: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Minimum-cost assignment of every row (`rows.len() <= cols.len()`) where
/// cost = -weight. `u`/`v` are the final potentials, indexed like `rows` and
/// `cols`.
fn solve_rows_le_cols(rows: &[usize], cols: &[usize], w: &dyn Fn(usize, usize) -> f64) -> Solved {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // owner[j]: 1-based row owning column j, 0 if free. Column 0 is a sentinel.
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = -w(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| w(rows[r], cols[c]))
        .sum();
    Solved {
        total,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Best total weight over assignments of size `min(|rows|, |cols|)`.
fn best_total(rows: &[usize], cols: &[usize], w: &dyn Fn(usize, usize) -> f64) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    if rows.len() <= cols.len() {
        solve_rows_le_cols(rows, cols, w).total
    } else {
        solve_rows_le_cols(cols, rows, &|c, r| w(r, c)).total
    }
}

/// Maximum-weight assignment on an `m x n` weight function with
/// deterministic lexicographic tie-breaking.
pub fn optimal_assignment(m: usize, n: usize, w: &dyn Fn(usize, usize) -> f64) -> Assignment {
    if m == 0 || n == 0 {
        return Assignment {
            row_to_col: vec![None; m],
            total: 0.0,
        };
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..n).collect();

    // reduced cost of edge (row i, col j) in the first solve; an edge that is
    // not tight cannot appear in any optimal assignment
    let (optimum, tight): (f64, Box<dyn Fn(usize, usize) -> f64 + '_>) = if m <= n {
        let s = solve_rows_le_cols(&all_rows, &all_cols, w);
        let (u, v) = (s.u, s.v);
        (s.total, Box::new(move |i, j| -w(i, j) - u[i] - v[j]))
    } else {
        let s = solve_rows_le_cols(&all_cols, &all_rows, &|c, r| w(r, c));
        let (u, v) = (s.u, s.v);
        (s.total, Box::new(move |i, j| -w(i, j) - u[j] - v[i]))
    };
    let tol = 1e-9 * optimum.abs().max(1.0);

    let mut row_to_col = vec![None; m];
    let mut free_rows: Vec<usize> = all_rows.clone();
    let mut free_cols: Vec<usize> = all_cols.clone();
    let mut fixed = 0.0;
    for i in 0..m {
        free_rows.retain(|&r| r != i);
        if free_cols.is_empty() {
            continue;
        }
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            if tight(i, j) > tol {
                continue;
            }
            let rest_cols: Vec<usize> = free_cols
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != pos)
                .map(|(_, &c)| c)
                .collect();
            // cardinality must stay min(m, n) overall
            if fixed_count(&row_to_col) + 1 + free_rows.len().min(rest_cols.len()) != m.min(n) {
                continue;
            }
            let rest = best_total(&free_rows, &rest_cols, w);
            if fixed + w(i, j) + rest >= optimum - tol {
                chosen = Some(pos);
                break;
            }
        }
        if let Some(pos) = chosen {
            let j = free_cols.remove(pos);
            fixed += w(i, j);
            row_to_col[i] = Some(j);
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|j| w(i, j)))
        .sum();
    Assignment { row_to_col, total }
}

fn fixed_count(row_to_col: &[Option<usize>]) -> usize {
    row_to_col.iter().filter(|c| c.is_some()).count()
}

/// Maximum-weight one-to-one matching on the combined scores; sources left
/// over when there are more sources than targets map to Null.
pub fn solve_assignment(m: &SimilarityMatrix) -> Result<Matching, AssignmentError> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows == 0 || cols == 0 {
        return Err(AssignmentError::EmptyMatrix { rows, cols });
    }
    for i in 0..rows {
        for j in 0..cols {
            if !m.combined(i, j).is_finite() {
                return Err(AssignmentError::NonFinite(i, j));
            }
        }
    }
    let a = optimal_assignment(rows, cols, &|i, j| m.combined(i, j));
    let pairs = a
        .row_to_col
        .iter()
        .enumerate()
        .map(|(i, c)| MatchPair {
            source: m.source_attrs()[i].clone(),
            target: c.map(|j| m.target_attrs()[j].clone()),
            score: c.map_or(0.0, |j| m.combined(i, j)),
        })
        .collect();
    Ok(Matching {
        pairs,
        total_weight: a.total,
        reward: a.total / cols as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> impl Fn(usize, usize) -> f64 + '_ {
        move |i, j| rows[i][j]
    }

    #[test]
    fn two_by_two() {
        let rows = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let got = solve_assignment(&SimilarityMatrix::from_rows(&rows)).unwrap();
        assert_eq!(got.pairs[0].target.as_deref(), Some("t0"));
        assert_eq!(got.pairs[1].target.as_deref(), Some("t1"));
        assert!((got.total_weight - 1.7).abs() < 1e-12);
        assert!((got.reward - 0.85).abs() < 1e-12);
    }

    #[test]
    fn single_row() {
        let got = solve_assignment(&SimilarityMatrix::from_rows(&[vec![0.3, 0.7]])).unwrap();
        assert_eq!(got.pairs[0].target.as_deref(), Some("t1"));
        assert!((got.total_weight - 0.7).abs() < 1e-12);
        assert!((got.reward - 0.35).abs() < 1e-12);
    }

    #[test]
    fn tall_matrix_leaves_one_null() {
        let rows = vec![vec![0.5, 0.1], vec![0.4, 0.9], vec![0.3, 0.2]];
        let got = solve_assignment(&SimilarityMatrix::from_rows(&rows)).unwrap();
        assert_eq!(got.pairs.iter().filter(|p| p.target.is_none()).count(), 1);
        assert_eq!(got.pairs[2].target, None);
        assert_eq!(got.pairs[2].score, 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        let m = SimilarityMatrix::from_combined(vec![], vec!["x".into()], &[]);
        assert_eq!(
            solve_assignment(&m).unwrap_err(),
            AssignmentError::EmptyMatrix { rows: 0, cols: 1 }
        );
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        // every permutation is optimal
        let flat = vec![vec![0.5; 3]; 3];
        let a = optimal_assignment(3, 3, &dense(&flat));
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        // more sources than targets: the earliest sources get matched
        let tall = vec![vec![0.5, 0.5]; 4];
        let a = optimal_assignment(4, 2, &dense(&tall));
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), None, None]);
        // zero weights still yield min(m, n) pairs
        let zeros = vec![vec![0.0; 3]; 2];
        let a = optimal_assignment(2, 3, &dense(&zeros));
        assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
    }

    #[test]
    fn tie_break_beats_solver_order() {
        // (0->1, 1->0) and (0->0, 1->1) both sum to 1.0
        let rows = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.0, 0.0]];
        let a = optimal_assignment(3, 2, &dense(&rows));
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), None]);
        // source 0 cannot be matched optimally, so it is the Null one
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.2, 1.0]];
        let a = optimal_assignment(3, 2, &dense(&rows));
        assert_eq!(a.row_to_col, vec![None, Some(0), Some(1)]);
    }
}
