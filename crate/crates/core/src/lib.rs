//! Schema matching between a pivot table and a standard relational table.
//!
//! A bounded-stochastic Monte-Carlo tree search proposes unpivot operators
//! for the pivot table (guided by an LLM through [`gateway`]); each
//! candidate is scored by unpivoting, building an attribute similarity
//! matrix and solving a maximum-weight assignment ([`matcher`]). The best
//! operator and its one-to-one matching are the result.

pub mod assignment;
pub mod embedding;
pub mod evaluation;
pub mod gateway;
pub mod matcher;
pub mod par;
pub mod search;
pub mod similarity;
pub mod table;

pub use assignment::{solve_assignment, AssignmentError, MatchPair, Matching};
pub use embedding::{EmbeddingProvider, HashingEmbedder, HttpEmbedder, ProviderError};
pub use evaluation::{score, Bundle, GroundTruth, MetricsReport, Prediction};
pub use gateway::{Gateway, GatewayConfig, GatewayError, MockScript, MockTransport};
pub use matcher::{evaluate, CandidateEvaluator, Evaluation, MatchError, Matcher};
pub use par::ExecMode;
pub use search::{run_search, SearchConfig, SearchError, SearchResult, Searcher};
pub use similarity::{build_matrix, SimilarityBreakdown, SimilarityMatrix};
pub use table::{apply_pivot, apply_unpivot, load_table, Cell, Table, TableError, UnpivotOperator};
