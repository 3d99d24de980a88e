//! Monte-Carlo tree search over candidate unpivot sets.
//!
//! Each node holds a candidate set of source attributes. A pass selects a
//! node by UCT, expands it (model feedback + refinement, or with
//! probability ε a fresh radius-1 modification), evaluates the child, and
//! backs the reward up with the max-average rule.

mod neighbors;

use std::collections::HashSet;
use std::sync::{Condvar, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    prompts, ChatMessage, Gateway, GatewayError, PromptKind, DEFAULT_VALUE_NAME, DEFAULT_VAR_NAME,
};
use crate::matcher::{CandidateEvaluator, Evaluation, MatchError};
use crate::table::{Cell, Table, UnpivotOperator};

pub use neighbors::{radius1_neighbors, sample_fresh_neighbor, CandidateSet};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Probability of a random radius-1 expansion instead of a model one.
    pub epsilon_random: f64,
    pub uct_constant: f64,
    pub uct_epsilon: f64,
    pub max_children: usize,
    pub iterations: usize,
    pub workers: usize,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            epsilon_random: 0.05,
            uct_constant: 2.0,
            uct_epsilon: 1e-6,
            max_children: 3,
            iterations: 2,
            workers: 5,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.epsilon_random) {
            return bad("epsilon_random must lie in [0, 1]");
        }
        if !(self.uct_constant.is_finite() && self.uct_constant > 0.0) {
            return bad("uct_constant must be positive");
        }
        if !(self.uct_epsilon.is_finite() && self.uct_epsilon > 0.0) {
            return bad("uct_epsilon must be positive");
        }
        if self.max_children == 0 {
            return bad("max_children must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Root,
    LlmRefined,
    RandomRadius1,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Source order.
    pub candidate_set: Vec<String>,
    pub q_value: f64,
    pub visit_count: u64,
    pub reward: Option<f64>,
    pub children: Vec<usize>,
    pub provenance: Provenance,
    pub evaluation: Option<Evaluation>,
    #[serde(skip)]
    set: CandidateSet,
    /// Assistant turn used when this node's set is refined.
    #[serde(skip)]
    reply: String,
    /// Expansions of this node currently in flight.
    #[serde(skip)]
    pending: usize,
}

impl SearchNode {
    pub fn set(&self) -> &CandidateSet {
        &self.set
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    /// Every set ever produced by a random expansion.
    #[serde(skip)]
    random_registry: HashSet<CandidateSet>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    fn push(
        &mut self,
        parent: Option<usize>,
        set: CandidateSet,
        names: Vec<String>,
        provenance: Provenance,
        evaluation: Evaluation,
        reply: String,
    ) -> usize {
        let id = self.nodes.len();
        let reward = evaluation.reward();
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        self.nodes.push(SearchNode {
            id,
            parent,
            depth,
            candidate_set: names,
            q_value: reward,
            visit_count: 0,
            reward: Some(reward),
            children: Vec::new(),
            provenance,
            evaluation: Some(evaluation),
            set,
            reply,
            pending: 0,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    /// Add an evaluated node with Q = R and no visits yet; `None` makes a
    /// root (only valid on an empty tree).
    pub fn insert(
        &mut self,
        parent: Option<usize>,
        set: CandidateSet,
        names: Vec<String>,
        provenance: Provenance,
        evaluation: Evaluation,
    ) -> usize {
        assert_eq!(parent.is_none(), self.nodes.is_empty(), "exactly one root, inserted first");
        self.push(parent, set, names, provenance, evaluation, String::new())
    }

    /// Evaluated node with the highest reward; ties go to the smaller set,
    /// then to the earlier node.
    pub fn best_node(&self) -> Option<usize> {
        let mut best: Option<(f64, usize, usize)> = None;
        for n in &self.nodes {
            let Some(r) = n.reward else { continue };
            let better = match best {
                None => true,
                Some((br, bl, _)) => r > br || (r == br && n.set.len() < bl),
            };
            if better {
                best = Some((r, n.set.len(), n.id));
            }
        }
        best.map(|(_, _, id)| id)
    }
}

pub fn uct_score(q: f64, n_parent: u64, n_child: u64, c: f64, eps: f64) -> f64 {
    let ln = (n_parent.max(1) as f64).ln();
    q + c * (ln / (n_child as f64 + eps)).sqrt()
}

fn best_child(tree: &SearchTree, id: usize, cfg: &SearchConfig) -> usize {
    let node = &tree.nodes[id];
    let mut best = node.children[0];
    let mut best_score = f64::NEG_INFINITY;
    for &c in &node.children {
        let ch = &tree.nodes[c];
        let s = uct_score(ch.q_value, node.visit_count, ch.visit_count, cfg.uct_constant, cfg.uct_epsilon);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

/// Descend by UCT from the root to the first node that is not fully
/// expanded.
pub fn select(tree: &SearchTree, cfg: &SearchConfig) -> usize {
    let mut cur = 0;
    while tree.nodes[cur].children.len() >= cfg.max_children {
        cur = best_child(tree, cur, cfg);
    }
    cur
}

/// Like [`select`], but in-flight expansions count toward the child limit.
/// `None` means every reachable slot is reserved.
fn select_reserving(tree: &SearchTree, cfg: &SearchConfig) -> Option<usize> {
    let mut cur = 0;
    loop {
        let n = &tree.nodes[cur];
        if n.children.len() + n.pending < cfg.max_children {
            return Some(cur);
        }
        if n.children.is_empty() {
            return None;
        }
        cur = best_child(tree, cur, cfg);
    }
}

/// One max-average step: halfway from `q` toward the larger of the node's
/// own reward and its best child's Q.
pub fn max_average(q: f64, reward: f64, child_qs: &[f64]) -> f64 {
    let best = child_qs.iter().copied().fold(reward, f64::max);
    0.5 * (q + best)
}

/// Max-average update along `path` (root to leaf). The leaf keeps its Q;
/// every ancestor moves halfway toward the larger of its own reward and
/// its best child's Q. Visit counts increase along the whole path.
pub fn backpropagate(tree: &mut SearchTree, path: &[usize]) {
    for &id in path {
        tree.nodes[id].visit_count += 1;
    }
    for &id in path.iter().rev().skip(1) {
        let node = &tree.nodes[id];
        let child_qs: Vec<f64> = node.children.iter().map(|&c| tree.nodes[c].q_value).collect();
        let q = max_average(node.q_value, node.reward.unwrap_or(node.q_value), &child_qs);
        debug_assert!((0.0..=1.0).contains(&q), "Q left [0, 1]: {q}");
        tree.nodes[id].q_value = q;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub max_depth: usize,
    pub llm_call_count: usize,
    pub llm_expansion_count: usize,
    pub random_expansion_count: usize,
    pub failed_passes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub best: Evaluation,
    pub best_node: usize,
    pub tree_stats: TreeStats,
    /// Best reward after initialization and after each iteration.
    pub best_reward_history: Vec<f64>,
    pub failures: Vec<String>,
    pub tree: SearchTree,
}

enum Step {
    Llm,
    Random(CandidateSet),
}

struct Plan {
    parent: usize,
    set: CandidateSet,
    reply: String,
    step: Step,
}

struct Child {
    set: CandidateSet,
    provenance: Provenance,
    reply: String,
    evaluation: Evaluation,
}

struct Shared {
    tree: Mutex<SearchTree>,
    released: Condvar,
    failures: Mutex<Vec<String>>,
}

/// The search bound to one (source, target) pair.
pub struct Searcher<'a> {
    source: &'a Table,
    target: &'a Table,
    gateway: &'a Gateway,
    evaluator: &'a dyn CandidateEvaluator,
    cfg: SearchConfig,
    init_conversation: Vec<ChatMessage>,
    source_samples: Vec<Vec<Cell>>,
    target_samples: Vec<Vec<Cell>>,
}

impl<'a> Searcher<'a> {
    pub fn new(
        source: &'a Table,
        target: &'a Table,
        cfg: SearchConfig,
        gateway: &'a Gateway,
        evaluator: &'a dyn CandidateEvaluator,
    ) -> Result<Self, SearchError> {
        cfg.validate()?;
        Ok(Searcher {
            source,
            target,
            gateway,
            evaluator,
            init_conversation: prompts::render_init_prompt(source, target),
            source_samples: prompts::sample_rows(source),
            target_samples: prompts::sample_rows(target),
            cfg,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    fn to_set(&self, names: &[String]) -> CandidateSet {
        CandidateSet::new(names.iter().filter_map(|n| self.source.index_of(n)).collect())
    }

    /// Name the generated columns and score the operator. The empty set
    /// needs no names, so it costs no model call.
    pub fn evaluate_set(&self, set: &CandidateSet) -> Result<Evaluation, SearchError> {
        let names = set.names(self.source.attributes());
        let op = if names.is_empty() {
            UnpivotOperator::new(names, DEFAULT_VAR_NAME, DEFAULT_VALUE_NAME)
        } else {
            let (var, value) = self.gateway.name_var_value(&names, self.source, self.target)?;
            UnpivotOperator::new(names, var, value)
        };
        Ok(self.evaluator.evaluate(&op)?)
    }

    /// Root from the model's initial proposal, evaluated, with N = 1.
    pub fn initialize(&self) -> Result<SearchTree, SearchError> {
        let proposal = self
            .gateway
            .propose(PromptKind::Init, &self.init_conversation, self.source)?;
        let set = self.to_set(&proposal.unpivot_columns);
        let evaluation = self.evaluate_set(&set)?;
        let mut tree = SearchTree::default();
        let names = set.names(self.source.attributes());
        tree.push(None, set, names, Provenance::Root, evaluation, proposal.raw);
        tree.nodes[0].visit_count = 1;
        tracing::info!(set = ?tree.nodes[0].candidate_set, reward = tree.nodes[0].q_value, "root evaluated");
        Ok(tree)
    }

    /// Decide how `node` is expanded. The coin and any random draw happen
    /// here, under the tree guard, so the registry stays consistent.
    fn plan(&self, tree: &mut SearchTree, node: usize, rng: &mut ChaCha8Rng) -> Plan {
        let n = &tree.nodes[node];
        let (set, reply) = (n.set.clone(), n.reply.clone());
        let coin: f64 = rng.gen();
        let step = if coin < self.cfg.epsilon_random {
            let universe = self.source.attributes().len();
            match sample_fresh_neighbor(&set, universe, &tree.random_registry, rng) {
                Some(s) => {
                    tree.random_registry.insert(s.clone());
                    Step::Random(s)
                }
                None => {
                    tracing::debug!(node, "radius-1 neighbors exhausted; using the model");
                    Step::Llm
                }
            }
        } else {
            Step::Llm
        };
        Plan {
            parent: node,
            set,
            reply,
            step,
        }
    }

    /// The slow part of an expansion: model calls and evaluation.
    fn produce(&self, plan: Plan) -> Result<Child, SearchError> {
        match plan.step {
            Step::Random(set) => {
                let evaluation = self.evaluate_set(&set)?;
                let reply = prompts::proposal_json(&set.names(self.source.attributes()));
                Ok(Child {
                    set,
                    provenance: Provenance::RandomRadius1,
                    reply,
                    evaluation,
                })
            }
            Step::Llm => {
                let names = plan.set.names(self.source.attributes());
                let fb_prompt = prompts::render_feedback_prompt(
                    self.source,
                    self.target,
                    &names,
                    &self.source_samples,
                    &self.target_samples,
                );
                let feedback = self.gateway.feedback(&fb_prompt)?;
                let refine = prompts::render_refine_prompt(&self.init_conversation, &plan.reply, &feedback);
                let proposal = self.gateway.propose(PromptKind::Refine, &refine, self.source)?;
                let set = self.to_set(&proposal.unpivot_columns);
                let evaluation = self.evaluate_set(&set)?;
                Ok(Child {
                    set,
                    provenance: Provenance::LlmRefined,
                    reply: proposal.raw,
                    evaluation,
                })
            }
        }
    }

    fn attach(&self, tree: &mut SearchTree, parent: usize, child: Child) -> usize {
        let names = child.set.names(self.source.attributes());
        let id = tree.push(Some(parent), child.set, names, child.provenance, child.evaluation, child.reply);
        tracing::debug!(
            id,
            parent,
            provenance = ?child.provenance,
            set = ?tree.nodes[id].candidate_set,
            reward = tree.nodes[id].q_value,
            "child evaluated"
        );
        id
    }

    /// Expand `node` with one new child and return its id. Does not
    /// backpropagate.
    pub fn expand(&self, tree: &mut SearchTree, node: usize, rng: &mut ChaCha8Rng) -> Result<usize, SearchError> {
        let plan = self.plan(tree, node, rng);
        let child = self.produce(plan)?;
        Ok(self.attach(tree, node, child))
    }

    /// One select, expand, evaluate, backpropagate pass.
    fn pass(&self, shared: &Shared, rng: &mut ChaCha8Rng) -> Result<(), SearchError> {
        let plan = {
            let mut tree = shared.tree.lock().expect("tree poisoned");
            let node = loop {
                match select_reserving(&tree, &self.cfg) {
                    Some(id) => break id,
                    None => tree = shared.released.wait(tree).expect("tree poisoned"),
                }
            };
            tree.nodes[node].pending += 1;
            self.plan(&mut tree, node, rng)
        };
        let parent = plan.parent;
        let produced = self.produce(plan);
        let mut tree = shared.tree.lock().expect("tree poisoned");
        tree.nodes[parent].pending -= 1;
        let out = produced.map(|child| {
            let id = self.attach(&mut tree, parent, child);
            let path = tree.path_to(id);
            backpropagate(&mut tree, &path);
        });
        drop(tree);
        shared.released.notify_all();
        out
    }

    fn pass_logged(&self, shared: &Shared, iteration: usize, worker: usize) {
        let mut rng = pass_rng(self.cfg.rng_seed, iteration, worker);
        if let Err(e) = self.pass(shared, &mut rng) {
            tracing::warn!(iteration, worker, error = %e, "search pass failed");
            shared
                .failures
                .lock()
                .expect("failures poisoned")
                .push(format!("iteration {iteration}, worker {worker}: {e}"));
        }
    }

    pub fn run(&self) -> Result<SearchResult, SearchError> {
        let calls_before = self.gateway.call_count();
        let tree = self.initialize()?;
        let mut history = vec![tree.root().q_value];
        let shared = Shared {
            tree: Mutex::new(tree),
            released: Condvar::new(),
            failures: Mutex::new(Vec::new()),
        };
        for iteration in 0..self.cfg.iterations {
            if self.cfg.workers == 1 {
                self.pass_logged(&shared, iteration, 0);
            } else {
                std::thread::scope(|s| {
                    for worker in 0..self.cfg.workers {
                        let shared = &shared;
                        s.spawn(move || self.pass_logged(shared, iteration, worker));
                    }
                });
            }
            let tree = shared.tree.lock().expect("tree poisoned");
            let best = tree.best_node().expect("root is evaluated");
            history.push(tree.nodes[best].reward.expect("evaluated"));
            tracing::info!(iteration, nodes = tree.len(), best_reward = history[history.len() - 1], "iteration done");
        }
        let tree = shared.tree.into_inner().expect("tree poisoned");
        let failures = shared.failures.into_inner().expect("failures poisoned");
        let best_node = tree.best_node().expect("root is evaluated");
        let count = |p: Provenance| tree.nodes.iter().filter(|n| n.provenance == p).count();
        let tree_stats = TreeStats {
            node_count: tree.len(),
            max_depth: tree.max_depth(),
            llm_call_count: self.gateway.call_count() - calls_before,
            llm_expansion_count: count(Provenance::LlmRefined),
            random_expansion_count: count(Provenance::RandomRadius1),
            failed_passes: failures.len(),
        };
        Ok(SearchResult {
            best: tree.nodes[best_node].evaluation.clone().expect("evaluated"),
            best_node,
            tree_stats,
            best_reward_history: history,
            failures,
            tree,
        })
    }
}

/// Independent stream per (iteration, worker) so runs replay exactly.
pub fn pass_rng(seed: u64, iteration: usize, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | worker as u64);
    rng
}

/// Initialize, then run `cfg.iterations` rounds of `cfg.workers` passes.
/// Failed passes are recorded in the result; only a failed root is fatal.
pub fn run_search(
    source: &Table,
    target: &Table,
    cfg: &SearchConfig,
    gateway: &Gateway,
    evaluator: &dyn CandidateEvaluator,
) -> Result<SearchResult, SearchError> {
    Searcher::new(source, target, cfg.clone(), gateway, evaluator)?.run()
}
