//! AND/OR graphs for assembly tasks.
//!
//! A node is a sub-assembly, identified by the set of atomic pieces it
//! contains. A hyper-arc joins two disjoint child sub-assemblies into their
//! union and is labelled with the assembly action performed and the worker
//! who performs it. Every (parent, children, action) split is repeated once
//! per worker so that the search can choose the worker together with the
//! assembly sequence.
//!
//! Nodes are stored sorted by (piece count, piece bits), so children always
//! have smaller ids than their parents in graphs produced by this module.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Maximum number of atomic pieces a graph can hold.
pub const MAX_PIECES: usize = 64;

/// A set of atomic pieces, as a bitmask over the graph's piece list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PieceSet(u64);

impl PieceSet {
    pub const EMPTY: PieceSet = PieceSet(0);

    pub fn from_bits(bits: u64) -> Self {
        PieceSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(piece: usize) -> Self {
        debug_assert!(piece < MAX_PIECES);
        PieceSet(1 << piece)
    }

    /// The first `n` pieces.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_PIECES);
        if n == MAX_PIECES {
            PieceSet(u64::MAX)
        } else {
            PieceSet((1u64 << n) - 1)
        }
    }

    /// Contiguous pieces `start..=end`.
    pub fn interval(start: usize, end: usize) -> Self {
        PieceSet::full(end + 1).difference(PieceSet::full(start))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, piece: usize) -> bool {
        piece < MAX_PIECES && self.0 & (1 << piece) != 0
    }

    pub fn is_subset(self, other: PieceSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: PieceSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: PieceSet) -> PieceSet {
        PieceSet(self.0 | other.0)
    }

    pub fn difference(self, other: PieceSet) -> PieceSet {
        PieceSet(self.0 & !other.0)
    }

    pub fn lowest(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        })
    }

    /// Every two-way split `(left, right)` with `left` holding the lowest
    /// piece; each unordered bipartition appears once.
    pub fn bipartitions(self) -> impl Iterator<Item = (PieceSet, PieceSet)> {
        let low = self.lowest().map_or(0, |i| 1u64 << i);
        let rest = self.0 & !low;
        // Walk the subsets of `rest` downwards; `sub == rest` would leave the
        // right side empty, so start just below it.
        let mut next = if self.len() >= 2 {
            Some(rest.wrapping_sub(1) & rest)
        } else {
            None
        };
        let whole = self;
        std::iter::from_fn(move || {
            let sub = next?;
            next = if sub == 0 {
                None
            } else {
                Some((sub - 1) & rest)
            };
            let left = PieceSet(low | sub);
            Some((left, whole.difference(left)))
        })
    }
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Index of a node in [`Aog::nodes`].
    NodeId
);
id_type!(
    /// Index of a hyper-arc in [`Aog::arcs`].
    ArcId
);
id_type!(
    /// Index of a worker in [`Aog::workers`]; lower ids win cost ties.
    WorkerId
);
id_type!(
    /// Index of an action in [`Aog::actions`].
    ActionId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerKind {
    Human,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Worker {
    pub id: String,
    pub kind: WorkerKind,
}

impl Worker {
    pub fn human(id: impl Into<String>) -> Self {
        Worker {
            id: id.into(),
            kind: WorkerKind::Human,
        }
    }

    pub fn robot(id: impl Into<String>) -> Self {
        Worker {
            id: id.into(),
            kind: WorkerKind::Robot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Internal,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub pieces: PieceSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperArc {
    pub id: ArcId,
    pub parent: NodeId,
    pub children: [NodeId; 2],
    pub action: ActionId,
    pub worker: WorkerId,
    /// `None` until the arc has been costed.
    pub cost: Option<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("piece set is empty")]
    NoPieces,
    #[error("at most {MAX_PIECES} pieces are supported, got {0}")]
    TooManyPieces(usize),
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("duplicate piece `{0}`")]
    DuplicatePiece(String),
    #[error("duplicate worker `{0}`")]
    DuplicateWorker(String),
    #[error("duplicate action `{0}`")]
    DuplicateAction(String),
    #[error("node {node}: unknown piece `{piece}`")]
    UnknownPiece { node: usize, piece: String },
    #[error("arc {arc}: unknown worker `{worker}`")]
    UnknownWorker { arc: usize, worker: String },
    #[error("arc {arc}: unknown action `{action}`")]
    UnknownAction { arc: usize, action: String },
    #[error("{what} ids must be 0..{len} in order; found {found} at position {position}")]
    NonDenseIds {
        what: &'static str,
        len: usize,
        position: usize,
        found: usize,
    },
    #[error("arc {arc}: node {node} does not exist")]
    UnknownNode { arc: usize, node: usize },
    #[error("sub-assembly {{{0}}} cannot be decomposed by any feasible split")]
    NotDecomposable(String),
}

/// An AND/OR graph with per-worker hyper-arcs.
///
/// Immutable once built; costs are changed by producing a new graph
/// ([`Aog::with_costs`]) or by handing explicit costs to the planner.
#[derive(Debug, Clone)]
pub struct Aog {
    pieces: Vec<String>,
    workers: Vec<Worker>,
    actions: Vec<String>,
    nodes: Vec<Node>,
    arcs: Vec<HyperArc>,
    by_pieces: HashMap<PieceSet, NodeId>,
    incoming: Vec<Vec<ArcId>>,
}

/// A feasible two-way split before it is expanded per worker.
#[derive(Debug, Clone)]
struct Split {
    parent: PieceSet,
    left: PieceSet,
    right: PieceSet,
    action: String,
}

impl Aog {
    /// Indexes raw parts. Only checks what is needed to index them
    /// (ids in range and dense); semantic checks live in [`validate`].
    pub fn from_parts(
        pieces: Vec<String>,
        workers: Vec<Worker>,
        actions: Vec<String>,
        nodes: Vec<Node>,
        arcs: Vec<HyperArc>,
    ) -> Result<Aog, GraphError> {
        if pieces.is_empty() {
            return Err(GraphError::NoPieces);
        }
        if pieces.len() > MAX_PIECES {
            return Err(GraphError::TooManyPieces(pieces.len()));
        }
        if workers.is_empty() {
            return Err(GraphError::NoWorkers);
        }
        check_unique(&pieces, GraphError::DuplicatePiece)?;
        check_unique(
            &workers.iter().map(|w| w.id.clone()).collect::<Vec<_>>(),
            GraphError::DuplicateWorker,
        )?;
        check_unique(&actions, GraphError::DuplicateAction)?;
        for (position, node) in nodes.iter().enumerate() {
            if node.id.0 != position {
                return Err(GraphError::NonDenseIds {
                    what: "node",
                    len: nodes.len(),
                    position,
                    found: node.id.0,
                });
            }
        }
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (position, arc) in arcs.iter().enumerate() {
            if arc.id.0 != position {
                return Err(GraphError::NonDenseIds {
                    what: "arc",
                    len: arcs.len(),
                    position,
                    found: arc.id.0,
                });
            }
            for node in std::iter::once(arc.parent).chain(arc.children) {
                if node.0 >= nodes.len() {
                    return Err(GraphError::UnknownNode {
                        arc: arc.id.0,
                        node: node.0,
                    });
                }
            }
            if arc.worker.0 >= workers.len() {
                return Err(GraphError::UnknownWorker {
                    arc: arc.id.0,
                    worker: arc.worker.to_string(),
                });
            }
            if arc.action.0 >= actions.len() {
                return Err(GraphError::UnknownAction {
                    arc: arc.id.0,
                    action: arc.action.to_string(),
                });
            }
            incoming[arc.parent.0].push(arc.id);
        }
        let mut by_pieces = HashMap::with_capacity(nodes.len());
        for node in &nodes {
            by_pieces.entry(node.pieces).or_insert(node.id);
        }
        Ok(Aog {
            pieces,
            workers,
            actions,
            nodes,
            arcs,
            by_pieces,
            incoming,
        })
    }

    fn assemble(pieces: Vec<String>, workers: Vec<Worker>, splits: Vec<Split>) -> Aog {
        let mut sets: BTreeSet<(usize, u64)> = BTreeSet::new();
        sets.insert((pieces.len(), PieceSet::full(pieces.len()).bits()));
        for (i, _) in pieces.iter().enumerate() {
            sets.insert((1, PieceSet::singleton(i).bits()));
        }
        for s in &splits {
            for set in [s.parent, s.left, s.right] {
                sets.insert((set.len(), set.bits()));
            }
        }
        let nodes: Vec<Node> = sets
            .into_iter()
            .enumerate()
            .map(|(i, (_, bits))| Node {
                id: NodeId(i),
                pieces: PieceSet(bits),
            })
            .collect();
        let index: HashMap<PieceSet, NodeId> = nodes.iter().map(|n| (n.pieces, n.id)).collect();

        let mut keyed: Vec<(NodeId, NodeId, NodeId, String)> = splits
            .into_iter()
            .map(|s| (index[&s.parent], index[&s.left], index[&s.right], s.action))
            .collect();
        keyed.sort();
        keyed.dedup();

        let mut actions: Vec<String> = Vec::new();
        let mut action_index: HashMap<String, ActionId> = HashMap::new();
        let mut arcs = Vec::with_capacity(keyed.len() * workers.len());
        for (parent, left, right, action) in keyed {
            let action_id = *action_index.entry(action.clone()).or_insert_with(|| {
                actions.push(action);
                ActionId(actions.len() - 1)
            });
            for w in 0..workers.len() {
                arcs.push(HyperArc {
                    id: ArcId(arcs.len()),
                    parent,
                    children: [left, right],
                    action: action_id,
                    worker: WorkerId(w),
                    cost: None,
                });
            }
        }
        Aog::from_parts(pieces, workers, actions, nodes, arcs)
            .expect("assembled graph is well-formed")
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[HyperArc] {
        &self.arcs
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn arc(&self, id: ArcId) -> &HyperArc {
        &self.arcs[id.0]
    }

    pub fn worker(&self, id: WorkerId) -> &Worker {
        &self.workers[id.0]
    }

    pub fn action_name(&self, id: ActionId) -> &str {
        &self.actions[id.0]
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == name).map(ActionId)
    }

    pub fn worker_id(&self, name: &str) -> Option<WorkerId> {
        self.workers.iter().position(|w| w.id == name).map(WorkerId)
    }

    pub fn node_by_pieces(&self, pieces: PieceSet) -> Option<NodeId> {
        self.by_pieces.get(&pieces).copied()
    }

    /// Hyper-arcs whose parent is `node` (the OR alternatives for building it).
    pub fn arcs_into(&self, node: NodeId) -> &[ArcId] {
        &self.incoming[node.0]
    }

    pub fn full_set(&self) -> PieceSet {
        PieceSet::full(self.pieces.len())
    }

    pub fn root(&self) -> Option<NodeId> {
        self.node_by_pieces(self.full_set())
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.pieces.len() == 1)
            .map(|n| n.id)
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        let pieces = self.nodes[id.0].pieces;
        if pieces == self.full_set() {
            NodeKind::Root
        } else if pieces.len() == 1 {
            NodeKind::Leaf
        } else {
            NodeKind::Internal
        }
    }

    pub fn humans(&self) -> impl Iterator<Item = WorkerId> + '_ {
        self.workers
            .iter()
            .enumerate()
            .filter(|(_, w)| w.kind == WorkerKind::Human)
            .map(|(i, _)| WorkerId(i))
    }

    /// Current arc costs, indexed by arc id.
    pub fn costs(&self) -> Vec<Option<f64>> {
        self.arcs.iter().map(|a| a.cost).collect()
    }

    /// A copy of the graph carrying `costs` (indexed by arc id).
    pub fn with_costs(&self, costs: &[Option<f64>]) -> Aog {
        assert_eq!(costs.len(), self.arcs.len(), "one cost per arc");
        let mut out = self.clone();
        for (arc, cost) in out.arcs.iter_mut().zip(costs) {
            arc.cost = *cost;
        }
        out
    }

    /// Human-readable piece list of a node, e.g. `p1,p2`.
    pub fn describe(&self, pieces: PieceSet) -> String {
        pieces
            .iter()
            .map(|i| self.pieces[i].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_document(&self) -> AogDocument {
        AogDocument {
            pieces: self.pieces.clone(),
            workers: self.workers.clone(),
            actions: Some(self.actions.clone()),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.0,
                    pieces: n.pieces.iter().map(|i| self.pieces[i].clone()).collect(),
                })
                .collect(),
            arcs: self
                .arcs
                .iter()
                .map(|a| ArcDoc {
                    id: a.id.0,
                    parent: a.parent.0,
                    children: [a.children[0].0, a.children[1].0],
                    action: self.actions[a.action.0].clone(),
                    worker: self.workers[a.worker.0].id.clone(),
                    cost: a.cost,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &AogDocument) -> Result<Aog, GraphError> {
        let piece_index: HashMap<&str, usize> = doc
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let mut actions = doc.actions.clone().unwrap_or_default();
        if doc.actions.is_none() {
            for arc in &doc.arcs {
                if !actions.contains(&arc.action) {
                    actions.push(arc.action.clone());
                }
            }
        }
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for node in &doc.nodes {
            let mut set = PieceSet::EMPTY;
            for piece in &node.pieces {
                let i =
                    *piece_index
                        .get(piece.as_str())
                        .ok_or_else(|| GraphError::UnknownPiece {
                            node: node.id,
                            piece: piece.clone(),
                        })?;
                set = set.union(PieceSet::singleton(i));
            }
            nodes.push(Node {
                id: NodeId(node.id),
                pieces: set,
            });
        }
        let mut arcs = Vec::with_capacity(doc.arcs.len());
        for arc in &doc.arcs {
            let worker = doc
                .workers
                .iter()
                .position(|w| w.id == arc.worker)
                .ok_or_else(|| GraphError::UnknownWorker {
                    arc: arc.id,
                    worker: arc.worker.clone(),
                })?;
            let action = actions
                .iter()
                .position(|a| *a == arc.action)
                .ok_or_else(|| GraphError::UnknownAction {
                    arc: arc.id,
                    action: arc.action.clone(),
                })?;
            arcs.push(HyperArc {
                id: ArcId(arc.id),
                parent: NodeId(arc.parent),
                children: [NodeId(arc.children[0]), NodeId(arc.children[1])],
                action: ActionId(action),
                worker: WorkerId(worker),
                cost: arc.cost,
            });
        }
        Aog::from_parts(
            doc.pieces.clone(),
            doc.workers.clone(),
            actions,
            nodes,
            arcs,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Aog, LoadError> {
        let doc: AogDocument = serde_json::from_str(text)?;
        Ok(Aog::from_document(&doc)?)
    }
}

fn check_unique(names: &[String], err: fn(String) -> GraphError) -> Result<(), GraphError> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(err(name.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("malformed graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// On-disk form of an [`Aog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AogDocument {
    pub pieces: Vec<String>,
    pub workers: Vec<Worker>,
    /// Action order; lower positions win next-action ties. Defaults to first
    /// appearance in `arcs` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    pub nodes: Vec<NodeDoc>,
    pub arcs: Vec<ArcDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: usize,
    pub pieces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcDoc {
    pub id: usize,
    pub parent: usize,
    pub children: [usize; 2],
    pub action: String,
    pub worker: String,
    pub cost: Option<f64>,
}

/// Builds the graph of every sub-assembly reachable from the full piece set
/// through feasible two-way splits.
///
/// `feasible(parent, left, right)` returns the action that joins `left` and
/// `right` into `parent`, or `None` if that split is not possible. `left`
/// always holds the lowest-indexed piece of `parent`. Splits whose children
/// cannot themselves be decomposed down to single pieces are dropped.
///
/// Enumeration is exhaustive over bipartitions, so this is meant for small
/// piece counts; use [`generate_linear_assembly`] for the benchmark family.
pub fn build_graph<F>(
    pieces: &[&str],
    workers: Vec<Worker>,
    mut feasible: F,
) -> Result<Aog, GraphError>
where
    F: FnMut(PieceSet, PieceSet, PieceSet) -> Option<String>,
{
    if pieces.is_empty() {
        return Err(GraphError::NoPieces);
    }
    if pieces.len() > MAX_PIECES {
        return Err(GraphError::TooManyPieces(pieces.len()));
    }
    if workers.is_empty() {
        return Err(GraphError::NoWorkers);
    }
    let names: Vec<String> = pieces.iter().map(|p| p.to_string()).collect();
    check_unique(&names, GraphError::DuplicatePiece)?;

    let root = PieceSet::full(pieces.len());
    let mut discovered: Vec<PieceSet> = vec![root];
    let mut seen: HashSet<PieceSet> = HashSet::from([root]);
    let mut splits_of: HashMap<PieceSet, Vec<(PieceSet, PieceSet, String)>> = HashMap::new();
    let mut cursor = 0;
    while cursor < discovered.len() {
        let set = discovered[cursor];
        cursor += 1;
        let mut found = Vec::new();
        for (left, right) in set.bipartitions() {
            if let Some(action) = feasible(set, left, right) {
                for child in [left, right] {
                    if seen.insert(child) {
                        discovered.push(child);
                    }
                }
                found.push((left, right, action));
            }
        }
        splits_of.insert(set, found);
    }

    // A set is decomposable if it is a single piece or some split has two
    // decomposable children. Children are strictly smaller, so go by size.
    let mut by_size = discovered.clone();
    by_size.sort_by_key(|s| (s.len(), s.bits()));
    let mut decomposable: HashSet<PieceSet> = HashSet::new();
    for set in &by_size {
        let ok = set.len() == 1
            || splits_of[set]
                .iter()
                .any(|(l, r, _)| decomposable.contains(l) && decomposable.contains(r));
        if ok {
            decomposable.insert(*set);
        }
    }
    if !decomposable.contains(&root) {
        let culprit = discovered
            .iter()
            .find(|s| s.len() > 1 && splits_of[s].is_empty())
            .copied()
            .unwrap_or(root);
        let name = culprit
            .iter()
            .map(|i| pieces[i])
            .collect::<Vec<_>>()
            .join(",");
        return Err(GraphError::NotDecomposable(name));
    }

    let mut splits = Vec::new();
    let mut stack = vec![root];
    let mut kept: HashSet<PieceSet> = HashSet::from([root]);
    while let Some(set) = stack.pop() {
        for (left, right, action) in &splits_of[&set] {
            if !(decomposable.contains(left) && decomposable.contains(right)) {
                continue;
            }
            splits.push(Split {
                parent: set,
                left: *left,
                right: *right,
                action: action.clone(),
            });
            for child in [*left, *right] {
                if kept.insert(child) {
                    stack.push(child);
                }
            }
        }
    }
    Ok(Aog::assemble(names, workers, splits))
}

/// Default worker roster for synthetic graphs: one human followed by robots.
pub fn default_workers(n_workers: usize) -> Vec<Worker> {
    (0..n_workers)
        .map(|i| {
            if i == 0 {
                Worker::human("human")
            } else {
                Worker::robot(format!("robot{i}"))
            }
        })
        .collect()
}

/// The chain family: `n_pieces` pieces where only adjacent pieces connect.
///
/// Nodes are the contiguous intervals of the chain; joining `[i..=k]` with
/// `[k+1..=j]` is action `jk` (the k-th interconnection, 1-based). Pieces are
/// named `p1..pn`; workers follow [`default_workers`].
pub fn generate_linear_assembly(n_pieces: usize, n_workers: usize) -> Result<Aog, GraphError> {
    if n_pieces == 0 {
        return Err(GraphError::NoPieces);
    }
    if n_pieces > MAX_PIECES {
        return Err(GraphError::TooManyPieces(n_pieces));
    }
    if n_workers == 0 {
        return Err(GraphError::NoWorkers);
    }
    let pieces = (1..=n_pieces).map(|i| format!("p{i}")).collect();
    let mut splits = Vec::new();
    for start in 0..n_pieces {
        for end in start + 1..n_pieces {
            for cut in start..end {
                splits.push(Split {
                    parent: PieceSet::interval(start, end),
                    left: PieceSet::interval(start, cut),
                    right: PieceSet::interval(cut + 1, end),
                    action: format!("j{}", cut + 1),
                });
            }
        }
    }
    Ok(Aog::assemble(pieces, default_workers(n_workers), splits))
}

/// Closed-form node count of the chain family.
pub fn linear_node_count(n_pieces: usize) -> usize {
    n_pieces * (n_pieces + 1) / 2
}

/// Closed-form hyper-arc count of the chain family.
pub fn linear_arc_count(n_pieces: usize, n_workers: usize) -> usize {
    n_workers * (1..n_pieces).map(|m| m * (n_pieces - m)).sum::<usize>()
}

/// One violated graph invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyNode {
        node: NodeId,
    },
    DuplicatePieceSet {
        first: NodeId,
        second: NodeId,
    },
    NoRoot,
    ExtraTopNode {
        node: NodeId,
    },
    LeafWithArcs {
        node: NodeId,
    },
    ChildrenOverlap {
        arc: ArcId,
    },
    ChildrenUnionMismatch {
        arc: ArcId,
    },
    SameChildTwice {
        arc: ArcId,
    },
    MissingWorkerCopy {
        parent: NodeId,
        children: [NodeId; 2],
        action: String,
        worker: String,
    },
    DuplicateWorkerCopy {
        parent: NodeId,
        children: [NodeId; 2],
        action: String,
        worker: String,
    },
    NotDecomposable {
        node: NodeId,
    },
    Cycle {
        node: NodeId,
    },
    NegativeCost {
        arc: ArcId,
    },
    NonFiniteCost {
        arc: ArcId,
    },
    UnusedAction {
        action: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyNode { node } => write!(f, "node {node} has no pieces"),
            Violation::DuplicatePieceSet { first, second } => {
                write!(f, "nodes {first} and {second} hold the same piece set")
            }
            Violation::NoRoot => write!(f, "no node holds the full piece set"),
            Violation::ExtraTopNode { node } => {
                write!(
                    f,
                    "node {node} is not the root but no hyper-arc uses it as a child"
                )
            }
            Violation::LeafWithArcs { node } => {
                write!(f, "leaf node {node} has incoming hyper-arcs")
            }
            Violation::ChildrenOverlap { arc } => write!(f, "arc {arc}: children share pieces"),
            Violation::ChildrenUnionMismatch { arc } => {
                write!(
                    f,
                    "arc {arc}: children do not add up to the parent's pieces"
                )
            }
            Violation::SameChildTwice { arc } => {
                write!(f, "arc {arc}: both children are the same node")
            }
            Violation::MissingWorkerCopy {
                parent,
                children,
                action,
                worker,
            } => write!(
                f,
                "split {parent} <- ({}, {}) by `{action}` has no copy for worker `{worker}`",
                children[0], children[1]
            ),
            Violation::DuplicateWorkerCopy {
                parent,
                children,
                action,
                worker,
            } => write!(
                f,
                "split {parent} <- ({}, {}) by `{action}` has several copies for worker `{worker}`",
                children[0], children[1]
            ),
            Violation::NotDecomposable { node } => {
                write!(f, "non-leaf node {node} has no incoming hyper-arc")
            }
            Violation::Cycle { node } => write!(f, "node {node} is its own ancestor"),
            Violation::NegativeCost { arc } => write!(f, "arc {arc}: negative cost"),
            Violation::NonFiniteCost { arc } => write!(f, "arc {arc}: cost is not finite"),
            Violation::UnusedAction { action } => {
                write!(f, "action `{action}` labels no hyper-arc")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every node, hyper-arc and graph invariant; an empty report means
/// the graph is valid.
pub fn validate(graph: &Aog) -> ValidationReport {
    let mut violations = Vec::new();
    let full = graph.full_set();

    let mut first_with: HashMap<PieceSet, NodeId> = HashMap::new();
    for node in graph.nodes() {
        if node.pieces.is_empty() {
            violations.push(Violation::EmptyNode { node: node.id });
        }
        if let Some(&first) = first_with.get(&node.pieces) {
            violations.push(Violation::DuplicatePieceSet {
                first,
                second: node.id,
            });
        } else {
            first_with.insert(node.pieces, node.id);
        }
    }
    let root = graph.root();
    if root.is_none() {
        violations.push(Violation::NoRoot);
    }

    let mut is_child = vec![false; graph.nodes().len()];
    for arc in graph.arcs() {
        let [a, b] = arc.children;
        is_child[a.0] = true;
        is_child[b.0] = true;
        let (pa, pb, pp) = (
            graph.node(a).pieces,
            graph.node(b).pieces,
            graph.node(arc.parent).pieces,
        );
        if a == b {
            violations.push(Violation::SameChildTwice { arc: arc.id });
        } else if !pa.is_disjoint(pb) {
            violations.push(Violation::ChildrenOverlap { arc: arc.id });
        }
        if pa.union(pb) != pp || pa.is_empty() || pb.is_empty() {
            violations.push(Violation::ChildrenUnionMismatch { arc: arc.id });
        }
        match arc.cost {
            Some(c) if !c.is_finite() => violations.push(Violation::NonFiniteCost { arc: arc.id }),
            Some(c) if c < 0.0 => violations.push(Violation::NegativeCost { arc: arc.id }),
            _ => {}
        }
    }
    for node in graph.nodes() {
        let top = !is_child[node.id.0];
        if top && node.pieces != full {
            violations.push(Violation::ExtraTopNode { node: node.id });
        }
        let incoming = graph.arcs_into(node.id);
        if node.pieces.len() == 1 {
            if !incoming.is_empty() {
                violations.push(Violation::LeafWithArcs { node: node.id });
            }
        } else if node.pieces.len() > 1 && incoming.is_empty() {
            violations.push(Violation::NotDecomposable { node: node.id });
        }
    }

    // Per-worker duplication: group arcs by split and action.
    let mut groups: BTreeMap<(NodeId, [NodeId; 2], ActionId), Vec<usize>> = BTreeMap::new();
    for arc in graph.arcs() {
        let mut children = arc.children;
        children.sort();
        groups
            .entry((arc.parent, children, arc.action))
            .or_insert_with(|| vec![0; graph.workers().len()])[arc.worker.0] += 1;
    }
    for ((parent, children, action), counts) in &groups {
        for (w, &count) in counts.iter().enumerate() {
            let action = graph.action_name(*action).to_string();
            let worker = graph.workers()[w].id.clone();
            if count == 0 {
                violations.push(Violation::MissingWorkerCopy {
                    parent: *parent,
                    children: *children,
                    action,
                    worker,
                });
            } else if count > 1 {
                violations.push(Violation::DuplicateWorkerCopy {
                    parent: *parent,
                    children: *children,
                    action,
                    worker,
                });
            }
        }
    }
    let used: HashSet<ActionId> = graph.arcs().iter().map(|a| a.action).collect();
    for (i, name) in graph.actions().iter().enumerate() {
        if !used.contains(&ActionId(i)) {
            violations.push(Violation::UnusedAction {
                action: name.clone(),
            });
        }
    }

    if let Some(node) = find_cycle(graph) {
        violations.push(Violation::Cycle { node });
    }
    ValidationReport { violations }
}

fn find_cycle(graph: &Aog) -> Option<NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut marks = vec![Mark::New; graph.nodes().len()];
    for start in graph.nodes() {
        if marks[start.id.0] != Mark::New {
            continue;
        }
        // Iterative DFS from parent to children.
        let mut stack: Vec<(NodeId, usize)> = vec![(start.id, 0)];
        marks[start.id.0] = Mark::Open;
        while let Some(top) = stack.last_mut() {
            let (node, next) = *top;
            top.1 += 1;
            let child = graph
                .arcs_into(node)
                .iter()
                .flat_map(|a| graph.arc(*a).children)
                .nth(next);
            if let Some(child) = child {
                match marks[child.0] {
                    Mark::Open => return Some(child),
                    Mark::New => {
                        marks[child.0] = Mark::Open;
                        stack.push((child, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node.0] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// One completed assembly action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completed {
    pub arc: ArcId,
    pub action: ActionId,
    pub worker: WorkerId,
    /// Completion time, seconds since session start.
    pub t: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProgressError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("unknown hyper-arc {0}")]
    UnknownArc(usize),
    #[error(
        "action `{action}` by `{worker}` is not enabled: its sub-assemblies are not both built"
    )]
    NotEnabled { action: String, worker: String },
    #[error("action `{action}` by `{worker}` matches several enabled hyper-arcs")]
    Ambiguous { action: String, worker: String },
}

/// Which sub-assemblies are currently built, and how we got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressState {
    pub solved: BTreeSet<NodeId>,
    pub history: Vec<Completed>,
}

impl ProgressState {
    /// Every atomic piece is on its own.
    pub fn initial(graph: &Aog) -> Self {
        ProgressState {
            solved: graph.leaves().collect(),
            history: Vec::new(),
        }
    }

    pub fn is_complete(&self, graph: &Aog) -> bool {
        graph
            .root()
            .is_some_and(|r| self.solved.len() == 1 && self.solved.contains(&r))
    }

    pub fn is_enabled(&self, graph: &Aog, arc: ArcId) -> bool {
        let [a, b] = graph.arc(arc).children;
        self.solved.contains(&a) && self.solved.contains(&b)
    }

    /// Hyper-arcs whose two children are both built, in arc id order.
    pub fn enabled_arcs<'g>(&'g self, graph: &'g Aog) -> impl Iterator<Item = ArcId> + 'g {
        graph
            .arcs()
            .iter()
            .filter(|a| self.is_enabled(graph, a.id))
            .map(|a| a.id)
    }

    pub fn apply_arc(
        &self,
        graph: &Aog,
        arc: ArcId,
        t: f64,
    ) -> Result<ProgressState, ProgressError> {
        let h = graph
            .arcs()
            .get(arc.0)
            .ok_or(ProgressError::UnknownArc(arc.0))?;
        if !self.is_enabled(graph, arc) {
            return Err(ProgressError::NotEnabled {
                action: graph.action_name(h.action).to_string(),
                worker: graph.worker(h.worker).id.clone(),
            });
        }
        let mut next = self.clone();
        next.solved.remove(&h.children[0]);
        next.solved.remove(&h.children[1]);
        next.solved.insert(h.parent);
        next.history.push(Completed {
            arc,
            action: h.action,
            worker: h.worker,
            t,
        });
        Ok(next)
    }

    /// Resolves `(action, worker)` to its unique enabled hyper-arc and applies it.
    pub fn apply_action(
        &self,
        graph: &Aog,
        action: &str,
        worker: &str,
        t: f64,
    ) -> Result<ProgressState, ProgressError> {
        let arc = self.resolve(graph, action, worker)?;
        self.apply_arc(graph, arc, t)
    }

    pub fn resolve(&self, graph: &Aog, action: &str, worker: &str) -> Result<ArcId, ProgressError> {
        let action_id = graph
            .action_id(action)
            .ok_or_else(|| ProgressError::UnknownAction(action.to_string()))?;
        let worker_id = graph
            .worker_id(worker)
            .ok_or_else(|| ProgressError::UnknownWorker(worker.to_string()))?;
        let mut matching = graph.arcs().iter().filter(|a| {
            a.action == action_id && a.worker == worker_id && self.is_enabled(graph, a.id)
        });
        let first = matching.next().ok_or_else(|| ProgressError::NotEnabled {
            action: action.to_string(),
            worker: worker.to_string(),
        })?;
        if matching.next().is_some() {
            return Err(ProgressError::Ambiguous {
                action: action.to_string(),
                worker: worker.to_string(),
            });
        }
        Ok(first.id)
    }

    /// Union of the built sub-assemblies' pieces.
    pub fn covered(&self, graph: &Aog) -> PieceSet {
        self.solved
            .iter()
            .fold(PieceSet::EMPTY, |acc, n| acc.union(graph.node(*n).pieces))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_feasible(parent: PieceSet, left: PieceSet, right: PieceSet) -> Option<String> {
        let _ = parent;
        Some(format!("m{}_{}", left.bits(), right.bits()))
    }

    /// Counts two-way splits by enumerating subsets directly.
    fn brute_force_split_count(n: usize) -> usize {
        let mut total = 0;
        for set in 1u64..(1 << n) {
            let k = set.count_ones();
            if k >= 2 {
                total += (1usize << (k - 1)) - 1;
            }
        }
        total
    }

    #[test]
    fn bipartitions_cover_each_split_once() {
        let set = PieceSet::from_bits(0b10110);
        let splits: Vec<_> = set.bipartitions().collect();
        assert_eq!(splits.len(), 3);
        for (l, r) in &splits {
            assert!(l.contains(1));
            assert!(l.is_disjoint(*r));
            assert_eq!(l.union(*r), set);
            assert!(!r.is_empty());
        }
        assert_eq!(PieceSet::singleton(3).bipartitions().count(), 0);
    }

    #[test]
    fn four_pieces_all_splits() {
        let g = build_graph(
            &["a", "b", "c", "d"],
            vec![Worker::human("h")],
            all_feasible,
        )
        .unwrap();
        assert_eq!(g.nodes().len(), 15);
        assert_eq!(brute_force_split_count(4), 25);
        assert_eq!(g.arcs().len(), 25);
        assert!(validate(&g).is_valid(), "{}", validate(&g));
    }

    #[test]
    fn single_piece_is_its_own_root() {
        let g = build_graph(&["only"], vec![Worker::human("h")], all_feasible).unwrap();
        assert_eq!(g.nodes().len(), 1);
        assert!(g.arcs().is_empty());
        assert_eq!(g.root(), Some(NodeId(0)));
        assert_eq!(g.kind(NodeId(0)), NodeKind::Root);
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn two_pieces_two_workers() {
        let g = build_graph(&["a", "b"], default_workers(2), all_feasible).unwrap();
        assert_eq!(g.nodes().len(), 3);
        assert_eq!(g.arcs().len(), 2);
        assert_ne!(g.arcs()[0].worker, g.arcs()[1].worker);
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            build_graph(&[], default_workers(1), all_feasible).unwrap_err(),
            GraphError::NoPieces
        );
        assert_eq!(
            build_graph(&["a"], vec![], all_feasible).unwrap_err(),
            GraphError::NoWorkers
        );
        // `c` can never be attached to anything.
        let err = build_graph(&["a", "b", "c"], default_workers(1), |_, l, r| {
            (!l.contains(2) && !r.contains(2)).then(|| "join".to_string())
        })
        .unwrap_err();
        assert_eq!(err, GraphError::NotDecomposable("a,b,c".into()));
        // Only {a,b,c} -> {a},{b,c} is feasible, {b,c} itself cannot be split.
        let err = build_graph(&["a", "b", "c"], default_workers(1), |p, l, _| {
            (p.len() == 3 && l.len() == 1).then(|| "join".to_string())
        })
        .unwrap_err();
        assert_eq!(err, GraphError::NotDecomposable("b,c".into()));
    }

    #[test]
    fn dead_end_splits_are_pruned() {
        // {a,b,c} may split as a|bc (bc undecomposable) or ab|c (fine).
        let g = build_graph(&["a", "b", "c"], default_workers(1), |p, l, r| {
            match (p.len(), l.len(), r.len()) {
                (3, _, _) => Some("top".into()),
                (2, _, _) if !p.contains(2) || !p.contains(1) => Some("pair".into()),
                _ => None,
            }
        })
        .unwrap();
        assert!(validate(&g).is_valid(), "{}", validate(&g));
        assert!(g
            .nodes()
            .iter()
            .all(|n| n.pieces != PieceSet::from_bits(0b110)));
    }

    #[test]
    fn linear_counts_match_closed_form_and_enumeration() {
        for n in 1..=15 {
            for w in 1..=3 {
                let g = generate_linear_assembly(n, w).unwrap();
                // Brute force: every contiguous interval, every cut.
                let mut intervals = 0;
                let mut cuts = 0;
                for i in 0..n {
                    for j in i..n {
                        intervals += 1;
                        cuts += j - i;
                    }
                }
                assert_eq!(g.nodes().len(), intervals);
                assert_eq!(g.nodes().len(), linear_node_count(n));
                assert_eq!(g.arcs().len(), cuts * w);
                assert_eq!(g.arcs().len(), linear_arc_count(n, w));
            }
        }
        let g = generate_linear_assembly(15, 2).unwrap();
        assert_eq!((g.nodes().len(), g.arcs().len()), (120, 1120));
        let g = generate_linear_assembly(10, 2).unwrap();
        assert_eq!((g.nodes().len(), g.arcs().len()), (55, 330));
        let g = generate_linear_assembly(2, 1).unwrap();
        assert_eq!((g.nodes().len(), g.arcs().len()), (3, 1));
        assert!(generate_linear_assembly(0, 1).is_err());
        assert!(generate_linear_assembly(3, 0).is_err());
    }

    #[test]
    fn generated_graph_is_valid_and_children_precede_parents() {
        let g = generate_linear_assembly(7, 3).unwrap();
        assert!(validate(&g).is_valid(), "{}", validate(&g));
        for arc in g.arcs() {
            assert!(arc.children.iter().all(|c| c.0 < arc.parent.0));
        }
        assert_eq!(g.actions().len(), 6);
        assert_eq!(g.actions()[0], "j1");
    }

    #[test]
    fn overlapping_children_are_reported() {
        let g = generate_linear_assembly(3, 1).unwrap();
        let mut doc = g.to_document();
        // Arc joining [p1] and [p2,p3]: make its right child [p1,p2] instead.
        let target = doc
            .arcs
            .iter()
            .position(|a| a.parent == 5 && a.children[0] == 0)
            .unwrap();
        doc.arcs[target].children[1] = 3;
        let bad = Aog::from_document(&doc).unwrap();
        let report = validate(&bad);
        assert!(report
            .violations
            .contains(&Violation::ChildrenOverlap { arc: ArcId(target) }));
    }

    #[test]
    fn missing_worker_copy_is_reported() {
        let g = generate_linear_assembly(4, 2).unwrap();
        let mut doc = g.to_document();
        let removed = doc.arcs.remove(5);
        for (i, arc) in doc.arcs.iter_mut().enumerate() {
            arc.id = i;
        }
        let bad = Aog::from_document(&doc).unwrap();
        let report = validate(&bad);
        assert_eq!(report.violations.len(), 1, "{report}");
        match &report.violations[0] {
            Violation::MissingWorkerCopy { action, worker, .. } => {
                assert_eq!(action, &removed.action);
                assert_eq!(worker, &removed.worker);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apply_action_progresses() {
        let g = generate_linear_assembly(2, 1).unwrap();
        let s0 = ProgressState::initial(&g);
        assert_eq!(s0.solved.len(), 2);
        let s1 = s0.apply_action(&g, "j1", "human", 1.0).unwrap();
        assert!(s1.is_complete(&g));
        assert_eq!(s1.history.len(), 1);
        assert_eq!(
            s1.apply_action(&g, "j1", "human", 2.0).unwrap_err(),
            ProgressError::NotEnabled {
                action: "j1".into(),
                worker: "human".into()
            }
        );
        assert!(matches!(
            s0.apply_action(&g, "zz", "human", 0.0),
            Err(ProgressError::UnknownAction(_))
        ));
        assert!(matches!(
            s0.apply_action(&g, "j1", "nobody", 0.0),
            Err(ProgressError::UnknownWorker(_))
        ));
    }

    #[test]
    fn non_enabled_action_is_rejected() {
        let g = generate_linear_assembly(4, 1).unwrap();
        let s = ProgressState::initial(&g)
            .apply_action(&g, "j1", "human", 0.0)
            .unwrap();
        // j2 now joins [p1p2] with [p3]: enabled. j3 joins p3,p4: enabled.
        assert!(s.resolve(&g, "j2", "human").is_ok());
        let s = s.apply_action(&g, "j3", "human", 1.0).unwrap();
        let s = s.apply_action(&g, "j2", "human", 2.0).unwrap();
        assert!(s.is_complete(&g));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let g = generate_linear_assembly(4, 2).unwrap();
        let text = g.to_json();
        let again = Aog::from_json(&text).unwrap().to_json();
        assert_eq!(text, again);
    }

    #[test]
    fn loader_rejects_unknown_references() {
        let g = generate_linear_assembly(2, 1).unwrap();
        let mut doc = g.to_document();
        doc.arcs[0].worker = "ghost".into();
        assert!(matches!(
            Aog::from_document(&doc),
            Err(GraphError::UnknownWorker { .. })
        ));
        let mut doc = g.to_document();
        doc.nodes[0].pieces = vec!["nope".into()];
        assert!(matches!(
            Aog::from_document(&doc),
            Err(GraphError::UnknownPiece { .. })
        ));
    }
}
