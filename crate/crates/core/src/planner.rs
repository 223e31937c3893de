//! Minimum-cost decomposition search over an AND/OR graph.
//!
//! The search covers every built sub-assembly: it looks for the cheapest set
//! of hyper-arcs that assembles the root out of exactly the nodes in the
//! current solved set. With arc-local additive costs this is a bottom-up
//! dynamic program over the part of the graph that sits above the solved
//! set:
//!
//! ```text
//! best(n) = 0                                              if n is built
//! best(n) = min over arcs h into n of cost(h) + best(l) + best(r)
//! ```
//!
//! Ties are broken by the execution sequence of the competing sub-plans,
//! compared lexicographically as `(action id, worker id)` pairs, and then by
//! hyper-arc id. Among equally cheap plans this prefers the one that runs
//! lower-numbered actions first and gives them to lower-numbered workers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{ActionId, Aog, ArcId, NodeId, PieceSet, ProgressState, WorkerId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("hyper-arc {0} has no cost")]
    Uncosted(ArcId),
    #[error("hyper-arc {0} has a negative or non-finite cost")]
    BadCost(ArcId),
    #[error("graph has no root node")]
    NoRoot,
    #[error("progress state does not partition the pieces into graph nodes")]
    InvalidState,
    #[error("no decomposition of the root reaches the built sub-assemblies")]
    NoDecomposition,
    #[error("no action of the plan is enabled in the given state")]
    NoEnabledAction,
}

/// One hyper-arc of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub arc: ArcId,
    pub action: ActionId,
    pub worker: WorkerId,
    pub parent: NodeId,
    pub children: [NodeId; 2],
    pub cost: f64,
}

/// The chosen decomposition of the root into the built sub-assemblies.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTree {
    /// Chosen hyper-arc for every node the plan still has to build.
    pub chosen: BTreeMap<NodeId, ArcId>,
    pub total_cost: f64,
    /// Plan arcs executable right now, cheapest first (ties: action id).
    pub ordered_frontier: Vec<ArcId>,
    /// All plan arcs in the order [`next_action`] would hand them out if
    /// every suggestion were accepted and costs stayed frozen.
    pub steps: Vec<PlanStep>,
}

impl PlanTree {
    pub fn empty() -> Self {
        PlanTree {
            chosen: BTreeMap::new(),
            total_cost: 0.0,
            ordered_frontier: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn contains_action(&self, action: ActionId) -> bool {
        self.steps.iter().any(|s| s.action == action)
    }

    /// Serializable form with names resolved against `graph`.
    pub fn to_document(&self, graph: &Aog) -> PlanDocument {
        PlanDocument {
            total_cost: self.total_cost,
            steps: self
                .steps
                .iter()
                .map(|s| StepDoc {
                    action: graph.action_name(s.action).to_string(),
                    worker: graph.worker(s.worker).id.clone(),
                    parent: s.parent.0,
                    children: [s.children[0].0, s.children[1].0],
                    cost: s.cost,
                })
                .collect(),
        }
    }
}

/// `{total_cost, steps:[{action, worker, parent, children, cost}]}`, steps in
/// execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub total_cost: f64,
    pub steps: Vec<StepDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDoc {
    pub action: String,
    pub worker: String,
    pub parent: usize,
    pub children: [usize; 2],
    pub cost: f64,
}

/// Plans with the costs stored on the graph's hyper-arcs.
pub fn optimal_plan(graph: &Aog, state: &ProgressState) -> Result<PlanTree, PlanError> {
    search(graph, state, &graph.costs())
}

/// Plans with `costs` (indexed by arc id) in place of the graph's own costs.
///
/// Only the reduced graph above the solved set is explored, so completed
/// actions never reappear.
pub fn replan(
    graph: &Aog,
    state: &ProgressState,
    costs: &[Option<f64>],
) -> Result<PlanTree, PlanError> {
    assert_eq!(costs.len(), graph.arcs().len(), "one cost per arc");
    search(graph, state, costs)
}

/// The plan arc to execute next: cheapest enabled one, ties by action id
/// then arc id.
pub fn next_action(
    graph: &Aog,
    plan: &PlanTree,
    state: &ProgressState,
) -> Result<PlanStep, PlanError> {
    plan.steps
        .iter()
        .filter(|s| state.is_enabled(graph, s.arc))
        .min_by(|a, b| step_order(a, b))
        .copied()
        .ok_or(PlanError::NoEnabledAction)
}

fn step_order(a: &PlanStep, b: &PlanStep) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.action.cmp(&b.action))
        .then(a.arc.cmp(&b.arc))
}

/// Nodes whose pieces are a union of built sub-assemblies, smallest first.
pub fn reduced_nodes(graph: &Aog, state: &ProgressState) -> Vec<NodeId> {
    let solved: Vec<PieceSet> = state.solved.iter().map(|n| graph.node(*n).pieces).collect();
    let mut nodes: Vec<NodeId> = graph
        .nodes()
        .iter()
        .filter(|n| {
            solved
                .iter()
                .all(|s| s.is_subset(n.pieces) || s.is_disjoint(n.pieces))
        })
        .map(|n| n.id)
        .collect();
    nodes.sort_by_key(|n| (graph.node(*n).pieces.len(), *n));
    nodes
}

struct Best {
    cost: f64,
    /// Execution sequence of the sub-plan, used only to break cost ties.
    sequence: Vec<(ActionId, WorkerId)>,
    arc: Option<ArcId>,
}

fn search(
    graph: &Aog,
    state: &ProgressState,
    costs: &[Option<f64>],
) -> Result<PlanTree, PlanError> {
    let root = graph.root().ok_or(PlanError::NoRoot)?;
    check_state(graph, state)?;
    if state.solved.contains(&root) {
        return Ok(PlanTree::empty());
    }

    let reduced = reduced_nodes(graph, state);
    let mut best: HashMap<NodeId, Best> = HashMap::with_capacity(reduced.len());
    for &node in &reduced {
        if state.solved.contains(&node) {
            best.insert(
                node,
                Best {
                    cost: 0.0,
                    sequence: Vec::new(),
                    arc: None,
                },
            );
            continue;
        }
        let mut winner: Option<Best> = None;
        for &arc_id in graph.arcs_into(node) {
            let arc = graph.arc(arc_id);
            let (Some(left), Some(right)) =
                (best.get(&arc.children[0]), best.get(&arc.children[1]))
            else {
                continue;
            };
            let cost = match costs[arc_id.0] {
                None => return Err(PlanError::Uncosted(arc_id)),
                Some(c) if !c.is_finite() || c < 0.0 => return Err(PlanError::BadCost(arc_id)),
                Some(c) => c,
            };
            let total = cost + left.cost + right.cost;
            let better = match &winner {
                None => true,
                Some(w) => match total.total_cmp(&w.cost) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        let seq = joined(left, right, arc.action, arc.worker);
                        match seq.cmp(&w.sequence) {
                            Ordering::Less => true,
                            Ordering::Greater => false,
                            Ordering::Equal => Some(arc_id) < w.arc,
                        }
                    }
                },
            };
            if better {
                let sequence = joined(left, right, arc.action, arc.worker);
                winner = Some(Best {
                    cost: total,
                    sequence,
                    arc: Some(arc_id),
                });
            }
        }
        if let Some(w) = winner {
            best.insert(node, w);
        }
    }

    let top = best.get(&root).ok_or(PlanError::NoDecomposition)?;
    let total_cost = top.cost;
    let mut chosen = BTreeMap::new();
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if let Some(arc) = best[&node].arc {
            chosen.insert(node, arc);
            stack.extend(graph.arc(arc).children);
        }
    }

    let steps = execution_order(graph, state, &chosen, costs);
    let mut ordered_frontier: Vec<PlanStep> = steps
        .iter()
        .filter(|s| state.is_enabled(graph, s.arc))
        .copied()
        .collect();
    ordered_frontier.sort_by(step_order);
    Ok(PlanTree {
        chosen,
        total_cost,
        ordered_frontier: ordered_frontier.into_iter().map(|s| s.arc).collect(),
        steps,
    })
}

fn joined(
    left: &Best,
    right: &Best,
    action: ActionId,
    worker: WorkerId,
) -> Vec<(ActionId, WorkerId)> {
    let mut seq = Vec::with_capacity(left.sequence.len() + right.sequence.len() + 1);
    seq.extend_from_slice(&left.sequence);
    seq.extend_from_slice(&right.sequence);
    seq.push((action, worker));
    seq
}

fn execution_order(
    graph: &Aog,
    state: &ProgressState,
    chosen: &BTreeMap<NodeId, ArcId>,
    costs: &[Option<f64>],
) -> Vec<PlanStep> {
    let mut built: BTreeSet<NodeId> = state.solved.clone();
    let mut pending: Vec<PlanStep> = chosen
        .values()
        .map(|&arc| {
            let h = graph.arc(arc);
            PlanStep {
                arc,
                action: h.action,
                worker: h.worker,
                parent: h.parent,
                children: h.children,
                cost: costs[arc.0].unwrap_or(0.0),
            }
        })
        .collect();
    let mut order = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let pick = pending
            .iter()
            .enumerate()
            .filter(|(_, s)| built.contains(&s.children[0]) && built.contains(&s.children[1]))
            .min_by(|a, b| step_order(a.1, b.1))
            .map(|(i, _)| i)
            .expect("a plan tree always has an executable arc");
        let step = pending.swap_remove(pick);
        built.remove(&step.children[0]);
        built.remove(&step.children[1]);
        built.insert(step.parent);
        order.push(step);
    }
    order
}

fn check_state(graph: &Aog, state: &ProgressState) -> Result<(), PlanError> {
    let mut covered = PieceSet::EMPTY;
    for node in &state.solved {
        let pieces = graph
            .nodes()
            .get(node.0)
            .ok_or(PlanError::InvalidState)?
            .pieces;
        if !covered.is_disjoint(pieces) {
            return Err(PlanError::InvalidState);
        }
        covered = covered.union(pieces);
    }
    if covered != graph.full_set() {
        return Err(PlanError::InvalidState);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{default_workers, generate_linear_assembly};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Every complete decomposition of `node` into built nodes, as the list
    /// of its total costs. Deliberately unmemoized.
    fn all_plan_costs(graph: &Aog, state: &ProgressState, costs: &[f64], node: NodeId) -> Vec<f64> {
        if state.solved.contains(&node) {
            return vec![0.0];
        }
        let mut out = Vec::new();
        for &arc in graph.arcs_into(node) {
            let [l, r] = graph.arc(arc).children;
            let left = all_plan_costs(graph, state, costs, l);
            let right = all_plan_costs(graph, state, costs, r);
            for a in &left {
                for b in &right {
                    out.push(costs[arc.0] + a + b);
                }
            }
        }
        out
    }

    fn brute_min(graph: &Aog, state: &ProgressState, costs: &[f64]) -> f64 {
        all_plan_costs(graph, state, costs, graph.root().unwrap())
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn random_costs(rng: &mut StdRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(1..=100) as f64).collect()
    }

    fn some(costs: &[f64]) -> Vec<Option<f64>> {
        costs.iter().map(|c| Some(*c)).collect()
    }

    #[test]
    fn uniform_cost_chain_of_four() {
        let g = generate_linear_assembly(4, 1).unwrap();
        let costs = vec![Some(2.5); g.arcs().len()];
        let plan = replan(&g, &ProgressState::initial(&g), &costs).unwrap();
        assert_eq!(plan.total_cost, 7.5);
        assert_eq!(plan.len(), 3);
    }

    #[test]
    fn matches_exhaustive_minimum_on_five_pieces() {
        let g = generate_linear_assembly(5, 2).unwrap();
        for seed in 0..100 {
            let mut rng = StdRng::seed_from_u64(seed);
            let costs = random_costs(&mut rng, g.arcs().len());
            let state = ProgressState::initial(&g);
            let plan = replan(&g, &state, &some(&costs)).unwrap();
            assert_eq!(
                plan.total_cost,
                brute_min(&g, &state, &costs),
                "seed {seed}"
            );
            let summed: f64 = plan.steps.iter().map(|s| s.cost).sum();
            assert_eq!(summed, plan.total_cost);
        }
    }

    #[test]
    fn optimal_from_partial_states() {
        let g = generate_linear_assembly(6, 3).unwrap();
        for seed in 0..30 {
            let mut rng = StdRng::seed_from_u64(seed);
            let costs = random_costs(&mut rng, g.arcs().len());
            let mut state = ProgressState::initial(&g);
            let steps = rng.gen_range(0..5);
            for _ in 0..steps {
                let enabled: Vec<ArcId> = state.enabled_arcs(&g).collect();
                let arc = enabled[rng.gen_range(0..enabled.len())];
                state = state.apply_arc(&g, arc, 0.0).unwrap();
            }
            let plan = replan(&g, &state, &some(&costs)).unwrap();
            assert_eq!(plan.total_cost, brute_min(&g, &state, &costs));
            assert_eq!(plan.len(), state.solved.len() - 1);
            // Plan leaves are exactly the built nodes.
            let mut leaves: BTreeSet<NodeId> = plan.steps.iter().flat_map(|s| s.children).collect();
            for node in plan.chosen.keys() {
                leaves.remove(node);
            }
            assert_eq!(leaves, state.solved);
        }
    }

    #[test]
    fn cheaper_worker_wins_and_ties_go_to_lower_worker() {
        let g = generate_linear_assembly(2, 2).unwrap();
        let state = ProgressState::initial(&g);
        // arc 0 is the human copy, arc 1 the robot copy.
        let plan = replan(&g, &state, &[Some(32.0), Some(35.0)]).unwrap();
        assert_eq!(plan.steps[0].worker, WorkerId(0));
        let plan = replan(&g, &state, &[Some(36.0), Some(35.0)]).unwrap();
        assert_eq!(plan.steps[0].worker, WorkerId(1));
        let plan = replan(&g, &state, &[Some(35.0), Some(35.0)]).unwrap();
        assert_eq!(plan.steps[0].worker, WorkerId(0));
    }

    #[test]
    fn next_action_prefers_cheaper_enabled_arc() {
        // Two independent pairs: {p1,p2} and {p3,p4}; both merges enabled.
        let g = generate_linear_assembly(4, 1).unwrap();
        let state = ProgressState::initial(&g);
        let mut costs = vec![Some(1000.0); g.arcs().len()];
        let j1 = g
            .arcs()
            .iter()
            .find(|a| g.action_name(a.action) == "j1" && a.parent.0 == 4)
            .unwrap()
            .id;
        let j3 = g
            .arcs()
            .iter()
            .find(|a| g.action_name(a.action) == "j3" && a.parent.0 == 6)
            .unwrap()
            .id;
        let j2_top = g
            .arcs()
            .iter()
            .find(|a| g.action_name(a.action) == "j2" && a.parent == g.root().unwrap())
            .unwrap()
            .id;
        costs[j1.0] = Some(9.0);
        costs[j3.0] = Some(7.0);
        costs[j2_top.0] = Some(1.0);
        let plan = replan(&g, &state, &costs).unwrap();
        assert_eq!(plan.total_cost, 17.0);
        assert_eq!(plan.ordered_frontier, vec![j3, j1]);
        let next = next_action(&g, &plan, &state).unwrap();
        assert_eq!(next.arc, j3);
        // Equal costs fall back to the lower action id.
        costs[j1.0] = Some(7.0);
        let plan = replan(&g, &state, &costs).unwrap();
        assert_eq!(next_action(&g, &plan, &state).unwrap().arc, j1);
    }

    #[test]
    fn completed_root_gives_empty_plan() {
        let g = generate_linear_assembly(3, 1).unwrap();
        let costs = vec![Some(1.0); g.arcs().len()];
        let mut state = ProgressState::initial(&g);
        while !state.is_complete(&g) {
            let plan = replan(&g, &state, &costs).unwrap();
            let step = next_action(&g, &plan, &state).unwrap();
            state = state.apply_arc(&g, step.arc, 0.0).unwrap();
        }
        let plan = replan(&g, &state, &costs).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.total_cost, 0.0);
        assert_eq!(
            next_action(&g, &plan, &state).unwrap_err(),
            PlanError::NoEnabledAction
        );

        let single = generate_linear_assembly(1, 1).unwrap();
        assert!(optimal_plan(&single, &ProgressState::initial(&single))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn uncosted_graph_is_rejected() {
        let g = generate_linear_assembly(3, 2).unwrap();
        assert!(matches!(
            optimal_plan(&g, &ProgressState::initial(&g)),
            Err(PlanError::Uncosted(_))
        ));
        let mut costs = vec![Some(1.0); g.arcs().len()];
        costs[0] = Some(-1.0);
        assert!(matches!(
            replan(&g, &ProgressState::initial(&g), &costs),
            Err(PlanError::BadCost(_))
        ));
    }

    #[test]
    fn missing_decomposition_is_an_error() {
        // Only the a|bc split exists at the top, and bc only by one worker;
        // removing the bc arcs leaves nothing.
        let g = crate::graph::build_graph(&["a", "b", "c"], default_workers(1), |p, l, r| {
            (p.len() == 2 || (l.len() == 1 && r.len() == 2)).then(|| "m".to_string())
        })
        .unwrap();
        let mut doc = g.to_document();
        let bc = doc
            .nodes
            .iter()
            .find(|n| n.pieces == ["b", "c"])
            .unwrap()
            .id;
        doc.arcs.retain(|a| a.parent != bc);
        for (i, a) in doc.arcs.iter_mut().enumerate() {
            a.id = i;
            a.cost = Some(1.0);
        }
        let broken = Aog::from_document(&doc).unwrap();
        assert_eq!(
            optimal_plan(&broken, &ProgressState::initial(&broken)).unwrap_err(),
            PlanError::NoDecomposition
        );
    }

    #[test]
    fn replanning_never_costs_more_than_the_rest_of_the_old_plan() {
        let g = generate_linear_assembly(6, 2).unwrap();
        for seed in 0..20 {
            let mut rng = StdRng::seed_from_u64(100 + seed);
            let costs = some(&random_costs(&mut rng, g.arcs().len()));
            let mut state = ProgressState::initial(&g);
            let mut plan = replan(&g, &state, &costs).unwrap();
            while !state.is_complete(&g) {
                let step = next_action(&g, &plan, &state).unwrap();
                let remaining = plan.total_cost - step.cost;
                state = state.apply_arc(&g, step.arc, 0.0).unwrap();
                plan = replan(&g, &state, &costs).unwrap();
                assert!(plan.total_cost <= remaining);
                assert!(!plan.steps.iter().any(|s| s.arc == step.arc));
            }
        }
    }

    #[test]
    fn plans_are_deterministic() {
        let g = generate_linear_assembly(6, 3).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        // Few distinct values so ties are common.
        let costs: Vec<Option<f64>> = (0..g.arcs().len())
            .map(|_| Some(rng.gen_range(1..=3) as f64))
            .collect();
        let a = replan(&g, &ProgressState::initial(&g), &costs).unwrap();
        let b = replan(&g, &ProgressState::initial(&g), &costs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_state_is_rejected() {
        let g = generate_linear_assembly(3, 1).unwrap();
        let costs = vec![Some(1.0); g.arcs().len()];
        let mut state = ProgressState::initial(&g);
        state.solved.remove(&NodeId(0));
        assert_eq!(
            replan(&g, &state, &costs).unwrap_err(),
            PlanError::InvalidState
        );
    }

    #[test]
    fn plan_document_lists_steps_in_order() {
        let g = generate_linear_assembly(3, 1).unwrap();
        let costs = vec![Some(1.0); g.arcs().len()];
        let plan = replan(&g, &ProgressState::initial(&g), &costs).unwrap();
        let doc = plan.to_document(&g);
        assert_eq!(doc.total_cost, 2.0);
        assert_eq!(doc.steps.len(), 2);
        assert_eq!(doc.steps[0].action, "j1");
        assert_eq!(doc.steps[1].action, "j2");
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.starts_with(r#"{"total_cost":2.0,"steps":[{"action":"j1","worker":"human""#));
    }
}
