//! Scripted sessions and the corner-joint fixture.
//!
//! A [`Scenario`] bundles everything needed to start a session. Running it
//! online accepts every suggestion with model-based wear updates; running it
//! offline plans once from the initial wear.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationFile;
use crate::ergo::{ActionModel, ErgoError};
use crate::graph::{build_graph, Aog, AogDocument, PieceSet, Worker, WorkerKind};
use crate::joint::JointMap;
use crate::planner::PlanDocument;
use crate::session::{Completion, Session, SessionConfig, SessionError};

pub const SCENARIO_VERSION: u32 = 1;

/// A complete session setup, as stored in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub v: u32,
    pub name: String,
    pub graph: AogDocument,
    pub calibration: CalibrationFile,
    #[serde(default)]
    pub config: SessionConfig,
    pub initial_wear: JointMap<f64>,
}

/// One accepted suggestion of an online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub action: String,
    pub worker: String,
    pub kind: WorkerKind,
    pub human_cost: f64,
    pub robot_cost: f64,
    pub wear_before: JointMap<f64>,
    pub wear_after: JointMap<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub online: Vec<ReplayRow>,
    pub offline: PlanDocument,
    pub session: Session,
}

impl ReplayReport {
    /// `H`/`R` letters of the online allocation.
    pub fn online_letters(&self) -> String {
        self.online
            .iter()
            .map(|r| letter(r.kind))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// `H`/`R` letters of the offline allocation, in plan order.
    pub fn offline_letters(&self) -> String {
        let graph = self.session.graph();
        self.offline
            .steps
            .iter()
            .map(|s| {
                letter(
                    graph
                        .worker(graph.worker_id(&s.worker).expect("plan workers exist"))
                        .kind,
                )
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn letter(kind: WorkerKind) -> &'static str {
    match kind {
        WorkerKind::Human => "H",
        WorkerKind::Robot => "R",
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, SessionError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| SessionError::Log {
            line: e.line(),
            message: e.to_string(),
        })?;
        if scenario.v != SCENARIO_VERSION {
            return Err(SessionError::Version {
                found: scenario.v,
                expected: SCENARIO_VERSION,
            });
        }
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn models(&self) -> Result<BTreeMap<String, ActionModel>, ErgoError> {
        self.calibration.models()
    }

    pub fn start(&self) -> Result<Session, SessionError> {
        let graph = Aog::from_document(&self.graph)
            .map_err(|e| SessionError::InvalidGraph(e.to_string()))?;
        Session::start(
            Arc::new(graph),
            self.models()?,
            self.config.clone(),
            self.initial_wear,
        )
    }

    /// Accepts every suggestion until the assembly is complete.
    pub fn run(&self) -> Result<ReplayReport, SessionError> {
        let mut session = self.start()?;
        let offline = session.offline_allocation()?;
        let mut online = Vec::new();
        while !session.is_complete() {
            let next = session.suggest_next()?;
            let wear_before = session.wear().values;
            let human_cost = session.human_cost_of(&next.action, &wear_before)?;
            let worker = session
                .graph()
                .worker_id(&next.worker)
                .expect("suggested workers exist");
            let kind = session.graph().worker(worker).kind;
            session.complete_action(Completion::new(next.action.clone(), next.worker.clone()))?;
            online.push(ReplayRow {
                action: next.action,
                worker: next.worker,
                kind,
                human_cost,
                robot_cost: session.config().cost.robot_cost,
                wear_before,
                wear_after: session.wear().values,
            });
        }
        Ok(ReplayReport {
            online,
            offline,
            session,
        })
    }
}

/// Piece names of the corner-joint task. `wb` and `dest` stand for the
/// workbench and the destination table, which the first and last actions
/// join the part to.
pub const CORNER_JOINT_PIECES: [&str; 6] = ["cj", "wb", "s1", "s2", "l", "dest"];

/// The corner-joint graph: fix the joint to the bench (`a1`), insert two
/// screws and a link in any order (`a2`, `a3`, `a4`), then move the part to
/// the destination (`a5`).
pub fn corner_joint_graph() -> Aog {
    let [cj, wb, s1, s2, l, dest] = [0, 1, 2, 3, 4, 5].map(PieceSet::singleton);
    let base = cj.union(wb);
    let inserts = [(s1, "a2"), (s2, "a3"), (l, "a4")];
    let all_inserts = s1.union(s2).union(l);
    build_graph(
        &CORNER_JOINT_PIECES,
        vec![Worker::human("human"), Worker::robot("robot")],
        |parent, left, right| {
            if left == cj && right == wb {
                return Some("a1".into());
            }
            if right == dest && left == base.union(all_inserts) {
                return Some("a5".into());
            }
            if parent.contains(5) || !base.is_subset(left) {
                return None;
            }
            inserts
                .iter()
                .find(|(piece, _)| *piece == right)
                .map(|(_, name)| name.to_string())
        },
    )
    .expect("corner-joint graph is decomposable")
}

fn model(action: &str, alpha: [f64; 5], duration_s: f64) -> ActionModel {
    ActionModel::new(action, JointMap(alpha), duration_s).expect("fixture models are valid")
}

/// Calibrated models of the five actions (shoulder, elbow, wrist, trunk,
/// neck).
pub fn corner_joint_models() -> Vec<ActionModel> {
    let light = [0.9, 0.86, 0.88, 0.9, 0.9];
    vec![
        model("a1", light, 10.0),
        model("a2", light, 15.0),
        model("a3", light, 15.0),
        model("a4", [0.97, 0.93, 0.92, 0.93, 0.92], 12.0),
        model("a5", [0.8, 0.85, 0.85, 0.8, 0.8], 25.0),
    ]
}

pub fn corner_joint_config() -> SessionConfig {
    let mut config = SessionConfig::default();
    config.robot_durations = [
        ("a1", 30.0),
        ("a2", 75.0),
        ("a3", 75.0),
        ("a4", 60.0),
        ("a5", 40.0),
    ]
    .map(|(a, d)| (a.to_string(), d))
    .into();
    config
}

pub const CORNER_JOINT_INITIAL_WEAR: JointMap<f64> = JointMap([0.3, 0.1, 0.1, 0.45, 0.5]);

pub fn corner_joint() -> Scenario {
    Scenario {
        v: SCENARIO_VERSION,
        name: "corner-joint".into(),
        graph: corner_joint_graph().to_document(),
        calibration: CalibrationFile::from_models(&corner_joint_models()),
        config: corner_joint_config(),
        initial_wear: CORNER_JOINT_INITIAL_WEAR,
    }
}
