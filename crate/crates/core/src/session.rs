//! The online allocation loop.
//!
//! A [`Session`] holds the assembly progress and the human's wear. Each round
//! recosts every hyper-arc from the current wear, replans, and suggests the
//! next `(action, worker)`. Reporting a completion updates the wear (charging
//! for the human, recovery while the robot works) and advances progress.
//!
//! Every mutation appends to an event log. Replaying the log through
//! [`Session::replay`] rebuilds the same state, checked by [`Session::digest`].
//!
//! ```
//! use ergoaog::scenario::corner_joint;
//! use ergoaog::session::{Completion, Session};
//!
//! let scenario = corner_joint();
//! let mut session = scenario.start().unwrap();
//! let first = session.suggest_next().unwrap();
//! assert_eq!((first.action.as_str(), first.worker.as_str()), ("a1", "human"));
//! session.complete_action(Completion::new("a1", "human")).unwrap();
//! let log = session.export_log();
//! assert_eq!(Session::replay(&log).unwrap().digest(), session.digest());
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ergo::{
    human_cost, integrate_wear, predict, recover_all, score_angle_trace, ActionModel, AngleTrace,
    CostConfig, ErgoError, RulaBandTable, RulaScoreTrace, WearVector,
};
use crate::graph::{
    validate, ActionId, Aog, AogDocument, ArcId, ProgressError, ProgressState, WorkerId, WorkerKind,
};
use crate::joint::JointMap;
use crate::planner::{next_action, replan, PlanDocument, PlanError};

/// Version of the event-log and snapshot formats.
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    #[default]
    Right,
    Left,
}

/// How the session clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Only by reported durations.
    #[default]
    Logical,
    /// The host measures real elapsed time and reports idle gaps as rest.
    Wall,
}

/// Everything a session needs besides the graph and the action models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub cost: CostConfig,
    pub bands: RulaBandTable,
    /// Robot execution time per action, seconds. Actions missing here fall
    /// back to the action model's nominal duration.
    pub robot_durations: BTreeMap<String, f64>,
    /// Sampling period for synthesized traces, seconds.
    pub sample_period: f64,
    /// Which arm the angle traces describe.
    pub handedness: Handedness,
    pub clock: ClockMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            cost: CostConfig::default(),
            bands: RulaBandTable::default(),
            robot_durations: BTreeMap::new(),
            sample_period: 1.0 / 60.0,
            handedness: Handedness::Right,
            clock: ClockMode::Logical,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ErgoError> {
        self.cost.validate()?;
        self.bands.validate()?;
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(ErgoError::BadConfig(format!(
                "sample_period must be positive, got {}",
                self.sample_period
            )));
        }
        if let Some((action, d)) = self
            .robot_durations
            .iter()
            .find(|(_, d)| !(**d >= 0.0 && d.is_finite()))
        {
            return Err(ErgoError::BadConfig(format!(
                "robot duration of `{action}` must be non-negative, got {d}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("graph is invalid:\n{0}")]
    InvalidGraph(String),
    #[error("graph must have exactly one human worker, found {0}")]
    HumanCount(usize),
    #[error("no action model for `{0}`")]
    MissingModel(String),
    #[error("assembly is already complete")]
    AlreadyComplete,
    #[error("a completion carries either scores or angles, not both")]
    ConflictingEvidence,
    #[error("robot worker `{0}` cannot report a posture trace")]
    RobotEvidence(String),
    #[error("{what} must be non-negative, got {value}")]
    NegativeDuration { what: &'static str, value: f64 },
    #[error(transparent)]
    Ergo(#[from] ErgoError),
    #[error(transparent)]
    Progress(#[from] ProgressError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("replay diverged at log line {line}: {message}")]
    Diverged { line: usize, message: String },
}

/// The `(action, worker)` to execute next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub action: String,
    pub worker: String,
    pub arc: ArcId,
    pub cost: f64,
    /// True when an operator chose this instead of the planner.
    pub overridden: bool,
    /// Remaining optimal plan at the time of the suggestion.
    pub plan: PlanDocument,
}

/// Report that an action finished.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Completion {
    pub action: String,
    pub worker: String,
    /// Execution time. For the human, a trace's own span wins; otherwise the
    /// model's nominal duration. For a robot, the configured duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<RulaScoreTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<AngleTrace>,
    /// Human idle time before the action started.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest_before_s: Option<f64>,
}

impl Completion {
    pub fn new(action: impl Into<String>, worker: impl Into<String>) -> Self {
        Completion {
            action: action.into(),
            worker: worker.into(),
            ..Default::default()
        }
    }

    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = Some(duration_s);
        self
    }

    pub fn with_scores(mut self, scores: RulaScoreTrace) -> Self {
        self.scores = Some(scores);
        self
    }

    pub fn with_angles(mut self, angles: AngleTrace) -> Self {
        self.angles = Some(angles);
        self
    }

    pub fn with_rest(mut self, rest_before_s: f64) -> Self {
        self.rest_before_s = Some(rest_before_s);
        self
    }
}

/// How the wear after a completion was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WearSource {
    Trace,
    Model,
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPayload {
    pub graph: AogDocument,
    pub models: BTreeMap<String, ActionModel>,
    pub config: SessionConfig,
    pub initial_wear: JointMap<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionPayload {
    pub action: String,
    pub worker: String,
    pub arc: ArcId,
    pub duration_s: f64,
    pub rest_before_s: f64,
    pub source: WearSource,
    pub wear_before: JointMap<f64>,
    pub wear_after: JointMap<f64>,
    /// The α-model prediction, for human actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<JointMap<f64>>,
    /// Largest per-joint gap between trace-based wear and the prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<RulaScoreTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverridePayload {
    pub action: String,
    pub worker: String,
    /// What the planner had suggested, if anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaced: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WearPayload {
    pub wear: JointMap<f64>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Start(Box<StartPayload>),
    Suggestion(Suggestion),
    Override(OverridePayload),
    Completion(Box<CompletionPayload>),
    Wear(WearPayload),
}

/// One line of the event log: `{"v", "t", "kind", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    pub t: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self.body {
            EventBody::Start(_) => "start",
            EventBody::Suggestion(_) => "suggestion",
            EventBody::Override(_) => "override",
            EventBody::Completion(_) => "completion",
            EventBody::Wear(_) => "wear",
        }
    }
}

/// Read-only summary for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub t: f64,
    pub wear: JointMap<f64>,
    pub solved: Vec<Vec<String>>,
    pub history: Vec<HistoryEntry>,
    pub complete: bool,
    pub suggestion: Option<Suggestion>,
    pub v_th1: f64,
    pub v_th2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: String,
    pub worker: String,
    pub t: f64,
}

/// Versioned snapshot file: the full event log plus the digest it must
/// reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub v: u32,
    pub digest: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Session {
    graph: Arc<Aog>,
    models: BTreeMap<String, ActionModel>,
    config: SessionConfig,
    capacity: f64,
    human: WorkerId,
    initial_wear: JointMap<f64>,
    progress: ProgressState,
    wear: WearVector,
    suggestion: Option<Suggestion>,
    events: Vec<Event>,
}

impl Session {
    /// Opens a session at `t = 0` with every piece on its own.
    pub fn start(
        graph: Arc<Aog>,
        models: BTreeMap<String, ActionModel>,
        config: SessionConfig,
        initial_wear: JointMap<f64>,
    ) -> Result<Session, SessionError> {
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(SessionError::InvalidGraph(report.to_string()));
        }
        let humans: Vec<WorkerId> = graph.humans().collect();
        if humans.len() != 1 {
            return Err(SessionError::HumanCount(humans.len()));
        }
        if let Some(missing) = graph.actions().iter().find(|a| !models.contains_key(*a)) {
            return Err(SessionError::MissingModel(missing.clone()));
        }
        for model in models.values() {
            model.validate()?;
        }
        config.validate()?;
        let capacity = config.cost.capacity()?;
        let wear = WearVector::new(initial_wear, 0.0)?;
        let start = StartPayload {
            graph: graph.to_document(),
            models: models.clone(),
            config: config.clone(),
            initial_wear,
        };
        Ok(Session {
            progress: ProgressState::initial(&graph),
            graph,
            models,
            config,
            capacity,
            human: humans[0],
            initial_wear,
            wear,
            suggestion: None,
            events: vec![Event {
                v: LOG_VERSION,
                t: 0.0,
                body: EventBody::Start(Box::new(start)),
            }],
        })
    }

    pub fn graph(&self) -> &Aog {
        &self.graph
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn models(&self) -> &BTreeMap<String, ActionModel> {
        &self.models
    }

    pub fn progress(&self) -> &ProgressState {
        &self.progress
    }

    pub fn wear(&self) -> &WearVector {
        &self.wear
    }

    pub fn clock(&self) -> f64 {
        self.wear.t
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn initial_wear(&self) -> &JointMap<f64> {
        &self.initial_wear
    }

    pub fn suggestion(&self) -> Option<&Suggestion> {
        self.suggestion.as_ref()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_complete(&self) -> bool {
        self.progress.is_complete(&self.graph)
    }

    pub fn human(&self) -> WorkerId {
        self.human
    }

    fn model(&self, action: ActionId) -> &ActionModel {
        &self.models[self.graph.action_name(action)]
    }

    /// Human cost of `action` from wear `wear`.
    pub fn human_cost_of(&self, action: &str, wear: &JointMap<f64>) -> Result<f64, SessionError> {
        let model = self
            .models
            .get(action)
            .ok_or_else(|| SessionError::MissingModel(action.to_string()))?;
        Ok(human_cost(&predict(wear, model), &self.config.cost))
    }

    fn costs_from(&self, wear: &JointMap<f64>) -> Vec<Option<f64>> {
        let mut by_action: BTreeMap<ActionId, f64> = BTreeMap::new();
        self.graph
            .arcs()
            .iter()
            .map(|arc| match self.graph.worker(arc.worker).kind {
                WorkerKind::Robot => Some(self.config.cost.robot_cost),
                WorkerKind::Human => Some(*by_action.entry(arc.action).or_insert_with(|| {
                    human_cost(&predict(wear, self.model(arc.action)), &self.config.cost)
                })),
            })
            .collect()
    }

    /// Hyper-arc costs from the current wear, indexed by arc id.
    pub fn recost(&self) -> Vec<Option<f64>> {
        self.costs_from(&self.wear.values)
    }

    /// Recosts, replans and records the next `(action, worker)`.
    pub fn suggest_next(&mut self) -> Result<Suggestion, SessionError> {
        if self.is_complete() {
            return Err(SessionError::AlreadyComplete);
        }
        let costs = self.recost();
        let plan = replan(&self.graph, &self.progress, &costs)?;
        let step = next_action(&self.graph, &plan, &self.progress)?;
        let suggestion = Suggestion {
            action: self.graph.action_name(step.action).to_string(),
            worker: self.graph.worker(step.worker).id.clone(),
            arc: step.arc,
            cost: step.cost,
            overridden: false,
            plan: plan.to_document(&self.graph),
        };
        self.suggestion = Some(suggestion.clone());
        self.log(EventBody::Suggestion(suggestion.clone()));
        Ok(suggestion)
    }

    /// Replaces the current suggestion with an operator's choice.
    pub fn override_suggestion(
        &mut self,
        action: &str,
        worker: &str,
    ) -> Result<Suggestion, SessionError> {
        if self.is_complete() {
            return Err(SessionError::AlreadyComplete);
        }
        let arc = self.progress.resolve(&self.graph, action, worker)?;
        let costs = self.recost();
        let plan = replan(&self.graph, &self.progress, &costs)?;
        let suggestion = Suggestion {
            action: action.to_string(),
            worker: worker.to_string(),
            arc,
            cost: costs[arc.0].expect("recost covers every arc"),
            overridden: true,
            plan: plan.to_document(&self.graph),
        };
        let replaced = self.suggestion.take().map(|s| (s.action, s.worker));
        self.suggestion = Some(suggestion.clone());
        self.log(EventBody::Override(OverridePayload {
            action: action.into(),
            worker: worker.into(),
            replaced,
        }));
        Ok(suggestion)
    }

    /// Records that `completion.action` finished and updates the wear.
    pub fn complete_action(
        &mut self,
        completion: Completion,
    ) -> Result<&CompletionPayload, SessionError> {
        let arc = self
            .progress
            .resolve(&self.graph, &completion.action, &completion.worker)?;
        let (action_id, worker_id) = (self.graph.arc(arc).action, self.graph.arc(arc).worker);
        let rest = completion.rest_before_s.unwrap_or(0.0);
        if !(rest >= 0.0) {
            return Err(SessionError::NegativeDuration {
                what: "rest_before_s",
                value: rest,
            });
        }
        if let Some(d) = completion.duration_s {
            if !(d >= 0.0) {
                return Err(SessionError::NegativeDuration {
                    what: "duration_s",
                    value: d,
                });
            }
        }
        let scores = match (completion.scores, completion.angles) {
            (Some(_), Some(_)) => return Err(SessionError::ConflictingEvidence),
            (Some(s), None) => Some(s),
            (None, Some(a)) => Some(score_angle_trace(&a, &self.config.bands)?),
            (None, None) => None,
        };
        let r = self.config.cost.recovery_rate;
        let wear_before = if rest > 0.0 {
            recover_all(&self.wear.values, rest, r, self.capacity)?
        } else {
            self.wear.values
        };
        let model = self.model(action_id).clone();
        let payload = match self.graph.worker(worker_id).kind {
            WorkerKind::Human => {
                let predicted = predict(&wear_before, &model);
                match scores {
                    Some(trace) => {
                        let after = integrate_wear(&wear_before, &trace, self.capacity)?.last();
                        let error = after
                            .iter()
                            .map(|(j, v)| (v - predicted[j]).abs())
                            .fold(0.0, f64::max);
                        CompletionPayload {
                            action: completion.action,
                            worker: completion.worker,
                            arc,
                            duration_s: trace.duration(),
                            rest_before_s: rest,
                            source: WearSource::Trace,
                            wear_before,
                            wear_after: after,
                            predicted: Some(predicted),
                            model_error: Some(error),
                            scores: Some(trace),
                        }
                    }
                    None => CompletionPayload {
                        action: completion.action,
                        worker: completion.worker,
                        arc,
                        duration_s: completion.duration_s.unwrap_or(model.duration_s),
                        rest_before_s: rest,
                        source: WearSource::Model,
                        wear_before,
                        wear_after: predicted,
                        predicted: Some(predicted),
                        model_error: None,
                        scores: None,
                    },
                }
            }
            WorkerKind::Robot => {
                if scores.is_some() {
                    return Err(SessionError::RobotEvidence(completion.worker));
                }
                let duration = completion
                    .duration_s
                    .or_else(|| self.config.robot_durations.get(&completion.action).copied())
                    .unwrap_or(model.duration_s);
                CompletionPayload {
                    wear_after: recover_all(&wear_before, duration, r, self.capacity)?,
                    action: completion.action,
                    worker: completion.worker,
                    arc,
                    duration_s: duration,
                    rest_before_s: rest,
                    source: WearSource::Recovery,
                    wear_before,
                    predicted: None,
                    model_error: None,
                    scores: None,
                }
            }
        };
        let t = self.wear.t + rest + payload.duration_s;
        self.progress = self.progress.apply_arc(&self.graph, arc, t)?;
        self.wear = WearVector::new(payload.wear_after, t)?;
        self.suggestion = None;
        let wear = WearPayload {
            wear: payload.wear_after,
            complete: self.is_complete(),
        };
        self.log(EventBody::Completion(Box::new(payload)));
        let index = self.events.len() - 1;
        self.log(EventBody::Wear(wear));
        match &self.events[index].body {
            EventBody::Completion(p) => Ok(p),
            _ => unreachable!("completion event was just logged"),
        }
    }

    /// Plan for the whole assembly with costs frozen at the initial wear.
    pub fn offline_allocation(&self) -> Result<PlanDocument, SessionError> {
        let costs = self.costs_from(&self.initial_wear);
        let plan = replan(&self.graph, &ProgressState::initial(&self.graph), &costs)?;
        Ok(plan.to_document(&self.graph))
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            t: self.wear.t,
            wear: self.wear.values,
            solved: self
                .progress
                .solved
                .iter()
                .map(|n| {
                    self.graph
                        .node(*n)
                        .pieces
                        .iter()
                        .map(|i| self.graph.pieces()[i].clone())
                        .collect()
                })
                .collect(),
            history: self
                .progress
                .history
                .iter()
                .map(|c| HistoryEntry {
                    action: self.graph.action_name(c.action).to_string(),
                    worker: self.graph.worker(c.worker).id.clone(),
                    t: c.t,
                })
                .collect(),
            complete: self.is_complete(),
            suggestion: self.suggestion.clone(),
            v_th1: self.config.cost.v_th1,
            v_th2: self.config.cost.v_th2,
        }
    }

    fn log(&mut self, body: EventBody) {
        self.events.push(Event {
            v: LOG_VERSION,
            t: self.wear.t,
            body,
        });
    }

    /// Event log as JSON lines.
    pub fn export_log(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("events always serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses a JSON-lines event log. Blank lines are skipped.
    pub fn parse_log(text: &str) -> Result<Vec<Event>, SessionError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| SessionError::Log {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if let Some(v) = value.get("v").and_then(|v| v.as_u64()) {
                if v != u64::from(LOG_VERSION) {
                    return Err(SessionError::Version {
                        found: v as u32,
                        expected: LOG_VERSION,
                    });
                }
            }
            let event: Event = serde_json::from_value(value).map_err(|e| SessionError::Log {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(events)
    }

    /// Rebuilds a session from its JSON-lines log.
    pub fn replay(text: &str) -> Result<Session, SessionError> {
        Session::replay_events(&Session::parse_log(text)?)
    }

    /// Rebuilds a session by re-executing every logged mutation. Suggestions
    /// and wear snapshots are recomputed and must match the log.
    pub fn replay_events(events: &[Event]) -> Result<Session, SessionError> {
        let diverged = |line: usize, message: String| SessionError::Diverged { line, message };
        let Some(Event {
            body: EventBody::Start(start),
            v,
            ..
        }) = events.first()
        else {
            return Err(SessionError::Log {
                line: 1,
                message: "log must begin with a start event".into(),
            });
        };
        if *v != LOG_VERSION {
            return Err(SessionError::Version {
                found: *v,
                expected: LOG_VERSION,
            });
        }
        let graph = Aog::from_document(&start.graph)
            .map_err(|e| SessionError::InvalidGraph(e.to_string()))?;
        let mut session = Session::start(
            Arc::new(graph),
            start.models.clone(),
            start.config.clone(),
            start.initial_wear,
        )?;
        for (i, event) in events.iter().enumerate().skip(1) {
            let line = i + 1;
            if event.v != LOG_VERSION {
                return Err(SessionError::Version {
                    found: event.v,
                    expected: LOG_VERSION,
                });
            }
            match &event.body {
                EventBody::Start(_) => return Err(diverged(line, "second start event".into())),
                EventBody::Suggestion(logged) => {
                    let fresh = session.suggest_next()?;
                    if fresh != *logged {
                        return Err(diverged(
                            line,
                            format!(
                                "suggestion {} by {} recomputed as {} by {}",
                                logged.action, logged.worker, fresh.action, fresh.worker
                            ),
                        ));
                    }
                }
                EventBody::Override(o) => {
                    session.override_suggestion(&o.action, &o.worker)?;
                }
                EventBody::Completion(c) => {
                    let completion = Completion {
                        action: c.action.clone(),
                        worker: c.worker.clone(),
                        duration_s: Some(c.duration_s),
                        scores: c.scores.clone(),
                        angles: None,
                        rest_before_s: (c.rest_before_s > 0.0).then_some(c.rest_before_s),
                    };
                    let fresh = session.complete_action(completion)?;
                    if fresh != &**c {
                        return Err(diverged(
                            line,
                            format!("completion of {} recomputed differently", c.action),
                        ));
                    }
                    // The wear event is re-logged by complete_action; skip the logged copy.
                }
                EventBody::Wear(w) => {
                    let last = session.events.last().map(|e| &e.body);
                    if last != Some(&EventBody::Wear(w.clone())) {
                        return Err(diverged(
                            line,
                            "wear snapshot does not follow its completion".into(),
                        ));
                    }
                }
            }
            if session.events.last().map(|e| e.t) != Some(event.t) {
                return Err(diverged(
                    line,
                    format!("timestamp {} recomputed as {:?}", event.t, session.clock()),
                ));
            }
        }
        if session.events.len() != events.len() {
            return Err(diverged(
                events.len(),
                "log ends between a completion and its wear snapshot".into(),
            ));
        }
        Ok(session)
    }

    /// Hex SHA-256 of the canonical JSON of the session's full state.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            start: &'a Event,
            progress: &'a ProgressState,
            wear: &'a WearVector,
            suggestion: &'a Option<Suggestion>,
            events: usize,
        }
        let canonical = Canonical {
            start: &self.events[0],
            progress: &self.progress,
            wear: &self.wear,
            suggestion: &self.suggestion,
            events: self.events.len(),
        };
        // Going through `Value` sorts object keys.
        let value = serde_json::to_value(&canonical).expect("state always serializes");
        let bytes = serde_json::to_vec(&value).expect("values always serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            v: LOG_VERSION,
            digest: self.digest(),
            events: self.events.clone(),
        }
    }

    /// Restores a snapshot, checking that replay reproduces its digest.
    pub fn restore(snapshot: &Snapshot) -> Result<Session, SessionError> {
        if snapshot.v != LOG_VERSION {
            return Err(SessionError::Version {
                found: snapshot.v,
                expected: LOG_VERSION,
            });
        }
        let session = Session::replay_events(&snapshot.events)?;
        if session.digest() != snapshot.digest {
            return Err(SessionError::Diverged {
                line: snapshot.events.len(),
                message: "digest of the restored session does not match".into(),
            });
        }
        Ok(session)
    }
}
