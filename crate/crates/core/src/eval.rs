//! Defeasible status evaluation.
//!
//! Statuses are computed bottom-up over the (acyclic) edge set:
//!
//! 1. A defeater is *active* when it is open, or mitigated without every
//!    mitigating goal being supported (or without any mitigating goal).
//! 2. An active defeater defeats the goal or solution it challenges and
//!    undercuts a strategy, context, assumption or justification.
//! 3. A solution with invalid evidence is undercut.
//! 4. A goal or strategy whose context is undercut or defeated is undercut.
//! 5. Goals and strategies decompose conjunctively: a failed child
//!    (undercut/defeated) undercuts the parent, an undeveloped child leaves
//!    it undeveloped.
//! 6. A goal or strategy without children is undeveloped.
//!
//! Causes combine by severity maximum. A defeater node itself reads as
//! supported when the challenge is handled (retired, or mitigated by
//! supported goals) and defeated while it is live.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    has_errors, validate, ArgumentGraph, ChangeError, ChangeSet, DefeaterState, Diagnostic, EdgeKind, NodeId,
    NodeKind, Severity,
};

token_enum! {
    /// Evaluation result, ordered by severity.
    pub enum Status: "status" {
        Supported => "supported",
        Undeveloped => "undeveloped",
        Undercut => "undercut",
        Defeated => "defeated",
    }
}

token_enum! {
    pub enum CauseKind: "cause" {
        ActiveDefeater => "active_defeater",
        InvalidEvidence => "invalid_evidence",
        UnsupportedChild => "unsupported_child",
        InvalidatedContext => "invalidated_context",
        NoSupport => "no_support",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Cause {
    pub kind: CauseKind,
    pub source: NodeId,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeStatus {
    pub status: Status,
    pub causes: Vec<Cause>,
}

/// Status of every node in one graph.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct StatusAssignment {
    statuses: BTreeMap<NodeId, NodeStatus>,
}

impl StatusAssignment {
    pub fn get(&self, id: &str) -> Option<&NodeStatus> {
        self.statuses.get(&NodeId::unchecked(id))
    }

    pub fn status(&self, id: &str) -> Option<Status> {
        self.get(id).map(|s| s.status)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &NodeStatus)> {
        self.statuses.iter()
    }

    pub fn len(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }

    /// True when the domain is exactly the graph's node set.
    pub fn matches(&self, graph: &ArgumentGraph) -> bool {
        self.statuses.len() == graph.node_count() && graph.node_ids().all(|id| self.statuses.contains_key(id))
    }

    /// One line per node in id order: `ID: status (cause source; ...)`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, ns) in &self.statuses {
            write!(out, "{id}: {}", ns.status).unwrap();
            if !ns.causes.is_empty() {
                let causes: Vec<String> = ns.causes.iter().map(Cause::to_string).collect();
                write!(out, " ({})", causes.join("; ")).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("graph has error diagnostics: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Diagnostic>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("prior assignment does not match the graph: {0}")]
    StaleAssignment(String),
    #[error(transparent)]
    InvalidChange(#[from] ChangeError),
}

fn ensure_valid(graph: &ArgumentGraph) -> Result<(), EvalError> {
    let diagnostics = validate(graph);
    if has_errors(&diagnostics) {
        return Err(EvalError::InvalidGraph(
            diagnostics.into_iter().filter(|d| d.severity == Severity::Error).collect(),
        ));
    }
    Ok(())
}

/// Nodes ordered so that every node follows everything it depends on.
fn dependency_order(graph: &ArgumentGraph) -> Vec<&NodeId> {
    let mut pending: BTreeMap<&NodeId, usize> = graph.node_ids().map(|id| (id, 0)).collect();
    let mut dependents: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in graph.edges() {
        *pending.get_mut(&e.from).expect("validated graph") += 1;
        dependents.entry(&e.to).or_default().push(&e.from);
    }
    let mut ready: BTreeSet<&NodeId> = pending.iter().filter(|(_, n)| **n == 0).map(|(id, _)| *id).collect();
    let mut order = Vec::with_capacity(pending.len());
    while let Some(id) = ready.pop_first() {
        order.push(id);
        for dep in dependents.get(id).into_iter().flatten() {
            let count = pending.get_mut(dep).expect("known node");
            *count -= 1;
            if *count == 0 {
                ready.insert(dep);
            }
        }
    }
    order
}

fn status_of(statuses: &BTreeMap<NodeId, NodeStatus>, id: &NodeId) -> Status {
    statuses.get(id).map(|s| s.status).expect("dependencies are evaluated first")
}

/// Whether a defeater currently challenges its targets.
pub fn defeater_active(graph: &ArgumentGraph, assignment: &StatusAssignment, defeater: &NodeId) -> bool {
    defeater_is_active(graph, &assignment.statuses, defeater)
}

fn defeater_is_active(graph: &ArgumentGraph, statuses: &BTreeMap<NodeId, NodeStatus>, id: &NodeId) -> bool {
    let Some(node) = graph.node(id.as_str()) else { return false };
    match node.defeater_state {
        Some(DefeaterState::Open) => true,
        Some(DefeaterState::Retired) | None => false,
        Some(DefeaterState::Mitigated) => {
            let mut mitigations = graph.targets(id, EdgeKind::MitigatedBy).peekable();
            mitigations.peek().is_none() || mitigations.any(|m| status_of(statuses, m) != Status::Supported)
        }
    }
}

fn evaluate_node(graph: &ArgumentGraph, id: &NodeId, statuses: &BTreeMap<NodeId, NodeStatus>) -> NodeStatus {
    let node = graph.node(id.as_str()).expect("node in graph");
    let mut found: Vec<(Status, Cause)> = Vec::new();
    let mut add = |status, kind, source: &NodeId| {
        found.push((
            status,
            Cause {
                kind,
                source: source.clone(),
            },
        ))
    };

    if node.kind == NodeKind::Defeater {
        match node.defeater_state {
            Some(DefeaterState::Open) => add(Status::Defeated, CauseKind::ActiveDefeater, id),
            Some(DefeaterState::Mitigated) => {
                let mitigations: Vec<&NodeId> = graph.targets(id, EdgeKind::MitigatedBy).collect();
                if mitigations.is_empty() {
                    add(Status::Defeated, CauseKind::NoSupport, id);
                }
                for m in mitigations {
                    if status_of(statuses, m) != Status::Supported {
                        add(Status::Defeated, CauseKind::UnsupportedChild, m);
                    }
                }
            }
            Some(DefeaterState::Retired) | None => {}
        }
    } else {
        let strike = match node.kind {
            NodeKind::Goal | NodeKind::Solution => Status::Defeated,
            _ => Status::Undercut,
        };
        for d in graph.targets(id, EdgeKind::ChallengedBy) {
            if defeater_is_active(graph, statuses, d) {
                add(strike, CauseKind::ActiveDefeater, d);
            }
        }
        if node.evidence_valid == Some(false) {
            add(Status::Undercut, CauseKind::InvalidEvidence, id);
        }
        if matches!(node.kind, NodeKind::Goal | NodeKind::Strategy) {
            for c in graph.targets(id, EdgeKind::InContextOf) {
                if status_of(statuses, c) >= Status::Undercut {
                    add(Status::Undercut, CauseKind::InvalidatedContext, c);
                }
            }
            let children: Vec<&NodeId> = graph.targets(id, EdgeKind::SupportedBy).collect();
            if children.is_empty() {
                add(Status::Undeveloped, CauseKind::NoSupport, id);
            }
            for child in children {
                match status_of(statuses, child) {
                    Status::Supported => {}
                    Status::Undeveloped => add(Status::Undeveloped, CauseKind::UnsupportedChild, child),
                    Status::Undercut | Status::Defeated => add(Status::Undercut, CauseKind::UnsupportedChild, child),
                }
            }
        }
    }

    let status = found.iter().map(|(s, _)| *s).max().unwrap_or(Status::Supported);
    let mut causes: Vec<Cause> = found.into_iter().map(|(_, c)| c).collect();
    causes.sort();
    causes.dedup();
    NodeStatus { status, causes }
}

/// Evaluates every node of a graph without error diagnostics.
pub fn evaluate(graph: &ArgumentGraph) -> Result<StatusAssignment, EvalError> {
    ensure_valid(graph)?;
    let mut statuses = BTreeMap::new();
    for id in dependency_order(graph) {
        let ns = evaluate_node(graph, id, &statuses);
        statuses.insert(id.clone(), ns);
    }
    Ok(StatusAssignment { statuses })
}

/// Applies `changes` to `graph` and re-evaluates only the nodes that can
/// have changed: the touched nodes and everything depending on them.
pub fn apply_and_reevaluate(
    graph: &ArgumentGraph,
    prior: &StatusAssignment,
    changes: &ChangeSet,
) -> Result<StatusAssignment, EvalError> {
    if !prior.matches(graph) {
        return Err(EvalError::StaleAssignment("node sets differ".into()));
    }
    let updated = graph.apply(changes)?;
    reevaluate_applied(&updated, prior, changes)
}

/// Same as [`apply_and_reevaluate`] for a caller that already holds the
/// updated graph. `prior` must describe the graph before `changes`.
pub fn reevaluate_applied(
    updated: &ArgumentGraph,
    prior: &StatusAssignment,
    changes: &ChangeSet,
) -> Result<StatusAssignment, EvalError> {
    ensure_valid(updated)?;

    let mut dirty: BTreeSet<&NodeId> = BTreeSet::new();
    let mut stack: Vec<&NodeId> = changes
        .iter()
        .map(|c| c.affected_node())
        .filter(|id| updated.contains(id.as_str()))
        .collect();
    let mut dependents: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in updated.edges() {
        dependents.entry(&e.to).or_default().push(&e.from);
    }
    while let Some(id) = stack.pop() {
        if dirty.insert(id) {
            stack.extend(dependents.get(id).into_iter().flatten().copied());
        }
    }

    let mut statuses: BTreeMap<NodeId, NodeStatus> = BTreeMap::new();
    for id in dependency_order(updated) {
        if dirty.contains(id) {
            let ns = evaluate_node(updated, id, &statuses);
            statuses.insert(id.clone(), ns);
        } else {
            let kept = prior
                .statuses
                .get(id)
                .ok_or_else(|| EvalError::StaleAssignment(format!("no prior status for `{id}`")))?;
            statuses.insert(id.clone(), kept.clone());
        }
    }
    Ok(StatusAssignment { statuses })
}

/// Why a node has its status, recursively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Explanation {
    pub id: NodeId,
    pub status: Status,
    pub causes: Vec<ExplainedCause>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExplainedCause {
    pub cause: Cause,
    /// Explanation of the implicated node, absent when it is the node itself.
    pub detail: Option<Explanation>,
}

pub fn explain(assignment: &StatusAssignment, id: &str) -> Result<Explanation, EvalError> {
    let (key, ns) = assignment
        .statuses
        .get_key_value(&NodeId::unchecked(id))
        .ok_or_else(|| EvalError::UnknownNode(id.to_string()))?;
    let mut causes = Vec::with_capacity(ns.causes.len());
    for cause in &ns.causes {
        let detail = if &cause.source == key {
            None
        } else {
            Some(explain(assignment, cause.source.as_str())?)
        };
        causes.push(ExplainedCause {
            cause: cause.clone(),
            detail,
        });
    }
    Ok(Explanation {
        id: key.clone(),
        status: ns.status,
        causes,
    })
}

impl Explanation {
    /// Every node id mentioned anywhere in the tree.
    pub fn implicated(&self) -> BTreeSet<&NodeId> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut BTreeSet<&'a NodeId>) {
        out.insert(&self.id);
        for c in &self.causes {
            out.insert(&c.cause.source);
            if let Some(d) = &c.detail {
                d.collect(out);
            }
        }
    }

    /// Indented tree rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, depth: usize) {
        writeln!(out, "{}{}: {}", "  ".repeat(depth), self.id, self.status).unwrap();
        for c in &self.causes {
            writeln!(out, "{}- {}", "  ".repeat(depth + 1), c.cause).unwrap();
            if let Some(d) = &c.detail {
                d.render_into(out, depth + 2);
            }
        }
    }
}
