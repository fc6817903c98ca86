//! Typed GSN argument graph.
//!
//! An [`ArgumentGraph`] stores one assurance case: goals, strategies,
//! solutions, contexts, assumptions, justifications and defeaters, linked by
//! four typed edge kinds. Every edge is stored in "depends on" direction:
//!
//! | kind           | from                          | to                                  |
//! |----------------|-------------------------------|-------------------------------------|
//! | `SupportedBy`  | Goal, Strategy                | Strategy, Solution (from Goal); Goal (from Strategy) |
//! | `InContextOf`  | Goal, Strategy                | Context, Assumption, Justification  |
//! | `ChallengedBy` | any non-defeater              | Defeater                            |
//! | `MitigatedBy`  | Defeater                      | Goal                                |
//!
//! The whole edge set is kept acyclic, which makes status evaluation a single
//! bottom-up pass.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

token_enum! {
    /// Attack classes a claim can be scoped to and a guardrail can cover.
    pub enum AttackClass: "attack class" {
        /// Manually crafted prompts.
        Jailbreak => "jailbreak",
        /// Semi-automated inputs leveraging learned properties.
        HeuristicOptimization => "heuristic_optimization",
        /// Automatically generated inputs probing coverage gaps.
        Randomization => "randomization",
        GradientBased => "gradient_based",
        ModelInversion => "model_inversion",
        ContextSwitching => "context_switching",
    }
}

token_enum! {
    /// The seven GSN element kinds, defeaters included.
    pub enum NodeKind: "node kind" {
        Goal => "goal",
        Strategy => "strategy",
        Solution => "solution",
        Context => "context",
        Assumption => "assumption",
        Justification => "justification",
        Defeater => "defeater",
    }
}

token_enum! {
    pub enum EdgeKind: "edge kind" {
        SupportedBy => "supported_by",
        InContextOf => "in_context_of",
        ChallengedBy => "challenged_by",
        MitigatedBy => "mitigated_by",
    }
}

token_enum! {
    /// Lifecycle of a defeater.
    pub enum DefeaterState: "defeater state" {
        Open => "open",
        Mitigated => "mitigated",
        Retired => "retired",
    }
}

impl NodeKind {
    /// Context, assumption or justification.
    pub fn is_contextual(self) -> bool {
        matches!(self, NodeKind::Context | NodeKind::Assumption | NodeKind::Justification)
    }
}

/// Node identifier such as `G2.2.1` or `AUTO-G1-jailbreak`.
///
/// Ids are case-sensitive. They order numerically per digit run, so `G1.9`
/// sorts before `G1.10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Validates the token: an ASCII letter or digit followed by letters,
    /// digits, `.`, `_` or `-`.
    pub fn new(id: impl Into<String>) -> Result<NodeId, GraphError> {
        let id = NodeId(id.into());
        if id.is_well_formed() {
            Ok(id)
        } else {
            Err(GraphError::InvalidId(id.0))
        }
    }

    pub(crate) fn unchecked(id: impl Into<String>) -> NodeId {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_well_formed(&self) -> bool {
        is_id_token(&self.0)
    }
}

/// True for strings usable as node ids.
pub fn is_id_token(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() => {}
        _ => return false,
    }
    chars.all(is_id_char)
}

pub(crate) fn is_id_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_ids(&self.0, &other.0)
    }
}

/// Numeric-aware comparison: digit runs compare by value, everything else
/// bytewise; ties fall back to plain byte order so distinct ids never compare
/// equal.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    let mut left = segments(a);
    let mut right = segments(b);
    loop {
        match (left.next(), right.next()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = if is_digits(x) && is_digits(y) {
                    let x = x.trim_start_matches('0');
                    let y = y.trim_start_matches('0');
                    x.len().cmp(&y.len()).then_with(|| x.cmp(y))
                } else {
                    x.cmp(y)
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

fn is_digits(s: &str) -> bool {
    s.as_bytes().first().is_some_and(u8::is_ascii_digit)
}

fn segments(s: &str) -> impl Iterator<Item = &str> {
    let bytes = s.as_bytes();
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= bytes.len() {
            return None;
        }
        let digit = bytes[start].is_ascii_digit();
        let mut end = start + 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() == digit {
            end += 1;
        }
        let seg = &s[start..end];
        start = end;
        Some(seg)
    })
}

/// One GSN element.
///
/// Kind-specific fields: `defeater_state` is set exactly on defeaters,
/// `evidence_valid` exactly on solutions, `scope` only on goals and the
/// `undeveloped` marker only on goals and strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub statement: String,
    pub scope: BTreeSet<AttackClass>,
    pub defeater_state: Option<DefeaterState>,
    pub evidence_valid: Option<bool>,
    pub undeveloped: bool,
}

impl Node {
    fn bare(kind: NodeKind, id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node {
            id: NodeId::unchecked(id),
            kind,
            statement: statement.into(),
            scope: BTreeSet::new(),
            defeater_state: None,
            evidence_valid: None,
            undeveloped: false,
        }
    }

    pub fn goal(id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node::bare(NodeKind::Goal, id, statement)
    }

    pub fn strategy(id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node::bare(NodeKind::Strategy, id, statement)
    }

    pub fn solution(id: impl Into<String>, statement: impl Into<String>, valid: bool) -> Node {
        Node {
            evidence_valid: Some(valid),
            ..Node::bare(NodeKind::Solution, id, statement)
        }
    }

    pub fn context(id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node::bare(NodeKind::Context, id, statement)
    }

    pub fn assumption(id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node::bare(NodeKind::Assumption, id, statement)
    }

    pub fn justification(id: impl Into<String>, statement: impl Into<String>) -> Node {
        Node::bare(NodeKind::Justification, id, statement)
    }

    pub fn defeater(id: impl Into<String>, statement: impl Into<String>, state: DefeaterState) -> Node {
        Node {
            defeater_state: Some(state),
            ..Node::bare(NodeKind::Defeater, id, statement)
        }
    }

    /// Builder: replace the attack-class scope.
    pub fn with_scope(mut self, scope: impl IntoIterator<Item = AttackClass>) -> Node {
        self.scope = scope.into_iter().collect();
        self
    }

    /// Builder: mark a goal or strategy as intentionally undeveloped.
    pub fn mark_undeveloped(mut self) -> Node {
        self.undeveloped = true;
        self
    }

    /// Checks the kind-specific field rules; the error names the first
    /// violated rule.
    pub fn check(&self) -> Result<(), String> {
        if !self.id.is_well_formed() {
            return Err(format!("`{}` is not a valid id", self.id));
        }
        let is_defeater = self.kind == NodeKind::Defeater;
        if self.defeater_state.is_some() != is_defeater {
            return Err(if is_defeater {
                "defeater without a state".into()
            } else {
                format!("{} carries a defeater state", self.kind)
            });
        }
        let is_solution = self.kind == NodeKind::Solution;
        if self.evidence_valid.is_some() != is_solution {
            return Err(if is_solution {
                "solution without an evidence validity flag".into()
            } else {
                format!("{} carries an evidence validity flag", self.kind)
            });
        }
        if !self.scope.is_empty() && self.kind != NodeKind::Goal {
            return Err(format!("{} carries an attack-class scope", self.kind));
        }
        if self.undeveloped && !matches!(self.kind, NodeKind::Goal | NodeKind::Strategy) {
            return Err(format!("{} cannot be marked undeveloped", self.kind));
        }
        Ok(())
    }
}

/// A typed link, stored in dependency direction (see module docs).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: NodeId,
    pub kind: EdgeKind,
    pub to: NodeId,
}

impl Edge {
    pub fn new(from: impl Into<String>, kind: EdgeKind, to: impl Into<String>) -> Edge {
        Edge {
            from: NodeId::unchecked(from),
            kind,
            to: NodeId::unchecked(to),
        }
    }

    pub fn touches(&self, id: &NodeId) -> bool {
        &self.from == id || &self.to == id
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.from, self.kind, self.to)
    }
}

/// Whether an edge of `kind` may connect nodes of the given kinds.
pub fn edge_allowed(kind: EdgeKind, from: NodeKind, to: NodeKind) -> bool {
    use NodeKind::*;
    match kind {
        EdgeKind::SupportedBy => matches!((from, to), (Goal, Strategy) | (Goal, Solution) | (Strategy, Goal)),
        EdgeKind::InContextOf => matches!(from, Goal | Strategy) && to.is_contextual(),
        EdgeKind::ChallengedBy => from != Defeater && to == Defeater,
        EdgeKind::MitigatedBy => from == Defeater && to == Goal,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("`{0}` is not a valid node id")]
    InvalidId(String),
    #[error("node `{0}` already exists")]
    DuplicateId(NodeId),
    #[error("malformed node `{id}`: {reason}")]
    MalformedNode { id: NodeId, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("edge endpoint `{0}` does not exist")]
    UnknownEndpoint(NodeId),
    #[error("a {kind} edge cannot run from {from_kind} `{from}` to {to_kind} `{to}`")]
    IncompatibleKinds {
        kind: EdgeKind,
        from: NodeId,
        from_kind: NodeKind,
        to: NodeId,
        to_kind: NodeKind,
    },
    #[error("edge {0} would create a cycle")]
    WouldCreateCycle(Edge),
    #[error("edge {0} already exists")]
    DuplicateEdge(Edge),
    #[error("edge {0} does not exist")]
    UnknownEdge(Edge),
    #[error("node `{0}` still has attached edges")]
    NodeInUse(NodeId),
    #[error("cannot set {field} on {kind} `{id}`")]
    FieldMismatch {
        id: NodeId,
        kind: NodeKind,
        field: &'static str,
    },
}

/// One assurance case.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArgumentGraph {
    name: String,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeSet<Edge>,
}

impl ArgumentGraph {
    pub fn new(name: impl Into<String>) -> ArgumentGraph {
        ArgumentGraph {
            name: name.into(),
            ..ArgumentGraph::default()
        }
    }

    /// Builds a graph without any checks. Use [`validate`] on the result.
    ///
    /// Later nodes with a repeated id replace earlier ones.
    pub fn from_parts(
        name: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> ArgumentGraph {
        ArgumentGraph {
            name: name.into(),
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            edges: edges.into_iter().collect(),
        }
    }

    /// Case name, also used as the case id in guardrail links.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in canonical id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    /// Edges ordered by (from, kind, to).
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(&NodeId::unchecked(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Edges leaving `id`, in canonical order.
    pub fn outgoing<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        let lower = Edge {
            from: id.clone(),
            kind: EdgeKind::SupportedBy,
            to: NodeId::unchecked(""),
        };
        self.edges.range(lower..).take_while(move |e| &e.from == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &e.to == id)
    }

    /// Targets of `id`'s outgoing edges of one kind.
    pub fn targets<'a>(&'a self, id: &'a NodeId, kind: EdgeKind) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.outgoing(id).filter(move |e| e.kind == kind).map(|e| &e.to)
    }

    /// Sources of edges of one kind arriving at `id`.
    pub fn sources<'a>(&'a self, id: &'a NodeId, kind: EdgeKind) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.incoming(id).filter(move |e| e.kind == kind).map(|e| &e.from)
    }

    /// Goals with neither a `SupportedBy` parent nor a role as a mitigation.
    pub fn root_goals(&self) -> Vec<&NodeId> {
        let mut attached: BTreeSet<&NodeId> = BTreeSet::new();
        for e in &self.edges {
            if matches!(e.kind, EdgeKind::SupportedBy | EdgeKind::MitigatedBy) {
                attached.insert(&e.to);
            }
        }
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Goal && !attached.contains(&n.id))
            .map(|n| &n.id)
            .collect()
    }

    /// Every node reachable from `id` over `SupportedBy` edges, `id` excluded.
    pub fn support_descendants(&self, id: &NodeId) -> BTreeSet<&NodeId> {
        let mut seen = BTreeSet::new();
        let Some((root, _)) = self.nodes.get_key_value(id) else {
            return seen;
        };
        let mut stack: Vec<&NodeId> = self.targets(root, EdgeKind::SupportedBy).collect();
        while let Some(next) = stack.pop() {
            if seen.insert(next) {
                stack.extend(self.targets(next, EdgeKind::SupportedBy));
            }
        }
        seen
    }

    pub fn add_node(&mut self, node: Node) -> Result<NodeId, GraphError> {
        if !node.id.is_well_formed() {
            return Err(GraphError::InvalidId(node.id.0));
        }
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        node.check().map_err(|reason| GraphError::MalformedNode {
            id: node.id.clone(),
            reason,
        })?;
        let id = node.id.clone();
        self.nodes.insert(id.clone(), node);
        Ok(id)
    }

    /// Adds a typed edge, keeping the edge set acyclic.
    pub fn add_edge(&mut self, edge: Edge) -> Result<Edge, GraphError> {
        let from_kind = self.kind_of(&edge.from).ok_or_else(|| GraphError::UnknownEndpoint(edge.from.clone()))?;
        let to_kind = self.kind_of(&edge.to).ok_or_else(|| GraphError::UnknownEndpoint(edge.to.clone()))?;
        if edge.from == edge.to {
            return Err(GraphError::WouldCreateCycle(edge));
        }
        if !edge_allowed(edge.kind, from_kind, to_kind) {
            return Err(GraphError::IncompatibleKinds {
                kind: edge.kind,
                from: edge.from,
                from_kind,
                to: edge.to,
                to_kind,
            });
        }
        if self.edges.contains(&edge) {
            return Err(GraphError::DuplicateEdge(edge));
        }
        if self.reaches(&edge.to, &edge.from) {
            return Err(GraphError::WouldCreateCycle(edge));
        }
        self.edges.insert(edge.clone());
        Ok(edge)
    }

    /// Removes a node that has no attached edges.
    pub fn remove_node(&mut self, id: &NodeId) -> Result<Node, GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        if self.edges.iter().any(|e| e.touches(id)) {
            return Err(GraphError::NodeInUse(id.clone()));
        }
        Ok(self.nodes.remove(id).expect("checked above"))
    }

    pub fn remove_edge(&mut self, edge: &Edge) -> Result<(), GraphError> {
        if self.edges.remove(edge) {
            Ok(())
        } else {
            Err(GraphError::UnknownEdge(edge.clone()))
        }
    }

    fn kind_of(&self, id: &NodeId) -> Option<NodeKind> {
        self.nodes.get(id).map(|n| n.kind)
    }

    fn node_mut(&mut self, id: &NodeId) -> Result<&mut Node, GraphError> {
        self.nodes.get_mut(id).ok_or_else(|| GraphError::UnknownNode(id.clone()))
    }

    fn reaches(&self, start: &NodeId, goal: &NodeId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(next) = stack.pop() {
            if next == goal {
                return true;
            }
            if seen.insert(next) {
                stack.extend(self.outgoing(next).map(|e| &e.to));
            }
        }
        false
    }

    pub fn set_statement(&mut self, id: &NodeId, statement: impl Into<String>) -> Result<(), GraphError> {
        self.node_mut(id)?.statement = statement.into();
        Ok(())
    }

    pub fn set_scope(&mut self, id: &NodeId, scope: BTreeSet<AttackClass>) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if node.kind != NodeKind::Goal && !scope.is_empty() {
            return Err(field_mismatch(node, "scope"));
        }
        node.scope = scope;
        Ok(())
    }

    pub fn set_undeveloped(&mut self, id: &NodeId, undeveloped: bool) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if undeveloped && !matches!(node.kind, NodeKind::Goal | NodeKind::Strategy) {
            return Err(field_mismatch(node, "undeveloped"));
        }
        node.undeveloped = undeveloped;
        Ok(())
    }

    pub fn set_defeater_state(&mut self, id: &NodeId, state: DefeaterState) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if node.kind != NodeKind::Defeater {
            return Err(field_mismatch(node, "defeater state"));
        }
        node.defeater_state = Some(state);
        Ok(())
    }

    pub fn set_evidence_valid(&mut self, id: &NodeId, valid: bool) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if node.kind != NodeKind::Solution {
            return Err(field_mismatch(node, "evidence validity"));
        }
        node.evidence_valid = Some(valid);
        Ok(())
    }

    /// Applies one change with the same checks as the direct mutators.
    pub fn apply_change(&mut self, change: &Change) -> Result<(), GraphError> {
        match change {
            Change::AddNode(node) => self.add_node(node.clone()).map(drop),
            Change::RemoveNode(id) => self.remove_node(id).map(drop),
            Change::AddEdge(edge) => self.add_edge(edge.clone()).map(drop),
            Change::RemoveEdge(edge) => self.remove_edge(edge),
            Change::SetStatement { id, statement } => self.set_statement(id, statement.clone()),
            Change::SetScope { id, scope } => self.set_scope(id, scope.clone()),
            Change::SetUndeveloped { id, undeveloped } => self.set_undeveloped(id, *undeveloped),
            Change::SetDefeaterState { id, state } => self.set_defeater_state(id, *state),
            Change::SetEvidenceValid { id, valid } => self.set_evidence_valid(id, *valid),
        }
    }

    /// Returns a new graph with every change applied, or the first failure.
    pub fn apply(&self, changes: &ChangeSet) -> Result<ArgumentGraph, ChangeError> {
        let mut next = self.clone();
        for (index, change) in changes.iter().enumerate() {
            next.apply_change(change).map_err(|source| ChangeError {
                index,
                change: change.to_string(),
                source,
            })?;
        }
        Ok(next)
    }

    /// Structural checks. Pure; the result is ordered deterministically.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(self)
    }

    /// Change set turning `self` into `target`.
    pub fn diff(&self, target: &ArgumentGraph) -> ChangeSet {
        diff(self, target)
    }
}

fn field_mismatch(node: &Node, field: &'static str) -> GraphError {
    GraphError::FieldMismatch {
        id: node.id.clone(),
        kind: node.kind,
        field,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("change #{index} ({change}) cannot be applied: {source}")]
pub struct ChangeError {
    pub index: usize,
    pub change: String,
    #[source]
    pub source: GraphError,
}

/// One atomic edit of an argument graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    AddNode(Node),
    RemoveNode(NodeId),
    AddEdge(Edge),
    RemoveEdge(Edge),
    SetStatement { id: NodeId, statement: String },
    SetScope { id: NodeId, scope: BTreeSet<AttackClass> },
    SetUndeveloped { id: NodeId, undeveloped: bool },
    SetDefeaterState { id: NodeId, state: DefeaterState },
    SetEvidenceValid { id: NodeId, valid: bool },
}

impl Change {
    /// Nodes whose own fields or outgoing edges this change touches.
    pub fn affected_node(&self) -> &NodeId {
        match self {
            Change::AddNode(node) => &node.id,
            Change::RemoveNode(id) => id,
            Change::AddEdge(edge) | Change::RemoveEdge(edge) => &edge.from,
            Change::SetStatement { id, .. }
            | Change::SetScope { id, .. }
            | Change::SetUndeveloped { id, .. }
            | Change::SetDefeaterState { id, .. }
            | Change::SetEvidenceValid { id, .. } => id,
        }
    }
}

impl fmt::Display for Change {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Change::AddNode(node) => write!(f, "add {} {} {:?}", node.kind, node.id, node.statement),
            Change::RemoveNode(id) => write!(f, "remove node {id}"),
            Change::AddEdge(edge) => write!(f, "add edge {edge}"),
            Change::RemoveEdge(edge) => write!(f, "remove edge {edge}"),
            Change::SetStatement { id, statement } => write!(f, "set {id} statement {statement:?}"),
            Change::SetScope { id, scope } => {
                let names: Vec<_> = scope.iter().map(|c| c.as_str()).collect();
                write!(f, "set {id} scope [{}]", names.join(", "))
            }
            Change::SetUndeveloped { id, undeveloped } => write!(f, "set {id} undeveloped {undeveloped}"),
            Change::SetDefeaterState { id, state } => write!(f, "set {id} state {state}"),
            Change::SetEvidenceValid { id, valid } => write!(f, "set {id} evidence {}", if *valid { "valid" } else { "invalid" }),
        }
    }
}

/// Ordered list of changes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChangeSet {
    changes: Vec<Change>,
}

impl ChangeSet {
    pub fn new() -> ChangeSet {
        ChangeSet::default()
    }

    pub fn push(&mut self, change: Change) {
        self.changes.push(change);
    }

    pub fn extend(&mut self, other: ChangeSet) {
        self.changes.extend(other.changes);
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Change> {
        self.changes.iter()
    }
}

impl From<Vec<Change>> for ChangeSet {
    fn from(changes: Vec<Change>) -> Self {
        ChangeSet { changes }
    }
}

impl FromIterator<Change> for ChangeSet {
    fn from_iter<T: IntoIterator<Item = Change>>(iter: T) -> Self {
        ChangeSet {
            changes: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a ChangeSet {
    type Item = &'a Change;
    type IntoIter = std::slice::Iter<'a, Change>;

    fn into_iter(self) -> Self::IntoIter {
        self.changes.iter()
    }
}

impl fmt::Display for ChangeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for change in &self.changes {
            writeln!(f, "{change}")?;
        }
        Ok(())
    }
}

/// Computes the change set from `base` to `target`.
///
/// Order: edge removals, node removals, node additions, field updates, edge
/// additions. A node whose kind differs is removed and re-added together with
/// its edges. The case name is not part of the diff.
pub fn diff(base: &ArgumentGraph, target: &ArgumentGraph) -> ChangeSet {
    let replaced: BTreeSet<&NodeId> = base
        .nodes
        .values()
        .filter(|n| target.nodes.get(&n.id).is_some_and(|t| t.kind != n.kind))
        .map(|n| &n.id)
        .collect();
    let touches_replaced = |e: &Edge| replaced.contains(&e.from) || replaced.contains(&e.to);

    let mut out = ChangeSet::new();
    for edge in &base.edges {
        if !target.edges.contains(edge) || touches_replaced(edge) {
            out.push(Change::RemoveEdge(edge.clone()));
        }
    }
    for id in base.nodes.keys() {
        if !target.nodes.contains_key(id) || replaced.contains(id) {
            out.push(Change::RemoveNode(id.clone()));
        }
    }
    for (id, node) in &target.nodes {
        if !base.nodes.contains_key(id) || replaced.contains(id) {
            out.push(Change::AddNode(node.clone()));
        }
    }
    for (id, old) in &base.nodes {
        let Some(new) = target.nodes.get(id) else { continue };
        if replaced.contains(id) {
            continue;
        }
        if old.statement != new.statement {
            out.push(Change::SetStatement {
                id: id.clone(),
                statement: new.statement.clone(),
            });
        }
        if old.scope != new.scope {
            out.push(Change::SetScope {
                id: id.clone(),
                scope: new.scope.clone(),
            });
        }
        if old.undeveloped != new.undeveloped {
            out.push(Change::SetUndeveloped {
                id: id.clone(),
                undeveloped: new.undeveloped,
            });
        }
        if let (Some(a), Some(b)) = (old.defeater_state, new.defeater_state) {
            if a != b {
                out.push(Change::SetDefeaterState { id: id.clone(), state: b });
            }
        }
        if let (Some(a), Some(b)) = (old.evidence_valid, new.evidence_valid) {
            if a != b {
                out.push(Change::SetEvidenceValid { id: id.clone(), valid: b });
            }
        }
    }
    for edge in &target.edges {
        if !base.edges.contains(edge) || touches_replaced(edge) {
            out.push(Change::AddEdge(edge.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Locus {
    Graph,
    Node(NodeId),
    Edge(Edge),
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Graph => f.write_str("case"),
            Locus::Node(id) => write!(f, "node {id}"),
            Locus::Edge(edge) => write!(f, "edge {edge}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagnosticCode {
    MalformedNode,
    DanglingEdge,
    IncompatibleEdge,
    SolutionWithSupport,
    Cycle,
    UndevelopedGoal,
    UnattachedDefeater,
    MitigationMissing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub locus: Locus,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.locus, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

/// Structural checks over a possibly unchecked graph.
///
/// Errors: malformed nodes, dangling or ill-typed edges, solutions with
/// outgoing support, cycles. Warnings: goals without support that are not
/// marked undeveloped, defeaters nobody is challenged by, mitigated defeaters
/// without a mitigation link.
pub fn validate(graph: &ArgumentGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |severity, code, locus, message: String| {
        out.push(Diagnostic {
            severity,
            code,
            locus,
            message,
        })
    };

    for node in graph.nodes.values() {
        if let Err(reason) = node.check() {
            push(Severity::Error, DiagnosticCode::MalformedNode, Locus::Node(node.id.clone()), reason);
        }
    }

    for edge in &graph.edges {
        let locus = || Locus::Edge(edge.clone());
        let (from, to) = match (graph.kind_of(&edge.from), graph.kind_of(&edge.to)) {
            (Some(a), Some(b)) => (a, b),
            (a, _) => {
                let missing = if a.is_none() { &edge.from } else { &edge.to };
                push(Severity::Error, DiagnosticCode::DanglingEdge, locus(), format!("endpoint `{missing}` does not exist"));
                continue;
            }
        };
        if edge.kind == EdgeKind::SupportedBy && from == NodeKind::Solution {
            push(
                Severity::Error,
                DiagnosticCode::SolutionWithSupport,
                locus(),
                format!("solution `{}` cannot be supported by other nodes", edge.from),
            );
        } else if !edge_allowed(edge.kind, from, to) {
            push(
                Severity::Error,
                DiagnosticCode::IncompatibleEdge,
                locus(),
                format!("a {} edge cannot run from a {from} to a {to}", edge.kind),
            );
        }
    }

    for edge in back_edges(graph) {
        push(
            Severity::Error,
            DiagnosticCode::Cycle,
            Locus::Edge(edge.clone()),
            "edge closes a dependency cycle".to_string(),
        );
    }

    for node in graph.nodes.values() {
        match node.kind {
            NodeKind::Goal => {
                if !node.undeveloped && graph.targets(&node.id, EdgeKind::SupportedBy).next().is_none() {
                    push(
                        Severity::Warning,
                        DiagnosticCode::UndevelopedGoal,
                        Locus::Node(node.id.clone()),
                        "goal has no support and is not marked undeveloped".to_string(),
                    );
                }
            }
            NodeKind::Defeater => {
                if graph.sources(&node.id, EdgeKind::ChallengedBy).next().is_none() {
                    push(
                        Severity::Warning,
                        DiagnosticCode::UnattachedDefeater,
                        Locus::Node(node.id.clone()),
                        "defeater does not challenge any node".to_string(),
                    );
                }
                if node.defeater_state == Some(DefeaterState::Mitigated)
                    && graph.targets(&node.id, EdgeKind::MitigatedBy).next().is_none()
                {
                    push(
                        Severity::Warning,
                        DiagnosticCode::MitigationMissing,
                        Locus::Node(node.id.clone()),
                        "defeater is marked mitigated but names no mitigating goal".to_string(),
                    );
                }
            }
            _ => {}
        }
    }
    out
}

/// Edges that close a cycle, found by an ordered depth-first search.
fn back_edges(graph: &ArgumentGraph) -> Vec<&Edge> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&NodeId, Mark> = BTreeMap::new();
    let mut found = Vec::new();
    for root in graph.nodes.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // Each frame: node and the edges still to visit.
        let mut stack: Vec<(&NodeId, Vec<&Edge>)> = vec![(root, graph.outgoing(root).collect())];
        marks.insert(root, Mark::Active);
        while let Some((node, pending)) = stack.last_mut() {
            if pending.is_empty() {
                marks.insert(node, Mark::Done);
                stack.pop();
                continue;
            }
            let edge = pending.remove(0);
            if !graph.nodes.contains_key(&edge.to) {
                continue;
            }
            match marks.get(&edge.to) {
                Some(Mark::Active) => found.push(edge),
                Some(Mark::Done) => {}
                None => {
                    marks.insert(&edge.to, Mark::Active);
                    stack.push((&edge.to, graph.outgoing(&edge.to).collect()));
                }
            }
        }
    }
    found.sort();
    found
}
