//! Guardrail registry and coverage reasoning.
//!
//! Guardrails are linked to solution nodes; a goal is covered for an attack
//! class when some active guardrail linked to a solution below it covers that
//! class. Gaps drive machine-owned defeaters named `AUTO-<goal>-<class>`,
//! which [`reconcile_defeaters`] opens and retires as coverage changes.
//!
//! Coverage of model-internal (L3) guardrails is taken as asserted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArgumentGraph, AttackClass, Change, ChangeSet, DefeaterState, Edge, EdgeKind, Node, NodeId, NodeKind};

token_enum! {
    /// Pipeline layers: five runtime layers plus the reasoning-and-reporting
    /// meta-layer.
    pub enum Layer: "layer" {
        UpstreamInterface => "l1_upstream_interface",
        InputDetection => "l2_input_detection",
        Model => "l3_model",
        OutputDetection => "l4_output_detection",
        Downstream => "l5_downstream",
        ReasoningReporting => "l6_reasoning_reporting",
    }
}

impl Layer {
    /// Layer number, 1 to 6.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// `L1` .. `L6`.
    pub fn short(self) -> String {
        format!("L{}", self.number())
    }

    /// Layers an input traverses at run time (L1 to L5).
    pub fn is_runtime(self) -> bool {
        self != Layer::ReasoningReporting
    }

    /// Accepts the full token or the short `L<n>` form, case-insensitively.
    pub fn parse_loose(s: &str) -> Option<Layer> {
        if let Ok(layer) = s.parse() {
            return Some(layer);
        }
        let n: usize = s.strip_prefix(['L', 'l'])?.parse().ok()?;
        Layer::ALL.get(n.checked_sub(1)?).copied()
    }
}

/// A solution node in a named case.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SolutionRef {
    pub case: String,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailRecord {
    pub id: String,
    pub name: String,
    pub layer: Layer,
    pub coverage: BTreeSet<AttackClass>,
    pub active: bool,
    #[serde(default)]
    pub linked_solutions: BTreeSet<SolutionRef>,
}

impl GuardrailRecord {
    pub fn new(id: impl Into<String>, name: impl Into<String>, layer: Layer, coverage: impl IntoIterator<Item = AttackClass>) -> Self {
        GuardrailRecord {
            id: id.into(),
            name: name.into(),
            layer,
            coverage: coverage.into_iter().collect(),
            active: true,
            linked_solutions: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("guardrail `{0}` already registered")]
    DuplicateId(String),
    #[error("guardrail `{0}` is active but covers no attack class")]
    EmptyCoverageWhileActive(String),
    #[error("unknown guardrail `{0}`")]
    UnknownGuardrail(String),
    #[error("`{0}` is not a solution node")]
    NotASolution(String),
    #[error("registry line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Guardrails by id. Inactive records stay for audit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Registry {
    records: BTreeMap<String, GuardrailRecord>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn register(&mut self, record: GuardrailRecord) -> Result<String, CoverageError> {
        if self.records.contains_key(&record.id) {
            return Err(CoverageError::DuplicateId(record.id));
        }
        if record.active && record.coverage.is_empty() {
            return Err(CoverageError::EmptyCoverageWhileActive(record.id));
        }
        let id = record.id.clone();
        self.records.insert(id.clone(), record);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&GuardrailRecord> {
        self.records.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GuardrailRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn set_active(&mut self, id: &str, active: bool) -> Result<(), CoverageError> {
        let record = self.records.get_mut(id).ok_or_else(|| CoverageError::UnknownGuardrail(id.to_string()))?;
        if active && record.coverage.is_empty() {
            return Err(CoverageError::EmptyCoverageWhileActive(id.to_string()));
        }
        record.active = active;
        Ok(())
    }

    /// Links a solution of `graph` to a guardrail. Returns `false` when the
    /// link already existed.
    pub fn link_evidence(&mut self, graph: &ArgumentGraph, solution: &str, guardrail: &str) -> Result<bool, CoverageError> {
        match graph.node(solution) {
            Some(node) if node.kind == NodeKind::Solution => {}
            _ => return Err(CoverageError::NotASolution(solution.to_string())),
        }
        let record = self
            .records
            .get_mut(guardrail)
            .ok_or_else(|| CoverageError::UnknownGuardrail(guardrail.to_string()))?;
        Ok(record.linked_solutions.insert(SolutionRef {
            case: graph.name().to_string(),
            node: NodeId::unchecked(solution),
        }))
    }

    /// Guardrails linked to one solution, the reverse side of the link.
    pub fn guardrails_for<'a>(&'a self, case: &'a str, solution: &'a NodeId) -> impl Iterator<Item = &'a GuardrailRecord> + 'a {
        self.records
            .values()
            .filter(move |r| r.linked_solutions.iter().any(|l| l.case == case && &l.node == solution))
    }

    /// One JSON object per line, in id order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.records.values() {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses [`Registry::to_jsonl`] output. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn from_jsonl(text: &str) -> Result<Registry, CoverageError> {
        let mut registry = Registry::new();
        for (index, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let record: GuardrailRecord = serde_json::from_str(trimmed).map_err(|e| CoverageError::Parse {
                line: index + 1,
                message: e.to_string(),
            })?;
            registry.register(record).map_err(|e| CoverageError::Parse {
                line: index + 1,
                message: e.to_string(),
            })?;
        }
        Ok(registry)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CoverageGap {
    pub case: String,
    pub claim: NodeId,
    pub missing: AttackClass,
}

impl fmt::Display for CoverageGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} not covered", self.claim, self.missing)
    }
}

/// Union of coverage of active guardrails linked to solutions below `goal`.
pub fn claim_coverage(registry: &Registry, graph: &ArgumentGraph, goal: &NodeId) -> BTreeSet<AttackClass> {
    let mut covered = BTreeSet::new();
    for id in graph.support_descendants(goal) {
        if graph.node(id.as_str()).is_some_and(|n| n.kind == NodeKind::Solution) {
            for record in registry.guardrails_for(graph.name(), id) {
                if record.active {
                    covered.extend(record.coverage.iter().copied());
                }
            }
        }
    }
    covered
}

/// In-scope attack classes without active guardrail coverage, by goal id then
/// class.
pub fn coverage_gaps(registry: &Registry, graph: &ArgumentGraph) -> Vec<CoverageGap> {
    let mut gaps = Vec::new();
    for node in graph.nodes() {
        if node.kind != NodeKind::Goal || node.scope.is_empty() {
            continue;
        }
        let covered = claim_coverage(registry, graph, &node.id);
        for class in node.scope.difference(&covered) {
            gaps.push(CoverageGap {
                case: graph.name().to_string(),
                claim: node.id.clone(),
                missing: *class,
            });
        }
    }
    gaps
}

pub const AUTO_PREFIX: &str = "AUTO-";

pub fn auto_defeater_id(goal: &NodeId, class: AttackClass) -> String {
    format!("{AUTO_PREFIX}{goal}-{class}")
}

/// Splits an `AUTO-<goal>-<class>` id.
pub fn parse_auto_defeater_id(id: &str) -> Option<(String, AttackClass)> {
    let rest = id.strip_prefix(AUTO_PREFIX)?;
    let (goal, class) = rest.rsplit_once('-')?;
    if goal.is_empty() {
        return None;
    }
    Some((goal.to_string(), class.parse().ok()?))
}

/// Outcome of one reconciliation pass.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Reconciliation {
    pub changes: ChangeSet,
    /// Active guardrails covering nothing any linked claim is scoped to.
    pub deprecation_candidates: Vec<String>,
}

/// Opens an auto defeater for every coverage gap and retires auto defeaters
/// whose gap has closed. Human-authored defeaters are never touched.
pub fn reconcile_defeaters(registry: &Registry, graph: &ArgumentGraph) -> Reconciliation {
    let gaps = coverage_gaps(registry, graph);
    let mut changes = ChangeSet::new();
    let mut open_ids = BTreeSet::new();

    for gap in &gaps {
        let id = auto_defeater_id(&gap.claim, gap.missing);
        let edge = Edge::new(gap.claim.as_str(), EdgeKind::ChallengedBy, id.as_str());
        open_ids.insert(id.clone());
        match graph.node(&id) {
            None => {
                let statement = format!(
                    "No active guardrail linked to the evidence of {} covers {} attacks",
                    gap.claim, gap.missing
                );
                changes.push(Change::AddNode(Node::defeater(id.as_str(), statement, DefeaterState::Open)));
                changes.push(Change::AddEdge(edge));
            }
            Some(node) if node.kind == NodeKind::Defeater => {
                if node.defeater_state != Some(DefeaterState::Open) {
                    changes.push(Change::SetDefeaterState {
                        id: node.id.clone(),
                        state: DefeaterState::Open,
                    });
                }
                if !graph.contains_edge(&edge) {
                    changes.push(Change::AddEdge(edge));
                }
            }
            Some(_) => {}
        }
    }

    for node in graph.nodes() {
        if node.kind != NodeKind::Defeater || open_ids.contains(node.id.as_str()) {
            continue;
        }
        if parse_auto_defeater_id(node.id.as_str()).is_some() && node.defeater_state != Some(DefeaterState::Retired) {
            changes.push(Change::SetDefeaterState {
                id: node.id.clone(),
                state: DefeaterState::Retired,
            });
        }
    }

    Reconciliation {
        changes,
        deprecation_candidates: deprecation_candidates(registry, graph),
    }
}

fn deprecation_candidates(registry: &Registry, graph: &ArgumentGraph) -> Vec<String> {
    let goals: Vec<(&Node, BTreeSet<&NodeId>)> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Goal)
        .map(|n| (n, graph.support_descendants(&n.id)))
        .collect();

    let mut out = Vec::new();
    for record in registry.iter().filter(|r| r.active) {
        let linked: Vec<&NodeId> = record
            .linked_solutions
            .iter()
            .filter(|l| l.case == graph.name())
            .map(|l| &l.node)
            .collect();
        let claims: Vec<&Node> = goals
            .iter()
            .filter(|(_, below)| linked.iter().any(|s| below.contains(s)))
            .map(|(goal, _)| *goal)
            .collect();
        if claims.is_empty() {
            continue;
        }
        let relevant = claims.iter().any(|c| !c.scope.is_disjoint(&record.coverage));
        if !relevant {
            out.push(record.id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DefeaterState;
    use AttackClass::*;

    fn case() -> ArgumentGraph {
        let mut g = ArgumentGraph::new("code");
        g.add_node(Node::goal("G1", "resilient").with_scope([Jailbreak, GradientBased])).unwrap();
        g.add_node(Node::strategy("S1", "targeted guardrails")).unwrap();
        g.add_node(Node::goal("G1.2", "no vulnerabilities")).unwrap();
        g.add_node(Node::solution("Sn1.2", "SQL injection detector", true)).unwrap();
        g.add_edge(Edge::new("G1", EdgeKind::SupportedBy, "S1")).unwrap();
        g.add_edge(Edge::new("S1", EdgeKind::SupportedBy, "G1.2")).unwrap();
        g.add_edge(Edge::new("G1.2", EdgeKind::SupportedBy, "Sn1.2")).unwrap();
        g
    }

    #[test]
    fn register_records() {
        let mut r = Registry::new();
        let id = r
            .register(GuardrailRecord::new("perplexity", "Perplexity filter", Layer::InputDetection, [GradientBased, Randomization]))
            .unwrap();
        assert_eq!(id, "perplexity");
        assert!(r.register(GuardrailRecord::new("sqli", "SQL-injection detector", Layer::OutputDetection, [ModelInversion])).is_ok());
        assert_eq!(
            r.register(GuardrailRecord::new("empty", "nothing", Layer::Model, [])),
            Err(CoverageError::EmptyCoverageWhileActive("empty".into()))
        );
        assert!(matches!(
            r.register(GuardrailRecord::new("sqli", "again", Layer::Model, [Jailbreak])),
            Err(CoverageError::DuplicateId(_))
        ));
        let mut inactive = GuardrailRecord::new("old", "retired filter", Layer::Model, []);
        inactive.active = false;
        assert!(r.register(inactive).is_ok());
    }

    #[test]
    fn linking() {
        let g = case();
        let mut r = Registry::new();
        r.register(GuardrailRecord::new("sqli", "SQL-injection detector", Layer::OutputDetection, [ModelInversion])).unwrap();
        assert_eq!(r.link_evidence(&g, "Sn1.2", "sqli"), Ok(true));
        let before = r.clone();
        assert_eq!(r.link_evidence(&g, "Sn1.2", "sqli"), Ok(false));
        assert_eq!(r, before);
        assert_eq!(r.link_evidence(&g, "G1", "sqli"), Err(CoverageError::NotASolution("G1".into())));
        assert_eq!(r.link_evidence(&g, "Sn1.2", "nope"), Err(CoverageError::UnknownGuardrail("nope".into())));
        let id = NodeId::unchecked("Sn1.2");
        assert_eq!(r.guardrails_for("code", &id).count(), 1);
    }

    #[test]
    fn gaps_and_activity() {
        let g = case();
        let mut r = Registry::new();
        r.register(GuardrailRecord::new("jb", "jailbreak classifier", Layer::InputDetection, [Jailbreak])).unwrap();
        r.link_evidence(&g, "Sn1.2", "jb").unwrap();
        let gaps = coverage_gaps(&r, &g);
        assert_eq!(gaps.len(), 1);
        assert_eq!((gaps[0].claim.as_str(), gaps[0].missing), ("G1", GradientBased));

        r.register(GuardrailRecord::new("grad", "perplexity", Layer::InputDetection, [GradientBased])).unwrap();
        r.link_evidence(&g, "Sn1.2", "grad").unwrap();
        assert!(coverage_gaps(&r, &g).is_empty());

        r.set_active("jb", false).unwrap();
        let gaps = coverage_gaps(&r, &g);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].missing, Jailbreak);
    }

    #[test]
    fn reconcile_opens_retires_and_is_idempotent() {
        let g = case();
        let mut r = Registry::new();
        r.register(GuardrailRecord::new("jb", "jailbreak classifier", Layer::InputDetection, [Jailbreak])).unwrap();
        r.link_evidence(&g, "Sn1.2", "jb").unwrap();

        let first = reconcile_defeaters(&r, &g);
        assert_eq!(first.changes.len(), 2);
        let kinds: Vec<_> = first.changes.iter().map(|c| std::mem::discriminant(c)).collect();
        assert_eq!(kinds[0], std::mem::discriminant(&Change::AddNode(Node::goal("x", ""))));
        let g2 = g.apply(&first.changes).unwrap();
        assert!(g2.contains("AUTO-G1-gradient_based"));
        assert!(reconcile_defeaters(&r, &g2).changes.is_empty());

        r.register(GuardrailRecord::new("grad", "perplexity", Layer::InputDetection, [GradientBased])).unwrap();
        r.link_evidence(&g2, "Sn1.2", "grad").unwrap();
        let closing = reconcile_defeaters(&r, &g2);
        assert_eq!(
            closing.changes,
            ChangeSet::from(vec![Change::SetDefeaterState {
                id: NodeId::unchecked("AUTO-G1-gradient_based"),
                state: DefeaterState::Retired
            }])
        );
        let g3 = g2.apply(&closing.changes).unwrap();
        assert!(reconcile_defeaters(&r, &g3).changes.is_empty());
    }

    #[test]
    fn human_defeaters_untouched() {
        let mut g = case();
        g.add_node(Node::defeater("CG1", "human challenge", DefeaterState::Open)).unwrap();
        g.add_edge(Edge::new("G1", EdgeKind::ChallengedBy, "CG1")).unwrap();
        let r = Registry::new();
        let rec = reconcile_defeaters(&r, &g);
        assert!(rec.changes.iter().all(|c| c.affected_node().as_str() != "CG1"));
    }

    #[test]
    fn deprecation_candidates_rule() {
        let mut g = ArgumentGraph::new("code");
        g.add_node(Node::goal("G1", "claim").with_scope([Jailbreak])).unwrap();
        g.add_node(Node::solution("Sn1", "evidence", true)).unwrap();
        g.add_edge(Edge::new("G1", EdgeKind::SupportedBy, "Sn1")).unwrap();
        let mut r = Registry::new();
        r.register(GuardrailRecord::new("ctx", "context-switch monitor", Layer::InputDetection, [ContextSwitching])).unwrap();
        r.register(GuardrailRecord::new("jb", "jailbreak classifier", Layer::InputDetection, [Jailbreak])).unwrap();
        r.register(GuardrailRecord::new("loose", "unlinked", Layer::Downstream, [Randomization])).unwrap();
        r.link_evidence(&g, "Sn1", "ctx").unwrap();
        r.link_evidence(&g, "Sn1", "jb").unwrap();
        assert_eq!(reconcile_defeaters(&r, &g).deprecation_candidates, vec!["ctx".to_string()]);
    }

    #[test]
    fn auto_ids() {
        let id = auto_defeater_id(&NodeId::unchecked("G2.1"), HeuristicOptimization);
        assert_eq!(id, "AUTO-G2.1-heuristic_optimization");
        assert_eq!(parse_auto_defeater_id(&id), Some(("G2.1".to_string(), HeuristicOptimization)));
        assert_eq!(parse_auto_defeater_id("AUTO-G-x-jailbreak"), Some(("G-x".to_string(), Jailbreak)));
        assert_eq!(parse_auto_defeater_id("CG1.5.1"), None);
        assert_eq!(parse_auto_defeater_id("AUTO-G1-telepathy"), None);
    }

    #[test]
    fn layers() {
        assert_eq!(Layer::parse_loose("L2"), Some(Layer::InputDetection));
        assert_eq!(Layer::parse_loose("l3_model"), Some(Layer::Model));
        assert_eq!(Layer::parse_loose("L7"), None);
        assert_eq!(Layer::ReasoningReporting.short(), "L6");
        assert!(!Layer::ReasoningReporting.is_runtime());
    }

    #[test]
    fn jsonl_round_trip() {
        let g = case();
        let mut r = Registry::new();
        r.register(GuardrailRecord::new("jb", "jailbreak classifier", Layer::InputDetection, [Jailbreak])).unwrap();
        r.link_evidence(&g, "Sn1.2", "jb").unwrap();
        let text = r.to_jsonl();
        assert_eq!(
            text,
            "{\"id\":\"jb\",\"name\":\"jailbreak classifier\",\"layer\":\"l2_input_detection\",\"coverage\":[\"jailbreak\"],\"active\":true,\"linked_solutions\":[{\"case\":\"code\",\"node\":\"Sn1.2\"}]}\n"
        );
        assert_eq!(Registry::from_jsonl(&text).unwrap(), r);
        assert!(matches!(Registry::from_jsonl("{}\n"), Err(CoverageError::Parse { line: 1, .. })));
    }
}
