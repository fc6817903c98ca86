//! Append-only incident ledger.
//!
//! Every adversarial event is recorded, blocked or not. Classification is
//! derived from the record by a fixed decision table and stored next to it;
//! loading a ledger recomputes and checks it. Incidents challenge the goals
//! whose scope contains their attack class through `INC-<id>-<goal>`
//! defeaters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::Layer;
use crate::eval::{Status, StatusAssignment};
use crate::model::{ArgumentGraph, AttackClass, Change, ChangeSet, DefeaterState, Edge, EdgeKind, Node, NodeId, NodeKind};

token_enum! {
    /// Downstream consequence of a delivered output. The last four are the
    /// harms that make an incident serious.
    pub enum ConsequenceClass: "consequence class" {
        None => "none",
        IgnoredOrPrevented => "ignored_or_prevented",
        SeriousHealthDamageOrDeath => "serious_health_damage_or_death",
        CriticalInfrastructureDisruption => "critical_infrastructure_disruption",
        FundamentalRightsInfringement => "fundamental_rights_infringement",
        SeriousPropertyOrEnvironmentDamage => "serious_property_or_environment_damage",
    }
}

impl ConsequenceClass {
    pub fn is_serious(self) -> bool {
        !matches!(self, ConsequenceClass::None | ConsequenceClass::IgnoredOrPrevented)
    }
}

token_enum! {
    pub enum Classification: "classification" {
        NotIncident => "not_incident",
        Incident => "incident",
        SeriousIncident => "serious_incident",
    }
}

token_enum! {
    /// Row of the decision table that produced a classification.
    pub enum DecisionRule: "decision rule" {
        Blocked => "blocked",
        Intended => "intended",
        DeliveredUnintended => "delivered_unintended",
        DeliveredUnintendedSerious => "delivered_unintended_serious",
    }
}

impl DecisionRule {
    pub fn classification(self) -> Classification {
        match self {
            DecisionRule::Blocked | DecisionRule::Intended => Classification::NotIncident,
            DecisionRule::DeliveredUnintended => Classification::Incident,
            DecisionRule::DeliveredUnintendedSerious => Classification::SeriousIncident,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DecisionRule::Blocked => "a guardrail stopped the output before delivery",
            DecisionRule::Intended => "the output was intended by the developers",
            DecisionRule::DeliveredUnintended => {
                "unintended output reached the user; any downstream effect was absent, ignored or prevented"
            }
            DecisionRule::DeliveredUnintendedSerious => "unintended output reached the user and caused a serious harm",
        }
    }
}

/// An event as submitted, before the ledger assigns its id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentEvent {
    /// RFC 3339 timestamp.
    pub timestamp: String,
    pub attack_class: AttackClass,
    /// Layer that stopped the output; `None` means it was delivered.
    pub blocked_at: Option<Layer>,
    /// Output unintended by the model or system developer.
    pub unintended: bool,
    pub consequence: ConsequenceClass,
    /// Opaque grouping token for multi-turn sessions.
    pub session: Option<String>,
    pub notes: String,
}

impl IncidentEvent {
    /// A delivered, unintended output with no recorded consequence.
    pub fn delivered(timestamp: impl Into<String>, attack_class: AttackClass) -> IncidentEvent {
        IncidentEvent {
            timestamp: timestamp.into(),
            attack_class,
            blocked_at: None,
            unintended: true,
            consequence: ConsequenceClass::None,
            session: None,
            notes: String::new(),
        }
    }

    pub fn blocked(timestamp: impl Into<String>, attack_class: AttackClass, layer: Layer) -> IncidentEvent {
        IncidentEvent {
            blocked_at: Some(layer),
            ..IncidentEvent::delivered(timestamp, attack_class)
        }
    }

    pub fn with_consequence(mut self, consequence: ConsequenceClass) -> IncidentEvent {
        self.consequence = consequence;
        self
    }

    pub fn intended(mut self) -> IncidentEvent {
        self.unintended = false;
        self
    }

    pub fn in_session(mut self, session: impl Into<String>) -> IncidentEvent {
        self.session = Some(session.into());
        self
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> IncidentEvent {
        self.notes = notes.into();
        self
    }

    pub fn is_delivered(&self) -> bool {
        self.blocked_at.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidentRecord {
    pub id: u64,
    pub event: IncidentEvent,
}

impl IncidentRecord {
    pub fn classification(&self) -> Classification {
        classify_incident(&self.event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncidentError {
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("unknown incident {0}")]
    UnknownIncident(u64),
    #[error("incident {id} is classified {classification}, not serious_incident")]
    NotSerious { id: u64, classification: Classification },
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn decision_rule(event: &IncidentEvent) -> DecisionRule {
    if event.blocked_at.is_some() {
        DecisionRule::Blocked
    } else if !event.unintended {
        DecisionRule::Intended
    } else if event.consequence.is_serious() {
        DecisionRule::DeliveredUnintendedSerious
    } else {
        DecisionRule::DeliveredUnintended
    }
}

pub fn classify_incident(event: &IncidentEvent) -> Classification {
    decision_rule(event).classification()
}

/// Record-time consistency checks.
pub fn check_event(event: &IncidentEvent) -> Result<(), IncidentError> {
    if chrono::DateTime::parse_from_rfc3339(&event.timestamp).is_err() {
        return Err(IncidentError::MalformedEvent(format!(
            "timestamp `{}` is not RFC 3339",
            event.timestamp
        )));
    }
    match event.blocked_at {
        Some(Layer::ReasoningReporting) => Err(IncidentError::MalformedEvent(
            "the reasoning-and-reporting layer does not block outputs".into(),
        )),
        Some(layer) if event.consequence.is_serious() => Err(IncidentError::MalformedEvent(format!(
            "output blocked at {} cannot cause {}",
            layer.short(),
            event.consequence
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
enum Entry {
    Incident {
        id: u64,
        #[serde(flatten)]
        event: IncidentEvent,
        classification: Classification,
    },
    ReportFiled {
        incident: u64,
        timestamp: String,
    },
}

/// Ledger entries in append order. There are no update or delete operations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ledger {
    entries: Vec<Entry>,
    incidents: Vec<IncidentRecord>,
    filed: BTreeSet<u64>,
}

impl Ledger {
    pub fn new() -> Ledger {
        Ledger::default()
    }

    /// Appends an event and returns its id (ids start at 1, without gaps).
    pub fn record_incident(&mut self, event: IncidentEvent) -> Result<u64, IncidentError> {
        check_event(&event)?;
        let id = self.incidents.len() as u64 + 1;
        self.entries.push(Entry::Incident {
            id,
            event: event.clone(),
            classification: classify_incident(&event),
        });
        self.incidents.push(IncidentRecord { id, event });
        Ok(id)
    }

    /// Notes that the report for a serious incident was submitted. Returns
    /// `false` without appending when it already was.
    pub fn record_report_filed(&mut self, incident: u64, timestamp: impl Into<String>) -> Result<bool, IncidentError> {
        let record = self.get(incident).ok_or(IncidentError::UnknownIncident(incident))?;
        let classification = record.classification();
        if classification != Classification::SeriousIncident {
            return Err(IncidentError::NotSerious { id: incident, classification });
        }
        let timestamp = timestamp.into();
        if chrono::DateTime::parse_from_rfc3339(&timestamp).is_err() {
            return Err(IncidentError::MalformedEvent(format!("timestamp `{timestamp}` is not RFC 3339")));
        }
        if !self.filed.insert(incident) {
            return Ok(false);
        }
        self.entries.push(Entry::ReportFiled { incident, timestamp });
        Ok(true)
    }

    pub fn get(&self, id: u64) -> Option<&IncidentRecord> {
        let index = usize::try_from(id.checked_sub(1)?).ok()?;
        self.incidents.get(index)
    }

    pub fn incidents(&self) -> &[IncidentRecord] {
        &self.incidents
    }

    pub fn len(&self) -> usize {
        self.incidents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidents.is_empty()
    }

    /// Number of entries (incidents and filing notes).
    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn report_filed(&self, id: u64) -> bool {
        self.filed.contains(&id)
    }

    /// Incidents per classification, every classification present.
    pub fn tally(&self) -> BTreeMap<Classification, usize> {
        let mut tally: BTreeMap<_, _> = Classification::ALL.iter().map(|c| (*c, 0)).collect();
        for record in &self.incidents {
            *tally.entry(record.classification()).or_default() += 1;
        }
        tally
    }

    pub fn to_jsonl(&self) -> String {
        self.jsonl_from(0)
    }

    /// Serialized entries from `start` on, for appending to an existing file.
    pub fn jsonl_from(&self, start: usize) -> String {
        let mut out = String::new();
        for entry in self.entries.iter().skip(start) {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    /// Replays a serialized ledger, re-checking ids, events and stored
    /// classifications.
    pub fn from_jsonl(text: &str) -> Result<Ledger, IncidentError> {
        let mut ledger = Ledger::new();
        for (index, line) in text.lines().enumerate() {
            let line_no = index + 1;
            let parse_err = |message: String| IncidentError::Parse { line: line_no, message };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let entry: Entry = serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
            match entry {
                Entry::Incident { id, event, classification } => {
                    let expected = ledger.len() as u64 + 1;
                    if id != expected {
                        return Err(parse_err(format!("incident id {id}, expected {expected}")));
                    }
                    let derived = classify_incident(&event);
                    if derived != classification {
                        return Err(parse_err(format!("stored classification {classification}, derived {derived}")));
                    }
                    ledger.record_incident(event).map_err(|e| parse_err(e.to_string()))?;
                }
                Entry::ReportFiled { incident, timestamp } => {
                    ledger
                        .record_report_filed(incident, timestamp)
                        .map_err(|e| parse_err(e.to_string()))?;
                }
            }
        }
        Ok(ledger)
    }
}

pub fn incident_defeater_id(incident: u64, goal: &NodeId) -> String {
    format!("INC-{incident}-{goal}")
}

fn is_counted(record: &IncidentRecord) -> bool {
    record.classification() != Classification::NotIncident
}

/// Goals whose scope contains the attack class, in id order.
fn matching_goals<'a>(graph: &'a ArgumentGraph, class: AttackClass) -> impl Iterator<Item = &'a Node> + 'a {
    graph
        .nodes()
        .filter(move |n| n.kind == NodeKind::Goal && n.scope.contains(&class))
}

/// One open defeater per (incident, matching goal) not already present.
pub fn trigger_defeaters(ledger: &Ledger, graph: &ArgumentGraph) -> ChangeSet {
    let mut changes = ChangeSet::new();
    for record in ledger.incidents().iter().filter(|r| is_counted(r)) {
        for goal in matching_goals(graph, record.event.attack_class) {
            let id = incident_defeater_id(record.id, &goal.id);
            if graph.contains(&id) {
                continue;
            }
            let statement = format!(
                "Incident #{} ({}, {}) at {} contradicts this claim",
                record.id,
                record.event.attack_class,
                record.classification(),
                record.event.timestamp
            );
            changes.push(Change::AddNode(Node::defeater(id.as_str(), statement, DefeaterState::Open)));
            changes.push(Change::AddEdge(Edge::new(goal.id.as_str(), EdgeKind::ChallengedBy, id.as_str())));
        }
    }
    changes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerStep {
    pub layer: Layer,
    pub outcome: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffectedClaim {
    pub goal: NodeId,
    pub status: Option<Status>,
    /// Counted incidents of the same attack class against this goal.
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedDefeater {
    pub id: NodeId,
    pub state: Option<DefeaterState>,
}

/// Serious-incident report document. `systemic_risk` and `checklist` are
/// left for the investigator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriousIncidentReport {
    pub record: IncidentRecord,
    pub rule: DecisionRule,
    pub layer_trace: Vec<LayerStep>,
    pub linked_defeaters: Vec<LinkedDefeater>,
    pub affected_claims: Vec<AffectedClaim>,
    pub systemic_risk: String,
    pub checklist: Vec<String>,
    pub filed: bool,
}

fn layer_trace(event: &IncidentEvent) -> Vec<LayerStep> {
    let mut outcome = "passed";
    Layer::ALL
        .iter()
        .filter(|l| l.is_runtime())
        .map(|&layer| {
            let step = match event.blocked_at {
                Some(b) if b == layer => "blocked",
                _ => outcome,
            };
            if step == "blocked" {
                outcome = "not reached";
            }
            LayerStep { layer, outcome: step }
        })
        .collect()
}

/// Builds the report for a serious incident. With a graph and its
/// assignment the report lists affected claims and incident defeaters.
pub fn generate_serious_report(
    ledger: &Ledger,
    incident: u64,
    case: Option<(&ArgumentGraph, &StatusAssignment)>,
) -> Result<SeriousIncidentReport, IncidentError> {
    let record = ledger.get(incident).ok_or(IncidentError::UnknownIncident(incident))?;
    let rule = decision_rule(&record.event);
    if rule.classification() != Classification::SeriousIncident {
        return Err(IncidentError::NotSerious {
            id: incident,
            classification: rule.classification(),
        });
    }

    let mut linked_defeaters = Vec::new();
    let mut affected_claims = Vec::new();
    if let Some((graph, assignment)) = case {
        let class = record.event.attack_class;
        for goal in matching_goals(graph, class) {
            let repetitions = ledger
                .incidents()
                .iter()
                .filter(|r| is_counted(r) && r.event.attack_class == class)
                .count();
            affected_claims.push(AffectedClaim {
                goal: goal.id.clone(),
                status: assignment.status(goal.id.as_str()),
                repetitions,
            });
            if let Some(node) = graph.node(&incident_defeater_id(incident, &goal.id)) {
                linked_defeaters.push(LinkedDefeater {
                    id: node.id.clone(),
                    state: node.defeater_state,
                });
            }
        }
    }

    Ok(SeriousIncidentReport {
        record: record.clone(),
        rule,
        layer_trace: layer_trace(&record.event),
        linked_defeaters,
        affected_claims,
        systemic_risk: String::from("Not assessed."),
        checklist: vec![
            "Preserve the input, output and guardrail logs of the incident".into(),
            "Identify which layers should have stopped the output and why they did not".into(),
            "Assess whether the incident indicates a systemic risk".into(),
            "Update guardrails and the assurance case; re-evaluate affected claims".into(),
            "Notify the market surveillance authority within the applicable deadline".into(),
        ],
        filed: ledger.report_filed(incident),
    })
}

impl SeriousIncidentReport {
    pub fn render(&self) -> String {
        let e = &self.record.event;
        let mut out = String::from("SERIOUS INCIDENT REPORT\n");
        let _ = writeln!(out, "\n== Incident ==");
        let _ = writeln!(out, "id: {}", self.record.id);
        let _ = writeln!(out, "timestamp: {}", e.timestamp);
        let _ = writeln!(out, "attack class: {}", e.attack_class);
        match e.blocked_at {
            Some(layer) => {
                let _ = writeln!(out, "delivery: blocked at {} ({layer})", layer.short());
            }
            None => {
                let _ = writeln!(out, "delivery: delivered");
            }
        }
        let _ = writeln!(out, "unintended: {}", if e.unintended { "yes" } else { "no" });
        let _ = writeln!(out, "consequence: {}", e.consequence);
        let _ = writeln!(out, "session: {}", e.session.as_deref().unwrap_or("-"));
        let _ = writeln!(out, "notes: {}", if e.notes.is_empty() { "-" } else { &e.notes });

        let _ = writeln!(out, "\n== Classification ==");
        let _ = writeln!(out, "classification: {}", self.rule.classification());
        let _ = writeln!(out, "rule: {} ({})", self.rule, self.rule.description());

        let _ = writeln!(out, "\n== Layer trace ==");
        for step in &self.layer_trace {
            let _ = writeln!(out, "{} {}: {}", step.layer.short(), step.layer, step.outcome);
        }

        let _ = writeln!(out, "\n== Linked defeaters ==");
        if self.linked_defeaters.is_empty() {
            let _ = writeln!(out, "none");
        }
        for d in &self.linked_defeaters {
            let state = d.state.map_or("-", |s| s.as_str());
            let _ = writeln!(out, "{}: {state}", d.id);
        }

        let _ = writeln!(out, "\n== Affected claims ==");
        if self.affected_claims.is_empty() {
            let _ = writeln!(out, "none");
        }
        for c in &self.affected_claims {
            let status = c.status.map_or("-", |s| s.as_str());
            let _ = writeln!(
                out,
                "{}: {status} (incidents of {} against this claim: {})",
                c.goal, e.attack_class, c.repetitions
            );
        }

        let _ = writeln!(out, "\n== Systemic risk ==");
        let _ = writeln!(out, "{}", self.systemic_risk);

        let _ = writeln!(out, "\n== Investigation checklist ==");
        for item in &self.checklist {
            let _ = writeln!(out, "- [ ] {item}");
        }

        let _ = writeln!(out, "\n== Filing ==");
        let _ = writeln!(out, "report filed: {}", if self.filed { "yes" } else { "no" });
        out
    }
}
