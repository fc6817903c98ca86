//! Graphviz export and the compliance report.
//!
//! DOT shapes follow GSN conventions; fill colors encode status:
//!
//! | status      | fill      |
//! |-------------|-----------|
//! | supported   | `#a8d5a2` green |
//! | undeveloped | `#d9d9d9` gray  |
//! | undercut    | `#ffc857` amber |
//! | defeated    | `#f28b82` red   |
//!
//! The compliance report computes two duties: protection against adversarial
//! attacks (Art. 15(5)) from the worst top-claim status, and serious-incident
//! reporting (Art. 73) from the ledger. Other duties are listed for reference
//! only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::coverage::{coverage_gaps, CoverageGap, Registry};
use crate::eval::{defeater_active, explain, Status, StatusAssignment};
use crate::incident::{Classification, Ledger};
use crate::model::{ArgumentGraph, EdgeKind, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("status assignment does not match the graph")]
    MismatchedAssignment,
    #[error("inconsistent inputs: {0}")]
    MismatchedInputs(String),
}

pub fn status_color(status: Status) -> &'static str {
    match status {
        Status::Supported => "#a8d5a2",
        Status::Undeveloped => "#d9d9d9",
        Status::Undercut => "#ffc857",
        Status::Defeated => "#f28b82",
    }
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Greedy word wrap for labels.
fn wrap(text: &str, width: usize) -> String {
    let mut lines: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        match lines.last_mut() {
            Some(line) if line.chars().count() + 1 + word.chars().count() <= width => {
                line.push(' ');
                line.push_str(word);
            }
            _ => lines.push(word.to_string()),
        }
    }
    lines.join("\n")
}

/// DOT digraph with one statement per node and per edge, in id order.
pub fn export_dot(graph: &ArgumentGraph, assignment: &StatusAssignment) -> Result<String, ReportError> {
    if !assignment.matches(graph) {
        return Err(ReportError::MismatchedAssignment);
    }
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", dot_quote(graph.name()));
    let _ = writeln!(out, "  node [fontname=\"Helvetica\", fontsize=10];");
    let _ = writeln!(out, "  edge [fontname=\"Helvetica\"];");
    for node in graph.nodes() {
        let status = assignment.status(node.id.as_str()).expect("assignment matches");
        let (shape, style) = match node.kind {
            NodeKind::Goal => ("box", "filled"),
            NodeKind::Strategy => ("parallelogram", "filled"),
            NodeKind::Solution => ("circle", "filled"),
            NodeKind::Context => ("box", "rounded,filled"),
            NodeKind::Assumption | NodeKind::Justification => ("ellipse", "filled"),
            NodeKind::Defeater => ("octagon", "filled"),
        };
        let mut label = node.id.to_string();
        match node.kind {
            NodeKind::Assumption => label.push_str(" (A)"),
            NodeKind::Justification => label.push_str(" (J)"),
            _ => {}
        }
        if !node.statement.is_empty() {
            label.push('\n');
            label.push_str(&wrap(&node.statement, 32));
        }
        let _ = writeln!(
            out,
            "  {} [shape={shape}, style={}, fillcolor={}, label={}];",
            dot_quote(node.id.as_str()),
            dot_quote(style),
            dot_quote(status_color(status)),
            dot_quote(&label)
        );
    }
    for edge in graph.edges() {
        let attrs = match edge.kind {
            EdgeKind::SupportedBy => "",
            EdgeKind::InContextOf => " [arrowhead=empty]",
            EdgeKind::ChallengedBy => " [style=dashed]",
            EdgeKind::MitigatedBy => " [style=dotted]",
        };
        let _ = writeln!(
            out,
            "  {} -> {}{attrs};",
            dot_quote(edge.from.as_str()),
            dot_quote(edge.to.as_str())
        );
    }
    out.push_str("}\n");
    Ok(out)
}

token_enum! {
    pub enum Duty: "duty" {
        Article15_5 => "article_15_5",
        Article73 => "article_73",
    }
}

impl Duty {
    pub fn title(self) -> &'static str {
        match self {
            Duty::Article15_5 => "Art. 15(5) resilience against adversarial attacks",
            Duty::Article73 => "Art. 73 reporting of serious incidents",
        }
    }
}

token_enum! {
    pub enum DutyStatus: "duty status" {
        Satisfied => "satisfied",
        AtRisk => "at_risk",
        Violated => "violated",
    }
}

/// Art. 15(5) status for a top-claim status.
pub fn article_15_5_status(top: Status) -> DutyStatus {
    match top {
        Status::Supported => DutyStatus::Satisfied,
        Status::Undeveloped | Status::Undercut => DutyStatus::AtRisk,
        Status::Defeated => DutyStatus::Violated,
    }
}

/// Art. 73 status given whether any serious incident lacks a filed report.
pub fn article_73_status(unreported_serious: bool) -> DutyStatus {
    if unreported_serious {
        DutyStatus::Violated
    } else {
        DutyStatus::Satisfied
    }
}

/// EU AI Act duties listed for reference; the report does not assess them.
pub const INFORMATIONAL_DUTIES: &[(&str, &str)] = &[
    ("Art. 9", "risk management system"),
    ("Art. 10", "data and data governance"),
    ("Art. 11", "technical documentation"),
    ("Art. 12", "record-keeping"),
    ("Art. 13", "transparency and provision of information to deployers"),
    ("Art. 14", "human oversight"),
    ("Art. 15(1)", "accuracy, robustness and cybersecurity"),
    ("Art. 15(4)", "resilience against errors, faults and inconsistencies"),
    ("Art. 17", "quality management system"),
    ("Art. 26", "obligations of deployers"),
    ("Art. 50", "transparency obligations for certain AI systems"),
    ("Art. 53", "obligations of general-purpose AI model providers"),
    ("Art. 55", "obligations for general-purpose AI models with systemic risk"),
    ("Art. 72", "post-market monitoring"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DutyEntry {
    pub duty: Duty,
    pub status: DutyStatus,
    pub rationale: String,
    pub supporting: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplianceReport {
    pub case: String,
    pub top_claims: Vec<(NodeId, Status)>,
    pub top_status: Status,
    pub duties: Vec<DutyEntry>,
    pub active_defeaters: Vec<NodeId>,
    pub coverage_gaps: Vec<CoverageGap>,
    pub incidents: BTreeMap<Classification, usize>,
    pub unreported_serious: Vec<u64>,
    /// Warnings distributed to users; free text.
    pub warnings: Vec<String>,
    /// Collected user feedback; free text.
    pub feedback: Vec<String>,
}

fn incident_of_defeater(id: &NodeId) -> Option<u64> {
    id.as_str().strip_prefix("INC-")?.split('-').next()?.parse().ok()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn compliance_report(
    graph: &ArgumentGraph,
    assignment: &StatusAssignment,
    registry: &Registry,
    ledger: &Ledger,
) -> Result<ComplianceReport, ReportError> {
    if !assignment.matches(graph) {
        return Err(ReportError::MismatchedInputs(
            "status assignment was computed for a different graph".into(),
        ));
    }
    for node in graph.nodes() {
        if let Some(id) = incident_of_defeater(&node.id) {
            if ledger.get(id).is_none() {
                return Err(ReportError::MismatchedInputs(format!(
                    "defeater {} cites incident {id}, which is not in the ledger",
                    node.id
                )));
            }
        }
    }

    let top_claims: Vec<(NodeId, Status)> = graph
        .root_goals()
        .into_iter()
        .map(|id| (id.clone(), assignment.status(id.as_str()).expect("assignment matches")))
        .collect();
    let top_status = top_claims.iter().map(|(_, s)| *s).max().unwrap_or(Status::Undeveloped);

    let active_defeaters: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Defeater && defeater_active(graph, assignment, &n.id))
        .map(|n| n.id.clone())
        .collect();

    // Active defeaters behind the top claims' status.
    let mut implicated = BTreeSet::new();
    for (id, status) in &top_claims {
        if *status != Status::Supported {
            let explanation = explain(assignment, id.as_str()).expect("assignment matches");
            implicated.extend(explanation.implicated().into_iter().cloned());
        }
    }
    let cited: Vec<&NodeId> = active_defeaters.iter().filter(|d| implicated.contains(*d)).collect();
    let incidents_cited: BTreeSet<u64> = cited.iter().filter_map(|d| incident_of_defeater(d)).collect();

    let art15 = {
        let status = article_15_5_status(top_status);
        let claims = join(top_claims.iter().map(|(id, s)| format!("{id} {s}")));
        let mut rationale = if top_claims.is_empty() {
            "no top claim; the case is undeveloped".to_string()
        } else {
            format!("top claims: {claims}")
        };
        if !cited.is_empty() {
            let _ = write!(rationale, "; active defeaters: {}", join(&cited));
        }
        if !incidents_cited.is_empty() {
            let _ = write!(rationale, "; triggering incidents: {}", join(incidents_cited.iter().map(|i| format!("#{i}"))));
        }
        let mut supporting: Vec<String> = top_claims.iter().map(|(id, _)| id.to_string()).collect();
        supporting.extend(cited.iter().map(|d| d.to_string()));
        DutyEntry {
            duty: Duty::Article15_5,
            status,
            rationale,
            supporting,
        }
    };

    let serious: Vec<u64> = ledger
        .incidents()
        .iter()
        .filter(|r| r.classification() == Classification::SeriousIncident)
        .map(|r| r.id)
        .collect();
    let unreported_serious: Vec<u64> = serious.iter().copied().filter(|id| !ledger.report_filed(*id)).collect();
    let art73 = {
        let rationale = if serious.is_empty() {
            "no serious incidents recorded".to_string()
        } else if unreported_serious.is_empty() {
            format!("reports filed for all serious incidents: {}", join(serious.iter().map(|i| format!("#{i}"))))
        } else {
            format!(
                "serious incidents without a filed report: {}",
                join(unreported_serious.iter().map(|i| format!("#{i}")))
            )
        };
        DutyEntry {
            duty: Duty::Article73,
            status: article_73_status(!unreported_serious.is_empty()),
            rationale,
            supporting: unreported_serious.iter().map(|i| format!("#{i}")).collect(),
        }
    };

    Ok(ComplianceReport {
        case: graph.name().to_string(),
        top_claims,
        top_status,
        duties: vec![art15, art73],
        active_defeaters,
        coverage_gaps: coverage_gaps(registry, graph),
        incidents: ledger.tally(),
        unreported_serious,
        warnings: Vec::new(),
        feedback: Vec::new(),
    })
}

impl ComplianceReport {
    pub fn duty(&self, duty: Duty) -> &DutyEntry {
        self.duties.iter().find(|d| d.duty == duty).expect("both duties present")
    }

    pub fn any_violated(&self) -> bool {
        self.duties.iter().any(|d| d.status == DutyStatus::Violated)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("COMPLIANCE REPORT\n");
        let _ = writeln!(out, "case: {}", self.case);

        let _ = writeln!(out, "\n== Summary ==");
        let claims = if self.top_claims.is_empty() {
            "none".to_string()
        } else {
            join(self.top_claims.iter().map(|(id, s)| format!("{id} ({s})")))
        };
        let _ = writeln!(out, "top claims: {claims}");
        let _ = writeln!(out, "top-claim status: {}", self.top_status);
        let _ = writeln!(out, "active defeaters: {}", self.active_defeaters.len());
        let _ = writeln!(out, "coverage gaps: {}", self.coverage_gaps.len());
        let _ = writeln!(out, "incidents: {}", join(self.incidents.iter().map(|(c, n)| format!("{c} {n}"))));

        let _ = writeln!(out, "\n== Duties ==");
        for d in &self.duties {
            let _ = writeln!(out, "{}: {}", d.duty.title(), d.status);
            let _ = writeln!(out, "  rationale: {}", d.rationale);
            let supporting = if d.supporting.is_empty() { "-".to_string() } else { d.supporting.join(", ") };
            let _ = writeln!(out, "  supporting: {supporting}");
        }

        let _ = writeln!(out, "\n== Active defeaters ==");
        list(&mut out, self.active_defeaters.iter());
        let _ = writeln!(out, "\n== Coverage gaps ==");
        list(&mut out, self.coverage_gaps.iter());
        let _ = writeln!(out, "\n== Unreported serious incidents ==");
        list(&mut out, self.unreported_serious.iter().map(|i| format!("#{i}")));
        let _ = writeln!(out, "\n== Warnings ==");
        list(&mut out, self.warnings.iter());
        let _ = writeln!(out, "\n== User feedback ==");
        list(&mut out, self.feedback.iter());

        let _ = writeln!(out, "\n== Other duties (informational, not assessed) ==");
        for (article, title) in INFORMATIONAL_DUTIES {
            let _ = writeln!(out, "- {article}: {title}");
        }
        out
    }
}

fn list<T: std::fmt::Display>(out: &mut String, items: impl Iterator<Item = T>) {
    let mut empty = true;
    for item in items {
        empty = false;
        let _ = writeln!(out, "- {item}");
    }
    if empty {
        let _ = writeln!(out, "none");
    }
}
