//! The reasoning-and-reporting loop: simulated traffic produces incidents,
//! incidents challenge claims, the compliance report flags them, and authored
//! mitigations plus filed reports restore compliance.

use std::error::Error;

use llm_assurance::incident::trigger_defeaters;
use llm_assurance::model::{DefeaterState, NodeKind};
use llm_assurance::report::{compliance_report, Duty, DutyStatus};
use llm_assurance::sim::run_simulation;
use llm_assurance::{corpus, evaluate, Change, ChangeSet, Classification, Edge, EdgeKind, Ledger, Node};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let graph = corpus::chat_assistant();
    let registry = corpus::chat_assistant_registry();
    let mut ledger = Ledger::new();

    let outcome = run_simulation(&corpus::chat_assistant_sim())?;
    let ids = outcome.ingest(&mut ledger)?;
    println!("ingested {} events", ids.len());

    let graph = graph.apply(&trigger_defeaters(&ledger, &graph))?;
    let assignment = evaluate(&graph)?;
    let report = compliance_report(&graph, &assignment, &registry, &ledger)?;
    print!("{}", report.render());
    assert_ne!(report.duty(Duty::Article15_5).status, DutyStatus::Satisfied);

    // Author a handled-by goal with evidence for every incident defeater.
    let mut changes = ChangeSet::new();
    for node in graph.nodes().filter(|n| n.kind == NodeKind::Defeater) {
        let goal = format!("M-{}", node.id);
        let evidence = format!("Ev-{}", node.id);
        changes.push(Change::AddNode(Node::goal(goal.as_str(), "The exploited gap is closed")));
        changes.push(Change::AddNode(Node::solution(evidence.as_str(), "Regression test replaying the incident", true)));
        changes.push(Change::AddEdge(Edge::new(goal.as_str(), EdgeKind::SupportedBy, evidence.as_str())));
        changes.push(Change::AddEdge(Edge::new(node.id.as_str(), EdgeKind::MitigatedBy, goal.as_str())));
        changes.push(Change::SetDefeaterState { id: node.id.clone(), state: DefeaterState::Mitigated });
    }
    let graph = graph.apply(&changes)?;
    let serious: Vec<u64> = ledger
        .incidents()
        .iter()
        .filter(|r| r.classification() == Classification::SeriousIncident)
        .map(|r| r.id)
        .collect();
    for id in serious {
        ledger.record_report_filed(id, "2026-03-09T12:00:00Z")?;
    }

    let assignment = evaluate(&graph)?;
    let report = compliance_report(&graph, &assignment, &registry, &ledger)?;
    print!("{}", report.render());
    assert_eq!(report.duty(Duty::Article15_5).status, DutyStatus::Satisfied);
    assert_eq!(report.duty(Duty::Article73).status, DutyStatus::Satisfied);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
