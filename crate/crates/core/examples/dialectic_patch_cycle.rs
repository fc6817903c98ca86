//! A challenge to a deployed filter undercuts the claim above it; handling the
//! challenge restores support. Re-evaluation is incremental.

use std::error::Error;

use llm_assurance::eval::{apply_and_reevaluate, explain};
use llm_assurance::model::{DefeaterState, NodeId};
use llm_assurance::{corpus, evaluate, Change, ChangeSet, Edge, EdgeKind, Node, Status};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Start from the natural-language case before the filter was challenged.
    let full = corpus::natural_language();
    let mut graph = full.clone();
    for id in ["CG2.2.1", "S2.2.1B", "J1.5.1", "Sn2.2.1B"] {
        let id = NodeId::new(id)?;
        for edge in graph.edges().filter(|e| e.touches(&id)).cloned().collect::<Vec<_>>() {
            graph.remove_edge(&edge)?;
        }
        graph.remove_node(&id)?;
    }
    let before = evaluate(&graph)?;
    println!("G2.2 before the challenge: {}", before.status("G2.2").unwrap());
    assert_eq!(before.status("G2.2"), Some(Status::Supported));

    // The challenge arrives.
    let challenge = ChangeSet::from(vec![
        Change::AddNode(Node::defeater("CG2.2.1", "The filter patch has errors", DefeaterState::Open)),
        Change::AddEdge(Edge::new("S2.2.1A", EdgeKind::ChallengedBy, "CG2.2.1")),
    ]);
    let challenged = apply_and_reevaluate(&graph, &before, &challenge)?;
    let graph = graph.apply(&challenge)?;
    println!("G2.2 after the challenge: {}", challenged.status("G2.2").unwrap());
    print!("{}", explain(&challenged, "G2.2")?.render());
    assert_eq!(challenged.status("G2.2"), Some(Status::Undercut));

    // The mitigation: a supported goal handling the defeater.
    let mitigation = ChangeSet::from(vec![
        Change::AddNode(Node::goal("S2.2.1B", "Patch errors are handled with new information")),
        Change::AddNode(Node::solution("Sn2.2.1B", "Regression results of the revised filter", true)),
        Change::AddEdge(Edge::new("S2.2.1B", EdgeKind::SupportedBy, "Sn2.2.1B")),
        Change::AddEdge(Edge::new("CG2.2.1", EdgeKind::MitigatedBy, "S2.2.1B")),
        Change::SetDefeaterState {
            id: NodeId::new("CG2.2.1")?,
            state: DefeaterState::Mitigated,
        },
    ]);
    let restored = apply_and_reevaluate(&graph, &challenged, &mitigation)?;
    let graph = graph.apply(&mitigation)?;
    println!("G2.2 after the mitigation: {}", restored.status("G2.2").unwrap());
    assert_eq!(restored.status("G2.2"), Some(Status::Supported));
    assert_eq!(restored, evaluate(&graph)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
