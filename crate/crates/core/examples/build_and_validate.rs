//! Build a small argument in code, let the graph reject ill-formed edits,
//! validate it, and express an edit as a change set.

use std::error::Error;

use llm_assurance::model::{diff, validate, DefeaterState, GraphError};
use llm_assurance::{ArgumentGraph, AttackClass, Edge, EdgeKind, Node};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut g = ArgumentGraph::new("summarizer");
    g.add_node(Node::goal("G0", "The summarizer is robust against adversarial prompts"))?;
    g.add_node(Node::strategy("S0", "Argue per attack class"))?;
    g.add_node(Node::goal("G1", "Jailbreak prompts are filtered").with_scope([AttackClass::Jailbreak]))?;
    g.add_node(Node::solution("Sn1", "Red-team evaluation of the input filter", true))?;
    g.add_node(Node::context("C0", "Deployed behind an internal API"))?;
    g.add_edge(Edge::new("G0", EdgeKind::SupportedBy, "S0"))?;
    g.add_edge(Edge::new("S0", EdgeKind::SupportedBy, "G1"))?;
    g.add_edge(Edge::new("G1", EdgeKind::SupportedBy, "Sn1"))?;
    g.add_edge(Edge::new("G0", EdgeKind::InContextOf, "C0"))?;
    println!("{} nodes, {} edges", g.node_count(), g.edge_count());

    // The graph enforces typing and acyclicity on every edit.
    let cyclic = g.add_edge(Edge::new("G1", EdgeKind::SupportedBy, "S0"));
    assert!(matches!(cyclic, Err(GraphError::WouldCreateCycle(_))));
    println!("rejected: {}", cyclic.unwrap_err());
    let ill_typed = g.add_edge(Edge::new("Sn1", EdgeKind::InContextOf, "C0"));
    assert!(matches!(ill_typed, Err(GraphError::IncompatibleKinds { .. })));
    println!("rejected: {}", ill_typed.unwrap_err());

    // A goal without support is a warning until it is marked undeveloped.
    let mut draft = g.clone();
    draft.add_node(Node::goal("G2", "Model inversion is infeasible"))?;
    draft.add_edge(Edge::new("S0", EdgeKind::SupportedBy, "G2"))?;
    draft.add_node(Node::defeater("D1", "Inversion attacks on similar models succeed", DefeaterState::Open))?;
    draft.add_edge(Edge::new("G2", EdgeKind::ChallengedBy, "D1"))?;
    for d in validate(&draft) {
        println!("{d}");
    }

    // Edits as data: diff, then apply to the original.
    let changes = diff(&g, &draft);
    println!("change set:\n{changes}");
    assert_eq!(g.apply(&changes)?, draft);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
