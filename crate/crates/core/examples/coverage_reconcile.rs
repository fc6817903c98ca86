//! Guardrail coverage drives machine-owned defeaters: switching off the only
//! guardrail for an attack class opens one, switching it back retires it.

use std::error::Error;

use llm_assurance::coverage::{coverage_gaps, reconcile_defeaters};
use llm_assurance::{corpus, evaluate};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let graph = corpus::code_translation();
    let mut registry = corpus::code_translation_registry();
    println!("gaps with every guardrail active: {}", coverage_gaps(&registry, &graph).len());

    registry.set_active("sqli-detector", false)?;
    for gap in coverage_gaps(&registry, &graph) {
        println!("gap: {gap}");
    }
    let opened = reconcile_defeaters(&registry, &graph);
    print!("{}", opened.changes);
    for id in &opened.deprecation_candidates {
        println!("deprecation candidate: {id}");
    }
    let graph = graph.apply(&opened.changes)?;
    let status = evaluate(&graph)?;
    println!("G1.2 is now {}", status.status("G1.2").unwrap());
    assert!(reconcile_defeaters(&registry, &graph).changes.is_empty());

    registry.set_active("sqli-detector", true)?;
    let retired = reconcile_defeaters(&registry, &graph);
    print!("{}", retired.changes);
    let graph = graph.apply(&retired.changes)?;
    assert!(reconcile_defeaters(&registry, &graph).changes.is_empty());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
