//! Record events, classify them, let incidents challenge scoped claims and
//! draft the report for a serious one.

use std::error::Error;

use llm_assurance::incident::{generate_serious_report, trigger_defeaters, IncidentEvent};
use llm_assurance::{corpus, evaluate, AttackClass, ConsequenceClass, Layer, Ledger};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut ledger = Ledger::new();
    let events = [
        IncidentEvent::blocked("2026-04-01T10:00:00Z", AttackClass::Jailbreak, Layer::InputDetection),
        IncidentEvent::blocked("2026-04-01T10:05:00Z", AttackClass::ContextSwitching, Layer::InputDetection)
            .intended()
            .with_notes("legitimate prompt rejected"),
        IncidentEvent::delivered("2026-04-02T08:30:00Z", AttackClass::Jailbreak)
            .with_consequence(ConsequenceClass::IgnoredOrPrevented),
        IncidentEvent::delivered("2026-04-03T14:12:00Z", AttackClass::Jailbreak)
            .with_consequence(ConsequenceClass::FundamentalRightsInfringement)
            .with_notes("instructions for targeted harassment reached a user"),
    ];
    for event in events {
        let id = ledger.record_incident(event)?;
        println!("#{id}: {}", ledger.get(id).unwrap().classification());
    }

    let graph = corpus::natural_language();
    let changes = trigger_defeaters(&ledger, &graph);
    print!("{changes}");
    let graph = graph.apply(&changes)?;
    assert!(trigger_defeaters(&ledger, &graph).is_empty());

    let assignment = evaluate(&graph)?;
    let report = generate_serious_report(&ledger, 4, Some((&graph, &assignment)))?;
    print!("{}", report.render());
    assert!(generate_serious_report(&ledger, 3, None).is_err());
    ledger.record_report_filed(4, "2026-04-04T09:00:00Z")?;
    print!("{}", ledger.to_jsonl());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
