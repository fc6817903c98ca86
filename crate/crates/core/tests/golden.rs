//! Rendered compliance reports compared byte-for-byte with `tests/golden/`.
//! Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

mod common;

use llm_assurance::report::compliance_report;
use llm_assurance::{corpus, evaluate, Ledger};

#[test]
fn meta_loop_reports() {
    let run = common::meta_loop();
    common::golden("chat_assistant.before.txt", &run.before.render()).unwrap();
    common::golden("chat_assistant.after.txt", &run.after.render()).unwrap();
    common::golden("chat_assistant.ledger.jsonl", &run.ledger.to_jsonl()).unwrap();
}

#[test]
fn bundled_cases_with_empty_ledger() {
    let cases = [
        ("code_translation", corpus::code_translation(), corpus::code_translation_registry()),
        ("natural_language", corpus::natural_language(), corpus::natural_language_registry()),
        ("chat_assistant", corpus::chat_assistant(), corpus::chat_assistant_registry()),
    ];
    for (name, graph, registry) in cases {
        let report = compliance_report(&graph, &evaluate(&graph).unwrap(), &registry, &Ledger::new()).unwrap();
        common::golden(&format!("{name}.empty_ledger.txt"), &report.render()).unwrap();
    }
}
