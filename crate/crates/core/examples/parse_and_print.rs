//! Read a `.gsn` case, print it canonically, and show positioned parse
//! errors.

use std::error::Error;

use llm_assurance::corpus;
use llm_assurance::{parse, print};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let graph = parse(corpus::CODE_TRANSLATION).map_err(|e| format!("{e:?}"))?;
    let canonical = print(&graph)?;
    print!("{canonical}");

    // Canonical text is a fixed point.
    assert_eq!(parse(&canonical).map_err(|e| format!("{e:?}"))?, graph);
    assert_eq!(print(&parse(&canonical).map_err(|e| format!("{e:?}"))?)?, canonical);

    let broken = "case \"demo\" {\n  goal G0 \"top\" scope: [telepathy]\n  solution Sn1 \"tests\" supports G9\n}\n";
    let errors = parse(broken).unwrap_err();
    for e in &errors {
        println!("demo.gsn:{e}");
    }
    assert_eq!(errors.len(), 2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
