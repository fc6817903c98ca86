//! Compare the closed-form breach probability of layered guardrails with a
//! seeded Monte Carlo run.

use std::error::Error;

use llm_assurance::sim::{analytic_breach_probability, run_simulation};
use llm_assurance::{AttackClass, Layer, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SimConfig::new(2026)
        .with_layer(Layer::InputDetection, [(AttackClass::Jailbreak, 0.5), (AttackClass::GradientBased, 0.9)])
        .with_layer(Layer::OutputDetection, [(AttackClass::Jailbreak, 0.5)])
        .with_traffic(AttackClass::Jailbreak, 100_000)
        .with_traffic(AttackClass::GradientBased, 100_000);
    let outcome = run_simulation(&config)?;
    for (class, c) in &outcome.classes {
        println!(
            "{class}: {} breaches of {} trials, rate {:.4}, analytic {:.4}",
            c.breaches, c.trials, c.breach_rate, c.analytic_breach_probability
        );
        assert_eq!(c.trials, c.breaches + c.total_blocks());
        assert!((c.breach_rate - c.analytic_breach_probability).abs() < 0.01);
    }

    // Adding a layer never raises the breach probability.
    let hardened = config.clone().with_layer(Layer::Downstream, [(AttackClass::Jailbreak, 0.2)]);
    let before = analytic_breach_probability(&config, AttackClass::Jailbreak);
    let after = analytic_breach_probability(&hardened, AttackClass::Jailbreak);
    println!("jailbreak with an extra downstream layer: {before:.3} -> {after:.3}");
    assert!(after <= before);

    assert_eq!(run_simulation(&config)?, outcome);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
