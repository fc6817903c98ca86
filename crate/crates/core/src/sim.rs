//! Layered-defense breach model.
//!
//! Each runtime layer (L1 to L5) blocks an attempt of a given attack class
//! independently with a configured probability; an attempt is a breach when
//! every layer lets it through. [`analytic_breach_probability`] gives the
//! closed form, [`run_simulation`] draws seeded Monte Carlo traffic.
//!
//! # Random source
//!
//! Draws come from SplitMix64. For class index `c` (position in
//! [`AttackClass::ALL`]) and trial `t`:
//!
//! ```text
//! class_base = splitmix64(seed + (c + 1) * CLASS_STRIDE).next()
//! trial_rng  = splitmix64(class_base + t * DRAWS_PER_TRIAL * GOLDEN_GAMMA)
//! ```
//!
//! (wrapping arithmetic). Every trial consumes exactly [`DRAWS_PER_TRIAL`]
//! values: one slot per runtime layer in layer order (unused slots are still
//! drawn), then the unintended draw, then the consequence draw. Since
//! SplitMix64 advances its state by `GOLDEN_GAMMA`, trials use disjoint
//! stretches of one sequence and results depend only on
//! `(seed, class, trial)`. A draw `x` becomes the uniform `(x >> 11) * 2^-53`
//! and an event with probability `p` happens when that value is below `p`.

use std::collections::BTreeMap;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::coverage::Layer;
use crate::incident::{ConsequenceClass, IncidentError, IncidentEvent, Ledger};
use crate::model::AttackClass;

pub const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
pub const CLASS_STRIDE: u64 = 0xd1b5_4a32_d192_ed03;
/// Five layer slots, the unintended draw and the consequence draw.
pub const DRAWS_PER_TRIAL: u64 = 7;

const DEFAULT_START: &str = "2026-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn loose_layer<'de, D: Deserializer<'de>>(d: D) -> Result<Layer, D::Error> {
    let s = String::deserialize(d)?;
    Layer::parse_loose(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown layer `{s}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    #[serde(deserialize_with = "loose_layer")]
    pub layer: Layer,
    /// Block probability per attack class; absent classes pass.
    #[serde(default)]
    pub block: BTreeMap<AttackClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Runtime layers in pipeline order, each at most once.
    #[serde(default)]
    pub layers: Vec<LayerConfig>,
    /// Attempts per attack class.
    #[serde(default)]
    pub traffic: BTreeMap<AttackClass, u64>,
    #[serde(default = "one")]
    pub unintended_given_breach: f64,
    #[serde(default = "no_consequence")]
    pub consequence_distribution: BTreeMap<ConsequenceClass, f64>,
    /// Consecutive attempts grouped under one session token.
    #[serde(default = "one_turn")]
    pub session_turns: u64,
    /// Timestamp of trial 0; trial `t` is stamped `t` seconds later.
    #[serde(default = "default_start")]
    pub start: String,
}

fn one() -> f64 {
    1.0
}

fn one_turn() -> u64 {
    1
}

fn no_consequence() -> BTreeMap<ConsequenceClass, f64> {
    BTreeMap::from([(ConsequenceClass::None, 1.0)])
}

fn default_start() -> String {
    DEFAULT_START.to_string()
}

fn check_probability(what: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::InvalidConfig(format!("{what} = {p} is not a probability")))
    }
}

impl SimConfig {
    /// No layers, no traffic, every breach unintended without consequence.
    pub fn new(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            layers: Vec::new(),
            traffic: BTreeMap::new(),
            unintended_given_breach: 1.0,
            consequence_distribution: no_consequence(),
            session_turns: 1,
            start: default_start(),
        }
    }

    pub fn with_layer(mut self, layer: Layer, block: impl IntoIterator<Item = (AttackClass, f64)>) -> SimConfig {
        self.layers.push(LayerConfig {
            layer,
            block: block.into_iter().collect(),
        });
        self
    }

    pub fn with_traffic(mut self, class: AttackClass, trials: u64) -> SimConfig {
        self.traffic.insert(class, trials);
        self
    }

    pub fn from_toml(text: &str) -> Result<SimConfig, SimError> {
        let config: SimConfig = toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut previous: Option<Layer> = None;
        for lc in &self.layers {
            if !lc.layer.is_runtime() {
                return Err(SimError::InvalidConfig(format!("{} is not a runtime layer", lc.layer)));
            }
            if previous.is_some_and(|p| p >= lc.layer) {
                return Err(SimError::InvalidConfig(format!(
                    "layer {} out of pipeline order or repeated",
                    lc.layer
                )));
            }
            previous = Some(lc.layer);
            for (class, p) in &lc.block {
                check_probability(&format!("{} block for {class}", lc.layer.short()), *p)?;
            }
        }
        check_probability("unintended_given_breach", self.unintended_given_breach)?;
        let mut total = 0.0;
        for (class, p) in &self.consequence_distribution {
            check_probability(&format!("consequence {class}"), *p)?;
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(format!(
                "consequence distribution sums to {total}, not 1"
            )));
        }
        if self.session_turns == 0 {
            return Err(SimError::InvalidConfig("session_turns must be at least 1".into()));
        }
        if chrono::DateTime::parse_from_rfc3339(&self.start).is_err() {
            return Err(SimError::InvalidConfig(format!("start `{}` is not RFC 3339", self.start)));
        }
        Ok(())
    }

    fn block(&self, layer: &LayerConfig, class: AttackClass) -> f64 {
        layer.block.get(&class).copied().unwrap_or(0.0)
    }
}

/// Probability that an attempt passes every configured layer.
pub fn analytic_breach_probability(config: &SimConfig, class: AttackClass) -> f64 {
    config.layers.iter().map(|l| 1.0 - config.block(l, class)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub trials: u64,
    pub breaches: u64,
    /// Blocks per configured layer.
    pub blocks: BTreeMap<Layer, u64>,
    pub breach_rate: f64,
    pub analytic_breach_probability: f64,
}

impl ClassOutcome {
    pub fn total_blocks(&self) -> u64 {
        self.blocks.values().sum()
    }

    /// Standard deviation of the empirical breach rate under the analytic
    /// probability.
    pub fn sigma(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.analytic_breach_probability;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub seed: u64,
    pub classes: BTreeMap<AttackClass, ClassOutcome>,
    /// One event per delivered attempt, by class then trial.
    pub incidents: Vec<IncidentEvent>,
}

impl SimOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes") + "\n"
    }

    /// Appends every generated event to `ledger`, returning the new ids.
    pub fn ingest(&self, ledger: &mut Ledger) -> Result<Vec<u64>, IncidentError> {
        self.incidents.iter().map(|e| ledger.record_incident(e.clone())).collect()
    }
}

fn uniform(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn class_base(seed: u64, class: AttackClass) -> u64 {
    let index = AttackClass::ALL.iter().position(|c| *c == class).expect("class listed") as u64;
    SplitMix64::seed_from_u64(seed.wrapping_add((index + 1).wrapping_mul(CLASS_STRIDE))).next_u64()
}

/// The seven draws of one trial.
pub fn trial_draws(seed: u64, class: AttackClass, trial: u64) -> [u64; DRAWS_PER_TRIAL as usize] {
    let state = class_base(seed, class).wrapping_add(trial.wrapping_mul(DRAWS_PER_TRIAL).wrapping_mul(GOLDEN_GAMMA));
    let mut rng = SplitMix64::seed_from_u64(state);
    std::array::from_fn(|_| rng.next_u64())
}

enum Trial {
    Blocked(usize),
    Delivered { unintended: bool, consequence: ConsequenceClass },
}

fn run_trial(config: &SimConfig, class: AttackClass, trial: u64, consequences: &[(ConsequenceClass, f64)]) -> Trial {
    let draws = trial_draws(config.seed, class, trial);
    for (position, lc) in config.layers.iter().enumerate() {
        let slot = usize::from(lc.layer.number() - 1);
        if uniform(draws[slot]) < config.block(lc, class) {
            return Trial::Blocked(position);
        }
    }
    let unintended = uniform(draws[5]) < config.unintended_given_breach;
    let consequence = if unintended {
        let u = uniform(draws[6]);
        let mut acc = 0.0;
        consequences
            .iter()
            .find(|(_, p)| {
                acc += p;
                u < acc
            })
            .or(consequences.last())
            .map_or(ConsequenceClass::None, |(c, _)| *c)
    } else {
        ConsequenceClass::None
    };
    Trial::Delivered { unintended, consequence }
}

fn timestamp(start: &chrono::DateTime<chrono::FixedOffset>, trial: u64) -> String {
    let at = *start + chrono::Duration::seconds(trial as i64);
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn run_simulation(config: &SimConfig) -> Result<SimOutcome, SimError> {
    config.validate()?;
    let start = chrono::DateTime::parse_from_rfc3339(&config.start).expect("validated");
    let consequences: Vec<(ConsequenceClass, f64)> = config
        .consequence_distribution
        .iter()
        .filter(|(_, p)| **p > 0.0)
        .map(|(c, p)| (*c, *p))
        .collect();

    let mut classes = BTreeMap::new();
    let mut incidents = Vec::new();
    for (&class, &trials) in &config.traffic {
        let mut blocks = vec![0u64; config.layers.len()];
        let mut breaches = 0;
        for trial in 0..trials {
            match run_trial(config, class, trial, &consequences) {
                Trial::Blocked(position) => blocks[position] += 1,
                Trial::Delivered { unintended, consequence } => {
                    breaches += 1;
                    let session = (config.session_turns > 1)
                        .then(|| format!("sim-{}-{class}-{}", config.seed, trial / config.session_turns));
                    incidents.push(IncidentEvent {
                        timestamp: timestamp(&start, trial),
                        attack_class: class,
                        blocked_at: None,
                        unintended,
                        consequence,
                        session,
                        notes: format!("simulated trial {trial}"),
                    });
                }
            }
        }
        let outcome = ClassOutcome {
            trials,
            breaches,
            blocks: config.layers.iter().map(|l| l.layer).zip(blocks).collect(),
            breach_rate: if trials == 0 { 0.0 } else { breaches as f64 / trials as f64 },
            analytic_breach_probability: analytic_breach_probability(config, class),
        };
        classes.insert(class, outcome);
    }
    Ok(SimOutcome {
        seed: config.seed,
        classes,
        incidents,
    })
}
