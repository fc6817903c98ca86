//! Bundled cases, registries and a simulation config.
//!
//! The same files live under `examples/` and can be passed to the CLI.

use crate::coverage::Registry;
use crate::dsl::parse;
use crate::model::ArgumentGraph;
use crate::sim::SimConfig;

/// Code translation between programming languages.
pub const CODE_TRANSLATION: &str = include_str!("../examples/code_translation.gsn");
pub const CODE_TRANSLATION_REGISTRY: &str = include_str!("../examples/code_translation.registry.jsonl");

/// Natural-language tasks, including the filter patch cycle.
pub const NATURAL_LANGUAGE: &str = include_str!("../examples/natural_language.gsn");
pub const NATURAL_LANGUAGE_REGISTRY: &str = include_str!("../examples/natural_language.registry.jsonl");

/// A fully supported chat assistant used for the end-to-end loop.
pub const CHAT_ASSISTANT: &str = include_str!("../examples/chat_assistant.gsn");
pub const CHAT_ASSISTANT_REGISTRY: &str = include_str!("../examples/chat_assistant.registry.jsonl");
pub const CHAT_ASSISTANT_SIM: &str = include_str!("../examples/chat_assistant.sim.toml");

/// `(file name, source)` of every bundled case.
pub const CASES: &[(&str, &str)] = &[
    ("code_translation.gsn", CODE_TRANSLATION),
    ("natural_language.gsn", NATURAL_LANGUAGE),
    ("chat_assistant.gsn", CHAT_ASSISTANT),
];

fn case(text: &str) -> ArgumentGraph {
    parse(text).expect("bundled case parses")
}

fn registry(text: &str) -> Registry {
    Registry::from_jsonl(text).expect("bundled registry loads")
}

pub fn code_translation() -> ArgumentGraph {
    case(CODE_TRANSLATION)
}

pub fn code_translation_registry() -> Registry {
    registry(CODE_TRANSLATION_REGISTRY)
}

pub fn natural_language() -> ArgumentGraph {
    case(NATURAL_LANGUAGE)
}

pub fn natural_language_registry() -> Registry {
    registry(NATURAL_LANGUAGE_REGISTRY)
}

pub fn chat_assistant() -> ArgumentGraph {
    case(CHAT_ASSISTANT)
}

pub fn chat_assistant_registry() -> Registry {
    registry(CHAT_ASSISTANT_REGISTRY)
}

pub fn chat_assistant_sim() -> SimConfig {
    SimConfig::from_toml(CHAT_ASSISTANT_SIM).expect("bundled config loads")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, Status};
    use crate::model::has_errors;

    #[test]
    fn bundled_cases_are_valid() {
        for (name, text) in CASES {
            let g = parse(text).unwrap_or_else(|e| panic!("{name}: {e:?}"));
            assert!(!has_errors(&g.validate()), "{name}");
        }
        code_translation_registry();
        natural_language_registry();
        chat_assistant_registry();
        chat_assistant_sim();
    }

    #[test]
    fn chat_assistant_is_supported() {
        let g = chat_assistant();
        assert_eq!(evaluate(&g).unwrap().status("G0"), Some(Status::Supported));
        assert!(crate::coverage::coverage_gaps(&chat_assistant_registry(), &g).is_empty());
    }
}
