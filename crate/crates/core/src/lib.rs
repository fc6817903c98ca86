//! Assurance cases for adversarial robustness of LLM-based applications.
//!
//! The crate keeps a Goal Structuring Notation (GSN) argument as a typed graph
//! and runs the reasoning-and-reporting loop around it:
//!
//! - [`model`]: nodes, typed edges, structural validation, diff and apply.
//! - [`dsl`]: the `.gsn` text format (parser with positioned diagnostics and
//!   a canonical printer).
//! - [`eval`]: defeasible status propagation, explanations and incremental
//!   re-evaluation.
//! - [`coverage`]: guardrail registry, coverage gaps, auto-generated
//!   defeaters and deprecation candidates.
//! - [`incident`]: append-only incident ledger, classification, incident
//!   driven defeaters and serious-incident reports.
//! - [`sim`]: layered-defense breach model, analytic and Monte Carlo.
//! - [`report`]: Graphviz export and the compliance report.
//! - [`cli`]: the `assure` command-line driver.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

macro_rules! token_enum {
    (
        $(#[$meta:meta])*
        $vis:vis enum $name:ident : $what:literal {
            $( $(#[$vmeta:meta])* $variant:ident => $token:literal ),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        $vis enum $name {
            $( $(#[$vmeta])* $variant ),+
        }

        impl $name {
            /// Every variant, in declaration order.
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Stable lowercase token used in every text format.
            pub fn as_str(self) -> &'static str {
                match self {
                    $( $name::$variant => $token ),+
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::UnknownToken;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $token => Ok($name::$variant), )+
                    _ => Err($crate::UnknownToken { kind: $what, token: s.to_string() }),
                }
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub mod cli;
pub mod corpus;
pub mod coverage;
pub mod dsl;
pub mod eval;
pub mod incident;
pub mod model;
pub mod report;
pub mod sim;

pub use coverage::{GuardrailRecord, Layer, Registry};
pub use dsl::{parse, print};
pub use eval::{evaluate, Status, StatusAssignment};
pub use incident::{Classification, ConsequenceClass, IncidentRecord, Ledger};
pub use model::{ArgumentGraph, AttackClass, Change, ChangeSet, Edge, EdgeKind, Node, NodeId, NodeKind};
pub use sim::{SimConfig, SimOutcome};

/// A token that does not name any variant of a closed enumeration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{token}`")]
pub struct UnknownToken {
    pub kind: &'static str,
    pub token: String,
}
