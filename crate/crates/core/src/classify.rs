//! The trichotomy decision.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attack::{attack_graph, CycleStatus, Strength};
use crate::error::Result;
use crate::model::Query;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum ComplexityClass {
    #[serde(rename = "FO")]
    Fo,
    #[serde(rename = "PTIME")]
    PtimeNotFo,
    #[serde(rename = "CONP-COMPLETE")]
    ConpComplete,
}

impl ComplexityClass {
    pub fn name(self) -> &'static str {
        match self {
            ComplexityClass::Fo => "FO",
            ComplexityClass::PtimeNotFo => "PTIME",
            ComplexityClass::ConpComplete => "CONP-COMPLETE",
        }
    }

    /// Human-readable note printed next to the class name.
    pub fn note(self) -> &'static str {
        match self {
            ComplexityClass::Fo => "first-order rewritable",
            ComplexityClass::PtimeNotFo => "not FO, L-hard",
            ComplexityClass::ConpComplete => "strong attack cycle",
        }
    }
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a query received its class. Atoms are named by relation.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    TopologicalOrder { order: Vec<String> },
    WeakCycle { first: String, second: String },
    StrongCycle { first: String, second: String, strong: Vec<(String, String)> },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub class: ComplexityClass,
    pub evidence: Evidence,
}

impl Classification {
    /// Replays the evidence against the attack graph of `q`.
    pub fn validate(&self, q: &Query) -> bool {
        let g = attack_graph(q);
        let pos = |name: &str| q.position(name);
        let pair = |a: &str, b: &str| match (pos(a), pos(b)) {
            (Some(i), Some(j)) => Some((g.edge(i, j)?, g.edge(j, i)?)),
            _ => None,
        };
        match (&self.class, &self.evidence) {
            (ComplexityClass::Fo, Evidence::TopologicalOrder { order }) => {
                let idx: Option<Vec<usize>> = order.iter().map(|n| pos(n)).collect();
                let Some(idx) = idx else { return false };
                if idx.len() != q.len() {
                    return false;
                }
                g.edges().iter().all(|e| {
                    let a = idx.iter().position(|&i| i == e.from);
                    let b = idx.iter().position(|&i| i == e.to);
                    matches!((a, b), (Some(a), Some(b)) if a < b)
                })
            }
            (ComplexityClass::PtimeNotFo, Evidence::WeakCycle { first, second }) => {
                pair(first, second).is_some() && !g.has_strong_cycle()
            }
            (ComplexityClass::ConpComplete, Evidence::StrongCycle { first, second, strong }) => {
                match pair(first, second) {
                    Some((a, b)) => {
                        let labelled: Vec<(String, String)> = [a, b]
                            .into_iter()
                            .filter(|e| e.strength == Strength::Strong)
                            .map(|e| {
                                (
                                    q.atoms()[e.from].relation().to_string(),
                                    q.atoms()[e.to].relation().to_string(),
                                )
                            })
                            .collect();
                        !labelled.is_empty() && &labelled == strong
                    }
                    None => false,
                }
            }
            _ => false,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.evidence {
            Evidence::TopologicalOrder { order } => {
                write!(f, "{} (topological order: {})", self.class, order.join(", "))
            }
            Evidence::WeakCycle { first, second } => write!(
                f,
                "{} ({}; weak cycle {first} <-> {second})",
                self.class,
                self.class.note()
            ),
            Evidence::StrongCycle { first, second, strong } => {
                let s: Vec<String> = strong.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
                write!(
                    f,
                    "{} (strong cycle {first} <-> {second}; strong: {})",
                    self.class,
                    s.join(", ")
                )
            }
        }
    }
}

pub fn classify(q: &Query) -> Classification {
    let g = attack_graph(q);
    let name = |i: usize| q.atoms()[i].relation().to_string();
    match g.cycle_status() {
        CycleStatus::Acyclic => Classification {
            class: ComplexityClass::Fo,
            evidence: Evidence::TopologicalOrder {
                order: g
                    .topological_order()
                    .expect("acyclic graph")
                    .into_iter()
                    .map(name)
                    .collect(),
            },
        },
        CycleStatus::WeakCycle(i, j) => Classification {
            class: ComplexityClass::PtimeNotFo,
            evidence: Evidence::WeakCycle {
                first: name(i),
                second: name(j),
            },
        },
        CycleStatus::StrongCycle(i, j) => {
            let strong = [(i, j), (j, i)]
                .into_iter()
                .filter(|&(a, b)| g.edge(a, b).map(|e| e.strength) == Some(Strength::Strong))
                .map(|(a, b)| (name(a), name(b)))
                .collect();
            Classification {
                class: ComplexityClass::ConpComplete,
                evidence: Evidence::StrongCycle {
                    first: name(i),
                    second: name(j),
                    strong,
                },
            }
        }
    }
}

/// Classifies query text; self-joins surface as [`crate::CqaError::SelfJoin`].
pub fn classify_text(text: &str) -> Result<Classification> {
    let q = crate::parse::parse_query(text)?;
    Ok(classify(&q))
}

/// The class name with its note, as printed by the command line.
pub fn describe(c: ComplexityClass) -> String {
    match c {
        ComplexityClass::PtimeNotFo => format!("{} ({})", c.name(), c.note()),
        _ => c.name().to_string(),
    }
}
