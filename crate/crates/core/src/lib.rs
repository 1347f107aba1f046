//! Explainable action reasoning over semantic-level video state
//! transitions: a declarative knowledge base of state-transition action
//! rules, a spatio-temporal video graph built from per-frame
//! annotations, sliding-window track refinement, rule-based and learned
//! transition classifiers, and first-order composition of atomic actions
//! into complex activities.

pub mod classify;
pub mod compose;
pub mod eval;
pub mod graph;
pub mod kb;
pub mod reason;
pub mod refine;
pub mod synth;

/// Bundled fixtures: the daily-life knowledge file and the scenario
/// scripts used throughout the test suites and CLI examples.
pub mod fixtures {
    use crate::kb::{load_knowledge_base, KnowledgeBase};

    pub const KB_DAILY_LIFE: &str = include_str!("../fixtures/kb_daily_life.json");
    pub const SCRIPT_MICROWAVE_CLOTH: &str = include_str!("../fixtures/script_microwave_cloth.json");
    pub const SCRIPT_HAVING_MEAL: &str = include_str!("../fixtures/script_having_meal.json");
    pub const SCRIPT_MICROWAVE_BOWL: &str = include_str!("../fixtures/script_microwave_bowl.json");
    pub const RULES_HAVING_MEAL: &str = include_str!("../fixtures/rules_having_meal.json");

    /// The daily-life knowledge base (13 objects, closed/open attribute,
    /// 3 relationship domains, 10 actions).
    pub fn daily_life_kb() -> KnowledgeBase {
        load_knowledge_base(KB_DAILY_LIFE).expect("bundled knowledge file is valid")
    }
}
