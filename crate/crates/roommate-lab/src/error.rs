use crate::model::AgentId;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("agent {agent}: ranking is not a permutation of the ground set")]
    NotAPermutation { agent: AgentId },

    #[error("agent {agent}: ranking is not single-peaked (prefix {prefix:?} is not an interval)")]
    NotSinglePeaked {
        agent: AgentId,
        prefix: Vec<AgentId>,
    },

    #[error("agent {agent}: ranking does not cover the ground set required by the domain")]
    GroundSetMismatch { agent: AgentId },

    #[error("agent {agent} does not rank {partner}")]
    OutOfGroundSet { agent: AgentId, partner: AgentId },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("submatching structure violation: {0}")]
    StructureViolation(String),

    #[error("step {step}: no agent stuck and no framed party (no progress possible)")]
    NoProgress { step: u32 },

    #[error("step {step}: invariant {rule} violated: {detail}")]
    InvariantViolation {
        step: u32,
        rule: InvariantRule,
        detail: String,
    },

    #[error("{what} too large: requested {requested}, limit {limit}")]
    TooLarge {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("proof chain `{chain}` broke at step {step}: {detail}")]
    ChainBroken {
        chain: String,
        step: usize,
        detail: String,
    },

    #[error("search budget exceeded after {elapsed_secs:.1}s ({nodes} nodes, {propagations} propagations)")]
    BudgetExceeded {
        elapsed_secs: f64,
        nodes: u64,
        propagations: u64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Which of the per-step trace invariants failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InvariantRule {
    /// Step made progress (matched or reassigned someone).
    Progress,
    /// Current submatching decomposes into singles and parties.
    SinglesAndParties,
    /// Reassigned agents strictly improve, moving toward their peak.
    Improvement,
    /// Party members are never mobile away from the party.
    PartyMobility,
    /// Both frames of a reassigned party were singles.
    FramesAreSingles,
    /// Recorded step data is inconsistent with the replayed state.
    TraceConsistency,
}

impl std::fmt::Display for InvariantRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InvariantRule::Progress => "progress",
            InvariantRule::SinglesAndParties => "singles-and-parties",
            InvariantRule::Improvement => "improvement",
            InvariantRule::PartyMobility => "party-mobility",
            InvariantRule::FramesAreSingles => "frames-are-singles",
            InvariantRule::TraceConsistency => "trace-consistency",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
