//! Matching mechanisms for roommate problems on the line, where an agent's
//! utility falls off with distance from an ideal partner, plus the
//! brute-force verification machinery to certify their properties at desk
//! scale.
//!
//! The crate provides:
//! - validated preference/profile/matching types and deterministic
//!   enumerators ([`model`]);
//! - the dating mechanism with full step tracing and a trace invariant
//!   checker ([`dating`]);
//! - the direction-as-gender marriage embedding, deferred acceptance, and
//!   the split-pool marriage adapter ([`marriage`]);
//! - ground-truth verifiers for individual rationality, stability,
//!   efficiency, strategyproofness and non-dictatorship ([`oracles`]);
//! - two small alternative mechanisms and the named test fixtures
//!   ([`mechanisms`], [`fixtures`]);
//! - a constraint search over entire mechanism tables on three-agent
//!   domains with replayable forced-step arguments ([`search`]);
//! - parallel sweep drivers used by the CLI ([`sweep`]).

pub mod dating;
pub mod error;
pub mod fixtures;
pub mod marriage;
pub mod mechanisms;
pub mod model;
pub mod oracles;
pub mod search;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{AgentId, Domain, Gender, Matching, Preference, Profile, RawProfile};
