//! The mechanisms exposed by the CLI, as [`Mechanism`] implementations, and
//! two small alternatives to dating: one for three agents that hands the
//! middle agent's favored neighbor its peak, and one for four agents who
//! must all be paired, anchored on the outermost pairing.

use crate::dating::run_dating_matching;
use crate::error::{Error, Result};
use crate::marriage::{d_prime, stable_roommate_via_embedding, Side};
use crate::model::{AgentId, Domain, Matching, Profile};
use crate::oracles::{self, Mechanism};

/// The dating mechanism.
pub struct Dating;

impl Mechanism for Dating {
    fn name(&self) -> &str {
        "dating"
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        run_dating_matching(profile)
    }
}

/// Stable matching via the marriage embedding and deferred acceptance.
pub struct DaEmbed(pub Side);

impl Mechanism for DaEmbed {
    fn name(&self) -> &str {
        match self.0 {
            Side::Women => "da_embed_women",
            Side::Men => "da_embed_men",
        }
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        stable_roommate_via_embedding(profile, self.0)
    }
}

/// Dating adapted to single-peaked marriage markets via the two pools.
pub struct DPrime;

impl Mechanism for DPrime {
    fn name(&self) -> &str {
        "d_prime"
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        d_prime(profile)
    }
}

/// Alternative three-agent mechanism: among the individually rational and
/// efficient matchings, when there is a choice, give agent 2's preferred
/// neighbor its top-ranked partner.
pub struct DTilde;

impl Mechanism for DTilde {
    fn name(&self) -> &str {
        "d_tilde"
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        d_tilde(profile)
    }
}

/// Must-pair four-agent mechanism anchored on the outermost pairing.
pub struct DPair;

impl Mechanism for DPair {
    fn name(&self) -> &str {
        "d_pair"
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        d_pair(profile)
    }
}

/// All individually rational and efficient matchings at a profile.
pub fn ir_efficient_matchings(profile: &Profile) -> Result<Vec<Matching>> {
    let all = oracles::feasible_matchings(profile)?;
    let mut out = Vec::new();
    for m in &all {
        if !oracles::is_individually_rational(m, profile) {
            continue;
        }
        if all.iter().any(|o| oracles::pareto_dominates(o, m, profile)) {
            continue;
        }
        out.push(m.clone());
    }
    Ok(out)
}

/// If only one matching is individually rational and efficient, pick it.
/// Otherwise agent 2 must strictly prefer a neighbor to staying single;
/// that neighbor is unique under single-peakedness on three points and gets
/// matched with its own top choice.
pub fn d_tilde(profile: &Profile) -> Result<Matching> {
    if profile.domain() != Domain::SpRoommate || profile.n() != 3 {
        return Err(Error::Domain(
            "d_tilde is defined for single-peaked roommate profiles with exactly 3 agents".into(),
        ));
    }
    let candidates = ir_efficient_matchings(profile)?;
    if candidates.len() == 1 {
        return Ok(candidates.into_iter().next().unwrap());
    }
    let two = AgentId(2);
    let favored = profile.pref(two).peak();
    if favored == two {
        return Err(Error::StructureViolation(format!(
            "multiple candidate matchings {candidates:?} although agent 2 tops itself"
        )));
    }
    let top_of_favored = profile.pref(favored).peak();
    let chosen: Vec<Matching> = candidates
        .into_iter()
        .filter(|m| m.partner_of(favored) == Some(top_of_favored))
        .collect();
    match <[Matching; 1]>::try_from(chosen) {
        Ok([m]) => Ok(m),
        Err(chosen) => Err(Error::StructureViolation(format!(
            "expected exactly one candidate giving {favored} its peak, found {}",
            chosen.len()
        ))),
    }
}

fn pair_matching(pairs: [(u32, u32); 2]) -> Matching {
    Matching::new(
        pairs
            .iter()
            .map(|&(a, b)| (AgentId(a), AgentId(b)))
            .collect(),
        Vec::new(),
    )
    .expect("fixed pair matchings are valid")
}

/// The three perfect matchings on four agents.
pub fn pair_matchings() -> [Matching; 3] {
    [
        pair_matching([(1, 2), (3, 4)]),
        pair_matching([(1, 3), (2, 4)]),
        pair_matching([(1, 4), (2, 3)]),
    ]
}

/// Keeps the outermost pairing {(1,4),(2,3)} whenever it is efficient;
/// otherwise exactly one of the other two perfect matchings dominates it
/// and is returned. Single-peakedness of agent 2 rules out both dominating
/// at once.
pub fn d_pair(profile: &Profile) -> Result<Matching> {
    if profile.domain() != Domain::SpPair || profile.n() != 4 {
        return Err(Error::Domain(
            "d_pair is defined for single-peaked must-pair profiles with exactly 4 agents".into(),
        ));
    }
    let [mu1, mu2, mu3] = pair_matchings();
    let d1 = oracles::pareto_dominates(&mu1, &mu3, profile);
    let d2 = oracles::pareto_dominates(&mu2, &mu3, profile);
    match (d1, d2) {
        (false, false) => Ok(mu3),
        (true, false) => Ok(mu1),
        (false, true) => Ok(mu2),
        (true, true) => Err(Error::StructureViolation(
            "unreachable: both perfect matchings dominate the outermost pairing".into(),
        )),
    }
}
