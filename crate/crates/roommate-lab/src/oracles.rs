//! Ground-truth verifiers. Everything here is brute force on purpose: these
//! functions are the oracles the mechanisms are certified against, so they
//! stay close to the definitions and avoid sharing code with the engines
//! they check.

use crate::error::{Error, Result};
use crate::model::{
    all_rankings_over, enumerate_matchings, single_peaked_rankings_over, AgentId, Domain, Gender,
    Matching, Profile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest agent count for which full matching enumeration is allowed.
pub const ENUMERATION_LIMIT: u32 = 12;

/// A mechanism under test: a pure function from profiles to matchings.
pub trait Mechanism: Sync {
    fn name(&self) -> &str;
    fn apply(&self, profile: &Profile) -> Result<Matching>;
}

impl<F> Mechanism for (&str, F)
where
    F: Fn(&Profile) -> Result<Matching> + Sync,
{
    fn name(&self) -> &str {
        self.0
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        (self.1)(profile)
    }
}

/// True iff no agent is matched below itself in its own ranking. Partners
/// outside an agent's ground set count as worse than being single.
pub fn is_individually_rational(mu: &Matching, profile: &Profile) -> bool {
    for a in profile.agents() {
        let Some(p) = mu.partner_of(a) else {
            return false;
        };
        if p == a {
            continue;
        }
        let pref = profile.pref(a);
        match (pref.rank(p), pref.rank(a)) {
            (Some(rp), Some(ra)) => {
                if rp > ra {
                    return false;
                }
            }
            (Some(_), None) => {} // no self option (must-pair): any ranked partner is fine
            (None, _) => return false,
        }
    }
    true
}

/// All blocking coalitions of size one or two. Singleton blocks are
/// reported as (i,i). Pairs require mutual rankability, so same-gender
/// pairs never block a marriage profile.
pub fn blocking_pairs(mu: &Matching, profile: &Profile) -> Vec<(AgentId, AgentId)> {
    let mut blocks = Vec::new();
    let agents: Vec<AgentId> = profile.agents().collect();
    for &i in &agents {
        let pref = profile.pref(i);
        let current = mu.partner_of(i);
        // singleton block: i prefers being single to its partner
        if let (Some(p), Some(ra)) = (current, pref.rank(i)) {
            let rp = pref.rank_raw(p);
            if ra < rp {
                blocks.push((i, i));
            }
        }
    }
    for &i in &agents {
        for &j in &agents {
            if j <= i {
                continue;
            }
            let pi = profile.pref(i);
            let pj = profile.pref(j);
            let (Some(rij), Some(rji)) = (pi.rank(j), pj.rank(i)) else {
                continue;
            };
            let (Some(mi), Some(mj)) = (mu.partner_of(i), mu.partner_of(j)) else {
                continue;
            };
            if rij < pi.rank_raw(mi) && rji < pj.rank_raw(mj) {
                blocks.push((i, j));
            }
        }
    }
    blocks.sort();
    blocks
}

/// Stable = individually rational and free of blocking pairs.
pub fn is_stable(mu: &Matching, profile: &Profile) -> bool {
    is_individually_rational(mu, profile) && blocking_pairs(mu, profile).is_empty()
}

/// True iff `mu2` makes every agent weakly better off than `mu1`. With
/// strict rankings the two being different already forces a strict gain for
/// someone, so no separate strictness check is needed.
pub fn pareto_dominates(mu2: &Matching, mu1: &Matching, profile: &Profile) -> bool {
    if mu2 == mu1 {
        return false;
    }
    for a in profile.agents() {
        let (Some(p2), Some(p1)) = (mu2.partner_of(a), mu1.partner_of(a)) else {
            return false;
        };
        if p2 == p1 {
            continue;
        }
        let pref = profile.pref(a);
        let (r2, r1) = (pref.rank_raw(p2), pref.rank_raw(p1));
        if r2 >= r1 {
            return false;
        }
    }
    true
}

/// All matchings that are feasible deviations for the profile's domain:
/// every involution for roommate domains, cross-gender-only involutions for
/// marriage, perfect matchings for the must-pair domain.
pub fn feasible_matchings(profile: &Profile) -> Result<Vec<Matching>> {
    let n = profile.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            what: "matching enumeration",
            requested: n as usize,
            limit: ENUMERATION_LIMIT as usize,
        });
    }
    let carrier: Vec<AgentId> = profile.agents().collect();
    let all = enumerate_matchings(&carrier);
    let keep = |m: &Matching| match profile.domain() {
        Domain::SpRoommate | Domain::GrandRoommate => true,
        Domain::SpPair => m.singles().is_empty(),
        Domain::Marriage => m
            .pairs()
            .iter()
            .all(|&(a, b)| profile.gender_of(a) != profile.gender_of(b)),
    };
    Ok(all.into_iter().filter(keep).collect())
}

/// True iff `m` respects the domain's feasibility constraints (carrier,
/// gender, no singles for must-pair).
pub fn is_feasible(m: &Matching, profile: &Profile) -> bool {
    if !m.is_full(profile.n()) {
        return false;
    }
    match profile.domain() {
        Domain::SpRoommate | Domain::GrandRoommate => true,
        Domain::SpPair => m.singles().is_empty(),
        Domain::Marriage => m
            .pairs()
            .iter()
            .all(|&(a, b)| profile.gender_of(a) != profile.gender_of(b)),
    }
}

/// True iff no feasible matching Pareto-dominates `mu`.
pub fn is_efficient(mu: &Matching, profile: &Profile) -> Result<bool> {
    let candidates = feasible_matchings(profile)?;
    for other in &candidates {
        if pareto_dominates(other, mu, profile) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Independent second route for the efficiency verdict: scans the feasible
/// set in reverse order and decides dominance by counting strict gains and
/// losses per agent rather than short-circuiting.
pub fn is_efficient_independent(mu: &Matching, profile: &Profile) -> Result<bool> {
    let candidates = feasible_matchings(profile)?;
    for other in candidates.iter().rev() {
        if other == mu {
            continue;
        }
        let mut gains = 0u32;
        let mut losses = 0u32;
        for a in profile.agents() {
            let pref = profile.pref(a);
            let r2 = pref.rank_raw(other.partner_of(a).unwrap());
            let r1 = pref.rank_raw(mu.partner_of(a).unwrap());
            if r2 < r1 {
                gains += 1;
            } else if r2 > r1 {
                losses += 1;
            }
        }
        if losses == 0 && gains > 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A swept preference domain: agent count, domain tag, and the per-agent
/// menu of admissible rankings in a fixed deterministic order.
#[derive(Clone, Debug)]
pub struct SweepDomain {
    domain: Domain,
    n: u32,
    genders: Option<Vec<Gender>>,
    menus: Vec<Vec<Vec<AgentId>>>,
}

impl SweepDomain {
    pub fn sp_roommate(n: u32) -> SweepDomain {
        let menu = single_peaked_rankings_over(&(1..=n).map(AgentId).collect::<Vec<_>>());
        SweepDomain {
            domain: Domain::SpRoommate,
            n,
            genders: None,
            menus: vec![menu; n as usize],
        }
    }

    pub fn grand_roommate(n: u32) -> SweepDomain {
        let menu = all_rankings_over(&(1..=n).map(AgentId).collect::<Vec<_>>());
        SweepDomain {
            domain: Domain::GrandRoommate,
            n,
            genders: None,
            menus: vec![menu; n as usize],
        }
    }

    pub fn sp_pair(n: u32) -> SweepDomain {
        let menus = (1..=n)
            .map(|i| {
                let ground: Vec<AgentId> = (1..=n).filter(|&a| a != i).map(AgentId).collect();
                single_peaked_rankings_over(&ground)
            })
            .collect();
        SweepDomain {
            domain: Domain::SpPair,
            n,
            genders: None,
            menus,
        }
    }

    /// Marriage markets whose preferences are single-peaked on the agent
    /// line (restricted to each agent's ground set).
    pub fn sp_marriage(genders: Vec<Gender>) -> SweepDomain {
        let n = genders.len() as u32;
        let menus = (1..=n)
            .map(|i| {
                let own = genders[(i - 1) as usize];
                let ground: Vec<AgentId> = (1..=n)
                    .filter(|&a| a == i || genders[(a - 1) as usize] != own)
                    .map(AgentId)
                    .collect();
                single_peaked_rankings_over(&ground)
            })
            .collect();
        SweepDomain {
            domain: Domain::Marriage,
            n,
            genders: Some(genders),
            menus,
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn describe(&self) -> String {
        format!("{} n={}", self.domain.as_str(), self.n)
    }

    /// Admissible rankings for one agent.
    pub fn menu(&self, agent: AgentId) -> &[Vec<AgentId>] {
        &self.menus[agent.idx()]
    }

    /// Total number of profiles in the domain.
    pub fn profile_count(&self) -> u64 {
        self.menus.iter().map(|m| m.len() as u64).product()
    }

    /// Mixed-radix decode of a profile index (agent 1 most significant).
    pub fn indices_of(&self, mut profile_index: u64) -> Vec<usize> {
        let mut idx = vec![0usize; self.n as usize];
        for i in (0..self.n as usize).rev() {
            let base = self.menus[i].len() as u64;
            idx[i] = (profile_index % base) as usize;
            profile_index /= base;
        }
        idx
    }

    pub fn index_of(&self, indices: &[usize]) -> u64 {
        let mut out = 0u64;
        for (i, &k) in indices.iter().enumerate() {
            out = out * self.menus[i].len() as u64 + k as u64;
        }
        out
    }

    /// Builds the profile for a menu-index vector. Menus are pre-validated,
    /// so this cannot fail.
    pub fn profile_at(&self, indices: &[usize]) -> Profile {
        let rankings: Vec<Vec<u32>> = indices
            .iter()
            .enumerate()
            .map(|(i, &k)| self.menus[i][k].iter().map(|a| a.0).collect())
            .collect();
        let raw = crate::model::RawProfile {
            n: self.n,
            domain: self.domain,
            genders: self.genders.clone(),
            prefs: rankings,
        };
        crate::model::validate_profile(&raw).expect("sweep menus are pre-validated")
    }

    pub fn profile_by_index(&self, profile_index: u64) -> Profile {
        self.profile_at(&self.indices_of(profile_index))
    }

    /// A domain with hand-picked menus, e.g. a restricted orbit of profiles.
    /// Menus must be sorted and pre-validated for the domain tag.
    pub fn custom(
        domain: Domain,
        genders: Option<Vec<Gender>>,
        menus: Vec<Vec<Vec<AgentId>>>,
    ) -> SweepDomain {
        let n = menus.len() as u32;
        SweepDomain {
            domain,
            n,
            genders,
            menus,
        }
    }

    /// Position of a ranking in an agent's menu, if present.
    pub fn menu_index_of(&self, agent: AgentId, ranking: &[AgentId]) -> Option<usize> {
        self.menus[agent.idx()]
            .binary_search_by(|m| m.as_slice().cmp(ranking))
            .ok()
    }

    /// Profile index of a full profile, if every ranking is in its menu.
    pub fn profile_index_of(&self, profile: &Profile) -> Option<u64> {
        let mut indices = Vec::with_capacity(self.n as usize);
        for a in profile.agents() {
            indices.push(self.menu_index_of(a, profile.pref(a).ranking())?);
        }
        Some(self.index_of(&indices))
    }
}

/// How profiles are drawn from the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Exhaustive,
    Sample { seed: u64, count: u64 },
}

/// Which rankings an agent may deviate to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeviationSet {
    /// Deviations drawn from the declared (possibly restricted) domain.
    Declared,
    /// Any strict linear order over the agent's ground set.
    AllOrders,
}

/// Property names used in verification reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Strategyproofness,
    IndividualRationality,
    Efficiency,
    Stability,
    NonDictatorship,
    TraceInvariants,
    EmbeddingEquivalence,
}

/// Machine-readable witness for a failed property.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Counterexample {
    Manipulation {
        profile_index: Option<u64>,
        profile: crate::model::RawProfile,
        agent: AgentId,
        deviation: Vec<AgentId>,
        truthful_outcome: Matching,
        deviated_outcome: Matching,
    },
    BadOutcome {
        profile_index: Option<u64>,
        profile: crate::model::RawProfile,
        outcome: Matching,
        dominator: Option<Matching>,
        blocking: Vec<(AgentId, AgentId)>,
    },
    Dictator {
        agent: AgentId,
    },
    TraceViolation {
        profile_index: Option<u64>,
        profile: crate::model::RawProfile,
        step: u32,
        rule: crate::error::InvariantRule,
        detail: String,
    },
    Mismatch {
        profile_index: Option<u64>,
        profile: crate::model::RawProfile,
        matching: Matching,
        detail: String,
    },
}

/// Per-property verdict with enough payload to replay a failure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub property: Property,
    pub mechanism: String,
    pub domain: String,
    pub verdict: bool,
    pub profiles_checked: u64,
    pub cases_checked: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub counterexamples: Vec<Counterexample>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict
    }
}

fn profile_indices(dom: &SweepDomain, mode: SweepMode) -> Result<Vec<u64>> {
    match mode {
        SweepMode::Exhaustive => {
            let count = dom.profile_count();
            if count > 2_500_000 {
                return Err(Error::TooLarge {
                    what: "exhaustive profile sweep",
                    requested: count as usize,
                    limit: 2_500_000,
                });
            }
            Ok((0..count).collect())
        }
        SweepMode::Sample { seed, count } => {
            let total = dom.profile_count();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count).map(|_| rng.random_range(0..total)).collect())
        }
    }
}

/// Deviation menu for one agent: the declared menu or every linear order
/// over the agent's ground set.
fn deviation_menu(dom: &SweepDomain, agent: AgentId, set: DeviationSet) -> Vec<Vec<AgentId>> {
    match set {
        DeviationSet::Declared => dom.menu(agent).to_vec(),
        DeviationSet::AllOrders => {
            let ground = dom.menu(agent)[0]
                .iter()
                .copied()
                .collect::<std::collections::BTreeSet<_>>();
            all_rankings_over(&ground.into_iter().collect::<Vec<_>>())
        }
    }
}

/// Exhaustively (or by seeded sampling) searches profiles x agents x
/// deviations for a profitable misreport. Pass means none exists.
pub fn test_strategyproofness(
    mechanism: &dyn Mechanism,
    dom: &SweepDomain,
    mode: SweepMode,
    deviations: DeviationSet,
    collect_all: bool,
) -> Result<VerificationReport> {
    let indices = profile_indices(dom, mode)?;
    let dev_menus: Vec<Vec<Vec<AgentId>>> = (1..=dom.n())
        .map(|i| deviation_menu(dom, AgentId(i), deviations))
        .collect();

    let per_profile = |&pidx: &u64| -> Result<Vec<Counterexample>> {
        let menu_idx = dom.indices_of(pidx);
        let profile = dom.profile_at(&menu_idx);
        let truthful = mechanism.apply(&profile)?;
        let mut found = Vec::new();
        for agent in profile.agents() {
            let pref = profile.pref(agent);
            let truthful_partner = truthful.partner_of(agent).ok_or_else(|| {
                Error::StructureViolation(format!(
                    "mechanism {} dropped agent {agent}",
                    mechanism.name()
                ))
            })?;
            let truthful_rank = pref.rank_raw(truthful_partner);
            for dev in &dev_menus[agent.idx()] {
                if dev == pref.ranking() {
                    continue;
                }
                let deviated_profile = profile.deviate(agent, dev.clone())?;
                let deviated = mechanism.apply(&deviated_profile)?;
                let new_partner = deviated.partner_of(agent).ok_or_else(|| {
                    Error::StructureViolation(format!(
                        "mechanism {} dropped agent {agent}",
                        mechanism.name()
                    ))
                })?;
                // gain is judged by the agent's true preference
                if pref.rank_raw(new_partner) < truthful_rank {
                    found.push(Counterexample::Manipulation {
                        profile_index: Some(pidx),
                        profile: profile.to_raw(),
                        agent,
                        deviation: dev.clone(),
                        truthful_outcome: truthful.clone(),
                        deviated_outcome: deviated,
                    });
                    if !collect_all {
                        return Ok(found);
                    }
                }
            }
        }
        Ok(found)
    };

    let deviations_per_profile: u64 = (1..=dom.n())
        .map(|i| dev_menus[(i - 1) as usize].len() as u64)
        .sum::<u64>()
        .saturating_sub(dom.n() as u64); // own ranking skipped per agent

    let counterexamples: Vec<Counterexample> = if collect_all {
        let nested: Vec<Vec<Counterexample>> = indices
            .par_iter()
            .map(per_profile)
            .collect::<Result<Vec<_>>>()?;
        nested.into_iter().flatten().collect()
    } else {
        match indices
            .par_iter()
            .map(per_profile)
            .find_map_first(|r| match r {
                Ok(v) if v.is_empty() => None,
                other => Some(other),
            }) {
            None => Vec::new(),
            Some(Ok(v)) => v,
            Some(Err(e)) => return Err(e),
        }
    };

    Ok(VerificationReport {
        property: Property::Strategyproofness,
        mechanism: mechanism.name().to_string(),
        domain: dom.describe(),
        verdict: counterexamples.is_empty(),
        profiles_checked: indices.len() as u64,
        cases_checked: indices.len() as u64 * deviations_per_profile,
        counterexamples,
    })
}

/// For each agent, looks for a profile where the outcome differs from that
/// agent's best feasible partner. Pass means every agent has such a
/// witness, i.e. nobody always gets their way.
pub fn test_non_dictatorship(
    mechanism: &dyn Mechanism,
    dom: &SweepDomain,
    mode: SweepMode,
) -> Result<VerificationReport> {
    let indices = profile_indices(dom, mode)?;
    let n = dom.n();
    let mut has_witness = vec![false; n as usize];
    let mut checked = 0u64;
    for pidx in indices {
        let profile = dom.profile_by_index(pidx);
        let outcome = mechanism.apply(&profile)?;
        checked += 1;
        for agent in profile.agents() {
            if has_witness[agent.idx()] {
                continue;
            }
            let best = profile.pref(agent).peak();
            if outcome.partner_of(agent) != Some(best) {
                has_witness[agent.idx()] = true;
            }
        }
        if has_witness.iter().all(|&b| b) {
            break;
        }
    }
    let dictators: Vec<Counterexample> = (1..=n)
        .filter(|&i| !has_witness[(i - 1) as usize])
        .map(|i| Counterexample::Dictator { agent: AgentId(i) })
        .collect();
    Ok(VerificationReport {
        property: Property::NonDictatorship,
        mechanism: mechanism.name().to_string(),
        domain: dom.describe(),
        verdict: dictators.is_empty(),
        profiles_checked: checked,
        cases_checked: checked,
        counterexamples: dictators,
    })
}
