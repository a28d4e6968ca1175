//! Domain types: agents, preferences, profiles, matchings, plus validation
//! and the enumerators that back the brute-force verifiers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Rank value meaning "not in this agent's ground set".
pub(crate) const UNRANKED: u16 = u16::MAX;

/// 1-based agent identifier. The integer order of ids is the line on which
/// single-peakedness is defined.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    /// Zero-based index for vector addressing.
    #[inline]
    pub fn idx(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Gender label in a marriage market.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Gender {
    M,
    W,
}

/// Which preference domain a profile lives in.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Roommates, rankings over all of N (self included), single-peaked.
    SpRoommate,
    /// Roommates, arbitrary strict rankings over all of N.
    GrandRoommate,
    /// Everyone must be paired; rankings over N without self, single-peaked.
    SpPair,
    /// Two-gender market; rankings over the other gender plus self.
    Marriage,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::SpRoommate => "sp_roommate",
            Domain::GrandRoommate => "grand_roommate",
            Domain::SpPair => "sp_pair",
            Domain::Marriage => "marriage",
        }
    }
}

/// A strict linear order over a ground set of agents, best first.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Preference {
    owner: AgentId,
    ranking: Vec<AgentId>,
    /// rank_of[a.idx()] = position of a in `ranking`, UNRANKED if absent.
    rank_of: Vec<u16>,
}

impl Preference {
    /// Builds a preference after checking that `ranking` is a permutation of
    /// itself (no duplicates, ids within 1..=line).
    pub fn new(owner: AgentId, ranking: Vec<AgentId>, line: u32) -> Result<Self> {
        if ranking.is_empty() {
            return Err(Error::NotAPermutation { agent: owner });
        }
        let mut rank_of = vec![UNRANKED; line as usize];
        for (pos, &a) in ranking.iter().enumerate() {
            if a.0 < 1 || a.0 > line {
                return Err(Error::NotAPermutation { agent: owner });
            }
            if rank_of[a.idx()] != UNRANKED {
                return Err(Error::NotAPermutation { agent: owner });
            }
            rank_of[a.idx()] = pos as u16;
        }
        Ok(Preference {
            owner,
            ranking,
            rank_of,
        })
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    /// The full ranking, best first.
    pub fn ranking(&self) -> &[AgentId] {
        &self.ranking
    }

    /// The most-preferred partner.
    pub fn peak(&self) -> AgentId {
        self.ranking[0]
    }

    /// The ground set, ascending.
    pub fn ground_set(&self) -> Vec<AgentId> {
        let mut g = self.ranking.clone();
        g.sort();
        g
    }

    pub fn ranks(&self, a: AgentId) -> bool {
        a.idx() < self.rank_of.len() && self.rank_of[a.idx()] != UNRANKED
    }

    /// Position of `a` in the ranking, if ranked.
    #[inline]
    pub fn rank(&self, a: AgentId) -> Option<u16> {
        match self.rank_of.get(a.idx()) {
            Some(&r) if r != UNRANKED => Some(r),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn rank_raw(&self, a: AgentId) -> u16 {
        self.rank_of.get(a.idx()).copied().unwrap_or(UNRANKED)
    }

    /// True iff `a` is strictly preferred to `b`. Errors if either is
    /// outside the ground set.
    pub fn prefers(&self, a: AgentId, b: AgentId) -> Result<bool> {
        let ra = self.rank(a).ok_or(Error::OutOfGroundSet {
            agent: self.owner,
            partner: a,
        })?;
        let rb = self.rank(b).ok_or(Error::OutOfGroundSet {
            agent: self.owner,
            partner: b,
        })?;
        Ok(ra < rb)
    }

    /// Weak preference: `a` preferred to `b` or equal.
    pub fn weakly_prefers(&self, a: AgentId, b: AgentId) -> Result<bool> {
        Ok(a == b || self.prefers(a, b)?)
    }

    /// Checks the prefix-interval characterization of single-peakedness on
    /// the ground set's natural order: every prefix of the ranking is a
    /// contiguous block of the ground set. Returns the offending prefix
    /// length on failure.
    pub fn single_peaked_violation(&self) -> Option<usize> {
        let ground = self.ground_set();
        let pos_in_ground: std::collections::HashMap<AgentId, usize> =
            ground.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let mut lo = pos_in_ground[&self.ranking[0]];
        let mut hi = lo;
        for (k, a) in self.ranking.iter().enumerate().skip(1) {
            let p = pos_in_ground[a];
            if p + 1 == lo {
                lo = p;
            } else if p == hi + 1 {
                hi = p;
            } else {
                return Some(k + 1);
            }
        }
        None
    }

    pub fn is_single_peaked(&self) -> bool {
        self.single_peaked_violation().is_none()
    }

    /// Restriction of this preference to the agents in `keep` (order
    /// preserved). `keep` must contain the owner for roommate-style use.
    pub fn restrict(&self, keep: &[AgentId]) -> Vec<AgentId> {
        let keep_set: std::collections::HashSet<AgentId> = keep.iter().copied().collect();
        self.ranking
            .iter()
            .copied()
            .filter(|a| keep_set.contains(a))
            .collect()
    }
}

/// Raw, unvalidated profile mirroring the JSON wire format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawProfile {
    pub n: u32,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genders: Option<Vec<Gender>>,
    pub prefs: Vec<Vec<u32>>,
}

/// A validated profile: one preference per agent, certified against its
/// declared domain.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Profile {
    n: u32,
    domain: Domain,
    genders: Option<Vec<Gender>>,
    prefs: Vec<Preference>,
}

impl Profile {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn genders(&self) -> Option<&[Gender]> {
        self.genders.as_deref()
    }

    pub fn gender_of(&self, a: AgentId) -> Option<Gender> {
        self.genders.as_ref().map(|g| g[a.idx()])
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        (1..=self.n).map(AgentId)
    }

    pub fn pref(&self, a: AgentId) -> &Preference {
        &self.prefs[a.idx()]
    }

    pub fn prefs(&self) -> &[Preference] {
        &self.prefs
    }

    /// Replaces one agent's preference, revalidating it against the domain.
    pub fn deviate(&self, agent: AgentId, ranking: Vec<AgentId>) -> Result<Profile> {
        let mut raw = self.to_raw();
        raw.prefs[agent.idx()] = ranking.iter().map(|a| a.0).collect();
        validate_profile(&raw)
    }

    pub fn to_raw(&self) -> RawProfile {
        RawProfile {
            n: self.n,
            domain: self.domain,
            genders: self.genders.clone(),
            prefs: self
                .prefs
                .iter()
                .map(|p| p.ranking().iter().map(|a| a.0).collect())
                .collect(),
        }
    }

    /// Convenience constructor used heavily by tests and fixtures: rankings
    /// given as plain integers, validated like any other input.
    pub fn from_rankings(
        domain: Domain,
        genders: Option<Vec<Gender>>,
        rankings: &[&[u32]],
    ) -> Result<Profile> {
        let raw = RawProfile {
            n: rankings.len() as u32,
            domain,
            genders,
            prefs: rankings.iter().map(|r| r.to_vec()).collect(),
        };
        validate_profile(&raw)
    }
}

impl Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_raw().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawProfile::deserialize(d)?;
        validate_profile(&raw).map_err(serde::de::Error::custom)
    }
}

/// Ground set required by `domain` for `agent`.
fn required_ground(
    domain: Domain,
    genders: Option<&[Gender]>,
    n: u32,
    agent: AgentId,
) -> Vec<AgentId> {
    match domain {
        Domain::SpRoommate | Domain::GrandRoommate => (1..=n).map(AgentId).collect(),
        Domain::SpPair => (1..=n).map(AgentId).filter(|&a| a != agent).collect(),
        Domain::Marriage => {
            let gs = genders.expect("marriage profile carries genders");
            let own = gs[agent.idx()];
            (1..=n)
                .map(AgentId)
                .filter(|&a| a == agent || gs[a.idx()] != own)
                .collect()
        }
    }
}

/// Validates a raw profile against its declared domain, returning the
/// certified profile or the first violation found.
pub fn validate_profile(raw: &RawProfile) -> Result<Profile> {
    let n = raw.n;
    if n == 0 {
        return Err(Error::InvalidInput(
            "profile needs at least one agent".into(),
        ));
    }
    if raw.prefs.len() != n as usize {
        return Err(Error::InvalidInput(format!(
            "expected {} preference lists, got {}",
            n,
            raw.prefs.len()
        )));
    }
    match raw.domain {
        Domain::Marriage => {
            let g = raw.genders.as_ref().ok_or_else(|| {
                Error::Domain("marriage profile requires a genders vector".into())
            })?;
            if g.len() != n as usize {
                return Err(Error::Domain(format!(
                    "genders vector has {} entries for {} agents",
                    g.len(),
                    n
                )));
            }
        }
        _ => {
            if raw.genders.is_some() {
                return Err(Error::Domain(format!(
                    "genders vector is only valid for marriage profiles, not {}",
                    raw.domain.as_str()
                )));
            }
        }
    }

    let mut prefs = Vec::with_capacity(n as usize);
    for (i, ranking) in raw.prefs.iter().enumerate() {
        let owner = AgentId(i as u32 + 1);
        let ranking: Vec<AgentId> = ranking.iter().map(|&v| AgentId(v)).collect();
        let pref = Preference::new(owner, ranking, n)?;
        let mut ground = pref.ground_set();
        ground.sort();
        let required = required_ground(raw.domain, raw.genders.as_deref(), n, owner);
        if ground != required {
            return Err(Error::GroundSetMismatch { agent: owner });
        }
        let single_peaked_required = matches!(raw.domain, Domain::SpRoommate | Domain::SpPair);
        if single_peaked_required {
            if let Some(k) = pref.single_peaked_violation() {
                return Err(Error::NotSinglePeaked {
                    agent: owner,
                    prefix: pref.ranking()[..k].to_vec(),
                });
            }
        }
        prefs.push(pref);
    }

    Ok(Profile {
        n,
        domain: raw.domain,
        genders: raw.genders.clone(),
        prefs,
    })
}

/// A matching or submatching: an involution on a carrier set, stored as
/// sorted pairs (smaller id first) plus sorted singles.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Matching {
    pairs: Vec<(AgentId, AgentId)>,
    singles: Vec<AgentId>,
}

impl Matching {
    pub fn empty() -> Matching {
        Matching {
            pairs: Vec::new(),
            singles: Vec::new(),
        }
    }

    /// Everyone in `carrier` single.
    pub fn identity(carrier: &[AgentId]) -> Matching {
        let mut singles = carrier.to_vec();
        singles.sort();
        Matching {
            pairs: Vec::new(),
            singles,
        }
    }

    /// Builds a matching from pairs and singles, rejecting repeated or
    /// self-paired agents.
    pub fn new(pairs: Vec<(AgentId, AgentId)>, singles: Vec<AgentId>) -> Result<Matching> {
        let mut seen = std::collections::HashSet::new();
        let mut ps: Vec<(AgentId, AgentId)> = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a == b {
                return Err(Error::StructureViolation(format!(
                    "pair ({a},{b}) is a self-pair; encode singles separately"
                )));
            }
            if !seen.insert(a) || !seen.insert(b) {
                return Err(Error::StructureViolation(format!(
                    "agent listed twice in matching near pair ({a},{b})"
                )));
            }
            ps.push((a.min(b), a.max(b)));
        }
        for &s in &singles {
            if !seen.insert(s) {
                return Err(Error::StructureViolation(format!(
                    "agent {s} listed twice in matching"
                )));
            }
        }
        ps.sort();
        let mut singles = singles;
        singles.sort();
        Ok(Matching { pairs: ps, singles })
    }

    pub fn pairs(&self) -> &[(AgentId, AgentId)] {
        &self.pairs
    }

    pub fn singles(&self) -> &[AgentId] {
        &self.singles
    }

    /// Carrier set, ascending.
    pub fn carrier(&self) -> Vec<AgentId> {
        let mut c: Vec<AgentId> = self
            .pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.singles.iter().copied())
            .collect();
        c.sort();
        c
    }

    pub fn len(&self) -> usize {
        self.pairs.len() * 2 + self.singles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.singles.is_empty()
    }

    /// Partner of `a` (itself if single); None if `a` is not in the carrier.
    pub fn partner_of(&self, a: AgentId) -> Option<AgentId> {
        for &(x, y) in &self.pairs {
            if x == a {
                return Some(y);
            }
            if y == a {
                return Some(x);
            }
        }
        if self.singles.contains(&a) {
            return Some(a);
        }
        None
    }

    pub fn contains_pair(&self, a: AgentId, b: AgentId) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    /// True iff the carrier is exactly {1..n}.
    pub fn is_full(&self, n: u32) -> bool {
        let c = self.carrier();
        c.len() == n as usize && c.iter().enumerate().all(|(i, a)| a.0 == i as u32 + 1)
    }

    /// Dense partner lookup: vec indexed by agent idx, 0 for agents outside
    /// the carrier.
    pub fn partner_vec(&self, n: u32) -> Vec<u32> {
        let mut v = vec![0u32; n as usize];
        for &(a, b) in &self.pairs {
            v[a.idx()] = b.0;
            v[b.idx()] = a.0;
        }
        for &s in &self.singles {
            v[s.idx()] = s.0;
        }
        v
    }

    /// Builds a matching from a dense partner vec over `carrier`.
    pub fn from_partner_vec(carrier: &[AgentId], partner: &[u32]) -> Matching {
        let mut pairs = Vec::new();
        let mut singles = Vec::new();
        for &a in carrier {
            let p = AgentId(partner[a.idx()]);
            if p == a {
                singles.push(a);
            } else if a < p {
                pairs.push((a, p));
            }
        }
        Matching { pairs, singles }
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for &(a, b) in &self.pairs {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "({a},{b})")?;
            first = false;
        }
        for &s in &self.singles {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "({s})")?;
            first = false;
        }
        write!(f, "}}")
    }
}

#[derive(Serialize, Deserialize)]
struct MatchingJson {
    pairs: Vec<(AgentId, AgentId)>,
    singles: Vec<AgentId>,
}

impl Serialize for Matching {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatchingJson {
            pairs: self.pairs.clone(),
            singles: self.singles.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matching {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatchingJson::deserialize(d)?;
        Matching::new(raw.pairs, raw.singles).map_err(serde::de::Error::custom)
    }
}

/// All strict single-peaked orders over {1..n}, sorted lexicographically.
/// There are exactly 2^(n-1) of them.
pub fn enumerate_single_peaked(n: u32) -> Vec<Vec<AgentId>> {
    let ground: Vec<AgentId> = (1..=n).map(AgentId).collect();
    single_peaked_rankings_over(&ground)
}

/// All strict single-peaked orders over an arbitrary sorted ground set,
/// sorted lexicographically. Single-peakedness is taken on the ground set's
/// natural sub-line.
pub fn single_peaked_rankings_over(ground: &[AgentId]) -> Vec<Vec<AgentId>> {
    assert!(!ground.is_empty(), "ground set must be nonempty");
    debug_assert!(ground.windows(2).all(|w| w[0] < w[1]));
    // Read worst-to-best, a single-peaked order removes from either end of
    // the remaining interval; build all such sequences.
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(ground.len());
    fn rec(
        ground: &[AgentId],
        lo: usize,
        hi: usize,
        stack: &mut Vec<AgentId>,
        out: &mut Vec<Vec<AgentId>>,
    ) {
        if lo == hi {
            let mut ranking = stack.clone();
            ranking.push(ground[lo]);
            ranking.reverse();
            out.push(ranking);
            return;
        }
        stack.push(ground[lo]);
        rec(ground, lo + 1, hi, stack, out);
        stack.pop();
        stack.push(ground[hi]);
        rec(ground, lo, hi - 1, stack, out);
        stack.pop();
    }
    rec(ground, 0, ground.len() - 1, &mut stack, &mut out);
    out.sort();
    out.dedup();
    out
}

/// All strict linear orders over a ground set, lexicographic.
pub fn all_rankings_over(ground: &[AgentId]) -> Vec<Vec<AgentId>> {
    let mut out = Vec::new();
    let mut items = ground.to_vec();
    items.sort();
    let mut current = Vec::with_capacity(items.len());
    fn rec(remaining: &mut Vec<AgentId>, current: &mut Vec<AgentId>, out: &mut Vec<Vec<AgentId>>) {
        if remaining.is_empty() {
            out.push(current.clone());
            return;
        }
        for i in 0..remaining.len() {
            let a = remaining.remove(i);
            current.push(a);
            rec(remaining, current, out);
            current.pop();
            remaining.insert(i, a);
        }
    }
    rec(&mut items, &mut current, &mut out);
    out
}

/// All involutions on `carrier` in canonical order (sorted by pair list).
/// Counts follow the telephone numbers: 1, 2, 4, 10, 26, 76, 232, 764, ...
pub fn enumerate_matchings(carrier: &[AgentId]) -> Vec<Matching> {
    let mut sorted = carrier.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    let mut pairs = Vec::new();
    let mut singles = Vec::new();
    fn rec(
        rest: &[AgentId],
        pairs: &mut Vec<(AgentId, AgentId)>,
        singles: &mut Vec<AgentId>,
        out: &mut Vec<Matching>,
    ) {
        let Some((&a, rest)) = rest.split_first() else {
            out.push(Matching {
                pairs: pairs.clone(),
                singles: singles.clone(),
            });
            return;
        };
        singles.push(a);
        rec(rest, pairs, singles, out);
        singles.pop();
        for i in 0..rest.len() {
            let b = rest[i];
            let mut remaining: Vec<AgentId> = rest.to_vec();
            remaining.remove(i);
            pairs.push((a, b));
            rec(&remaining, pairs, singles, out);
            pairs.pop();
        }
    }
    rec(&sorted, &mut pairs, &mut singles, &mut out);
    out.sort();
    out
}
