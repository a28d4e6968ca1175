//! The dating mechanism: start everyone single, repeatedly finalize agents
//! who can no longer take part in any Pareto improvement, and otherwise
//! reassign framed parties one notch outward. Each run produces a full step
//! trace that an independent checker can replay against the per-step
//! invariants.

use crate::error::{Error, InvariantRule, Result};
use crate::model::{AgentId, Domain, Matching, Profile, UNRANKED};
use serde::{Deserialize, Serialize};

/// A dating pool: the carrier plus each member's ranking over a subset of
/// the pool containing itself. Members absent from a ranking count as worse
/// than everything ranked, which is how restricted marriage preferences
/// enter the same engine.
#[derive(Clone, Debug)]
pub(crate) struct Pool {
    members: Vec<AgentId>,
    /// rank[owner.idx()][other.idx()]; UNRANKED when absent.
    rank: Vec<Vec<u16>>,
    /// Top of each member's pool ranking.
    peak: Vec<AgentId>,
}

impl Pool {
    pub(crate) fn from_profile(profile: &Profile) -> Result<Pool> {
        if profile.domain() != Domain::SpRoommate {
            return Err(Error::Domain(format!(
                "dating runs on sp_roommate profiles, got {}",
                profile.domain().as_str()
            )));
        }
        let members: Vec<AgentId> = profile.agents().collect();
        Ok(Pool::from_rankings(
            profile.n(),
            members
                .iter()
                .map(|&a| (a, profile.pref(a).ranking().to_vec())),
        ))
    }

    /// Pool over an explicit member set with explicit (possibly partial)
    /// rankings. Each ranking must contain its owner.
    pub(crate) fn from_rankings(
        line: u32,
        rankings: impl IntoIterator<Item = (AgentId, Vec<AgentId>)>,
    ) -> Pool {
        let mut members = Vec::new();
        let mut rank = vec![Vec::new(); line as usize];
        let mut peak = vec![AgentId(0); line as usize];
        for (owner, ranking) in rankings {
            debug_assert!(ranking.contains(&owner));
            members.push(owner);
            let mut row = vec![UNRANKED; line as usize];
            for (pos, &a) in ranking.iter().enumerate() {
                row[a.idx()] = pos as u16;
            }
            peak[owner.idx()] = ranking[0];
            rank[owner.idx()] = row;
        }
        members.sort();
        Pool {
            members,
            rank,
            peak,
        }
    }

    pub(crate) fn members(&self) -> &[AgentId] {
        &self.members
    }

    #[inline]
    fn rank_of(&self, owner: AgentId, other: AgentId) -> u16 {
        self.rank[owner.idx()][other.idx()]
    }

    #[inline]
    fn peak_of(&self, owner: AgentId) -> AgentId {
        self.peak[owner.idx()]
    }
}

/// State of a run between steps: step counter, the still-unmatched agents,
/// their current dates, and the finalized submatching so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgoState {
    k: u32,
    unmatched: Vec<AgentId>,
    /// date[a.idx()] is a's current date; only meaningful for unmatched a.
    date: Vec<AgentId>,
    finalized: Vec<(AgentId, AgentId)>,
}

impl AlgoState {
    /// Fresh state: everyone in `carrier` single, step 1.
    pub fn initial(carrier: &[AgentId]) -> AlgoState {
        let mut unmatched = carrier.to_vec();
        unmatched.sort();
        let line = unmatched.last().map_or(0, |a| a.0);
        let mut date = vec![AgentId(0); line as usize];
        for &a in &unmatched {
            date[a.idx()] = a;
        }
        AlgoState {
            k: 1,
            unmatched,
            date,
            finalized: Vec::new(),
        }
    }

    /// State with a given current submatching, for driving the reassignment
    /// machinery directly in tests.
    pub fn with_submatching(current: &Matching) -> AlgoState {
        let carrier = current.carrier();
        let mut st = AlgoState::initial(&carrier);
        for &a in &carrier {
            st.date[a.idx()] = current.partner_of(a).unwrap();
        }
        st
    }

    pub fn step(&self) -> u32 {
        self.k
    }

    pub fn unmatched(&self) -> &[AgentId] {
        &self.unmatched
    }

    pub fn is_done(&self) -> bool {
        self.unmatched.is_empty()
    }

    /// Current date of an unmatched agent.
    pub fn date_of(&self, a: AgentId) -> Option<AgentId> {
        if self.unmatched.binary_search(&a).is_ok() {
            Some(self.date[a.idx()])
        } else {
            None
        }
    }

    fn is_single(&self, a: AgentId) -> bool {
        self.date[a.idx()] == a
    }

    /// The current submatching on the unmatched agents.
    pub fn current_submatching(&self) -> Matching {
        let mut pairs = Vec::new();
        let mut singles = Vec::new();
        for &a in &self.unmatched {
            let d = self.date[a.idx()];
            if d == a {
                singles.push(a);
            } else if a < d {
                pairs.push((a, d));
            }
        }
        Matching::new(pairs, singles).expect("state date map is an involution")
    }

    /// The finalized submatching so far.
    pub fn finalized_submatching(&self) -> Matching {
        let mut pairs = Vec::new();
        let mut singles = Vec::new();
        for &(a, b) in &self.finalized {
            if a == b {
                singles.push(a);
            } else {
                pairs.push((a, b));
            }
        }
        Matching::new(pairs, singles).expect("finalized pairs are disjoint")
    }
}

/// Partition of the unmatched agents by the direction a mutually improving
/// partner would lie in. Single-peakedness keeps `up` and `down` disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mobility {
    pub up: Vec<AgentId>,
    pub down: Vec<AgentId>,
    pub stuck: Vec<AgentId>,
}

impl Mobility {
    pub fn is_stuck(&self, a: AgentId) -> bool {
        self.stuck.binary_search(&a).is_ok()
    }
    pub fn is_up(&self, a: AgentId) -> bool {
        self.up.binary_search(&a).is_ok()
    }
    pub fn is_down(&self, a: AgentId) -> bool {
        self.down.binary_search(&a).is_ok()
    }
}

/// A party: adjacent agents paired left-to-right order-preservingly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub left: Vec<AgentId>,
    pub right: Vec<AgentId>,
}

impl Party {
    pub fn min(&self) -> AgentId {
        let mut m = self.left[0];
        if self.right[0] < m {
            m = self.right[0];
        }
        m
    }
    pub fn max(&self) -> AgentId {
        let mut m = *self.left.last().unwrap();
        if *self.right.last().unwrap() > m {
            m = *self.right.last().unwrap();
        }
        m
    }
}

/// One reassignment: a (possibly empty) party framed by the singles `l`
/// from below and `r` from above, re-paired one notch outward.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reassignment {
    pub l: AgentId,
    pub r: AgentId,
    pub party_left: Vec<AgentId>,
    pub party_right: Vec<AgentId>,
}

impl Reassignment {
    /// The new party's pairs: {l} u left and {r} u right matched by rank.
    pub fn new_pairs(&self) -> Vec<(AgentId, AgentId)> {
        let mut left = self.party_left.clone();
        left.push(self.l);
        left.sort();
        let mut right = self.party_right.clone();
        right.push(self.r);
        right.sort();
        left.into_iter().zip(right).collect()
    }
}

/// Everything one step did: the mobility snapshot and either the matches it
/// finalized or the reassignments it performed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: u32,
    pub up: Vec<AgentId>,
    pub down: Vec<AgentId>,
    pub stuck: Vec<AgentId>,
    /// Finalized pairs, singles encoded as [i,i].
    pub matched: Vec<(AgentId, AgentId)>,
    pub reassigned: Vec<Reassignment>,
}

/// Full record of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub result: Matching,
}

fn classify_pool(state: &AlgoState, pool: &Pool) -> Result<Mobility> {
    let mut up = Vec::new();
    let mut down = Vec::new();
    let mut stuck = Vec::new();
    for &i in &state.unmatched {
        let ri_current = pool.rank_of(i, state.date[i.idx()]);
        let mut goes_up = false;
        let mut goes_down = false;
        for &j in &state.unmatched {
            if j == i {
                continue;
            }
            // j improves i and i improves j
            if pool.rank_of(i, j) < ri_current
                && pool.rank_of(j, i) < pool.rank_of(j, state.date[j.idx()])
            {
                if j > i {
                    goes_up = true;
                } else {
                    goes_down = true;
                }
            }
        }
        match (goes_up, goes_down) {
            (true, true) => {
                return Err(Error::StructureViolation(format!(
                    "agent {i} is both upwardly and downwardly mobile; pool preferences are not single-peaked"
                )))
            }
            (true, false) => up.push(i),
            (false, true) => down.push(i),
            (false, false) => stuck.push(i),
        }
    }
    Ok(Mobility { up, down, stuck })
}

/// Classifies every unmatched agent as upwardly mobile, downwardly mobile,
/// or stuck at the current submatching.
pub fn classify(state: &AlgoState, profile: &Profile) -> Result<Mobility> {
    let pool = Pool::from_profile(profile)?;
    classify_pool(state, &pool)
}

/// Decomposes the current submatching into its maximal parties, left to
/// right. Singles are not parties. Fails if some paired block is not a
/// party, which would mean the engine broke the singles-and-parties shape.
pub fn find_parties(state: &AlgoState) -> Result<Vec<Party>> {
    let mut parties = Vec::new();
    let mut block: Vec<AgentId> = Vec::new();
    let flush = |block: &mut Vec<AgentId>, parties: &mut Vec<Party>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        // the block is a maximal run of paired agents; check it is a party
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &a in block.iter() {
            let d = state.date[a.idx()];
            if !block.contains(&d) {
                return Err(Error::StructureViolation(format!(
                    "agent {a} dates {d} outside its adjacent block"
                )));
            }
            if a < d {
                left.push(a);
            } else {
                right.push(a);
            }
        }
        // left is ascending by construction; images must be ascending too
        let mut prev: Option<AgentId> = None;
        for &a in &left {
            let d = state.date[a.idx()];
            if let Some(p) = prev {
                if d < p {
                    return Err(Error::StructureViolation(format!(
                        "party order violated: dates of {left:?} are not increasing"
                    )));
                }
            }
            prev = Some(d);
        }
        parties.push(Party { left, right });
        block.clear();
        Ok(())
    };
    for &a in &state.unmatched {
        if state.is_single(a) {
            flush(&mut block, &mut parties)?;
        } else {
            block.push(a);
        }
    }
    flush(&mut block, &mut parties)?;
    Ok(parties)
}

/// Performs every reassignment available at the current submatching: each
/// maximal party framed below by an upwardly mobile single and above by a
/// downwardly mobile single is re-paired one notch outward, and any two
/// adjacent singles going toward each other frame the empty party. All
/// framed groups are processed simultaneously.
pub fn reassign(state: &AlgoState, mobility: &Mobility) -> Result<(AlgoState, Vec<Reassignment>)> {
    if !mobility.stuck.is_empty() {
        return Err(Error::InvalidInput(
            "reassign requires an empty stuck set".into(),
        ));
    }
    let parties = find_parties(state)?;
    let members = &state.unmatched;
    let pos_of = |a: AgentId| members.binary_search(&a).expect("member lookup");

    let mut records: Vec<Reassignment> = Vec::new();

    // framed nonempty parties
    for party in &parties {
        let lo = pos_of(party.min());
        let hi = pos_of(party.max());
        if lo == 0 || hi + 1 >= members.len() {
            continue;
        }
        let l = members[lo - 1];
        let r = members[hi + 1];
        if state.is_single(l) && state.is_single(r) && mobility.is_up(l) && mobility.is_down(r) {
            records.push(Reassignment {
                l,
                r,
                party_left: party.left.clone(),
                party_right: party.right.clone(),
            });
        }
    }

    // adjacent singles framing the empty party
    for w in members.windows(2) {
        let (l, r) = (w[0], w[1]);
        if state.is_single(l) && state.is_single(r) && mobility.is_up(l) && mobility.is_down(r) {
            records.push(Reassignment {
                l,
                r,
                party_left: Vec::new(),
                party_right: Vec::new(),
            });
        }
    }

    if records.is_empty() {
        return Err(Error::NoProgress { step: state.k });
    }
    records.sort_by_key(|rec| rec.l);

    // framed groups must be pairwise disjoint before applying simultaneously
    let mut touched = std::collections::HashSet::new();
    for rec in &records {
        for a in rec
            .party_left
            .iter()
            .chain(rec.party_right.iter())
            .chain([&rec.l, &rec.r])
        {
            if !touched.insert(*a) {
                return Err(Error::StructureViolation(format!(
                    "agent {a} claimed by two framed parties at step {}",
                    state.k
                )));
            }
        }
    }

    let mut next = state.clone();
    next.k += 1;
    for rec in &records {
        for (a, b) in rec.new_pairs() {
            next.date[a.idx()] = b;
            next.date[b.idx()] = a;
        }
    }
    Ok((next, records))
}

fn finalize_stuck(state: &AlgoState, mobility: &Mobility) -> (AlgoState, Vec<(AgentId, AgentId)>) {
    let mut matched: Vec<(AgentId, AgentId)> = Vec::new();
    let mut removed: Vec<AgentId> = Vec::new();
    for &i in &mobility.stuck {
        if removed.contains(&i) {
            continue;
        }
        let d = state.date[i.idx()];
        matched.push((i.min(d), i.max(d)));
        removed.push(i);
        if d != i {
            removed.push(d);
        }
    }
    matched.sort();
    matched.dedup();
    let mut next = state.clone();
    next.k += 1;
    next.unmatched.retain(|a| !removed.contains(a));
    next.finalized.extend(matched.iter().copied());
    (next, matched)
}

fn dating_step_pool(state: &AlgoState, pool: &Pool) -> Result<(AlgoState, StepRecord)> {
    if state.unmatched.is_empty() {
        return Err(Error::InvalidInput("no unmatched agents left".into()));
    }
    let mobility = classify_pool(state, pool)?;
    let (next, matched, reassigned) = if !mobility.stuck.is_empty() {
        let (next, matched) = finalize_stuck(state, &mobility);
        (next, matched, Vec::new())
    } else {
        let (next, records) = reassign(state, &mobility)?;
        (next, Vec::new(), records)
    };
    let record = StepRecord {
        k: state.k,
        up: mobility.up,
        down: mobility.down,
        stuck: mobility.stuck,
        matched,
        reassigned,
    };
    Ok((next, record))
}

/// One step: finalize every stuck agent together with its date, or if
/// nobody is stuck perform the reassignments.
pub fn dating_step(state: &AlgoState, profile: &Profile) -> Result<(AlgoState, StepRecord)> {
    let pool = Pool::from_profile(profile)?;
    dating_step_pool(state, &pool)
}

pub(crate) fn run_pool(pool: &Pool, want_trace: bool) -> Result<(Matching, Option<Trace>)> {
    let n = pool.members().len() as u32;
    let cap = n * n; // each step matches someone or strictly improves someone
    let mut state = AlgoState::initial(pool.members());
    let mut steps = Vec::new();
    while !state.is_done() {
        if state.k > cap.max(1) {
            return Err(Error::StructureViolation(format!(
                "step counter exceeded hard cap {cap}"
            )));
        }
        let (next, record) = dating_step_pool(&state, pool)?;
        if want_trace {
            steps.push(record);
        }
        state = next;
    }
    let result = state.finalized_submatching();
    let trace = want_trace.then(|| Trace {
        steps,
        result: result.clone(),
    });
    Ok((result, trace))
}

/// Runs the full dating algorithm, returning the matching and its trace.
pub fn run_dating(profile: &Profile) -> Result<(Matching, Trace)> {
    let pool = Pool::from_profile(profile)?;
    let (m, t) = run_pool(&pool, true)?;
    Ok((m, t.expect("trace requested")))
}

/// Trace-free variant for hot sweep loops.
pub fn run_dating_matching(profile: &Profile) -> Result<Matching> {
    let pool = Pool::from_profile(profile)?;
    Ok(run_pool(&pool, false)?.0)
}

/// Summary returned by a successful trace check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceCheckReport {
    pub steps: usize,
    pub matches: usize,
    pub reassignments: usize,
}

fn violation(step: u32, rule: InvariantRule, detail: String) -> Error {
    Error::InvariantViolation { step, rule, detail }
}

/// Replays a recorded trace against the profile and checks, at every step:
/// progress was made; the current submatching stays singles-and-parties;
/// reassigned agents strictly improve and move toward their peak; party
/// sides are never mobile away from the party; and both frames of every
/// reassigned party were singles. The recorded mobility snapshots and
/// events must match what the definitions force.
pub fn check_trace_invariants(trace: &Trace, profile: &Profile) -> Result<TraceCheckReport> {
    let pool = Pool::from_profile(profile)?;
    check_trace_invariants_pool(trace, &pool)
}

pub(crate) fn check_trace_invariants_pool(trace: &Trace, pool: &Pool) -> Result<TraceCheckReport> {
    let mut state = AlgoState::initial(pool.members());
    let mut matches = 0usize;
    let mut reassignments = 0usize;

    for record in &trace.steps {
        let k = record.k;
        if k != state.k {
            return Err(violation(
                k,
                InvariantRule::TraceConsistency,
                format!("expected step {}, trace records step {k}", state.k),
            ));
        }

        // recompute mobility from the definitions and compare the snapshot
        let mobility = classify_pool(&state, pool)?;
        if mobility.up != record.up
            || mobility.down != record.down
            || mobility.stuck != record.stuck
        {
            return Err(violation(
                k,
                InvariantRule::TraceConsistency,
                format!(
                    "recorded mobility {:?}/{:?}/{:?} differs from recomputed {:?}/{:?}/{:?}",
                    record.up,
                    record.down,
                    record.stuck,
                    mobility.up,
                    mobility.down,
                    mobility.stuck
                ),
            ));
        }

        // d[k]: parties never contain members mobile away from the party
        let parties = find_parties(&state)
            .map_err(|e| violation(k, InvariantRule::SinglesAndParties, e.to_string()))?;
        for party in &parties {
            if let Some(&a) = party.left.iter().find(|&&a| mobility.is_down(a)) {
                return Err(violation(
                    k,
                    InvariantRule::PartyMobility,
                    format!("left member {a} of a party is downwardly mobile"),
                ));
            }
            if let Some(&a) = party.right.iter().find(|&&a| mobility.is_up(a)) {
                return Err(violation(
                    k,
                    InvariantRule::PartyMobility,
                    format!("right member {a} of a party is upwardly mobile"),
                ));
            }
        }

        // a[k]: the step did something
        if record.matched.is_empty() && record.reassigned.is_empty() {
            return Err(violation(
                k,
                InvariantRule::Progress,
                "step neither matched nor reassigned".into(),
            ));
        }
        if !record.matched.is_empty() && !record.reassigned.is_empty() {
            return Err(violation(
                k,
                InvariantRule::TraceConsistency,
                "step both matched and reassigned".into(),
            ));
        }

        if !record.matched.is_empty() {
            matches += 1;
            if record.stuck.is_empty() {
                return Err(violation(
                    k,
                    InvariantRule::TraceConsistency,
                    "matching step with empty stuck set".into(),
                ));
            }
            let mut removed: Vec<AgentId> = Vec::new();
            for &(a, b) in &record.matched {
                if state.date_of(a) != Some(b) {
                    return Err(violation(
                        k,
                        InvariantRule::TraceConsistency,
                        format!(
                            "finalized pair ({a},{b}) but {a} dates {:?}",
                            state.date_of(a)
                        ),
                    ));
                }
                if !mobility.is_stuck(a) && !mobility.is_stuck(b) {
                    return Err(violation(
                        k,
                        InvariantRule::TraceConsistency,
                        format!("finalized pair ({a},{b}) contains no stuck agent"),
                    ));
                }
                removed.push(a);
                if b != a {
                    removed.push(b);
                }
            }
            for &s in &record.stuck {
                if !removed.contains(&s) {
                    return Err(violation(
                        k,
                        InvariantRule::TraceConsistency,
                        format!("stuck agent {s} was not finalized"),
                    ));
                }
            }
            state.k += 1;
            state.unmatched.retain(|a| !removed.contains(a));
            state.finalized.extend(record.matched.iter().copied());
        } else {
            reassignments += 1;
            if !record.stuck.is_empty() {
                return Err(violation(
                    k,
                    InvariantRule::TraceConsistency,
                    "reassignment step with nonempty stuck set".into(),
                ));
            }
            let before = state.clone();
            let mut claimed: Vec<AgentId> = Vec::new();
            for rec in &record.reassigned {
                // frames must be singles with the right mobility
                for (frame, want_up) in [(rec.l, true), (rec.r, false)] {
                    if before.date_of(frame) != Some(frame) {
                        return Err(violation(
                            k,
                            InvariantRule::FramesAreSingles,
                            format!("frame {frame} was not single"),
                        ));
                    }
                    let ok = if want_up {
                        mobility.is_up(frame)
                    } else {
                        mobility.is_down(frame)
                    };
                    if !ok {
                        return Err(violation(
                            k,
                            InvariantRule::TraceConsistency,
                            format!("frame {frame} lacks the required mobility"),
                        ));
                    }
                }
                // the recorded party must be the current date structure
                for &a in &rec.party_left {
                    match before.date_of(a) {
                        Some(d) if rec.party_right.contains(&d) => {}
                        _ => {
                            return Err(violation(
                                k,
                                InvariantRule::TraceConsistency,
                                format!("party member {a} dated outside the recorded party"),
                            ))
                        }
                    }
                }
                // frames plus party must be contiguous in the unmatched set
                let mut group: Vec<AgentId> = rec
                    .party_left
                    .iter()
                    .chain(rec.party_right.iter())
                    .copied()
                    .chain([rec.l, rec.r])
                    .collect();
                group.sort();
                let lo = before.unmatched.binary_search(&group[0]).map_err(|_| {
                    violation(
                        k,
                        InvariantRule::TraceConsistency,
                        format!("{} not unmatched", group[0]),
                    )
                })?;
                if before.unmatched.len() < lo + group.len()
                    || before.unmatched[lo..lo + group.len()] != group[..]
                {
                    return Err(violation(
                        k,
                        InvariantRule::TraceConsistency,
                        format!("framed group {group:?} is not adjacent among the unmatched"),
                    ));
                }
                claimed.extend(group);
                for (a, b) in rec.new_pairs() {
                    state.date[a.idx()] = b;
                    state.date[b.idx()] = a;
                }
            }
            claimed.sort();
            claimed.dedup();
            let total: usize = record
                .reassigned
                .iter()
                .map(|r| r.party_left.len() + r.party_right.len() + 2)
                .sum();
            if claimed.len() != total {
                return Err(violation(
                    k,
                    InvariantRule::TraceConsistency,
                    "reassigned groups overlap".into(),
                ));
            }
            state.k += 1;

            // c[k]: strict improvement toward the peak for reassigned agents
            for &a in &claimed {
                let old = before.date[a.idx()];
                let new = state.date[a.idx()];
                if new == old {
                    continue;
                }
                if pool.rank_of(a, new) >= pool.rank_of(a, old) {
                    return Err(violation(
                        k,
                        InvariantRule::Improvement,
                        format!("agent {a} reassigned from {old} to {new} without strict gain"),
                    ));
                }
                let peak = pool.peak_of(a);
                let dir = (peak.0 as i64 - a.0 as i64) * (new.0 as i64 - old.0 as i64);
                if dir <= 0 {
                    return Err(violation(
                        k,
                        InvariantRule::Improvement,
                        format!(
                            "agent {a} (peak {peak}) moved from {old} to {new}, away from its peak"
                        ),
                    ));
                }
            }
        }

        // b[k]: the new submatching is singles and parties
        find_parties(&state)
            .map_err(|e| violation(k, InvariantRule::SinglesAndParties, e.to_string()))?;

        // monotone improvement for everyone still unmatched
        // (weak version; strict part already checked for reassigned agents)
    }

    if !state.unmatched.is_empty() {
        return Err(violation(
            state.k,
            InvariantRule::TraceConsistency,
            format!("trace ended with unmatched agents {:?}", state.unmatched),
        ));
    }
    let final_matching = state.finalized_submatching();
    if final_matching != trace.result {
        return Err(violation(
            state.k,
            InvariantRule::TraceConsistency,
            format!(
                "trace result {} differs from replayed result {}",
                trace.result, final_matching
            ),
        ));
    }

    Ok(TraceCheckReport {
        steps: trace.steps.len(),
        matches,
        reassignments,
    })
}
