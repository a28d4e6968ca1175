//! Search over entire mechanism tables on small domains. Each profile is a
//! variable whose values are the individually rational and efficient
//! matchings there; truth-telling constraints couple profiles that differ
//! in one agent's ranking. Backtracking with arc-consistency propagation
//! either produces a full table (re-verified by the oracles) or proves that
//! none exists, with an elimination log that replays to the contradiction.
//!
//! The module also contains the two hand-driven forced-step arguments on
//! the named fixtures, which certify the same impossibilities without any
//! search.

use crate::error::{Error, Result};
use crate::fixtures::load_fixture;
use crate::model::{AgentId, Domain, Matching, Profile};
use crate::oracles::{
    self, feasible_matchings, is_individually_rational, pareto_dominates, DeviationSet, Mechanism,
    SweepDomain, SweepMode,
};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::{Duration, Instant};

/// Search effort counters.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: u64,
    pub propagations: u64,
    pub eliminations: u64,
    pub runtime_secs: f64,
}

/// A complete mechanism on a swept domain: one matching index per profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MechanismTable {
    pub domain: String,
    pub n: u32,
    pub matchings: Vec<Matching>,
    /// assignment[profile_index] = index into `matchings`.
    pub assignment: Vec<usize>,
}

/// One value removed from one profile's candidate set, with its reason.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Elimination {
    pub profile: u64,
    pub matching: usize,
    /// The neighboring profile and deviating agent that left the value
    /// without support.
    pub other: u64,
    pub agent: AgentId,
}

/// Why no mechanism exists: the propagation log ending in an empty
/// candidate set (or, in the general case, an exhausted search).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConflictTrace {
    pub eliminations: Vec<Elimination>,
    pub wiped_profile: Option<u64>,
    pub exhausted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SearchVerdict {
    Sat(MechanismTable),
    Unsat(ConflictTrace),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResult {
    pub verdict: SearchVerdict,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn is_sat(&self) -> bool {
        matches!(self.verdict, SearchVerdict::Sat(_))
    }
}

/// Searches for a strategyproof mechanism mapping every profile of the
/// domain to an individually rational and efficient matching. `n` must be 3.
pub fn search_mechanism(n: u32, domain: Domain, budget: Option<Duration>) -> Result<SearchResult> {
    if n != 3 {
        return Err(Error::TooLarge {
            what: "mechanism search",
            requested: n as usize,
            limit: 3,
        });
    }
    let dom = match domain {
        Domain::SpRoommate => SweepDomain::sp_roommate(n),
        Domain::GrandRoommate => SweepDomain::grand_roommate(n),
        other => {
            return Err(Error::Domain(format!(
                "mechanism search covers roommate domains, got {}",
                other.as_str()
            )))
        }
    };
    search_over(&dom, budget)
}

struct Csp {
    /// matchings as dense partner vecs
    partners: Vec<Vec<u32>>,
    /// rank[agent.idx()][menu_idx][partner.idx()]
    rank: Vec<Vec<Vec<u16>>>,
    /// weight of each agent's digit in the profile index
    weights: Vec<u64>,
    menu_sizes: Vec<usize>,
    domains: Vec<Vec<usize>>,
}

impl Csp {
    fn build(dom: &SweepDomain) -> Result<Csp> {
        let n = dom.n();
        let profile_count = dom.profile_count();
        if profile_count > 100_000 {
            return Err(Error::TooLarge {
                what: "mechanism search profile space",
                requested: profile_count as usize,
                limit: 100_000,
            });
        }
        let matchings = feasible_matchings(&dom.profile_by_index(0))?;
        let partners: Vec<Vec<u32>> = matchings.iter().map(|m| m.partner_vec(n)).collect();
        let rank: Vec<Vec<Vec<u16>>> = (1..=n)
            .map(|i| {
                dom.menu(AgentId(i))
                    .iter()
                    .map(|ranking| {
                        let mut row = vec![crate::model::UNRANKED; n as usize];
                        for (pos, a) in ranking.iter().enumerate() {
                            row[a.idx()] = pos as u16;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let menu_sizes: Vec<usize> = (1..=n).map(|i| dom.menu(AgentId(i)).len()).collect();
        let mut weights = vec![1u64; n as usize];
        for i in (0..n as usize - 1).rev() {
            weights[i] = weights[i + 1] * menu_sizes[i + 1] as u64;
        }

        // candidate pre-filter: individually rational and efficient values
        let mut domains = Vec::with_capacity(profile_count as usize);
        for p in 0..profile_count {
            let digits = dom.indices_of(p);
            let rows: Vec<&[u16]> = digits
                .iter()
                .enumerate()
                .map(|(i, &d)| rank[i][d].as_slice())
                .collect();
            let ir = |m: &[u32]| -> bool {
                (0..n as usize).all(|i| {
                    let row = rows[i];
                    row[(m[i] - 1) as usize] <= row[i]
                })
            };
            let dominates = |a: &[u32], b: &[u32]| -> bool {
                if a == b {
                    return false;
                }
                (0..n as usize).all(|i| {
                    let row = rows[i];
                    row[(a[i] - 1) as usize] <= row[(b[i] - 1) as usize]
                })
            };
            let cands: Vec<usize> = (0..partners.len())
                .filter(|&mi| {
                    ir(&partners[mi])
                        && !(0..partners.len()).any(|oi| dominates(&partners[oi], &partners[mi]))
                })
                .collect();
            domains.push(cands);
        }

        Ok(Csp {
            partners,
            rank,
            weights,
            menu_sizes,
            domains,
        })
    }

    fn n(&self) -> usize {
        self.menu_sizes.len()
    }

    fn digit(&self, profile: u64, agent: usize) -> usize {
        (profile / self.weights[agent] % self.menu_sizes[agent] as u64) as usize
    }

    fn neighbors(&self, profile: u64) -> Vec<(u64, usize)> {
        let mut out = Vec::new();
        for agent in 0..self.n() {
            let cur = self.digit(profile, agent);
            let base = profile - cur as u64 * self.weights[agent];
            for alt in 0..self.menu_sizes[agent] {
                if alt != cur {
                    out.push((base + alt as u64 * self.weights[agent], agent));
                }
            }
        }
        out
    }

    /// Joint truth-telling constraint on the values of two profiles that
    /// differ in `agent`'s ranking: deviating must not pay in either
    /// direction.
    fn allowed(&self, p: u64, q: u64, agent: usize, vp: usize, vq: usize) -> bool {
        let row_p = &self.rank[agent][self.digit(p, agent)];
        let row_q = &self.rank[agent][self.digit(q, agent)];
        let partner_p = (self.partners[vp][agent] - 1) as usize;
        let partner_q = (self.partners[vq][agent] - 1) as usize;
        // report q instead of truthful p
        if row_p[partner_q] < row_p[partner_p] {
            return false;
        }
        // report p instead of truthful q
        if row_q[partner_p] < row_q[partner_q] {
            return false;
        }
        true
    }
}

struct Propagator<'a> {
    csp: &'a mut Csp,
    stats: SearchStats,
    /// eliminations at the root level, for the conflict trace
    root_log: Vec<Elimination>,
    /// trail of (profile, value) removed since the last decision mark
    trail: Vec<(u64, usize)>,
    at_root: bool,
    deadline: Option<Instant>,
    started: Instant,
}

enum PropagationOutcome {
    Consistent,
    Wipeout(u64),
}

impl<'a> Propagator<'a> {
    fn check_budget(&self) -> Result<()> {
        if let Some(deadline) = self.deadline {
            if Instant::now() > deadline {
                return Err(Error::BudgetExceeded {
                    elapsed_secs: self.started.elapsed().as_secs_f64(),
                    nodes: self.stats.nodes,
                    propagations: self.stats.propagations,
                });
            }
        }
        Ok(())
    }

    fn remove(&mut self, p: u64, value: usize, other: u64, agent: usize) {
        let dom = &mut self.csp.domains[p as usize];
        if let Some(pos) = dom.iter().position(|&v| v == value) {
            dom.remove(pos);
            self.stats.eliminations += 1;
            if self.at_root {
                self.root_log.push(Elimination {
                    profile: p,
                    matching: value,
                    other,
                    agent: AgentId(agent as u32 + 1),
                });
            } else {
                self.trail.push((p, value));
            }
        }
    }

    /// AC-3 over the whole constraint graph or from a seed queue.
    fn propagate(&mut self, seed: Option<u64>) -> Result<PropagationOutcome> {
        self.check_budget()?;
        let mut queue: VecDeque<(u64, u64, usize)> = VecDeque::new();
        match seed {
            Some(q) => {
                for (p, agent) in self.csp.neighbors(q) {
                    queue.push_back((p, q, agent));
                }
            }
            None => {
                for p in 0..self.csp.domains.len() as u64 {
                    for (q, agent) in self.csp.neighbors(p) {
                        queue.push_back((p, q, agent));
                    }
                }
            }
        }
        while let Some((p, q, agent)) = queue.pop_front() {
            self.stats.propagations += 1;
            if self.stats.propagations.is_multiple_of(4096) {
                self.check_budget()?;
            }
            let values_p = self.csp.domains[p as usize].clone();
            let mut shrunk = false;
            for vp in values_p {
                let supported = self.csp.domains[q as usize]
                    .iter()
                    .any(|&vq| self.csp.allowed(p, q, agent, vp, vq));
                if !supported {
                    self.remove(p, vp, q, agent);
                    shrunk = true;
                }
            }
            if shrunk {
                if self.csp.domains[p as usize].is_empty() {
                    return Ok(PropagationOutcome::Wipeout(p));
                }
                for (x, a2) in self.csp.neighbors(p) {
                    if x != q {
                        queue.push_back((x, p, a2));
                    }
                }
            }
        }
        Ok(PropagationOutcome::Consistent)
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (p, v) = self.trail.pop().unwrap();
            self.csp.domains[p as usize].push(v);
            self.csp.domains[p as usize].sort_unstable();
        }
    }

    /// Depth-first search with propagation, fixed variable order (profile
    /// index) and value order (matching index).
    fn solve(&mut self, var: usize) -> Result<bool> {
        self.check_budget()?;
        let total = self.csp.domains.len();
        let mut var = var;
        while var < total && self.csp.domains[var].len() == 1 {
            var += 1;
        }
        if var == total {
            return Ok(true);
        }
        let values = self.csp.domains[var].clone();
        for v in values {
            self.stats.nodes += 1;
            let mark = self.trail.len();
            let removed: Vec<usize> = self.csp.domains[var]
                .iter()
                .copied()
                .filter(|&x| x != v)
                .collect();
            self.csp.domains[var] = vec![v];
            for x in removed {
                self.trail.push((var as u64, x));
            }
            match self.propagate(Some(var as u64))? {
                PropagationOutcome::Consistent => {
                    if self.solve(var + 1)? {
                        return Ok(true);
                    }
                }
                PropagationOutcome::Wipeout(_) => {}
            }
            self.undo_to(mark);
        }
        Ok(false)
    }
}

/// Runs the table search over an arbitrary swept domain.
pub fn search_over(dom: &SweepDomain, budget: Option<Duration>) -> Result<SearchResult> {
    let started = Instant::now();
    let mut csp = Csp::build(dom)?;
    let matchings = feasible_matchings(&dom.profile_by_index(0))?;
    let mut prop = Propagator {
        csp: &mut csp,
        stats: SearchStats::default(),
        root_log: Vec::new(),
        trail: Vec::new(),
        at_root: true,
        deadline: budget.map(|b| started + b),
        started,
    };

    // pre-filter wipeout: some profile has no IR+efficient matching at all
    // (cannot happen: every profile has at least one efficient IR matching,
    // but guard anyway)
    if let Some(p) = prop.csp.domains.iter().position(|d| d.is_empty()) {
        let mut stats = prop.stats;
        stats.runtime_secs = started.elapsed().as_secs_f64();
        return Ok(SearchResult {
            verdict: SearchVerdict::Unsat(ConflictTrace {
                eliminations: Vec::new(),
                wiped_profile: Some(p as u64),
                exhausted: false,
            }),
            stats,
        });
    }

    let root = prop.propagate(None)?;
    if let PropagationOutcome::Wipeout(p) = root {
        let mut stats = prop.stats;
        stats.runtime_secs = started.elapsed().as_secs_f64();
        return Ok(SearchResult {
            verdict: SearchVerdict::Unsat(ConflictTrace {
                eliminations: std::mem::take(&mut prop.root_log),
                wiped_profile: Some(p),
                exhausted: false,
            }),
            stats,
        });
    }

    prop.at_root = false;
    let sat = prop.solve(0)?;
    let mut stats = prop.stats;
    let root_log = std::mem::take(&mut prop.root_log);
    stats.runtime_secs = started.elapsed().as_secs_f64();

    if !sat {
        return Ok(SearchResult {
            verdict: SearchVerdict::Unsat(ConflictTrace {
                eliminations: root_log,
                wiped_profile: None,
                exhausted: true,
            }),
            stats,
        });
    }

    let assignment: Vec<usize> = csp.domains.iter().map(|d| d[0]).collect();
    let table = MechanismTable {
        domain: dom.describe(),
        n: dom.n(),
        matchings,
        assignment,
    };
    verify_table(&table, dom)?;
    Ok(SearchResult {
        verdict: SearchVerdict::Sat(table),
        stats,
    })
}

/// A mechanism backed by a searched table.
pub struct TableMechanism<'a> {
    pub table: &'a MechanismTable,
    pub dom: &'a SweepDomain,
}

impl Mechanism for TableMechanism<'_> {
    fn name(&self) -> &str {
        "table"
    }
    fn apply(&self, profile: &Profile) -> Result<Matching> {
        let idx = self
            .dom
            .profile_index_of(profile)
            .ok_or_else(|| Error::Domain("profile outside the searched domain".into()))?;
        Ok(self.table.matchings[self.table.assignment[idx as usize]].clone())
    }
}

/// Independent re-verification of a searched table: every assigned matching
/// is individually rational and efficient at its profile, and no agent ever
/// gains from a one-profile deviation.
pub fn verify_table(table: &MechanismTable, dom: &SweepDomain) -> Result<()> {
    for p in 0..dom.profile_count() {
        let profile = dom.profile_by_index(p);
        let m = &table.matchings[table.assignment[p as usize]];
        if !is_individually_rational(m, &profile) {
            return Err(Error::StructureViolation(format!(
                "table assigns a non-IR matching at profile {p}"
            )));
        }
        if !oracles::is_efficient(m, &profile)? {
            return Err(Error::StructureViolation(format!(
                "table assigns an inefficient matching at profile {p}"
            )));
        }
    }
    let mech = TableMechanism { table, dom };
    let report = oracles::test_strategyproofness(
        &mech,
        dom,
        SweepMode::Exhaustive,
        DeviationSet::Declared,
        false,
    )?;
    if !report.passed() {
        return Err(Error::StructureViolation(
            "table admits a profitable deviation".into(),
        ));
    }
    Ok(())
}

/// Replays a conflict trace: re-derives the candidate sets, re-applies each
/// recorded elimination after checking it is forced, and confirms the
/// wipeout. An exhausted trace is replayed by re-running the search.
pub fn replay_conflict(trace: &ConflictTrace, dom: &SweepDomain) -> Result<()> {
    if trace.exhausted {
        let rerun = search_over(dom, None)?;
        return match rerun.verdict {
            SearchVerdict::Unsat(_) => Ok(()),
            SearchVerdict::Sat(_) => Err(Error::StructureViolation(
                "conflict trace claims unsat but a table exists".into(),
            )),
        };
    }
    let mut csp = Csp::build(dom)?;
    for (step, e) in trace.eliminations.iter().enumerate() {
        let supported = csp.domains[e.other as usize]
            .iter()
            .any(|&vq| csp.allowed(e.profile, e.other, e.agent.idx(), e.matching, vq));
        if supported {
            return Err(Error::ChainBroken {
                chain: "conflict-trace".into(),
                step,
                detail: format!(
                    "elimination of value {} at profile {} is not forced",
                    e.matching, e.profile
                ),
            });
        }
        let dom_p = &mut csp.domains[e.profile as usize];
        let Some(pos) = dom_p.iter().position(|&v| v == e.matching) else {
            return Err(Error::ChainBroken {
                chain: "conflict-trace".into(),
                step,
                detail: format!(
                    "value {} at profile {} was already absent",
                    e.matching, e.profile
                ),
            });
        };
        dom_p.remove(pos);
    }
    match trace.wiped_profile {
        Some(p) if csp.domains[p as usize].is_empty() => Ok(()),
        Some(p) => Err(Error::ChainBroken {
            chain: "conflict-trace".into(),
            step: trace.eliminations.len(),
            detail: format!("profile {p} still has candidates after replay"),
        }),
        None => Err(Error::ChainBroken {
            chain: "conflict-trace".into(),
            step: trace.eliminations.len(),
            detail: "trace records no wiped profile".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Forced-step replays on the named fixtures
// ---------------------------------------------------------------------------

/// Which fixture's forced-step argument to replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainFixture {
    Prop2b,
    Prop3,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainStep {
    pub rule: String,
    pub description: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchReport {
    pub assumption: String,
    pub steps: Vec<ChainStep>,
    pub contradiction: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub chain: String,
    pub branches: Vec<BranchReport>,
}

/// Mechanically applies each forced step of the impossibility argument for
/// the chosen fixture and confirms the terminal contradiction.
pub fn replay_proof_chain(fixture: ChainFixture) -> Result<ChainReport> {
    match fixture {
        ChainFixture::Prop3 => replay_prop3(),
        ChainFixture::Prop2b => replay_prop2b(),
    }
}

struct ChainCtx {
    chain: &'static str,
    step: usize,
    steps: Vec<ChainStep>,
}

impl ChainCtx {
    fn new(chain: &'static str) -> ChainCtx {
        ChainCtx {
            chain,
            step: 0,
            steps: Vec::new(),
        }
    }

    fn record(&mut self, rule: &str, description: String) {
        self.steps.push(ChainStep {
            rule: rule.to_string(),
            description,
        });
        self.step += 1;
    }

    fn expect(&mut self, rule: &str, description: String, ok: bool) -> Result<()> {
        if !ok {
            return Err(Error::ChainBroken {
                chain: self.chain.to_string(),
                step: self.step,
                detail: description,
            });
        }
        self.record(rule, description);
        Ok(())
    }
}

/// Partners weakly better than `floor` for `agent` at this profile.
fn weakly_better_set(profile: &Profile, agent: AgentId, floor: AgentId) -> Vec<AgentId> {
    let pref = profile.pref(agent);
    let bound = pref.rank(floor).expect("floor is ranked");
    pref.ranking()
        .iter()
        .copied()
        .filter(|&z| pref.rank(z).unwrap() <= bound)
        .collect()
}

/// Partners weakly worse than `cap` for `agent` at this profile.
fn weakly_worse_set(profile: &Profile, agent: AgentId, cap: AgentId) -> Vec<AgentId> {
    let pref = profile.pref(agent);
    let bound = pref.rank(cap).expect("cap is ranked");
    pref.ranking()
        .iter()
        .copied()
        .filter(|&z| pref.rank(z).unwrap() >= bound)
        .collect()
}

/// Partners weakly above self under the (possibly deviated) preference.
fn ir_allowed(profile: &Profile, agent: AgentId) -> Vec<AgentId> {
    weakly_better_set(profile, agent, agent)
}

fn intersect(a: &[AgentId], b: &[AgentId]) -> Vec<AgentId> {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

fn efficient_subset(candidates: &[Matching], profile: &Profile) -> Result<Vec<Matching>> {
    let mut out = Vec::new();
    for m in candidates {
        if oracles::is_efficient(m, profile)? {
            out.push(m.clone());
        }
    }
    Ok(out)
}

fn replay_prop3() -> Result<ChainReport> {
    let fixture = load_fixture("prop3")?;
    let base = &fixture.profile;
    let mut ctx = ChainCtx::new("prop3");

    // start from the individually rational and efficient candidates
    let mut candidates: Vec<Matching> = feasible_matchings(base)?
        .into_iter()
        .filter(|m| is_individually_rational(m, base))
        .collect();
    candidates = efficient_subset(&candidates, base)?;
    ctx.expect(
        "candidates",
        format!("candidate set at the cyclic profile: {candidates:?}"),
        candidates.len() == 3,
    )?;

    // for every agent j topping a different agent i, truth-telling forces
    // f(base)(i) weakly above j in i's ranking
    for j in base.agents() {
        let i = base.pref(j).peak();
        assert_ne!(i, j, "fixture has no self-peaked agent");
        let k = base
            .agents()
            .find(|&a| a != i && a != j)
            .expect("three agents");

        // q: both i and j announce each other as their only acceptable match
        let q = base.deviate(i, vec![j, i, k])?.deviate(j, vec![i, j, k])?;
        let q_ir: Vec<Matching> = feasible_matchings(&q)?
            .into_iter()
            .filter(|m| is_individually_rational(m, &q))
            .collect();
        let id = Matching::identity(&base.agents().collect::<Vec<_>>());
        let pair_ij = Matching::new(vec![(i.min(j), i.max(j))], vec![k]).unwrap();
        ctx.expect(
            "individual_rationality",
            format!("at the ({i},{j})-insistence profile only {id} and {pair_ij} are individually rational"),
            q_ir.len() == 2 && q_ir.contains(&id) && q_ir.contains(&pair_ij),
        )?;
        let q_eff = efficient_subset(&q_ir, &q)?;
        ctx.expect(
            "efficiency",
            format!("efficiency forces {pair_ij} there"),
            q_eff == vec![pair_ij.clone()],
        )?;

        // p: only i has deviated; j still reports the truth and tops i, so
        // truth-telling forces j to keep i
        let p = base.deviate(i, vec![j, i, k])?;
        let p_forced: Vec<Matching> = feasible_matchings(&p)?
            .into_iter()
            .filter(|m| m.partner_of(j) == Some(i))
            .collect();
        ctx.expect(
            "strategyproofness",
            format!("agent {j} (truthful top {i}) must keep {i} once {i} insists: {pair_ij}"),
            p_forced == vec![pair_ij.clone()],
        )?;

        // back at the base profile, agent i could deviate to p and get j,
        // so truth must already give i something weakly better than j
        let allowed = weakly_better_set(base, i, j);
        let before = candidates.len();
        candidates.retain(|m| allowed.contains(&m.partner_of(i).unwrap()));
        ctx.record(
            "strategyproofness",
            format!(
                "so f(base)({i}) must be weakly better than {j} for {i}: {before} -> {} candidates",
                candidates.len()
            ),
        );
    }

    ctx.expect(
        "contradiction",
        format!(
            "every agent must strictly beat staying single, but someone is always single; \
             remaining candidates: {candidates:?}"
        ),
        candidates.is_empty(),
    )?;

    Ok(ChainReport {
        chain: "prop3".into(),
        branches: vec![BranchReport {
            assumption: "a strategyproof, individually rational, efficient mechanism exists".into(),
            steps: ctx.steps,
            contradiction: "no matching satisfies all three suitor constraints".into(),
        }],
    })
}

fn prop2b_branch(
    base: &Profile,
    assumed: &Matching,
    deviators: [AgentId; 2],
    dev_labels: [&str; 2],
    dominator: &Matching,
) -> Result<BranchReport> {
    let fixture = load_fixture("prop2b")?;
    let mut ctx = ChainCtx::new("prop2b");
    let mut singled: Vec<(AgentId, AgentId)> = Vec::new(); // (agent, partner at single-deviation profile of the other)

    // chains through each single-deviation profile
    for (&x, &label) in deviators.iter().zip(dev_labels.iter()) {
        let y = deviators.iter().copied().find(|&a| a != x).unwrap();
        let dev = fixture.deviation(label)?;
        assert_eq!(dev.agent, x);
        let p1 = base.deviate(x, dev.ranking.clone())?;

        // had the lie paid, x would use it at the true profile
        let sp = weakly_worse_set(base, x, assumed.partner_of(x).unwrap());
        ctx.record(
            "strategyproofness",
            format!("agent {x} may not gain by announcing `{label}`: partners {sp:?}"),
        );
        let ir = ir_allowed(&p1, x);
        let both = intersect(&sp, &ir);
        ctx.expect(
            "individual_rationality",
            format!(
                "intersecting with partners acceptable under `{label}` ({ir:?}) leaves {both:?}"
            ),
            both == vec![x],
        )?;

        let feasible: Vec<Matching> = feasible_matchings(&p1)?
            .into_iter()
            .filter(|m| m.partner_of(x) == Some(x))
            .collect();
        ctx.expect(
            "feasibility",
            format!("matchings keeping {x} single: {feasible:?}"),
            feasible.len() == 3,
        )?;
        let eff = efficient_subset(&feasible, &p1)?;
        ctx.expect(
            "efficiency",
            format!("efficiency at the deviated profile forces {eff:?}"),
            eff.len() == 1,
        )?;
        let forced = &eff[0];
        let y_partner = forced.partner_of(y).unwrap();
        ctx.record(
            "forced",
            format!("so agent {y} is matched with {y_partner} there"),
        );
        singled.push((y, y_partner));
    }

    // the double-deviation profile: both agents end up single
    let p2 = base
        .deviate(
            deviators[0],
            fixture.deviation(dev_labels[0])?.ranking.clone(),
        )?
        .deviate(
            deviators[1],
            fixture.deviation(dev_labels[1])?.ranking.clone(),
        )?;
    for &(y, y_partner) in &singled {
        let label = dev_labels[deviators.iter().position(|&a| a == y).unwrap()];
        let sp = weakly_worse_set(base, y, y_partner);
        let ir = ir_allowed(&p2, y);
        let both = intersect(&sp, &ir);
        ctx.expect(
            "strategyproofness",
            format!(
                "agent {y} (capped at {y_partner}, announcing `{label}`) must stay single: {both:?}"
            ),
            both == vec![y],
        )?;
    }
    let id = Matching::identity(&base.agents().collect::<Vec<_>>());
    let feasible_both_single: Vec<Matching> = feasible_matchings(&p2)?
        .into_iter()
        .filter(|m| {
            m.partner_of(deviators[0]) == Some(deviators[0])
                && m.partner_of(deviators[1]) == Some(deviators[1])
        })
        .collect();
    ctx.expect(
        "feasibility",
        format!("with both deviators single only {id} remains"),
        feasible_both_single == vec![id.clone()],
    )?;
    ctx.expect(
        "efficiency",
        format!("{dominator} improves on everyone-single at the double-deviation profile"),
        pareto_dominates(dominator, &id, &p2) && !oracles::is_efficient(&id, &p2)?,
    )?;

    Ok(BranchReport {
        assumption: format!("f maps the base market to {assumed}"),
        steps: ctx.steps,
        contradiction: "the forced everyone-single outcome is inefficient".into(),
    })
}

fn replay_prop2b() -> Result<ChainReport> {
    let fixture = load_fixture("prop2b")?;
    let base = &fixture.profile;
    let mu = Matching::new(
        vec![(AgentId(1), AgentId(4)), (AgentId(2), AgentId(3))],
        vec![],
    )
    .unwrap();
    let mu_prime = Matching::new(
        vec![(AgentId(1), AgentId(3)), (AgentId(2), AgentId(4))],
        vec![],
    )
    .unwrap();

    // the mechanism must pick one of the two IR+efficient matchings
    let ir: Vec<Matching> = feasible_matchings(base)?
        .into_iter()
        .filter(|m| is_individually_rational(m, base))
        .collect();
    let ir_eff = efficient_subset(&ir, base)?;
    if !(ir_eff.len() == 2 && ir_eff.contains(&mu) && ir_eff.contains(&mu_prime)) {
        return Err(Error::ChainBroken {
            chain: "prop2b".into(),
            step: 0,
            detail: format!("expected exactly two candidate matchings, found {ir_eff:?}"),
        });
    }

    let branch_mu = prop2b_branch(
        base,
        &mu,
        [AgentId(4), AgentId(3)],
        ["dev4", "dev3"],
        &mu_prime,
    )?;
    let branch_mu_prime = prop2b_branch(
        base,
        &mu_prime,
        [AgentId(1), AgentId(2)],
        ["dev1", "dev2"],
        &mu,
    )?;

    Ok(ChainReport {
        chain: "prop2b".into(),
        branches: vec![branch_mu, branch_mu_prime],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::all_rankings_over;

    #[test]
    fn grand_domain_search_is_unsat_with_replayable_trace() {
        let result = search_mechanism(3, Domain::GrandRoommate, None).unwrap();
        let SearchVerdict::Unsat(trace) = &result.verdict else {
            panic!("expected unsat, got a table");
        };
        assert!(!trace.exhausted, "root propagation should already wipe out");
        assert!(trace.wiped_profile.is_some());
        assert!(!trace.eliminations.is_empty());
        let dom = SweepDomain::grand_roommate(3);
        replay_conflict(trace, &dom).unwrap();
    }

    #[test]
    fn single_peaked_domain_search_is_sat_and_verified() {
        let result = search_mechanism(3, Domain::SpRoommate, None).unwrap();
        let SearchVerdict::Sat(table) = &result.verdict else {
            panic!("expected a table, got unsat");
        };
        assert_eq!(table.assignment.len(), 64);
        // search_over already re-verified; do it once more from here
        let dom = SweepDomain::sp_roommate(3);
        verify_table(table, &dom).unwrap();
    }

    #[test]
    fn restricted_no_self_top_orbit_still_unsat() {
        // grand domain cut down to rankings whose top is another agent: the
        // cyclic profile and its insistence deviations all live here
        let menus: Vec<Vec<Vec<AgentId>>> = (1..=3u32)
            .map(|i| {
                all_rankings_over(&(1..=3).map(AgentId).collect::<Vec<_>>())
                    .into_iter()
                    .filter(|r| r[0] != AgentId(i))
                    .collect()
            })
            .collect();
        let dom = SweepDomain::custom(Domain::GrandRoommate, None, menus);
        assert_eq!(dom.profile_count(), 64);
        let result = search_over(&dom, None).unwrap();
        let SearchVerdict::Unsat(trace) = &result.verdict else {
            panic!("expected unsat on the restricted orbit");
        };
        replay_conflict(trace, &dom).unwrap();
    }

    #[test]
    fn search_effort_is_deterministic() {
        let a = search_mechanism(3, Domain::GrandRoommate, None).unwrap();
        let b = search_mechanism(3, Domain::GrandRoommate, None).unwrap();
        assert_eq!(a.stats.nodes, b.stats.nodes);
        assert_eq!(a.stats.propagations, b.stats.propagations);
        assert_eq!(a.stats.eliminations, b.stats.eliminations);
        let a = search_mechanism(3, Domain::SpRoommate, None).unwrap();
        let b = search_mechanism(3, Domain::SpRoommate, None).unwrap();
        assert_eq!(a.stats.nodes, b.stats.nodes);
        assert_eq!(a.stats.propagations, b.stats.propagations);
        let (SearchVerdict::Sat(ta), SearchVerdict::Sat(tb)) = (&a.verdict, &b.verdict) else {
            panic!("expected tables");
        };
        assert_eq!(ta.assignment, tb.assignment);
    }

    #[test]
    fn search_rejects_large_instances() {
        assert!(matches!(
            search_mechanism(4, Domain::GrandRoommate, None),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn prop3_chain_reaches_the_contradiction() {
        let report = replay_proof_chain(ChainFixture::Prop3).unwrap();
        assert_eq!(report.branches.len(), 1);
        let steps = &report.branches[0].steps;
        // one candidate step, then four steps per suitor claim
        assert_eq!(steps.len(), 1 + 3 * 4 + 1);
        assert_eq!(steps.last().unwrap().rule, "contradiction");
    }

    #[test]
    fn prop2b_chain_reaches_both_contradictions() {
        let report = replay_proof_chain(ChainFixture::Prop2b).unwrap();
        assert_eq!(report.branches.len(), 2);
        for branch in &report.branches {
            assert!(branch
                .steps
                .iter()
                .any(|s| s.rule == "efficiency" && s.description.contains("improves")));
        }
    }

    #[test]
    fn budget_exceeded_surfaces_partial_stats() {
        let err = search_mechanism(3, Domain::GrandRoommate, Some(Duration::ZERO)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }
}
