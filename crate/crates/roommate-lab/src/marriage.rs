//! The direction-as-gender embedding: a single-peaked roommate profile maps
//! to a marriage market where agents wanting a higher-indexed partner are
//! the women and the rest are the men. Individual rationality, stability,
//! and efficiency transfer between the two sides, which is what makes
//! deferred acceptance usable for these roommate problems.

use crate::dating::{run_pool, Pool};
use crate::error::{Error, Result};
use crate::model::{validate_profile, AgentId, Domain, Gender, Matching, Profile, RawProfile};

/// Which side proposes in deferred acceptance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Men,
    Women,
}

/// Derives the marriage market of a single-peaked roommate profile: agents
/// whose peak is weakly below themselves become men, those whose peak lies
/// strictly above become women, and each preference is restricted to the
/// other gender plus self with the order preserved.
pub fn derive_marriage(profile: &Profile) -> Result<Profile> {
    if profile.domain() != Domain::SpRoommate {
        return Err(Error::Domain(format!(
            "marriage derivation needs an sp_roommate profile, got {}",
            profile.domain().as_str()
        )));
    }
    let n = profile.n();
    let genders: Vec<Gender> = profile
        .agents()
        .map(|a| {
            if profile.pref(a).peak() <= a {
                Gender::M
            } else {
                Gender::W
            }
        })
        .collect();
    let prefs: Vec<Vec<u32>> = profile
        .agents()
        .map(|a| {
            let own = genders[a.idx()];
            let keep: Vec<AgentId> = profile
                .agents()
                .filter(|&b| b == a || genders[b.idx()] != own)
                .collect();
            profile
                .pref(a)
                .restrict(&keep)
                .iter()
                .map(|x| x.0)
                .collect()
        })
        .collect();
    validate_profile(&RawProfile {
        n,
        domain: Domain::Marriage,
        genders: Some(genders),
        prefs,
    })
}

fn split_by_gender(profile: &Profile) -> Result<(Vec<AgentId>, Vec<AgentId>)> {
    if profile.domain() != Domain::Marriage {
        return Err(Error::Domain(format!(
            "expected a marriage profile, got {}",
            profile.domain().as_str()
        )));
    }
    let mut men = Vec::new();
    let mut women = Vec::new();
    for a in profile.agents() {
        match profile.gender_of(a).expect("marriage profile has genders") {
            Gender::M => men.push(a),
            Gender::W => women.push(a),
        }
    }
    Ok((men, women))
}

/// Classic deferred acceptance with singles allowed: proposers walk down
/// their ranking but never past themselves, receivers hold the best
/// acceptable proposal so far. Output is the proposer-optimal stable
/// matching of the market.
pub fn deferred_acceptance(profile: &Profile, proposing: Side) -> Result<Matching> {
    let (men, women) = split_by_gender(profile)?;
    let proposers = match proposing {
        Side::Men => men,
        Side::Women => women,
    };
    let n = profile.n();
    let mut next_choice: Vec<usize> = vec![0; n as usize];
    // engaged[r.idx()] = current proposer held by receiver r
    let mut engaged: Vec<Option<AgentId>> = vec![None; n as usize];
    let mut free: Vec<AgentId> = proposers.clone();

    'outer: while !free.is_empty() {
        // lowest-index free proposer first; the outcome does not depend on
        // this, but traces and tests do
        free.sort();
        let p = free.remove(0);
        let pref = profile.pref(p);
        let self_rank = pref.rank(p).expect("marriage rankings include self");
        while next_choice[p.idx()] < pref.ranking().len() {
            let target = pref.ranking()[next_choice[p.idx()]];
            next_choice[p.idx()] += 1;
            if target == p || pref.rank(target).unwrap() > self_rank {
                // rather stay single than continue down the list
                continue 'outer;
            }
            let tpref = profile.pref(target);
            let t_self = tpref.rank(target).unwrap();
            let offer = tpref.rank(p).unwrap();
            if offer > t_self {
                continue; // proposer unacceptable to the receiver
            }
            match engaged[target.idx()] {
                None => {
                    engaged[target.idx()] = Some(p);
                    continue 'outer;
                }
                Some(held) => {
                    if offer < tpref.rank(held).unwrap() {
                        engaged[target.idx()] = Some(p);
                        free.push(held);
                        continue 'outer;
                    }
                }
            }
        }
    }

    let mut pairs = Vec::new();
    let mut matched: Vec<bool> = vec![false; n as usize];
    for a in profile.agents() {
        if let Some(p) = engaged[a.idx()] {
            pairs.push((p.min(a), p.max(a)));
            matched[a.idx()] = true;
            matched[p.idx()] = true;
        }
    }
    let singles: Vec<AgentId> = profile.agents().filter(|a| !matched[a.idx()]).collect();
    Matching::new(pairs, singles)
}

/// Stable matching for a single-peaked roommate profile via the marriage
/// embedding: derive the market, run deferred acceptance, read the result
/// back (agent ids are preserved, so no translation is needed).
pub fn stable_roommate_via_embedding(profile: &Profile, proposing: Side) -> Result<Matching> {
    let market = derive_marriage(profile)?;
    deferred_acceptance(&market, proposing)
}

/// The two dating pools of a single-peaked marriage market: men looking
/// weakly upward join the women looking downward, and vice versa.
pub fn d_prime_pools(profile: &Profile) -> Result<(Vec<AgentId>, Vec<AgentId>)> {
    let (men, women) = split_by_gender(profile)?;
    let up = |a: AgentId| profile.pref(a).peak() >= a;
    let pool1 = men
        .iter()
        .copied()
        .filter(|&m| up(m))
        .chain(women.iter().copied().filter(|&w| !up(w)))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let pool2 = men
        .iter()
        .copied()
        .filter(|&m| !up(m))
        .chain(women.iter().copied().filter(|&w| up(w)))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((pool1, pool2))
}

/// Dating adapted to marriage markets with single-peaked preferences: split
/// the market into the two pools above, run dating in each pool on the
/// restricted preferences, and return the union. Members of the other pool
/// and of the same gender are simply absent from a pool ranking, which the
/// engine treats as worse than staying single.
pub fn d_prime(profile: &Profile) -> Result<Matching> {
    let (pool1, pool2) = d_prime_pools(profile)?;
    for a in profile.agents() {
        if !profile.pref(a).is_single_peaked() {
            return Err(Error::Domain(format!(
                "agent {a}'s marriage ranking is not single-peaked on its ground set"
            )));
        }
    }

    let mut pairs = Vec::new();
    let mut singles = Vec::new();
    for pool_members in [&pool1, &pool2] {
        if pool_members.is_empty() {
            continue;
        }
        let pool = Pool::from_rankings(
            profile.n(),
            pool_members
                .iter()
                .map(|&a| (a, profile.pref(a).restrict(pool_members))),
        );
        let (m, _) = run_pool(&pool, false)?;
        pairs.extend(m.pairs().iter().copied());
        singles.extend(m.singles().iter().copied());
    }
    Matching::new(pairs, singles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    fn ids(v: &[u32]) -> Vec<AgentId> {
        v.iter().map(|&x| AgentId(x)).collect()
    }

    fn matching(pairs: &[(u32, u32)], singles: &[u32]) -> Matching {
        Matching::new(
            pairs
                .iter()
                .map(|&(a, b)| (AgentId(a), AgentId(b)))
                .collect(),
            singles.iter().map(|&s| AgentId(s)).collect(),
        )
        .unwrap()
    }

    fn two_stable_profile() -> Profile {
        Profile::from_rankings(
            Domain::SpRoommate,
            None,
            &[&[4, 3, 2, 1], &[3, 4, 2, 1], &[1, 2, 3, 4], &[2, 1, 3, 4]],
        )
        .unwrap()
    }

    #[test]
    fn gender_rule_splits_by_peak_direction() {
        let market = derive_marriage(&two_stable_profile()).unwrap();
        assert_eq!(market.gender_of(AgentId(1)), Some(Gender::W));
        assert_eq!(market.gender_of(AgentId(2)), Some(Gender::W));
        assert_eq!(market.gender_of(AgentId(3)), Some(Gender::M));
        assert_eq!(market.gender_of(AgentId(4)), Some(Gender::M));
        // restrictions keep the original order
        assert_eq!(market.pref(AgentId(1)).ranking(), ids(&[4, 3, 1]));
        assert_eq!(market.pref(AgentId(2)).ranking(), ids(&[3, 4, 2]));
        assert_eq!(market.pref(AgentId(3)).ranking(), ids(&[1, 2, 3]));
        assert_eq!(market.pref(AgentId(4)).ranking(), ids(&[2, 1, 4]));
    }

    #[test]
    fn self_peaked_agents_are_all_men() {
        let p = Profile::from_rankings(
            Domain::SpRoommate,
            None,
            &[&[1, 2, 3], &[2, 1, 3], &[3, 2, 1]],
        )
        .unwrap();
        let market = derive_marriage(&p).unwrap();
        assert!(p.agents().all(|a| market.gender_of(a) == Some(Gender::M)));
    }

    #[test]
    fn six_agent_example_splits_three_three() {
        let p = Profile::from_rankings(
            Domain::SpRoommate,
            None,
            &[
                &[6, 5, 4, 3, 2, 1],
                &[6, 5, 4, 3, 2, 1],
                &[6, 5, 4, 3, 2, 1],
                &[1, 2, 3, 4, 5, 6],
                &[1, 2, 3, 4, 5, 6],
                &[1, 2, 3, 4, 5, 6],
            ],
        )
        .unwrap();
        let market = derive_marriage(&p).unwrap();
        for a in [1, 2, 3] {
            assert_eq!(market.gender_of(AgentId(a)), Some(Gender::W));
        }
        for a in [4, 5, 6] {
            assert_eq!(market.gender_of(AgentId(a)), Some(Gender::M));
        }
    }

    #[test]
    fn deferred_acceptance_both_sides_on_the_two_stable_market() {
        let market = derive_marriage(&two_stable_profile()).unwrap();
        let women = deferred_acceptance(&market, Side::Women).unwrap();
        assert_eq!(women, matching(&[(1, 4), (2, 3)], &[]));
        let men = deferred_acceptance(&market, Side::Men).unwrap();
        assert_eq!(men, matching(&[(1, 3), (2, 4)], &[]));
        for m in [&women, &men] {
            assert!(oracles::is_stable(m, &market));
        }
    }

    #[test]
    fn deferred_acceptance_everyone_tops_self() {
        use Gender::{M, W};
        let market =
            Profile::from_rankings(Domain::Marriage, Some(vec![M, W]), &[&[1, 2], &[2, 1]])
                .unwrap();
        let m = deferred_acceptance(&market, Side::Men).unwrap();
        assert_eq!(m, Matching::identity(&ids(&[1, 2])));
    }

    #[test]
    fn embedding_gives_a_roommate_stable_matching() {
        let p = two_stable_profile();
        for side in [Side::Women, Side::Men] {
            let m = stable_roommate_via_embedding(&p, side).unwrap();
            assert!(oracles::is_stable(&m, &p), "side {side:?}");
        }
    }

    #[test]
    fn embedding_of_all_self_peaked_profile_is_identity() {
        let p = Profile::from_rankings(
            Domain::SpRoommate,
            None,
            &[&[1, 2, 3], &[2, 1, 3], &[3, 2, 1]],
        )
        .unwrap();
        for side in [Side::Women, Side::Men] {
            let m = stable_roommate_via_embedding(&p, side).unwrap();
            assert_eq!(m, Matching::identity(&ids(&[1, 2, 3])));
        }
    }

    #[test]
    fn d_prime_pools_split_by_own_direction() {
        let market = derive_marriage(&two_stable_profile()).unwrap();
        let (pool1, pool2) = d_prime_pools(&market).unwrap();
        // all men look down, all women look up: first pool empty
        assert!(pool1.is_empty());
        assert_eq!(pool2, ids(&[1, 2, 3, 4]));
        let m = d_prime(&market).unwrap();
        assert!(oracles::is_individually_rational(&m, &market));
        assert!(oracles::is_efficient(&m, &market).unwrap());
        assert!(oracles::is_feasible(&m, &market));
    }

    #[test]
    fn d_prime_single_pool_when_everyone_points_inward() {
        use Gender::{M, W};
        // men 1,3 want up, women 2,4 want down: one pool holds everyone
        let market = Profile::from_rankings(
            Domain::Marriage,
            Some(vec![M, W, M, W]),
            &[&[2, 4, 1], &[1, 2, 3], &[4, 3, 2], &[3, 4, 1]],
        )
        .unwrap();
        let (pool1, pool2) = d_prime_pools(&market).unwrap();
        assert_eq!(pool1, ids(&[1, 2, 3, 4]));
        assert!(pool2.is_empty());
        let m = d_prime(&market).unwrap();
        assert_eq!(m, matching(&[(1, 2), (3, 4)], &[]));
    }

    #[test]
    fn d_prime_never_pairs_same_gender_or_across_pools() {
        use Gender::{M, W};
        let dom = oracles::SweepDomain::sp_marriage(vec![M, W, M, W]);
        for pidx in 0..dom.profile_count() {
            let market = dom.profile_by_index(pidx);
            let m = d_prime(&market).unwrap();
            assert!(m.is_full(4));
            let (pool1, pool2) = d_prime_pools(&market).unwrap();
            for &(a, b) in m.pairs() {
                assert_ne!(market.gender_of(a), market.gender_of(b));
                assert_eq!(pool1.contains(&a), pool1.contains(&b));
                assert_eq!(pool2.contains(&a), pool2.contains(&b));
            }
        }
    }

    #[test]
    fn d_prime_rejects_non_single_peaked_markets() {
        use Gender::{M, W};
        let market = Profile::from_rankings(
            Domain::Marriage,
            Some(vec![M, M, W, W]),
            &[&[4, 3, 1], &[3, 4, 2], &[1, 3, 2], &[2, 1, 4]],
        )
        .unwrap();
        assert!(matches!(d_prime(&market), Err(Error::Domain(_))));
    }
}
