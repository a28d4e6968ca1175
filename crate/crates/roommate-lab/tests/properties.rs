//! Property-based and metamorphic tests: random single-peaked profiles
//! through the dating engine and the embedding, plus the order axioms of
//! the preference type.

use proptest::prelude::*;
use roommate_lab::dating::{check_trace_invariants, run_dating};
use roommate_lab::marriage::{stable_roommate_via_embedding, Side};
use roommate_lab::model::{
    enumerate_single_peaked, validate_profile, AgentId, Domain, Matching, Profile, RawProfile,
};
use roommate_lab::oracles::{self, SweepDomain};

fn sp_profile_strategy(max_n: u32) -> impl Strategy<Value = Profile> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let menu = enumerate_single_peaked(n);
            let count = menu.len();
            (Just(n), proptest::collection::vec(0..count, n as usize)).prop_map(
                move |(n, picks)| {
                    let prefs = picks
                        .iter()
                        .map(|&k| menu[k].iter().map(|a| a.0).collect())
                        .collect();
                    validate_profile(&RawProfile {
                        n,
                        domain: Domain::SpRoommate,
                        genders: None,
                        prefs,
                    })
                    .expect("menus are single-peaked")
                },
            )
        })
        .no_shrink()
}

/// Mirrors a profile through the line: agent i becomes n+1-i.
fn mirror_profile(p: &Profile) -> Profile {
    let n = p.n();
    let sigma = |a: AgentId| AgentId(n + 1 - a.0);
    let mut prefs = vec![Vec::new(); n as usize];
    for a in p.agents() {
        prefs[sigma(a).idx()] = p.pref(a).ranking().iter().map(|&x| sigma(x).0).collect();
    }
    validate_profile(&RawProfile {
        n,
        domain: Domain::SpRoommate,
        genders: None,
        prefs,
    })
    .expect("mirror of a single-peaked profile is single-peaked")
}

fn mirror_matching(m: &Matching, n: u32) -> Matching {
    let sigma = |a: AgentId| AgentId(n + 1 - a.0);
    Matching::new(
        m.pairs()
            .iter()
            .map(|&(a, b)| (sigma(a), sigma(b)))
            .collect(),
        m.singles().iter().map(|&s| sigma(s)).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dating_output_is_ir_efficient_and_trace_clean(p in sp_profile_strategy(7)) {
        let (m, trace) = run_dating(&p).unwrap();
        prop_assert!(m.is_full(p.n()));
        prop_assert!(oracles::is_individually_rational(&m, &p));
        prop_assert!(oracles::is_efficient(&m, &p).unwrap());
        let report = check_trace_invariants(&trace, &p).unwrap();
        prop_assert!(report.steps <= (p.n() * p.n()) as usize);
    }

    #[test]
    fn dating_commutes_with_mirroring_the_line(p in sp_profile_strategy(7)) {
        let (m, _) = run_dating(&p).unwrap();
        let (mirrored_out, _) = run_dating(&mirror_profile(&p)).unwrap();
        prop_assert_eq!(mirror_matching(&m, p.n()), mirrored_out);
    }

    #[test]
    fn embedding_output_is_stable_on_random_profiles(p in sp_profile_strategy(7)) {
        for side in [Side::Women, Side::Men] {
            let m = stable_roommate_via_embedding(&p, side).unwrap();
            prop_assert!(oracles::is_stable(&m, &p));
        }
    }

    #[test]
    fn efficiency_routes_agree_on_random_n5_matchings(
        pidx in 0u64..(1 << 20),
        midx in 0usize..26,
    ) {
        let dom = SweepDomain::sp_roommate(5);
        let p = dom.profile_by_index(pidx);
        let m = &oracles::feasible_matchings(&p).unwrap()[midx];
        prop_assert_eq!(
            oracles::is_efficient(m, &p).unwrap(),
            oracles::is_efficient_independent(m, &p).unwrap()
        );
    }

    #[test]
    fn matching_serialization_round_trips(p in sp_profile_strategy(6)) {
        let (m, trace) = run_dating(&p).unwrap();
        let m2: Matching = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(&m2, &m);
        let t2: roommate_lab::dating::Trace =
            serde_json::from_str(&serde_json::to_string(&trace).unwrap()).unwrap();
        prop_assert_eq!(t2, trace);
    }
}

#[test]
fn mirror_metamorphic_exhaustive_n4() {
    let dom = SweepDomain::sp_roommate(4);
    for pidx in 0..dom.profile_count() {
        let p = dom.profile_by_index(pidx);
        let (m, _) = run_dating(&p).unwrap();
        let (mm, _) = run_dating(&mirror_profile(&p)).unwrap();
        assert_eq!(mirror_matching(&m, 4), mm, "profile {pidx}");
    }
}

#[test]
fn preference_order_axioms_exhaustive_n6() {
    let agents: Vec<AgentId> = (1..=6).map(AgentId).collect();
    for ranking in enumerate_single_peaked(6) {
        let prefs: Vec<Vec<u32>> = (0..6)
            .map(|_| ranking.iter().map(|a| a.0).collect())
            .collect();
        let raw = RawProfile {
            n: 6,
            domain: Domain::SpRoommate,
            genders: None,
            prefs,
        };
        let p = validate_profile(&raw).unwrap();
        let pref = p.pref(AgentId(1));
        for &a in &agents {
            assert!(!pref.prefers(a, a).unwrap(), "irreflexive");
            for &b in &agents {
                if a != b {
                    // asymmetric and total
                    assert_ne!(pref.prefers(a, b).unwrap(), pref.prefers(b, a).unwrap());
                }
                for &c in &agents {
                    if pref.prefers(a, b).unwrap() && pref.prefers(b, c).unwrap() {
                        assert!(pref.prefers(a, c).unwrap(), "transitive");
                    }
                }
            }
        }
    }
}

#[test]
fn monotone_improvement_along_every_n3_trace() {
    // replay each trace and watch every unmatched agent's date only ever
    // move weakly up its own ranking
    let dom = SweepDomain::sp_roommate(3);
    for pidx in 0..dom.profile_count() {
        let p = dom.profile_by_index(pidx);
        let (_, trace) = run_dating(&p).unwrap();
        let mut date: std::collections::HashMap<AgentId, AgentId> =
            p.agents().map(|a| (a, a)).collect();
        for step in &trace.steps {
            for rec in &step.reassigned {
                for (a, b) in rec.new_pairs() {
                    let ra_old = p.pref(a).rank(date[&a]).unwrap();
                    let ra_new = p.pref(a).rank(b).unwrap();
                    assert!(ra_new < ra_old, "agent {a} got worse at step {}", step.k);
                    let rb_old = p.pref(b).rank(date[&b]).unwrap();
                    let rb_new = p.pref(b).rank(a).unwrap();
                    assert!(rb_new < rb_old, "agent {b} got worse at step {}", step.k);
                    date.insert(a, b);
                    date.insert(b, a);
                }
            }
            for &(a, b) in &step.matched {
                date.remove(&a);
                date.remove(&b);
            }
        }
        assert!(date.is_empty(), "trace left agents unmatched");
    }
}
