//! Acceptance suite: every certified claim of the project, one criterion
//! per test, each printing a single pass/fail line. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use roommate_lab::dating::{check_trace_invariants, dating_step, run_dating, AlgoState};
use roommate_lab::error::Error;
use roommate_lab::fixtures::load_fixture;
use roommate_lab::marriage::{deferred_acceptance, derive_marriage, Side};
use roommate_lab::mechanisms::{DPair, DPrime, DTilde, DaEmbed, Dating};
use roommate_lab::model::{AgentId, Domain, Gender, Matching, Profile};
use roommate_lab::oracles::{
    self, test_non_dictatorship, test_strategyproofness, DeviationSet, Mechanism, SweepDomain,
    SweepMode,
};
use roommate_lab::search::{
    replay_conflict, replay_proof_chain, search_mechanism, ChainFixture, SearchVerdict,
};
use roommate_lab::sweep::{sweep_embedding_equivalence, sweep_mechanism, SweepProp};

fn criterion<F: FnOnce() -> Result<(), String>>(number: u32, title: &str, body: F) {
    match body() {
        Ok(()) => println!("[acceptance] criterion {number} ({title}): PASS"),
        Err(msg) => {
            println!("[acceptance] criterion {number} ({title}): FAIL - {msg}");
            panic!("criterion {number} ({title}) failed: {msg}");
        }
    }
}

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

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// (finalized pairs, reassigned new pairs) per step, as plain ints.
type StepEvents = Vec<(Vec<(u32, u32)>, Vec<(u32, u32)>)>;

#[test]
fn criterion_1_golden_traces() {
    criterion(1, "golden traces", || {
        let started = std::time::Instant::now();

        // expected final matchings, exact
        let expected = [
            ("appB_a", matching(&[(1, 5), (2, 3)], &[4, 6])),
            ("appB_b", matching(&[(1, 4), (2, 5), (3, 6)], &[])),
            ("appB_c", matching(&[(1, 5), (2, 6), (3, 4)], &[])),
        ];
        for (name, want) in &expected {
            let profile = load_fixture(name).map_err(|e| e.to_string())?.profile;
            let (got, trace) = run_dating(&profile).map_err(|e| e.to_string())?;
            check(got == *want, format!("{name}: got {got}, want {want}"))?;
            check_trace_invariants(&trace, &profile).map_err(|e| format!("{name}: {e}"))?;
        }

        // step-by-step narrative, case a: six steps
        let a = load_fixture("appB_a").unwrap().profile;
        let (_, ta) = run_dating(&a).unwrap();
        let a_events: StepEvents = ta
            .steps
            .iter()
            .map(|s| {
                (
                    s.matched.iter().map(|&(x, y)| (x.0, y.0)).collect(),
                    s.reassigned
                        .iter()
                        .flat_map(|r| r.new_pairs())
                        .map(|(x, y)| (x.0, y.0))
                        .collect(),
                )
            })
            .collect();
        let a_want: StepEvents = vec![
            (vec![], vec![(2, 3)]),
            (vec![(2, 3)], vec![]),
            (vec![(4, 4)], vec![]),
            (vec![], vec![(1, 5)]),
            (vec![(1, 5)], vec![]),
            (vec![(6, 6)], vec![]),
        ];
        check(a_events == a_want, format!("case a events {a_events:?}"))?;

        // case b: the step-2 reassignment yields {(1),(2,4),(3,5),(6)}
        let b = load_fixture("appB_b").unwrap().profile;
        let mut state = AlgoState::initial(&b.agents().collect::<Vec<_>>());
        let (s2, _) = dating_step(&state, &b).map_err(|e| e.to_string())?;
        check(
            s2.current_submatching() == matching(&[(3, 4)], &[1, 2, 5, 6]),
            "case b step 1 should pair the adjacent singles 3 and 4",
        )?;
        state = s2;
        let (s3, rec2) = dating_step(&state, &b).map_err(|e| e.to_string())?;
        check(
            s3.current_submatching() == matching(&[(2, 4), (3, 5)], &[1, 6]),
            format!(
                "case b step 2 must reassign to {{(1),(2,4),(3,5),(6)}}, got {}",
                s3.current_submatching()
            ),
        )?;
        check(
            rec2.reassigned.len() == 1
                && rec2.reassigned[0].l == AgentId(2)
                && rec2.reassigned[0].r == AgentId(5)
                && rec2.reassigned[0].party_left == ids(&[3])
                && rec2.reassigned[0].party_right == ids(&[4]),
            "case b step 2 frames the party {3,4} with singles 2 and 5",
        )?;
        let (_, tb) = run_dating(&b).unwrap();
        check(
            tb.steps.len() == 5,
            format!("case b took {} steps", tb.steps.len()),
        )?;
        check(
            tb.steps[3].matched == vec![(AgentId(1), AgentId(4)), (AgentId(3), AgentId(6))],
            "case b step 4 finalizes (1,4) and (3,6) but not (2,5)",
        )?;
        check(
            tb.steps[4].matched == vec![(AgentId(2), AgentId(5))],
            "case b step 5 finalizes (2,5)",
        )?;

        // case c: agents 3 and 4 finalize at step 2
        let c = load_fixture("appB_c").unwrap().profile;
        let (_, tc) = run_dating(&c).unwrap();
        check(
            tc.steps.len() == 5,
            format!("case c took {} steps", tc.steps.len()),
        )?;
        check(
            tc.steps[1].matched == vec![(AgentId(3), AgentId(4))],
            "case c step 2 finalizes (3,4)",
        )?;

        check(
            started.elapsed() < std::time::Duration::from_secs(1),
            format!("golden traces took {:?}, budget 1s", started.elapsed()),
        )
    });
}

#[test]
fn criterion_2_dating_axioms_exhaustive_n4() {
    criterion(
        2,
        "IR, efficiency, strategyproofness of dating at n=4",
        || {
            let started = std::time::Instant::now();
            let dom = SweepDomain::sp_roommate(4);
            check(dom.profile_count() == 4096, "8^4 single-peaked profiles")?;

            let summary = sweep_mechanism(
                &Dating,
                &dom,
                &[SweepProp::Ir, SweepProp::Eff],
                SweepMode::Exhaustive,
                false,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                summary.passed(),
                format!("IR/efficiency failed: {:?}", summary.first_counterexample()),
            )?;

            let sp = test_strategyproofness(
                &Dating,
                &dom,
                SweepMode::Exhaustive,
                DeviationSet::Declared,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                sp.passed(),
                format!("strategyproofness failed: {:?}", sp.counterexamples.first()),
            )?;
            check(
                sp.cases_checked == 4096 * 4 * 7,
                format!(
                    "expected 4096 x 4 x 7 deviation cases, checked {}",
                    sp.cases_checked
                ),
            )?;

            check(
                started.elapsed() < std::time::Duration::from_secs(10),
                format!("n=4 sweep took {:?}, budget 10s", started.elapsed()),
            )
        },
    );
}

/// Optional larger certification, run explicitly via
/// `cargo test --release --test acceptance -- --ignored criterion_2_optional`.
#[test]
#[ignore = "large sweep; run explicitly in release"]
fn criterion_2_optional_exhaustive_n5() {
    criterion(
        2,
        "IR, efficiency, strategyproofness of dating at n=5",
        || {
            let started = std::time::Instant::now();
            let dom = SweepDomain::sp_roommate(5);
            check(
                dom.profile_count() == 1 << 20,
                "16^5 single-peaked profiles",
            )?;
            let summary = sweep_mechanism(
                &Dating,
                &dom,
                &[SweepProp::Ir, SweepProp::Eff],
                SweepMode::Exhaustive,
                false,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                summary.passed(),
                format!("IR/efficiency failed: {:?}", summary.first_counterexample()),
            )?;
            let sp = test_strategyproofness(
                &Dating,
                &dom,
                SweepMode::Exhaustive,
                DeviationSet::Declared,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                sp.passed(),
                format!("strategyproofness failed: {:?}", sp.counterexamples.first()),
            )?;
            check(
                started.elapsed() < std::time::Duration::from_secs(30 * 60),
                format!("n=5 sweep took {:?}, budget 30min", started.elapsed()),
            )
        },
    );
}

#[test]
fn criterion_3_trace_invariants_n4() {
    criterion(3, "trace invariants at every step of the n=4 sweep", || {
        let dom = SweepDomain::sp_roommate(4);
        let summary = sweep_mechanism(
            &Dating,
            &dom,
            &[SweepProp::Lemma2],
            SweepMode::Exhaustive,
            false,
            false,
        )
        .map_err(|e| e.to_string())?;
        check(
            summary.passed(),
            format!(
                "trace invariants failed: {:?}",
                summary.first_counterexample()
            ),
        )?;
        check(summary.profiles == 4096, "all 4096 traces checked")
    });
}

#[test]
fn criterion_4_embedding_equivalence_n4() {
    criterion(
        4,
        "roommate/marriage verdicts agree on all n=4 profiles",
        || {
            let started = std::time::Instant::now();
            let dom = SweepDomain::sp_roommate(4);
            let report = sweep_embedding_equivalence(&dom, SweepMode::Exhaustive)
                .map_err(|e| e.to_string())?;
            check(
                report.verdict,
                format!("equivalence failed: {:?}", report.counterexamples.first()),
            )?;
            check(
                report.cases_checked == 4096 * 10,
                format!("expected 4096 x 10 pairs, checked {}", report.cases_checked),
            )?;
            check(
                started.elapsed() < std::time::Duration::from_secs(10),
                format!("equivalence sweep took {:?}, budget 10s", started.elapsed()),
            )
        },
    );
}

#[test]
fn criterion_5_deferred_acceptance_stability() {
    criterion(5, "deferred acceptance via the embedding is stable", || {
        // exhaustive at n=4
        let dom = SweepDomain::sp_roommate(4);
        for side in [Side::Women, Side::Men] {
            let summary = sweep_mechanism(
                &DaEmbed(side),
                &dom,
                &[SweepProp::Stability],
                SweepMode::Exhaustive,
                false,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                summary.passed(),
                format!(
                    "stability failed for {side:?}: {:?}",
                    summary.first_counterexample()
                ),
            )?;
        }

        // 10^4 seeded samples at n=8
        let dom8 = SweepDomain::sp_roommate(8);
        let summary = sweep_mechanism(
            &DaEmbed(Side::Women),
            &dom8,
            &[SweepProp::Stability],
            SweepMode::Sample {
                seed: 7,
                count: 10_000,
            },
            false,
            false,
        )
        .map_err(|e| e.to_string())?;
        check(
            summary.passed(),
            format!(
                "n=8 sampled stability failed: {:?}",
                summary.first_counterexample()
            ),
        )?;
        check(summary.profiles == 10_000, "10^4 samples drawn")?;

        // the two-stable fixture pins both deferred-acceptance outputs
        let fixture = load_fixture("prop2a").unwrap();
        let market = derive_marriage(&fixture.profile).map_err(|e| e.to_string())?;
        let women = deferred_acceptance(&market, Side::Women).map_err(|e| e.to_string())?;
        check(
            women == matching(&[(1, 4), (2, 3)], &[]),
            format!("women-proposing gave {women}"),
        )?;
        let men = deferred_acceptance(&market, Side::Men).map_err(|e| e.to_string())?;
        check(
            men == matching(&[(1, 3), (2, 4)], &[]),
            format!("men-proposing gave {men}"),
        )?;
        let stable: Vec<Matching> = oracles::feasible_matchings(&fixture.profile)
            .unwrap()
            .into_iter()
            .filter(|m| oracles::is_stable(m, &fixture.profile))
            .collect();
        check(
            stable == vec![men.clone(), women.clone()],
            format!("stable set is {stable:?}"),
        )
    });
}

#[test]
fn criterion_6_two_stable_fixture_manipulation() {
    criterion(
        6,
        "every stable selection is manipulable on the fixture",
        || {
            let fixture = load_fixture("prop2a").unwrap();
            let base = &fixture.profile;
            let mu = matching(&[(1, 4), (2, 3)], &[]);
            let mu_prime = matching(&[(1, 3), (2, 4)], &[]);

            // stable sets: base {mu', mu}; after dev4 only mu'; after dev2 only mu
            let stable_at = |p: &Profile| -> Vec<Matching> {
                oracles::feasible_matchings(p)
                    .unwrap()
                    .into_iter()
                    .filter(|m| oracles::is_stable(m, p))
                    .collect()
            };
            check(
                stable_at(base) == vec![mu_prime.clone(), mu.clone()],
                "base stable set is exactly {mu, mu'}",
            )?;
            let dev4 = fixture.profile_after(&["dev4"]).unwrap();
            check(
                stable_at(&dev4) == vec![mu_prime.clone()],
                "after agent 4's deviation only mu' survives",
            )?;
            let dev2 = fixture.profile_after(&["dev2"]).unwrap();
            check(
                stable_at(&dev2) == vec![mu.clone()],
                "after agent 2's deviation only mu survives",
            )?;

            // the women-proposing selection picks mu and agent 4 gains by dev4
            let women = DaEmbed(Side::Women);
            let w_base = women.apply(base).unwrap();
            check(
                w_base == mu,
                format!("women-proposing selection gave {w_base}"),
            )?;
            let w_dev = women.apply(&dev4).unwrap();
            check(w_dev == mu_prime, "deviation flips the outcome to mu'")?;
            check(
                base.pref(AgentId(4))
                    .prefers(
                        w_dev.partner_of(AgentId(4)).unwrap(),
                        w_base.partner_of(AgentId(4)).unwrap(),
                    )
                    .unwrap(),
                "agent 4 strictly gains under its true ranking",
            )?;

            // the men-proposing selection picks mu' and agent 2 gains by dev2
            let men = DaEmbed(Side::Men);
            let m_base = men.apply(base).unwrap();
            check(
                m_base == mu_prime,
                format!("men-proposing selection gave {m_base}"),
            )?;
            let m_dev = men.apply(&dev2).unwrap();
            check(m_dev == mu, "deviation flips the outcome to mu")?;
            check(
                base.pref(AgentId(2))
                    .prefers(
                        m_dev.partner_of(AgentId(2)).unwrap(),
                        m_base.partner_of(AgentId(2)).unwrap(),
                    )
                    .unwrap(),
                "agent 2 strictly gains under its true ranking",
            )?;

            // and the generic search finds manipulations for both selections
            let dom = SweepDomain::sp_roommate(4);
            for side in [Side::Women, Side::Men] {
                let report = test_strategyproofness(
                    &DaEmbed(side),
                    &dom,
                    SweepMode::Exhaustive,
                    DeviationSet::Declared,
                    false,
                )
                .map_err(|e| e.to_string())?;
                check(
                    !report.passed(),
                    format!("{side:?}-proposing selection should be manipulable"),
                )?;
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_7_impossibility_search_and_chains() {
    criterion(
        7,
        "proof chains replay; grand search UNSAT, single-peaked SAT",
        || {
            // forced-step replays always run
            let p2b = replay_proof_chain(ChainFixture::Prop2b).map_err(|e| e.to_string())?;
            check(
                p2b.branches.len() == 2,
                "both branches reach the contradiction",
            )?;
            let p3 = replay_proof_chain(ChainFixture::Prop3).map_err(|e| e.to_string())?;
            check(
                p3.branches.len() == 1,
                "the cyclic-profile chain reaches its contradiction",
            )?;

            let budget = std::env::var("ROOMMATE_LAB_BUDGET_SECS")
                .ok()
                .and_then(|s| s.parse().ok())
                .map(std::time::Duration::from_secs)
                .unwrap_or(std::time::Duration::from_secs(600));

            match search_mechanism(3, Domain::GrandRoommate, Some(budget)) {
                Ok(result) => {
                    let SearchVerdict::Unsat(trace) = &result.verdict else {
                        return Err("grand-domain search unexpectedly found a table".into());
                    };
                    let dom = SweepDomain::grand_roommate(3);
                    replay_conflict(trace, &dom).map_err(|e| e.to_string())?;
                }
                Err(Error::BudgetExceeded {
                    elapsed_secs,
                    nodes,
                    propagations,
                }) => {
                    // documented fallback: the replayed chains above carry the result
                    println!(
                    "[acceptance]   grand search hit the budget after {elapsed_secs:.1}s \
                     ({nodes} nodes, {propagations} propagations); falling back to the chain replays"
                );
                }
                Err(e) => return Err(e.to_string()),
            }

            let sp =
                search_mechanism(3, Domain::SpRoommate, Some(budget)).map_err(|e| e.to_string())?;
            let SearchVerdict::Sat(table) = &sp.verdict else {
                return Err("single-peaked search should find a table".into());
            };
            let dom = SweepDomain::sp_roommate(3);
            roommate_lab::search::verify_table(table, &dom).map_err(|e| e.to_string())?;
            Ok(())
        },
    );
}

#[test]
fn criterion_8_alternative_mechanisms() {
    criterion(
        8,
        "alternative mechanisms certified on their domains",
        || {
            let started = std::time::Instant::now();

            // d_tilde on the full n=3 single-peaked domain
            let dom3 = SweepDomain::sp_roommate(3);
            let summary = sweep_mechanism(
                &DTilde,
                &dom3,
                &[SweepProp::Ir, SweepProp::Eff, SweepProp::Sp],
                SweepMode::Exhaustive,
                false,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                summary.passed(),
                format!("d_tilde failed: {:?}", summary.first_counterexample()),
            )?;

            // divergence witness: tops (3,3,1)
            let witness = Profile::from_rankings(
                Domain::SpRoommate,
                None,
                &[&[3, 2, 1], &[3, 2, 1], &[1, 2, 3]],
            )
            .unwrap();
            check(
                DTilde.apply(&witness).unwrap() == matching(&[(1, 3)], &[2]),
                "d_tilde pairs 1 with 3 at the witness profile",
            )?;
            check(
                Dating.apply(&witness).unwrap() == matching(&[(2, 3)], &[1]),
                "dating pairs 2 with 3 at the witness profile",
            )?;

            // d_pair on the full n=4 must-pair single-peaked domain
            let dom_pair = SweepDomain::sp_pair(4);
            check(dom_pair.profile_count() == 256, "4^4 must-pair profiles")?;
            let summary = sweep_mechanism(
                &DPair,
                &dom_pair,
                &[SweepProp::Eff, SweepProp::Sp],
                SweepMode::Exhaustive,
                false,
                false,
            )
            .map_err(|e| e.to_string())?;
            check(
                summary.passed(),
                format!("d_pair failed: {:?}", summary.first_counterexample()),
            )?;
            let nd = test_non_dictatorship(&DPair, &dom_pair, SweepMode::Exhaustive)
                .map_err(|e| e.to_string())?;
            check(nd.passed(), "d_pair is not a dictatorship")?;

            // d_prime on every two-men/two-women single-peaked market
            use Gender::{M, W};
            let mut checked_markets = 0u64;
            for w_pair in [[1, 2], [1, 3], [1, 4], [2, 3], [2, 4], [3, 4]] {
                let genders: Vec<Gender> = (1..=4)
                    .map(|i| if w_pair.contains(&i) { W } else { M })
                    .collect();
                let dom = SweepDomain::sp_marriage(genders);
                let summary = sweep_mechanism(
                    &DPrime,
                    &dom,
                    &[SweepProp::Ir, SweepProp::Eff, SweepProp::Sp],
                    SweepMode::Exhaustive,
                    false,
                    false,
                )
                .map_err(|e| e.to_string())?;
                check(
                    summary.passed(),
                    format!(
                        "d_prime failed with women {w_pair:?}: {:?}",
                        summary.first_counterexample()
                    ),
                )?;
                checked_markets += summary.profiles;
            }
            check(
                checked_markets == 6 * 256,
                format!("expected 6 x 256 markets, checked {checked_markets}"),
            )?;

            check(
                started.elapsed() < std::time::Duration::from_secs(30),
                format!(
                    "mechanism certification took {:?}, budget 30s",
                    started.elapsed()
                ),
            )
        },
    );
}
