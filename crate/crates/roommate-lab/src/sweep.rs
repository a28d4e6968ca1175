//! Parallel property sweeps over enumerated or sampled profile spaces.
//! Work fans out across profiles; results merge deterministically by
//! profile index, so a failing sweep always reports the same first
//! counterexample.

use crate::dating::{check_trace_invariants, run_dating};
use crate::error::{Error, Result};
use crate::marriage::derive_marriage;
use crate::model::{enumerate_matchings, AgentId, Matching, Profile};
use crate::oracles::{
    self, Counterexample, DeviationSet, Mechanism, Property, SweepDomain, SweepMode,
    VerificationReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Properties checkable per profile in a single mechanism sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepProp {
    Sp,
    Ir,
    Eff,
    Stability,
    Lemma2,
    Lemma1,
}

impl SweepProp {
    pub fn parse(s: &str) -> Result<SweepProp> {
        match s {
            "sp" => Ok(SweepProp::Sp),
            "ir" => Ok(SweepProp::Ir),
            "eff" => Ok(SweepProp::Eff),
            "stability" => Ok(SweepProp::Stability),
            "lemma2" => Ok(SweepProp::Lemma2),
            "lemma1" => Ok(SweepProp::Lemma1),
            other => Err(Error::InvalidInput(format!(
                "unknown property `{other}` (expected sp, ir, eff, stability, lemma1, lemma2)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepProp::Sp => "sp",
            SweepProp::Ir => "ir",
            SweepProp::Eff => "eff",
            SweepProp::Stability => "stability",
            SweepProp::Lemma2 => "lemma2",
            SweepProp::Lemma1 => "lemma1",
        }
    }
}

/// One CSV row: a profile and whether every requested per-profile property
/// held there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileRow {
    pub index: u64,
    pub ok: bool,
    pub failed: Option<Property>,
}

/// Outcome of a sweep: one report per property plus optional per-profile
/// rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub mechanism: String,
    pub domain: String,
    pub profiles: u64,
    pub reports: Vec<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<ProfileRow>>,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.verdict)
    }

    pub fn first_counterexample(&self) -> Option<&Counterexample> {
        self.reports
            .iter()
            .find(|r| !r.verdict)
            .and_then(|r| r.counterexamples.first())
    }
}

fn profile_indices(dom: &SweepDomain, mode: SweepMode) -> Result<Vec<u64>> {
    use rand::SeedableRng;
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
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count)
                .map(|_| rand::Rng::random_range(&mut rng, 0..total))
                .collect())
        }
    }
}

struct ProfileOutcome {
    index: u64,
    failure: Option<(Property, Counterexample)>,
}

/// Sweeps per-profile properties (ir, eff, stability, lemma2) of a
/// mechanism over the domain, plus strategyproofness if requested. By
/// default each report carries only the first counterexample; `collect_all`
/// keeps every violation for diagnostics.
pub fn sweep_mechanism(
    mechanism: &dyn Mechanism,
    dom: &SweepDomain,
    props: &[SweepProp],
    mode: SweepMode,
    collect_all: bool,
    collect_rows: bool,
) -> Result<SweepSummary> {
    if props.contains(&SweepProp::Lemma1) {
        return Err(Error::InvalidInput(
            "lemma1 is a profile-space sweep without a mechanism; use sweep_embedding_equivalence"
                .into(),
        ));
    }
    let want_trace_check = props.contains(&SweepProp::Lemma2);
    if want_trace_check && mechanism.name() != "dating" {
        return Err(Error::InvalidInput(
            "lemma2 traces are only produced by the dating mechanism".into(),
        ));
    }
    let indices = profile_indices(dom, mode)?;

    let per_profile = |&pidx: &u64| -> Result<ProfileOutcome> {
        let profile = dom.profile_by_index(pidx);
        let (outcome, trace) = if want_trace_check {
            let (m, t) = run_dating(&profile)?;
            (m, Some(t))
        } else {
            (mechanism.apply(&profile)?, None)
        };
        let mut failure = None;
        for prop in props {
            match prop {
                SweepProp::Ir => {
                    if !oracles::is_individually_rational(&outcome, &profile) {
                        failure = Some((
                            Property::IndividualRationality,
                            Counterexample::BadOutcome {
                                profile_index: Some(pidx),
                                profile: profile.to_raw(),
                                outcome: outcome.clone(),
                                dominator: None,
                                blocking: vec![],
                            },
                        ));
                    }
                }
                SweepProp::Eff => {
                    let feasible = oracles::feasible_matchings(&profile)?;
                    if let Some(dominator) = feasible
                        .iter()
                        .find(|o| oracles::pareto_dominates(o, &outcome, &profile))
                    {
                        failure = Some((
                            Property::Efficiency,
                            Counterexample::BadOutcome {
                                profile_index: Some(pidx),
                                profile: profile.to_raw(),
                                outcome: outcome.clone(),
                                dominator: Some(dominator.clone()),
                                blocking: vec![],
                            },
                        ));
                    }
                }
                SweepProp::Stability => {
                    let blocking = oracles::blocking_pairs(&outcome, &profile);
                    if !blocking.is_empty()
                        || !oracles::is_individually_rational(&outcome, &profile)
                    {
                        failure = Some((
                            Property::Stability,
                            Counterexample::BadOutcome {
                                profile_index: Some(pidx),
                                profile: profile.to_raw(),
                                outcome: outcome.clone(),
                                dominator: None,
                                blocking,
                            },
                        ));
                    }
                }
                SweepProp::Lemma2 => {
                    let trace = trace.as_ref().expect("trace requested");
                    if let Err(Error::InvariantViolation { step, rule, detail }) =
                        check_trace_invariants(trace, &profile)
                    {
                        failure = Some((
                            Property::TraceInvariants,
                            Counterexample::TraceViolation {
                                profile_index: Some(pidx),
                                profile: profile.to_raw(),
                                step,
                                rule,
                                detail,
                            },
                        ));
                    }
                }
                SweepProp::Sp | SweepProp::Lemma1 => {}
            }
            if failure.is_some() {
                break;
            }
        }
        Ok(ProfileOutcome {
            index: pidx,
            failure,
        })
    };

    let outcomes: Vec<ProfileOutcome> = indices
        .par_iter()
        .map(per_profile)
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for prop in props {
        let property = match prop {
            SweepProp::Ir => Property::IndividualRationality,
            SweepProp::Eff => Property::Efficiency,
            SweepProp::Stability => Property::Stability,
            SweepProp::Lemma2 => Property::TraceInvariants,
            SweepProp::Sp | SweepProp::Lemma1 => continue,
        };
        let keep = if collect_all { usize::MAX } else { 1 };
        let counterexamples: Vec<Counterexample> = outcomes
            .iter()
            .filter_map(|o| match &o.failure {
                Some((p, c)) if *p == property => Some(c.clone()),
                _ => None,
            })
            .take(keep)
            .collect();
        reports.push(VerificationReport {
            property,
            mechanism: mechanism.name().to_string(),
            domain: dom.describe(),
            verdict: counterexamples.is_empty(),
            profiles_checked: indices.len() as u64,
            cases_checked: indices.len() as u64,
            counterexamples,
        });
    }

    if props.contains(&SweepProp::Sp) {
        reports.push(oracles::test_strategyproofness(
            mechanism,
            dom,
            mode,
            DeviationSet::Declared,
            collect_all,
        )?);
    }

    let rows = collect_rows.then(|| {
        let mut rows: Vec<ProfileRow> = outcomes
            .iter()
            .map(|o| ProfileRow {
                index: o.index,
                ok: o.failure.is_none(),
                failed: o.failure.as_ref().map(|(p, _)| *p),
            })
            .collect();
        rows.sort_by_key(|r| r.index);
        rows
    });

    Ok(SweepSummary {
        mechanism: mechanism.name().to_string(),
        domain: dom.describe(),
        profiles: indices.len() as u64,
        reports,
        rows,
    })
}

/// Checks one (profile, matching) pair of the embedding equivalence sweep;
/// returns a human-readable mismatch description on failure.
fn embedding_mismatch(profile: &Profile, market: &Profile, m: &Matching) -> Result<Option<String>> {
    let r_ir = oracles::is_individually_rational(m, profile);
    let in_sigma = m
        .pairs()
        .iter()
        .all(|&(a, b)| market.gender_of(a) != market.gender_of(b));

    // individually rational roommate matchings respect the derived genders
    if r_ir && !in_sigma {
        return Ok(Some(
            "individually rational but pairs agents of one derived gender".into(),
        ));
    }
    if !in_sigma {
        // outside the marriage matching set nothing further is claimed,
        // but such a matching can never be individually rational or stable
        if oracles::is_stable(m, profile) {
            return Ok(Some("stable despite a same-gender pair".into()));
        }
        return Ok(None);
    }

    let m_ir = oracles::is_individually_rational(m, market);
    if r_ir != m_ir {
        return Ok(Some(format!(
            "individual rationality differs: roommate {r_ir}, marriage {m_ir}"
        )));
    }
    let r_stable = oracles::is_stable(m, profile);
    let m_stable = oracles::is_stable(m, market);
    if r_stable != m_stable {
        return Ok(Some(format!(
            "stability differs: roommate {r_stable}, marriage {m_stable}"
        )));
    }
    let r_ir_eff = r_ir && oracles::is_efficient(m, profile)?;
    let m_ir_eff = m_ir && oracles::is_efficient(m, market)?;
    if r_ir_eff != m_ir_eff {
        return Ok(Some(format!(
            "IR+efficiency differs: roommate {r_ir_eff}, marriage {m_ir_eff}"
        )));
    }
    Ok(None)
}

/// For every profile of the domain and every matching, the roommate-side
/// and derived-marriage-side verdicts (gender feasibility given IR,
/// individual rationality, stability, IR plus efficiency) must agree.
pub fn sweep_embedding_equivalence(
    dom: &SweepDomain,
    mode: SweepMode,
) -> Result<VerificationReport> {
    if dom.domain() != crate::model::Domain::SpRoommate {
        return Err(Error::Domain(
            "embedding equivalence is defined for single-peaked roommate profiles".into(),
        ));
    }
    let indices = profile_indices(dom, mode)?;
    let carrier: Vec<AgentId> = (1..=dom.n()).map(AgentId).collect();
    let matchings = enumerate_matchings(&carrier);

    let check = |&pidx: &u64| -> Result<Option<Counterexample>> {
        let profile = dom.profile_by_index(pidx);
        let market = derive_marriage(&profile)?;
        for m in &matchings {
            if let Some(detail) = embedding_mismatch(&profile, &market, m)? {
                return Ok(Some(Counterexample::Mismatch {
                    profile_index: Some(pidx),
                    profile: profile.to_raw(),
                    matching: m.clone(),
                    detail,
                }));
            }
        }
        Ok(None)
    };

    let first = indices
        .par_iter()
        .map(check)
        .find_map_first(|r| r.transpose());
    let counterexamples = match first {
        None => Vec::new(),
        Some(Ok(c)) => vec![c],
        Some(Err(e)) => return Err(e),
    };

    Ok(VerificationReport {
        property: Property::EmbeddingEquivalence,
        mechanism: "derive_marriage".into(),
        domain: dom.describe(),
        verdict: counterexamples.is_empty(),
        profiles_checked: indices.len() as u64,
        cases_checked: indices.len() as u64 * matchings.len() as u64,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::Dating;

    #[test]
    fn dating_sweep_n3_all_properties_hold() {
        let dom = SweepDomain::sp_roommate(3);
        let summary = sweep_mechanism(
            &Dating,
            &dom,
            &[
                SweepProp::Ir,
                SweepProp::Eff,
                SweepProp::Lemma2,
                SweepProp::Sp,
            ],
            SweepMode::Exhaustive,
            false,
            true,
        )
        .unwrap();
        assert!(summary.passed());
        assert_eq!(summary.profiles, 64);
        let rows = summary.rows.as_ref().unwrap();
        assert_eq!(rows.len(), 64);
        assert!(rows.iter().all(|r| r.ok));
    }

    #[test]
    fn embedding_equivalence_holds_up_to_n3() {
        for n in 1..=3u32 {
            let dom = SweepDomain::sp_roommate(n);
            let report = sweep_embedding_equivalence(&dom, SweepMode::Exhaustive).unwrap();
            assert!(report.verdict, "n={n}");
        }
    }

    #[test]
    fn stable_selection_is_not_strategyproof_at_n4() {
        use crate::marriage::Side;
        use crate::mechanisms::DaEmbed;
        let dom = SweepDomain::sp_roommate(4);
        let report = oracles::test_strategyproofness(
            &DaEmbed(Side::Women),
            &dom,
            SweepMode::Exhaustive,
            DeviationSet::Declared,
            false,
        )
        .unwrap();
        assert!(!report.passed());
        // the witness replays: the deviation really does pay
        let Counterexample::Manipulation {
            profile,
            agent,
            deviation,
            truthful_outcome,
            deviated_outcome,
            ..
        } = &report.counterexamples[0]
        else {
            panic!("expected a manipulation witness");
        };
        let p = crate::model::validate_profile(profile).unwrap();
        let pref = p.pref(*agent);
        assert!(pref
            .prefers(
                deviated_outcome.partner_of(*agent).unwrap(),
                truthful_outcome.partner_of(*agent).unwrap()
            )
            .unwrap());
        assert!(!deviation.is_empty());
    }

    #[test]
    fn lemma2_with_non_dating_mechanism_is_rejected() {
        let dom = SweepDomain::sp_roommate(3);
        let always_id = ("always-id", |p: &Profile| {
            Ok(Matching::identity(&p.agents().collect::<Vec<_>>()))
        });
        assert!(matches!(
            sweep_mechanism(
                &always_id,
                &dom,
                &[SweepProp::Lemma2],
                SweepMode::Exhaustive,
                false,
                false
            ),
            Err(Error::InvalidInput(_))
        ));
    }
}
