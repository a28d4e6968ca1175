//! Named fixture profiles used across the test suite and exported by the
//! CLI. The data lives in code so the tests cannot drift from it.

use crate::error::{Error, Result};
use crate::model::{AgentId, Domain, Gender, Matching, Profile};
use serde::Serialize;

/// A replacement ranking for one agent.
#[derive(Clone, Debug, Serialize)]
pub struct Deviation {
    pub label: String,
    pub agent: AgentId,
    pub ranking: Vec<AgentId>,
}

/// Expected stable set at the base profile or after applying some of the
/// fixture's deviations.
#[derive(Clone, Debug, Serialize)]
pub struct StableSetExpectation {
    /// Labels of the deviations to apply first; empty means the base profile.
    pub after: Vec<String>,
    pub stable: Vec<Matching>,
}

/// A named scenario: profile, optional deviations, and the frozen expected
/// values the suite asserts against.
#[derive(Clone, Debug, Serialize)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub profile: Profile,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<Deviation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_matching: Option<Matching>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub expected_stable_sets: Vec<StableSetExpectation>,
}

impl Fixture {
    /// Applies the deviations with the given labels to the base profile.
    pub fn profile_after(&self, labels: &[&str]) -> Result<Profile> {
        let mut p = self.profile.clone();
        for label in labels {
            let dev = self
                .deviations
                .iter()
                .find(|d| d.label == *label)
                .ok_or_else(|| Error::UnknownFixture(format!("{}:{label}", self.name)))?;
            p = p.deviate(dev.agent, dev.ranking.clone())?;
        }
        Ok(p)
    }

    pub fn deviation(&self, label: &str) -> Result<&Deviation> {
        self.deviations
            .iter()
            .find(|d| d.label == label)
            .ok_or_else(|| Error::UnknownFixture(format!("{}:{label}", self.name)))
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
    .expect("fixture matchings are valid")
}

fn six_agent_profile(pref3: &[u32], pref4: &[u32]) -> Profile {
    Profile::from_rankings(
        Domain::SpRoommate,
        None,
        &[
            &[6, 5, 4, 3, 2, 1],
            &[6, 5, 4, 3, 2, 1],
            pref3,
            pref4,
            &[1, 2, 3, 4, 5, 6],
            &[1, 2, 3, 4, 5, 6],
        ],
    )
    .expect("six-agent fixture profiles are valid")
}

/// Names of all fixtures, in the order `fixtures list` prints them.
pub fn fixture_names() -> &'static [&'static str] {
    &["appB_a", "appB_b", "appB_c", "prop2a", "prop2b", "prop3"]
}

/// Loads a fixture by name.
pub fn load_fixture(name: &str) -> Result<Fixture> {
    match name {
        "appB_a" => Ok(Fixture {
            name: "appB_a".into(),
            description: "six agents; the ends pull toward the middle while agents 3 and 4 \
                          both peak at 2; dating leaves 4 and 6 single"
                .into(),
            profile: six_agent_profile(&[2, 3, 4, 1, 5, 6], &[2, 3, 4, 1, 5, 6]),
            deviations: vec![],
            expected_matching: Some(matching(&[(1, 5), (2, 3)], &[4, 6])),
            expected_stable_sets: vec![],
        }),
        "appB_b" => Ok(Fixture {
            name: "appB_b".into(),
            description: "six agents split into three rising and three falling; dating pairs \
                          them across the middle in three steps of reassignment"
                .into(),
            profile: six_agent_profile(&[6, 5, 4, 3, 2, 1], &[1, 2, 3, 4, 5, 6]),
            deviations: vec![],
            expected_matching: Some(matching(&[(1, 4), (2, 5), (3, 6)], &[])),
            expected_stable_sets: vec![],
        }),
        "appB_c" => Ok(Fixture {
            name: "appB_c".into(),
            description: "six agents where 3 and 4 top each other with self second; they pair \
                          off early and the rest cross over"
                .into(),
            profile: six_agent_profile(&[4, 3, 5, 6, 2, 1], &[3, 4, 2, 1, 5, 6]),
            deviations: vec![],
            expected_matching: Some(matching(&[(1, 5), (2, 6), (3, 4)], &[])),
            expected_stable_sets: vec![],
        }),
        "prop2a" => {
            let mu = matching(&[(1, 4), (2, 3)], &[]);
            let mu_prime = matching(&[(1, 3), (2, 4)], &[]);
            Ok(Fixture {
                name: "prop2a".into(),
                description: "four-agent profile with exactly two stable matchings; agents 4 \
                              and 2 each hold a deviation that kills the stable matching they \
                              dislike, so no stable selection is manipulation-proof"
                    .into(),
                profile: Profile::from_rankings(
                    Domain::SpRoommate,
                    None,
                    &[&[4, 3, 2, 1], &[3, 4, 2, 1], &[1, 2, 3, 4], &[2, 1, 3, 4]],
                )
                .expect("prop2a profile is valid"),
                deviations: vec![
                    Deviation {
                        label: "dev2".into(),
                        agent: AgentId(2),
                        ranking: ids(&[3, 2, 1, 4]),
                    },
                    Deviation {
                        label: "dev4".into(),
                        agent: AgentId(4),
                        ranking: ids(&[2, 3, 4, 1]),
                    },
                ],
                expected_matching: None,
                // stable sets listed in canonical matching order
                expected_stable_sets: vec![
                    StableSetExpectation {
                        after: vec![],
                        stable: vec![mu_prime.clone(), mu.clone()],
                    },
                    StableSetExpectation {
                        after: vec!["dev4".into()],
                        stable: vec![mu_prime],
                    },
                    StableSetExpectation {
                        after: vec!["dev2".into()],
                        stable: vec![mu],
                    },
                ],
            })
        }
        "prop2b" => {
            use Gender::{M, W};
            Ok(Fixture {
                name: "prop2b".into(),
                description: "two-men/two-women market with exactly two matchings that are \
                              individually rational and efficient; walking each woman (or each \
                              man) to a ranking that puts their assigned partner below self \
                              forces everyone single, which efficiency forbids"
                    .into(),
                profile: Profile::from_rankings(
                    Domain::Marriage,
                    Some(vec![M, M, W, W]),
                    &[&[4, 3, 1], &[3, 4, 2], &[1, 2, 3], &[2, 1, 4]],
                )
                .expect("prop2b market is valid"),
                deviations: vec![
                    Deviation {
                        label: "dev3".into(),
                        agent: AgentId(3),
                        ranking: ids(&[1, 3, 2]),
                    },
                    Deviation {
                        label: "dev4".into(),
                        agent: AgentId(4),
                        ranking: ids(&[2, 4, 1]),
                    },
                    Deviation {
                        label: "dev1".into(),
                        agent: AgentId(1),
                        ranking: ids(&[4, 1, 3]),
                    },
                    Deviation {
                        label: "dev2".into(),
                        agent: AgentId(2),
                        ranking: ids(&[3, 2, 4]),
                    },
                ],
                expected_matching: None,
                expected_stable_sets: vec![StableSetExpectation {
                    after: vec![],
                    stable: vec![
                        matching(&[(1, 3), (2, 4)], &[]),
                        matching(&[(1, 4), (2, 3)], &[]),
                    ],
                }],
            })
        }
        "prop3" => Ok(Fixture {
            name: "prop3".into(),
            description: "three agents in a cycle, each topping the next; every agent's suitor \
                          argument forces a partner, but some agent must end up single"
                .into(),
            profile: Profile::from_rankings(
                Domain::GrandRoommate,
                None,
                &[&[2, 3, 1], &[3, 1, 2], &[1, 2, 3]],
            )
            .expect("prop3 profile is valid"),
            deviations: vec![],
            expected_matching: None,
            expected_stable_sets: vec![],
        }),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}
