//! Command-line front door: run mechanisms on profile files, emit traces,
//! drive verification sweeps, export fixtures, and search mechanism space.
//!
//! Exit codes: 0 success, 1 property failure or unexpected search verdict,
//! 2 usage or input error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use roommate_lab::dating::run_dating;
use roommate_lab::error::Error;
use roommate_lab::fixtures::{fixture_names, load_fixture};
use roommate_lab::marriage::{derive_marriage, Side};
use roommate_lab::mechanisms::{DPair, DPrime, DTilde, DaEmbed, Dating};
use roommate_lab::model::{
    enumerate_matchings, enumerate_single_peaked, validate_profile, AgentId, Domain, Matching,
    Profile, RawProfile,
};
use roommate_lab::oracles::{self, Mechanism, SweepDomain, SweepMode};
use roommate_lab::search::{replay_proof_chain, search_mechanism, ChainFixture, SearchVerdict};
use roommate_lab::sweep::{sweep_embedding_equivalence, sweep_mechanism, SweepProp, SweepSummary};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "roommate-lab",
    about = "Matching mechanisms for roommate problems on a line, with exhaustive verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MechName {
    Dating,
    DTilde,
    DPair,
    DPrime,
    DaEmbed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Proposers {
    Women,
    Men,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Sp,
    Grand,
    Pair,
}

#[derive(Args)]
struct RunArgs {
    /// Profile JSON file; `-` reads stdin.
    #[arg(long, conflicts_with = "fixture")]
    input: Option<PathBuf>,
    /// Use a named fixture profile instead of a file.
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long, value_enum, default_value = "dating")]
    mech: MechName,
    /// Also print the step trace (dating only).
    #[arg(long)]
    trace: bool,
    /// Append oracle verdicts (IR, efficiency, stability) for the output.
    #[arg(long)]
    verify: bool,
    /// Proposing side for the embedding mechanism.
    #[arg(long, value_enum, default_value = "women")]
    proposers: Proposers,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "dating")]
    mech: MechName,
    /// Agent count of the swept domain.
    #[arg(long)]
    n: u32,
    /// Comma-separated properties: sp,ir,eff,stability,lemma1,lemma2.
    #[arg(long, default_value = "sp,ir,eff")]
    props: String,
    /// exhaustive or sample (sample requires --seed and --count).
    #[arg(long, default_value = "exhaustive")]
    mode: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<u64>,
    /// Collect every violation instead of stopping at the first.
    #[arg(long)]
    all: bool,
    /// Worker threads for the sweep (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism on one profile.
    Run(RunArgs),
    /// Run the dating mechanism and print its step trace.
    Trace {
        #[arg(long, conflicts_with = "fixture")]
        input: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
    },
    /// Verify properties over an enumerated or sampled profile space.
    Sweep(SweepArgs),
    /// List or show the named fixture profiles.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
    /// Search for a strategyproof, individually rational, efficient
    /// mechanism table over a whole three-agent domain.
    Impossibility {
        #[arg(long, default_value = "3")]
        n: u32,
        #[arg(long, value_enum)]
        domain: DomainArg,
        /// Wall-clock budget in seconds (env ROOMMATE_LAB_BUDGET_SECS also applies).
        #[arg(long)]
        budget_seconds: Option<u64>,
        /// Also replay the forced-step arguments on the named fixtures.
        #[arg(long)]
        chains: bool,
    },
    /// Enumerate preference menus or matchings.
    Enumerate {
        #[command(subcommand)]
        what: EnumerateWhat,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    List,
    Show {
        name: String,
        /// Print only the profile, ready to feed back into `run --input`.
        #[arg(long)]
        profile_only: bool,
    },
}

#[derive(Subcommand)]
enum EnumerateWhat {
    /// Strict single-peaked orders over {1..n}.
    Prefs {
        #[arg(long)]
        n: u32,
    },
    /// Involutions on {1..n}.
    Matchings {
        #[arg(long)]
        n: u32,
    },
}

fn load_profile(input: &Option<PathBuf>, fixture: &Option<String>) -> Result<Profile, Error> {
    let raw: RawProfile = match (input, fixture) {
        (Some(path), None) => {
            let text = if path.as_os_str() == "-" {
                use std::io::Read;
                let mut buf = String::new();
                std::io::stdin()
                    .read_to_string(&mut buf)
                    .map_err(|e| Error::InvalidInput(format!("stdin: {e}")))?;
                buf
            } else {
                std::fs::read_to_string(path)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
            };
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("bad JSON: {e}")))?
        }
        (None, Some(name)) => load_fixture(name)?.profile.to_raw(),
        _ => {
            return Err(Error::InvalidInput(
                "provide exactly one of --input or --fixture".into(),
            ))
        }
    };
    validate_profile(&raw)
}

fn mechanism_for(mech: MechName, proposers: Proposers) -> Box<dyn Mechanism> {
    match mech {
        MechName::Dating => Box::new(Dating),
        MechName::DTilde => Box::new(DTilde),
        MechName::DPair => Box::new(DPair),
        MechName::DPrime => Box::new(DPrime),
        MechName::DaEmbed => Box::new(DaEmbed(match proposers {
            Proposers::Women => Side::Women,
            Proposers::Men => Side::Men,
        })),
    }
}

fn expected_domain(mech: MechName) -> Domain {
    match mech {
        MechName::Dating | MechName::DTilde | MechName::DaEmbed => Domain::SpRoommate,
        MechName::DPair => Domain::SpPair,
        MechName::DPrime => Domain::Marriage,
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let profile = load_profile(&args.input, &args.fixture)?;
    let want = expected_domain(args.mech);
    if profile.domain() != want {
        return Err(Error::Domain(format!(
            "mechanism expects a {} profile, input is {}",
            want.as_str(),
            profile.domain().as_str()
        )));
    }
    if args.trace && args.mech != MechName::Dating {
        return Err(Error::InvalidInput(
            "--trace is only available for dating".into(),
        ));
    }

    let mech = mechanism_for(args.mech, args.proposers);
    let (outcome, trace) = if args.trace {
        let (m, t) = run_dating(&profile)?;
        (m, Some(t))
    } else {
        (mech.apply(&profile)?, None)
    };

    let verdicts = if args.verify {
        Some(serde_json::json!({
            "individually_rational": oracles::is_individually_rational(&outcome, &profile),
            "efficient": oracles::is_efficient(&outcome, &profile)?,
            "stable": oracles::is_stable(&outcome, &profile),
            "blocking_pairs": oracles::blocking_pairs(&outcome, &profile),
        }))
    } else {
        None
    };

    match args.format {
        OutputFormat::Json => {
            let mut obj = serde_json::json!({
                "mechanism": mech.name(),
                "matching": outcome,
            });
            if args.mech == MechName::DaEmbed {
                // the derived market, gender vector included
                obj["market"] = serde_json::to_value(derive_marriage(&profile)?).unwrap();
            }
            if let Some(t) = &trace {
                obj["trace"] = serde_json::to_value(t).unwrap();
            }
            if let Some(v) = &verdicts {
                obj["verify"] = v.clone();
            }
            println!("{}", serde_json::to_string(&obj).unwrap());
        }
        _ => {
            println!("{outcome}");
            if let Some(t) = &trace {
                for s in &t.steps {
                    let event = if s.matched.is_empty() {
                        format!(
                            "reassign {}",
                            s.reassigned
                                .iter()
                                .map(|r| format!(
                                    "[l={} party=({:?},{:?}) r={}]",
                                    r.l, r.party_left, r.party_right, r.r
                                ))
                                .collect::<Vec<_>>()
                                .join(" ")
                        )
                    } else {
                        format!(
                            "match {}",
                            s.matched
                                .iter()
                                .map(|(a, b)| if a == b {
                                    format!("({a})")
                                } else {
                                    format!("({a},{b})")
                                })
                                .collect::<Vec<_>>()
                                .join(" ")
                        )
                    };
                    println!(
                        "step {}: up={:?} down={:?} stuck={:?} -> {event}",
                        s.k, s.up, s.down, s.stuck
                    );
                }
            }
            if let Some(v) = &verdicts {
                println!("verify: {v}");
            }
        }
    }

    if let Some(v) = verdicts {
        let ok = v["individually_rational"].as_bool().unwrap() && v["efficient"].as_bool().unwrap();
        if !ok {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn domain_for_sweep(mech: MechName, n: u32) -> Result<SweepDomain, Error> {
    Ok(match expected_domain(mech) {
        Domain::SpRoommate => SweepDomain::sp_roommate(n),
        Domain::SpPair => SweepDomain::sp_pair(n),
        Domain::Marriage => {
            if !n.is_multiple_of(2) {
                return Err(Error::InvalidInput(
                    "marriage sweeps need an even agent count".into(),
                ));
            }
            // first half men, second half women
            let genders = (1..=n)
                .map(|i| {
                    if i <= n / 2 {
                        roommate_lab::model::Gender::M
                    } else {
                        roommate_lab::model::Gender::W
                    }
                })
                .collect();
            SweepDomain::sp_marriage(genders)
        }
        Domain::GrandRoommate => unreachable!("no CLI mechanism runs on the grand domain"),
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let mode = match args.mode.as_str() {
        "exhaustive" => SweepMode::Exhaustive,
        "sample" => {
            let seed = args
                .seed
                .ok_or_else(|| Error::InvalidInput("sample mode requires --seed".into()))?;
            let count = args
                .count
                .ok_or_else(|| Error::InvalidInput("sample mode requires --count".into()))?;
            SweepMode::Sample { seed, count }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected exhaustive or sample)"
            )))
        }
    };
    let props: Vec<SweepProp> = args
        .props
        .split(',')
        .map(|s| SweepProp::parse(s.trim()))
        .collect::<Result<_, _>>()?;

    if props.contains(&SweepProp::Lemma1) {
        if props.len() != 1 {
            return Err(Error::InvalidInput(
                "lemma1 runs on its own, without a mechanism".into(),
            ));
        }
        let dom = SweepDomain::sp_roommate(args.n);
        let report = sweep_embedding_equivalence(&dom, mode)?;
        match args.format {
            OutputFormat::Json => println!("{}", serde_json::to_string(&report).unwrap()),
            _ => println!(
                "lemma1 over {}: {} ({} profile/matching pairs)",
                report.domain,
                if report.verdict { "pass" } else { "fail" },
                report.cases_checked
            ),
        }
        return Ok(if report.verdict {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }

    let dom = domain_for_sweep(args.mech, args.n)?;
    let mech = mechanism_for(args.mech, Proposers::Women);
    let want_rows = args.format == OutputFormat::Csv;
    let summary = sweep_mechanism(mech.as_ref(), &dom, &props, mode, args.all, want_rows)?;
    print_summary(&summary, args.format);
    Ok(if summary.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn print_summary(summary: &SweepSummary, format: OutputFormat) {
    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string(summary).unwrap()),
        OutputFormat::Csv => {
            println!("profile_index,ok,failed_property");
            for row in summary.rows.as_deref().unwrap_or(&[]) {
                println!(
                    "{},{},{}",
                    row.index,
                    row.ok,
                    row.failed.map(|p| format!("{p:?}")).unwrap_or_default()
                );
            }
        }
        OutputFormat::Text => {
            println!(
                "sweep of {} over {}: {} profiles",
                summary.mechanism, summary.domain, summary.profiles
            );
            for r in &summary.reports {
                println!(
                    "  {:?}: {} ({} cases)",
                    r.property,
                    if r.verdict { "pass" } else { "FAIL" },
                    r.cases_checked
                );
            }
            if let Some(c) = summary.first_counterexample() {
                println!(
                    "  first counterexample: {}",
                    serde_json::to_string(c).unwrap()
                );
            }
        }
    }
}

fn cmd_impossibility(
    n: u32,
    domain: DomainArg,
    budget_seconds: Option<u64>,
    chains: bool,
) -> Result<ExitCode, Error> {
    if chains {
        for fixture in [ChainFixture::Prop2b, ChainFixture::Prop3] {
            let report = replay_proof_chain(fixture)?;
            println!("{}", serde_json::to_string(&report).unwrap());
        }
    }
    let dom = match domain {
        DomainArg::Grand => Domain::GrandRoommate,
        DomainArg::Sp => Domain::SpRoommate,
        DomainArg::Pair => {
            return Err(Error::InvalidInput(
                "search covers the grand and single-peaked roommate domains".into(),
            ))
        }
    };
    let budget = budget_seconds
        .or_else(|| {
            std::env::var("ROOMMATE_LAB_BUDGET_SECS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .map(std::time::Duration::from_secs);
    let result = search_mechanism(n, dom, budget)?;
    println!("{}", serde_json::to_string(&result).unwrap());
    // the grand domain admits no table; the single-peaked domain does
    let as_expected = matches!(
        (&result.verdict, dom),
        (SearchVerdict::Unsat(_), Domain::GrandRoommate)
            | (SearchVerdict::Sat(_), Domain::SpRoommate)
    );
    Ok(if as_expected {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_fixtures(action: FixturesAction) -> Result<ExitCode, Error> {
    match action {
        FixturesAction::List => {
            for name in fixture_names() {
                println!("{name}");
            }
        }
        FixturesAction::Show { name, profile_only } => {
            let fixture = load_fixture(&name)?;
            if profile_only {
                println!("{}", serde_json::to_string(&fixture.profile).unwrap());
            } else {
                println!("{}", serde_json::to_string(&fixture).unwrap());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_enumerate(what: EnumerateWhat) -> Result<ExitCode, Error> {
    match what {
        EnumerateWhat::Prefs { n } => {
            if n > 16 {
                return Err(Error::TooLarge {
                    what: "preference enumeration",
                    requested: n as usize,
                    limit: 16,
                });
            }
            let menus: Vec<Vec<u32>> = enumerate_single_peaked(n)
                .into_iter()
                .map(|r| r.iter().map(|a| a.0).collect())
                .collect();
            println!("{}", serde_json::to_string(&menus).unwrap());
        }
        EnumerateWhat::Matchings { n } => {
            if n > 12 {
                return Err(Error::TooLarge {
                    what: "matching enumeration",
                    requested: n as usize,
                    limit: 12,
                });
            }
            let carrier: Vec<AgentId> = (1..=n).map(AgentId).collect();
            let ms: Vec<Matching> = enumerate_matchings(&carrier);
            println!("{}", serde_json::to_string(&ms).unwrap());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Trace {
            input,
            fixture,
            format,
        } => cmd_run(RunArgs {
            input,
            fixture,
            mech: MechName::Dating,
            trace: true,
            verify: false,
            proposers: Proposers::Women,
            format,
        }),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Fixtures { action } => cmd_fixtures(action),
        Command::Impossibility {
            n,
            domain,
            budget_seconds,
            chains,
        } => cmd_impossibility(n, domain, budget_seconds, chains),
        Command::Enumerate { what } => cmd_enumerate(what),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
