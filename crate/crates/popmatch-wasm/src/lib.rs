//! Browser bindings for the matching library: parse a preference profile,
//! inspect its popular / minimal-envy structure, replay the exchange walk and
//! run the random-exchange market. Every entry point takes plain text and
//! returns a JSON string with an `ok` flag, so the page needs no bindings
//! beyond strings and numbers.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use popmatch::exchange::{self, ExchangeResult};
use popmatch::instances::{self, Instance};
use popmatch::mem;
use popmatch::oracle;
use popmatch::popularity;
use popmatch::problem::Matching;
use popmatch::sim::{self, SimConfig, SimOutcome};

const MOST_POPULAR_WITNESS_CAP: usize = 100;

#[derive(Serialize)]
struct ErrorBody {
    ok: bool,
    error: String,
}

fn error_json(message: impl Into<String>) -> String {
    serde_json::to_string(&ErrorBody {
        ok: false,
        error: message.into(),
    })
    .expect("error body serializes")
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| error_json(format!("serialization: {e}")))
}

fn parse_instance(problem_text: &str) -> Result<Instance, String> {
    instances::parse_problem(problem_text).map_err(|e| e.to_string())
}

fn parse_start(start_text: &str, instance: &Instance) -> Result<Matching, String> {
    let trimmed = start_text.trim();
    if trimmed.is_empty() || trimmed == "empty" {
        Ok(Matching::empty(&instance.problem))
    } else {
        instances::parse_matching(trimmed, instance).map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct MostPopularWitness {
    subset: Vec<String>,
    matching: String,
}

#[derive(Serialize)]
struct OracleBody {
    n_matchings: usize,
    popular: Vec<String>,
    minimal_envy: Vec<String>,
    max_popular_subset: Option<usize>,
    most_popular: Vec<MostPopularWitness>,
    most_popular_truncated: bool,
}

#[derive(Serialize)]
struct AnalyzeBody {
    ok: bool,
    agents: Vec<String>,
    houses: Vec<String>,
    rankings: Vec<Vec<String>>,
    first_house: Vec<String>,
    second_house: Vec<Option<String>>,
    mem_matching: String,
    mem_is_popular: bool,
    oracle: Option<OracleBody>,
    oracle_skipped: Option<String>,
}

/// Classification, the minimal-envy algorithm's output, and (on small
/// instances) the exhaustive popular / minimal-envy / most-popular sets.
#[wasm_bindgen]
pub fn analyze(problem_text: &str) -> String {
    let instance = match parse_instance(problem_text) {
        Ok(i) => i,
        Err(e) => return error_json(e),
    };
    let p = &instance.problem;
    let cls = popmatch::HouseClassification::new(p);
    let mem_trace = mem::run(p);
    let oracle_report = match oracle::report(
        p,
        &oracle::ReportOptions {
            with_most_popular: p.n_agents() <= oracle::DEFAULT_SUBSET_LIMIT,
            ..oracle::ReportOptions::default()
        },
    ) {
        Ok(report) => Some(report),
        Err(oracle::OracleError::InstanceTooLarge { .. }) => None,
        Err(e) => return error_json(e.to_string()),
    };
    let oracle_body = oracle_report.map(|report| {
        let most = report.most_popular.as_ref();
        let witnesses: Vec<MostPopularWitness> = most
            .map(|mp| {
                mp.witnesses
                    .iter()
                    .take(MOST_POPULAR_WITNESS_CAP)
                    .map(|(m, subset)| MostPopularWitness {
                        subset: subset
                            .iter()
                            .map(|&a| instance.agent_label(a).to_string())
                            .collect(),
                        matching: instance.format_matching(m),
                    })
                    .collect()
            })
            .unwrap_or_default();
        OracleBody {
            n_matchings: report.n_matchings,
            popular: report
                .popular
                .iter()
                .map(|m| instance.format_matching(m))
                .collect(),
            minimal_envy: report
                .minimal_envy
                .iter()
                .map(|m| instance.format_matching(m))
                .collect(),
            max_popular_subset: report.max_popular_subset_size(),
            most_popular_truncated: most
                .is_some_and(|mp| mp.witnesses.len() > MOST_POPULAR_WITNESS_CAP),
            most_popular: witnesses,
        }
    });
    let oracle_skipped = if oracle_body.is_none() {
        Some(format!(
            "instance has more than {} agents; exhaustive sets skipped",
            oracle::DEFAULT_LIMIT
        ))
    } else {
        None
    };
    let body = AnalyzeBody {
        ok: true,
        agents: instance.agent_labels.clone(),
        houses: instance.house_labels.clone(),
        rankings: p
            .agents()
            .map(|i| {
                p.ranking(i)
                    .iter()
                    .map(|&h| instance.house_label(h).to_string())
                    .collect()
            })
            .collect(),
        first_house: p
            .agents()
            .map(|i| instance.house_label(cls.first_house(i)).to_string())
            .collect(),
        second_house: p
            .agents()
            .map(|i| {
                cls.second_house(i)
                    .map(|h| instance.house_label(h).to_string())
            })
            .collect(),
        mem_is_popular: popularity::is_popular(p, &mem_trace.final_matching),
        mem_matching: instance.format_matching(&mem_trace.final_matching),
        oracle: oracle_body,
        oracle_skipped,
    };
    to_json(&body)
}

#[derive(Serialize)]
struct WalkStep {
    index: usize,
    kind: String,
    line: String,
    after: String,
}

#[derive(Serialize)]
struct WalkBody {
    ok: bool,
    result: String,
    start: String,
    steps: Vec<WalkStep>,
    final_matching: String,
    loop_evidence: Option<String>,
    step_bound: usize,
}

/// The two-phase exchange walk from a starting matching (empty text for the
/// all-unmatched start); returns every intermediate matching.
#[wasm_bindgen]
pub fn exchange_walk(problem_text: &str, start_text: &str) -> String {
    let instance = match parse_instance(problem_text) {
        Ok(i) => i,
        Err(e) => return error_json(e),
    };
    let p = &instance.problem;
    let start = match parse_start(start_text, &instance) {
        Ok(m) => m,
        Err(e) => return error_json(e),
    };
    let outcome = exchange::find_popular_via_exchanges(p, &start);
    let mut current = start.clone();
    let mut steps = Vec::with_capacity(outcome.trace.len());
    for step in &outcome.trace {
        current = exchange::apply_step(p, &current, step);
        steps.push(WalkStep {
            index: step.index,
            kind: step.kind.token().to_string(),
            line: instance.format_step(step),
            after: instance.format_matching(&current),
        });
    }
    let body = WalkBody {
        ok: true,
        result: match outcome.result {
            ExchangeResult::Popular => "popular".into(),
            ExchangeResult::NoPopularMatching => "no-popular-matching".into(),
        },
        start: instance.format_matching(&start),
        steps,
        final_matching: instance.format_matching(&outcome.final_matching),
        loop_evidence: outcome
            .loop_evidence
            .as_ref()
            .map(|m| instance.format_matching(m)),
        step_bound: exchange::step_bound(p.n_agents()),
    };
    to_json(&body)
}

#[derive(Serialize)]
struct MarketBody {
    ok: bool,
    outcome: String,
    steps_taken: u64,
    accepted_exchanges: u64,
    final_matching: String,
    final_is_popular: bool,
    accepted: Vec<WalkStep>,
    accepted_truncated: bool,
}

/// One seeded run of the random-exchange market.
#[wasm_bindgen]
pub fn market(
    problem_text: &str,
    start_text: &str,
    seed: u32,
    max_steps: u32,
    max_group: u32,
) -> String {
    const TRACE_CAP: usize = 200;
    let instance = match parse_instance(problem_text) {
        Ok(i) => i,
        Err(e) => return error_json(e),
    };
    let p = &instance.problem;
    let start = match parse_start(start_text, &instance) {
        Ok(m) => m,
        Err(e) => return error_json(e),
    };
    if max_group < 2 {
        return error_json("max group size must be at least 2");
    }
    if max_steps == 0 {
        return error_json("step budget must be positive");
    }
    let cfg = SimConfig {
        max_group_size: max_group as usize,
        max_steps: max_steps as u64,
        seed: seed as u64,
        record_trace: true,
    };
    let result = sim::simulate(p, &start, &cfg);
    let trace = result.trace.as_deref().unwrap_or(&[]);
    let mut current = start;
    let mut accepted = Vec::new();
    for step in trace {
        current = exchange::apply_step(p, &current, step);
        if accepted.len() < TRACE_CAP {
            accepted.push(WalkStep {
                index: step.index,
                kind: step.kind.token().to_string(),
                line: instance.format_step(step),
                after: instance.format_matching(&current),
            });
        }
    }
    let body = MarketBody {
        ok: true,
        outcome: match result.outcome {
            SimOutcome::Converged => "converged".into(),
            SimOutcome::StepBudgetExhausted => "exhausted".into(),
        },
        steps_taken: result.steps_taken,
        accepted_exchanges: result.accepted_exchanges,
        final_is_popular: popularity::is_popular(p, &result.final_matching),
        final_matching: instance.format_matching(&result.final_matching),
        accepted_truncated: trace.len() > TRACE_CAP,
        accepted,
    };
    to_json(&body)
}
