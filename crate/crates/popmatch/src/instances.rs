//! Text formats for problems and matchings, display labels, trace formatting
//! and a seeded random instance generator.
//!
//! Problem files look like:
//!
//! ```text
//! # optional comments
//! agents 4
//! houses a b c d
//! 1: a d b c
//! 2: d b a c
//! 3: a c b d
//! 4: d b c a
//! ```
//!
//! Matching files hold whitespace-separated `agent:house` tokens, with `-`
//! for "no house" (`1:d 2:a 3:b 4:c`). Agents left out stay unmatched.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exchange::ExchangeStep;
use crate::mem::MemTrace;
use crate::problem::{AgentId, HouseId, Matching, MatchingError, Problem, ProblemError};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

fn syntax(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        reason: reason.into(),
    }
}

/// A problem together with its display labels. The solver core only sees
/// dense indices; labels exist for files and reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub problem: Problem,
    pub agent_labels: Vec<String>,
    pub house_labels: Vec<String>,
}

impl Instance {
    /// Labels agents `1..=n` and houses `a`, `b`, ... (`h1`, `h2`, ... past
    /// 26 houses).
    pub fn with_default_labels(problem: Problem) -> Self {
        let agent_labels = (1..=problem.n_agents()).map(|i| i.to_string()).collect();
        let house_labels = (0..problem.n_houses())
            .map(|h| {
                if problem.n_houses() <= 26 {
                    char::from(b'a' + h as u8).to_string()
                } else {
                    format!("h{}", h + 1)
                }
            })
            .collect();
        Instance {
            problem,
            agent_labels,
            house_labels,
        }
    }

    pub fn agent_by_label(&self, label: &str) -> Option<AgentId> {
        self.agent_labels
            .iter()
            .position(|l| l == label)
            .map(AgentId)
    }

    pub fn house_by_label(&self, label: &str) -> Option<HouseId> {
        self.house_labels
            .iter()
            .position(|l| l == label)
            .map(HouseId)
    }

    pub fn agent_label(&self, i: AgentId) -> &str {
        &self.agent_labels[i.0]
    }

    pub fn house_label(&self, h: HouseId) -> &str {
        &self.house_labels[h.0]
    }

    fn slot_label(&self, h: Option<HouseId>) -> &str {
        match h {
            Some(h) => self.house_label(h),
            None => "-",
        }
    }

    /// One `agent:house` token per agent on a single line.
    pub fn format_matching(&self, mu: &Matching) -> String {
        let mut out = String::new();
        for i in self.problem.agents() {
            if i.0 > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}:{}", self.agent_label(i), self.slot_label(mu.house_of(i)));
        }
        out
    }

    /// `step k: kind (agent:old->new, ...)`.
    pub fn format_step(&self, step: &ExchangeStep) -> String {
        let movers = step
            .movers
            .iter()
            .map(|m| {
                format!(
                    "{}:{}->{}",
                    self.agent_label(m.agent),
                    self.slot_label(m.from),
                    self.slot_label(m.to)
                )
            })
            .collect::<Vec<_>>()
            .join(", ");
        format!("step {}: {} ({})", step.index, step.kind.token(), movers)
    }

    pub fn format_exchange_trace(&self, trace: &[ExchangeStep]) -> Vec<String> {
        trace.iter().map(|s| self.format_step(s)).collect()
    }

    /// Per-run lines mirroring the exchange trace format.
    pub fn format_mem_trace(&self, trace: &MemTrace) -> Vec<String> {
        let mut lines = Vec::new();
        for (number, round) in trace.rounds.iter().enumerate() {
            let run = number + 1;
            let pair = |&(a, h): &(AgentId, HouseId)| {
                format!("{}:{}", self.agent_label(a), self.house_label(h))
            };
            if !round.leaf_first.is_empty() {
                lines.push(format!(
                    "run {run}: leaf-first ({})",
                    round.leaf_first.iter().map(pair).collect::<Vec<_>>().join(", ")
                ));
            }
            if !round.leaf_second.is_empty() {
                lines.push(format!(
                    "run {run}: leaf-second ({})",
                    round.leaf_second.iter().map(pair).collect::<Vec<_>>().join(", ")
                ));
            }
            if !round.excluded.is_empty() {
                lines.push(format!(
                    "run {run}: excluded ({})",
                    round
                        .excluded
                        .iter()
                        .map(|&a| self.agent_label(a).to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
            if !round.cycle.is_empty() {
                lines.push(format!(
                    "run {run}: cycle ({})",
                    round.cycle.iter().map(pair).collect::<Vec<_>>().join(", ")
                ));
            }
        }
        lines
    }
}

fn check_label(line: usize, label: &str) -> Result<(), ParseError> {
    if label.is_empty() {
        return Err(syntax(line, "empty label"));
    }
    if label.contains(':') || label.contains('#') {
        return Err(syntax(line, format!("label `{label}` may not contain `:` or `#`")));
    }
    Ok(())
}

/// Parses the problem format above. Comments run from `#` to end of line;
/// blank lines are ignored.
pub fn parse_problem(text: &str) -> Result<Instance, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, raw)| {
            let no_comment = raw.split('#').next().unwrap_or("");
            (idx + 1, no_comment.trim())
        })
        .filter(|(_, content)| !content.is_empty());

    let (line, header) = lines.next().ok_or_else(|| syntax(1, "missing `agents N` header"))?;
    let n_agents: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["agents", count] => count
            .parse()
            .map_err(|_| syntax(line, format!("invalid agent count `{count}`")))?,
        _ => return Err(syntax(line, "expected `agents N`")),
    };

    let (line, houses) = lines
        .next()
        .ok_or_else(|| syntax(line + 1, "missing `houses ...` line"))?;
    let mut tokens = houses.split_whitespace();
    if tokens.next() != Some("houses") {
        return Err(syntax(line, "expected `houses h1 h2 ...`"));
    }
    let house_labels: Vec<String> = tokens.map(str::to_string).collect();
    for label in &house_labels {
        check_label(line, label)?;
    }
    if house_labels.is_empty() {
        return Err(syntax(line, "no houses listed"));
    }
    let mut dedup = house_labels.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != house_labels.len() {
        return Err(syntax(line, "duplicate house label"));
    }

    let mut agent_labels: Vec<String> = Vec::with_capacity(n_agents);
    let mut rankings: Vec<Vec<HouseId>> = Vec::with_capacity(n_agents);
    let mut last_line = line;
    for (line, content) in lines {
        last_line = line;
        if rankings.len() == n_agents {
            return Err(syntax(line, "unexpected content after the last ranking"));
        }
        let (label, rest) = content
            .split_once(':')
            .ok_or_else(|| syntax(line, "expected `label: r1 r2 ...`"))?;
        let label = label.trim();
        check_label(line, label)?;
        if agent_labels.iter().any(|l| l == label) {
            return Err(syntax(line, format!("duplicate agent label `{label}`")));
        }
        let mut ranking = Vec::with_capacity(house_labels.len());
        for token in rest.split_whitespace() {
            let idx = house_labels
                .iter()
                .position(|l| l == token)
                .ok_or_else(|| syntax(line, format!("unknown house `{token}`")))?;
            ranking.push(HouseId(idx));
        }
        agent_labels.push(label.to_string());
        rankings.push(ranking);
    }
    if rankings.len() != n_agents {
        return Err(syntax(
            last_line,
            format!("expected {n_agents} ranking lines, found {}", rankings.len()),
        ));
    }
    let problem = Problem::new(n_agents, house_labels.len(), rankings)?;
    Ok(Instance {
        problem,
        agent_labels,
        house_labels,
    })
}

/// Canonical text for an instance; `parse_problem` inverts it exactly.
pub fn serialize_problem(instance: &Instance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "agents {}", instance.problem.n_agents());
    let _ = writeln!(out, "houses {}", instance.house_labels.join(" "));
    for i in instance.problem.agents() {
        let ranking = instance
            .problem
            .ranking(i)
            .iter()
            .map(|&h| instance.house_label(h))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "{}: {}", instance.agent_label(i), ranking);
    }
    out
}

/// Parses `agent:house` tokens (whitespace-separated, `-` for no house).
/// Unlisted agents stay unmatched; double assignment of an agent or a house
/// is rejected.
pub fn parse_matching(text: &str, instance: &Instance) -> Result<Matching, ParseError> {
    let mut slots: Vec<Option<HouseId>> = vec![None; instance.problem.n_agents()];
    let mut listed = vec![false; instance.problem.n_agents()];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        for token in content.split_whitespace() {
            let (agent, house) = token
                .split_once(':')
                .ok_or_else(|| syntax(line, format!("expected `agent:house`, got `{token}`")))?;
            let a = instance
                .agent_by_label(agent)
                .ok_or_else(|| syntax(line, format!("unknown agent `{agent}`")))?;
            if listed[a.0] {
                return Err(syntax(line, format!("agent `{agent}` listed twice")));
            }
            listed[a.0] = true;
            slots[a.0] = if house == "-" {
                None
            } else {
                Some(
                    instance
                        .house_by_label(house)
                        .ok_or_else(|| syntax(line, format!("unknown house `{house}`")))?,
                )
            };
        }
    }
    Ok(Matching::new(&instance.problem, slots)?)
}

pub fn serialize_matching(instance: &Instance, mu: &Matching) -> String {
    instance.format_matching(mu)
}

/// A problem whose rankings are independent uniform permutations, fixed per
/// seed (ChaCha8 keyed by the seed).
pub fn random_problem(n_agents: usize, n_houses: usize, seed: u64) -> Result<Problem, ProblemError> {
    if n_houses < n_agents {
        return Err(ProblemError::HouseCountBelowAgentCount {
            agents: n_agents,
            houses: n_houses,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rankings = (0..n_agents)
        .map(|_| {
            let mut ranking: Vec<HouseId> = (0..n_houses).map(HouseId).collect();
            ranking.shuffle(&mut rng);
            ranking
        })
        .collect();
    Problem::new(n_agents, n_houses, rankings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{self, ExchangeResult};
    use crate::problem::test_fixtures::table2;
    use proptest::prelude::*;

    const TABLE2: &str = "\
# comment line
agents 4
houses a b c d
1: a d b c
2: d b a c   # trailing comment
3: a c b d
4: d b c a
";

    #[test]
    fn parses_table2() {
        let instance = parse_problem(TABLE2).unwrap();
        assert_eq!(instance.problem, table2());
        assert_eq!(instance.agent_labels, vec!["1", "2", "3", "4"]);
        assert_eq!(instance.house_labels, vec!["a", "b", "c", "d"]);
        // Agent 2's ranking starts with d.
        assert_eq!(
            instance.problem.ranking(AgentId(1))[0],
            instance.house_by_label("d").unwrap()
        );
    }

    #[test]
    fn serialize_parse_roundtrip_on_table2() {
        let instance = parse_problem(TABLE2).unwrap();
        let text = serialize_problem(&instance);
        assert_eq!(parse_problem(&text).unwrap(), instance);
    }

    #[test]
    fn rejects_repeated_house_in_ranking() {
        let text = "agents 1\nhouses a b\n1: a a\n";
        assert!(matches!(
            parse_problem(text),
            Err(ParseError::Problem(ProblemError::DuplicateHouseInRanking { .. }))
        ));
    }

    #[test]
    fn rejects_unknown_house_with_line_number() {
        let text = "agents 1\nhouses a b\n1: a z\n";
        match parse_problem(text) {
            Err(ParseError::Syntax { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("unknown house"));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_too_few_ranking_lines() {
        let text = "agents 2\nhouses a b\n1: a b\n";
        assert!(matches!(parse_problem(text), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn parses_matching_tokens() {
        let instance = parse_problem(TABLE2).unwrap();
        let mu = parse_matching("1:d 2:a 3:b 4:c", &instance).unwrap();
        assert_eq!(instance.format_matching(&mu), "1:d 2:a 3:b 4:c");
        let partial = parse_matching("1:-\n3:b", &instance).unwrap();
        assert_eq!(partial.house_of(AgentId(0)), None);
        assert_eq!(partial.house_of(AgentId(1)), None);
        assert_eq!(instance.format_matching(&partial), "1:- 2:- 3:b 4:-");
    }

    #[test]
    fn rejects_duplicate_house_assignment() {
        let instance = parse_problem(TABLE2).unwrap();
        assert!(matches!(
            parse_matching("1:a 2:a", &instance),
            Err(ParseError::Matching(MatchingError::HouseAssignedTwice { .. }))
        ));
        assert!(matches!(
            parse_matching("1:a 1:b", &instance),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn random_problem_is_deterministic_per_seed() {
        let a = random_problem(5, 7, 123).unwrap();
        let b = random_problem(5, 7, 123).unwrap();
        assert_eq!(a, b);
        let c = random_problem(5, 7, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_problem_respects_house_floor() {
        assert!(matches!(
            random_problem(4, 3, 0),
            Err(ProblemError::HouseCountBelowAgentCount { .. })
        ));
        let p = random_problem(4, 4, 9).unwrap();
        assert_eq!(p.n_agents(), 4);
        assert_eq!(p.n_houses(), 4);
    }

    #[test]
    fn distinct_seeds_rarely_collide() {
        let total = 60;
        let mut keys: Vec<String> = (0..total)
            .map(|s| format!("{:?}", random_problem(4, 4, s).unwrap()))
            .collect();
        keys.sort();
        keys.dedup();
        assert!(keys.len() * 10 >= total as usize * 9);
    }

    // More houses make popular matchings more likely under uniform
    // preferences; assert only the qualitative trend.
    #[test]
    fn existence_rate_grows_with_spare_houses() {
        let seeds = 500u64;
        let exists = |m: usize| {
            (0..seeds)
                .filter(|&s| {
                    let p = random_problem(6, m, 40_000 + s).unwrap();
                    let outcome = exchange::find_popular_via_exchanges(&p, &Matching::empty(&p));
                    outcome.result == ExchangeResult::Popular
                })
                .count()
        };
        let tight = exists(6);
        let roomy = exists(9);
        assert!(
            roomy > tight,
            "existence with 9 houses ({roomy}/{seeds}) should beat 6 houses ({tight}/{seeds})"
        );
    }

    proptest! {
        #[test]
        fn roundtrip_random_instances(n in 1usize..6, extra in 0usize..3, seed in any::<u64>()) {
            let p = random_problem(n, n + extra, seed).unwrap();
            let instance = Instance::with_default_labels(p);
            let text = serialize_problem(&instance);
            prop_assert_eq!(parse_problem(&text).unwrap(), instance);
        }

        #[test]
        fn matching_roundtrip(n in 1usize..6, seed in any::<u64>()) {
            use rand::Rng;
            let p = random_problem(n, n + 1, seed).unwrap();
            let instance = Instance::with_default_labels(p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let mut houses: Vec<Option<HouseId>> =
                (0..instance.problem.n_houses()).map(|h| Some(HouseId(h))).collect();
            houses.shuffle(&mut rng);
            let slots: Vec<Option<HouseId>> = (0..n)
                .map(|i| if rng.random_bool(0.7) { houses[i] } else { None })
                .collect();
            let mu = Matching::new(&instance.problem, slots).unwrap();
            let text = serialize_matching(&instance, &mu);
            prop_assert_eq!(parse_matching(&text, &instance).unwrap(), mu);
        }
    }
}
