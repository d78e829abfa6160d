//! Decentralized market simulation: random groups of agents repeatedly meet
//! and exchange their holdings when a strict majority of the group prefers
//! the reassignment. Whenever a popular matching exists, this process
//! converges to one with probability one; every local popular exchange has a
//! positive proposal probability under the sampling below.
//!
//! Randomness comes from ChaCha8 keyed with `seed_from_u64`, so a run is
//! reproducible across platforms from its [`SimConfig`] alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exchange::{ExchangeStep, Mover, StepKind};
use crate::popularity;
use crate::problem::{AgentId, HouseId, Matching, Problem};

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    /// Largest group sampled per meeting; at least 2.
    pub max_group_size: usize,
    /// Proposal budget per run.
    pub max_steps: u64,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_group_size: 3,
            max_steps: 100_000,
            seed: 0,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SimOutcome {
    Converged,
    StepBudgetExhausted,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub outcome: SimOutcome,
    pub final_matching: Matching,
    /// Proposals drawn, accepted or not.
    pub steps_taken: u64,
    pub accepted_exchanges: u64,
    pub trace: Option<Vec<ExchangeStep>>,
}

/// Does a strict majority of `group` prefer `candidate` over `mu`?
/// Members keeping their house count on neither side.
pub fn group_accepts(p: &Problem, mu: &Matching, candidate: &Matching, group: &[AgentId]) -> bool {
    p.pairwise_comparison(candidate, mu, group) > p.pairwise_comparison(mu, candidate, group)
}

/// Draws one meeting: a group size uniform in `2..=max_group_size`, a uniform
/// group of that size, and a uniform injective reassignment of the group into
/// its own houses, the unmatched houses and "no house". Returns the result
/// only if the group accepts it by strict majority.
pub fn propose_exchange<R: Rng>(
    p: &Problem,
    mu: &Matching,
    rng: &mut R,
    max_group_size: usize,
) -> Option<(Matching, ExchangeStep)> {
    let n = p.n_agents();
    if n == 0 {
        return None;
    }
    let hi = max_group_size.max(2).min(n);
    let lo = 2.min(hi);
    let g = rng.random_range(lo..=hi);
    let group: Vec<AgentId> = rand::seq::index::sample(rng, n, g)
        .into_iter()
        .map(AgentId)
        .collect();
    let owners = mu.owners(p.n_houses());
    let mut pool: Vec<HouseId> = group.iter().filter_map(|&i| mu.house_of(i)).collect();
    pool.extend(p.houses().filter(|h| owners[h.0].is_none()));
    pool.sort();
    // Uniform over injective maps: draw independently and retry on clashes.
    let assignment: Vec<Option<HouseId>> = loop {
        let draw: Vec<Option<HouseId>> = group
            .iter()
            .map(|_| {
                let pick = rng.random_range(0..=pool.len());
                if pick == 0 {
                    None
                } else {
                    Some(pool[pick - 1])
                }
            })
            .collect();
        let mut used: Vec<HouseId> = draw.iter().copied().flatten().collect();
        used.sort();
        used.dedup();
        if used.len() == draw.iter().flatten().count() {
            break draw;
        }
    };
    let mut candidate = mu.clone();
    for (&i, &h) in group.iter().zip(&assignment) {
        candidate.set(i, h);
    }
    if !group_accepts(p, mu, &candidate, &group) {
        return None;
    }
    let movers: Vec<Mover> = group
        .iter()
        .filter(|&&i| mu.house_of(i) != candidate.house_of(i))
        .map(|&i| Mover {
            agent: i,
            from: mu.house_of(i),
            to: candidate.house_of(i),
        })
        .collect();
    let kind = match movers.len() {
        1 => StepKind::GrabEmpty,
        2 => StepKind::TwoWay,
        _ => StepKind::ThreeWay,
    };
    let step = ExchangeStep {
        index: 0,
        kind,
        movers,
    };
    Some((candidate, step))
}

/// Runs the market until the current matching passes the popularity
/// characterization or the proposal budget is exhausted. Deterministic for a
/// fixed configuration.
pub fn simulate(p: &Problem, mu0: &Matching, cfg: &SimConfig) -> SimResult {
    debug_assert!(cfg.max_group_size >= 2);
    debug_assert!(cfg.max_steps > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = mu0.clone();
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut accepted = 0u64;
    if popularity::is_popular(p, &current) {
        return SimResult {
            outcome: SimOutcome::Converged,
            final_matching: current,
            steps_taken: 0,
            accepted_exchanges: 0,
            trace,
        };
    }
    for step in 1..=cfg.max_steps {
        if let Some((next, mut exchange)) = propose_exchange(p, &current, &mut rng, cfg.max_group_size)
        {
            accepted += 1;
            current = next;
            if let Some(t) = trace.as_mut() {
                exchange.index = t.len() + 1;
                t.push(exchange);
            }
            if popularity::is_popular(p, &current) {
                return SimResult {
                    outcome: SimOutcome::Converged,
                    final_matching: current,
                    steps_taken: step,
                    accepted_exchanges: accepted,
                    trace,
                };
            }
        }
    }
    SimResult {
        outcome: SimOutcome::StepBudgetExhausted,
        final_matching: current,
        steps_taken: cfg.max_steps,
        accepted_exchanges: accepted,
        trace,
    }
}

/// True when every consecutive pair, including the wrap-around, is a local
/// popular exchange.
pub fn verify_cycle(p: &Problem, cycle: &[Matching]) -> bool {
    if cycle.len() < 2 {
        return false;
    }
    (0..cycle.len()).all(|t| {
        crate::exchange::is_local_popular_exchange(p, &cycle[t], &cycle[(t + 1) % cycle.len()])
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub outcome: SimOutcome,
    pub steps: u64,
    pub accepted: u64,
}

#[derive(Clone, Debug, Default)]
pub struct BatchSummary {
    pub runs: Vec<RunRecord>,
}

impl BatchSummary {
    pub fn converged(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.outcome == SimOutcome::Converged)
            .count()
    }

    pub fn convergence_rate(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.converged() as f64 / self.runs.len() as f64
    }

    pub fn mean_steps(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().map(|r| r.steps as f64).sum::<f64>() / self.runs.len() as f64
    }

    pub fn max_steps(&self) -> u64 {
        self.runs.iter().map(|r| r.steps).max().unwrap_or(0)
    }
}

/// Runs `n_seeds` independent simulations with seeds `cfg.seed`,
/// `cfg.seed + 1`, ... and aggregates the outcomes. Traces are not recorded.
pub fn batch_stats(p: &Problem, mu0: &Matching, cfg: &SimConfig, n_seeds: u64) -> BatchSummary {
    let mut runs = Vec::with_capacity(n_seeds as usize);
    for offset in 0..n_seeds {
        let run_cfg = SimConfig {
            seed: cfg.seed + offset,
            record_trace: false,
            ..*cfg
        };
        let result = simulate(p, mu0, &run_cfg);
        runs.push(RunRecord {
            seed: run_cfg.seed,
            outcome: result.outcome,
            steps: result.steps_taken,
            accepted: result.accepted_exchanges,
        });
    }
    BatchSummary { runs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::is_local_popular_exchange;
    use crate::oracle;
    use crate::problem::test_fixtures::{matching, problem, table1, table2, table6};

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    fn table5_cycle(p: &Problem) -> Vec<Matching> {
        vec![
            matching(p, &[(0, A), (1, D), (2, B), (3, C)]),
            matching(p, &[(0, C), (1, D), (2, A), (3, B)]),
            matching(p, &[(0, B), (1, C), (2, A), (3, D)]),
            matching(p, &[(0, D), (1, B), (2, A), (3, C)]),
        ]
    }

    #[test]
    fn group_accepts_table5_transition() {
        let p = table2();
        let mu1 = matching(&p, &[(0, A), (1, D), (2, B), (3, C)]);
        let mu2 = matching(&p, &[(0, C), (1, D), (2, A), (3, B)]);
        let group = [AgentId(0), AgentId(2), AgentId(3)];
        assert!(group_accepts(&p, &mu1, &mu2, &group));
        // The identity candidate is never accepted.
        assert!(!group_accepts(&p, &mu1, &mu1, &group));
        // A two-agent swap where only one improves fails the majority.
        let q = problem(&[&[0, 1], &[0, 1]]);
        let x = matching(&q, &[(0, 0), (1, 1)]);
        let y = matching(&q, &[(0, 1), (1, 0)]);
        assert!(!group_accepts(&q, &x, &y, &[AgentId(0), AgentId(1)]));
    }

    #[test]
    fn verify_cycle_accepts_the_four_matching_cycle() {
        let p = table2();
        assert!(verify_cycle(&p, &table5_cycle(&p)));
    }

    #[test]
    fn verify_cycle_rejects_non_neighbors() {
        let p = table2();
        // Two popular matchings never beat each other by majority.
        let cycle = vec![
            matching(&p, &[(0, A), (1, B), (2, C), (3, D)]),
            matching(&p, &[(0, A), (1, D), (2, C), (3, B)]),
        ];
        assert!(!verify_cycle(&p, &cycle));
        // A pair differing on all four agents is not local.
        let far = vec![
            matching(&p, &[(0, A), (1, D), (2, B), (3, C)]),
            matching(&p, &[(0, B), (1, C), (2, A), (3, D)]),
        ];
        assert!(!verify_cycle(&p, &far));
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let p = table2();
        let mu0 = matching(&p, &[(0, B), (1, C), (2, D), (3, A)]);
        let cfg = SimConfig {
            seed: 42,
            record_trace: true,
            ..SimConfig::default()
        };
        let a = simulate(&p, &mu0, &cfg);
        let b = simulate(&p, &mu0, &cfg);
        assert_eq!(a.final_matching, b.final_matching);
        assert_eq!(a.steps_taken, b.steps_taken);
        assert_eq!(a.accepted_exchanges, b.accepted_exchanges);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn popular_start_converges_immediately() {
        let p = table2();
        let mu = matching(&p, &[(0, A), (1, B), (2, C), (3, D)]);
        let result = simulate(&p, &mu, &SimConfig::default());
        assert_eq!(result.outcome, SimOutcome::Converged);
        assert_eq!(result.steps_taken, 0);
        assert_eq!(result.accepted_exchanges, 0);
    }

    #[test]
    fn accepted_exchanges_are_local_popular_exchanges() {
        let p = table1();
        let cfg = SimConfig {
            seed: 3,
            record_trace: true,
            ..SimConfig::default()
        };
        let result = simulate(&p, &Matching::empty(&p), &cfg);
        assert_eq!(result.outcome, SimOutcome::Converged);
        let mut current = Matching::empty(&p);
        for step in result.trace.unwrap() {
            let mut next = current.clone();
            for m in &step.movers {
                next.set(m.agent, None);
            }
            for m in &step.movers {
                next.set(m.agent, m.to);
            }
            assert!(is_local_popular_exchange(&p, &current, &next));
            current = next;
        }
        assert_eq!(current, result.final_matching);
    }

    #[test]
    fn table6_never_converges() {
        let p = table6();
        let cfg = SimConfig {
            max_steps: 3_000,
            ..SimConfig::default()
        };
        let summary = batch_stats(&p, &Matching::empty(&p), &cfg, 5);
        assert_eq!(summary.converged(), 0);
        assert_eq!(summary.convergence_rate(), 0.0);
    }

    #[test]
    fn table2_batch_converges_on_every_seed() {
        let p = table2();
        let mu0 = matching(&p, &[(0, B), (1, C), (2, D), (3, A)]);
        let summary = batch_stats(&p, &mu0, &SimConfig::default(), 20);
        assert_eq!(summary.converged(), 20);
        assert!((summary.convergence_rate() - 1.0).abs() < f64::EPSILON);
        assert!(summary.max_steps() >= summary.mean_steps() as u64);
    }

    #[test]
    fn empty_batch_is_empty() {
        let p = table2();
        let summary = batch_stats(&p, &Matching::empty(&p), &SimConfig::default(), 0);
        assert!(summary.runs.is_empty());
        assert_eq!(summary.convergence_rate(), 0.0);
    }

    // With a larger group cap, accepted proposals may move up to that many
    // agents but must still win the majority of the movers.
    #[test]
    fn wider_groups_respect_the_generalized_majority() {
        let p = table2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut current = matching(&p, &[(0, B), (1, C), (2, D), (3, A)]);
        let mut accepted = 0;
        for _ in 0..4_000 {
            if let Some((next, step)) = propose_exchange(&p, &current, &mut rng, 4) {
                assert!((1..=4).contains(&step.movers.len()));
                let movers: Vec<AgentId> = step.movers.iter().map(|m| m.agent).collect();
                assert!(
                    p.pairwise_comparison(&next, &current, &movers)
                        > p.pairwise_comparison(&current, &next, &movers)
                );
                accepted += 1;
                current = next;
            }
        }
        assert!(accepted > 0);
    }

    // Every local popular exchange reachable from a matching must have
    // positive proposal probability: on a tiny instance, sampling long
    // enough must surface each one.
    #[test]
    fn proposal_support_covers_all_local_popular_exchanges() {
        let p = problem(&[&[0, 1, 2], &[1, 0, 2]]);
        let mu = matching(&p, &[(0, 1), (1, 0)]);
        let mut expected: Vec<Matching> = Vec::new();
        for candidate in oracle::enumerate_matchings(&p, 6).unwrap() {
            if is_local_popular_exchange(&p, &mu, &candidate) {
                expected.push(candidate);
            }
        }
        assert!(!expected.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen: Vec<Matching> = Vec::new();
        for _ in 0..20_000 {
            if let Some((next, _)) = propose_exchange(&p, &mu, &mut rng, 3) {
                if !seen.contains(&next) {
                    seen.push(next);
                }
            }
        }
        seen.sort();
        expected.sort();
        assert_eq!(seen, expected);
    }
}
