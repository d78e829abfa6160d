//! Three independent popularity tests and a blocking-triple constructor.
//!
//! A matching is popular exactly when every first house goes to one of its
//! first agents and every agent holds his first or second house. It is
//! equivalently characterized by *local* popularity: no triple of agents can
//! reassign their own houses (plus unmatched ones) so that a strict majority
//! of the triple improves. Brute force over all matchings gives a third,
//! definition-level test. The three must agree everywhere; tests enforce it.

use thiserror::Error;

use crate::oracle::{self, OracleError};
use crate::problem::{
    reduce, AgentId, HoldingKind, HouseClassification, HouseId, Matching, Problem, ReduceError,
};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PopularityError {
    #[error("the challenger does not beat the matching by majority")]
    NotAMajorityImprovement,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// Why a matching fails the popularity characterization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PopularityViolation {
    /// Some house that is an agent's top choice is unmatched or held by an
    /// agent who does not top-rank it.
    FirstHouseMisallocated {
        house: HouseId,
        holder: Option<AgentId>,
    },
    /// Some agent holds a house strictly worse than his second house (or is
    /// unmatched although a second house exists).
    AgentHoldsBadHouse {
        agent: AgentId,
        house: Option<HouseId>,
    },
}

#[derive(Clone, Debug)]
pub struct PopularityVerdict {
    pub violation: Option<PopularityViolation>,
}

impl PopularityVerdict {
    pub fn is_popular(&self) -> bool {
        self.violation.is_none()
    }
}

/// The linear-time popularity test. Agents holding bad houses are reported
/// first, then misallocated first houses.
pub fn characterize(p: &Problem, mu: &Matching) -> PopularityVerdict {
    let cls = HouseClassification::new(p);
    characterize_with(p, &cls, mu)
}

pub(crate) fn characterize_with(
    p: &Problem,
    cls: &HouseClassification,
    mu: &Matching,
) -> PopularityVerdict {
    for i in p.agents() {
        let holding = mu.house_of(i);
        if cls.holding_kind(p, i, holding) == HoldingKind::Bad {
            return PopularityVerdict {
                violation: Some(PopularityViolation::AgentHoldsBadHouse { agent: i, house: holding }),
            };
        }
    }
    let owners = mu.owners(p.n_houses());
    for f in cls.first_houses() {
        let ok = owners[f.0].is_some_and(|o| cls.first_house(o) == f);
        if !ok {
            return PopularityVerdict {
                violation: Some(PopularityViolation::FirstHouseMisallocated {
                    house: f,
                    holder: owners[f.0],
                }),
            };
        }
    }
    PopularityVerdict { violation: None }
}

pub fn is_popular(p: &Problem, mu: &Matching) -> bool {
    characterize(p, mu).is_popular()
}

/// Up to three agents that can deviate to a matching a strict majority of
/// them prefers, everyone else fixed. The deviation touches only the listed
/// agents' houses, unmatched houses and "no house".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockingTriple {
    /// Sorted; blocking groups smaller than three are padded with bystanders
    /// whose assignment does not change.
    pub agents: Vec<AgentId>,
    pub deviation: Matching,
}

// Groups tested by the local check: all 3-subsets in lexicographic order, or
// the single all-agents group when fewer than three agents exist.
fn local_groups(n: usize) -> Vec<Vec<AgentId>> {
    if n < 3 {
        return vec![(0..n).map(AgentId).collect()];
    }
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                out.push(vec![AgentId(a), AgentId(b), AgentId(c)]);
            }
        }
    }
    out
}

/// Searches every agent triple for a majority-preferred local deviation.
/// `None` means the matching is locally popular. The first witness in the
/// fixed enumeration order (triples lexicographic, then deviations with "no
/// house" before houses in ascending order) is returned.
pub fn local_blocking_triple(p: &Problem, mu: &Matching) -> Option<BlockingTriple> {
    let owners = mu.owners(p.n_houses());
    let free: Vec<HouseId> = p.houses().filter(|h| owners[h.0].is_none()).collect();
    for group in local_groups(p.n_agents()) {
        let mut pool: Vec<HouseId> = group.iter().filter_map(|&i| mu.house_of(i)).collect();
        pool.extend(free.iter().copied());
        pool.sort();
        let options: Vec<Option<HouseId>> =
            std::iter::once(None).chain(pool.into_iter().map(Some)).collect();
        let mut choice = vec![0usize; group.len()];
        if let Some(dev) = search_deviations(p, mu, &group, &options, &mut choice, 0) {
            return Some(BlockingTriple {
                agents: group,
                deviation: dev,
            });
        }
    }
    None
}

fn search_deviations(
    p: &Problem,
    mu: &Matching,
    group: &[AgentId],
    options: &[Option<HouseId>],
    choice: &mut Vec<usize>,
    depth: usize,
) -> Option<Matching> {
    if depth == group.len() {
        let mut plus = 0usize;
        let mut minus = 0usize;
        for (slot, &i) in choice.iter().zip(group) {
            let proposed = options[*slot];
            let held = mu.house_of(i);
            if p.prefers(i, proposed, held) {
                plus += 1;
            } else if p.prefers(i, held, proposed) {
                minus += 1;
            }
        }
        if plus <= minus {
            return None;
        }
        let mut candidate = mu.clone();
        for (slot, &i) in choice.iter().zip(group) {
            candidate.set(i, options[*slot]);
        }
        return Some(candidate);
    }
    'next: for slot in 0..options.len() {
        if options[slot].is_some() {
            for prev in &choice[..depth] {
                if *prev == slot {
                    continue 'next;
                }
            }
        }
        choice[depth] = slot;
        if let Some(found) = search_deviations(p, mu, group, options, choice, depth + 1) {
            return Some(found);
        }
    }
    None
}

pub fn is_locally_popular(p: &Problem, mu: &Matching) -> bool {
    local_blocking_triple(p, mu).is_none()
}

/// Definition-level test by enumerating every alternative matching.
pub fn is_popular_bruteforce(
    p: &Problem,
    mu: &Matching,
    limit: usize,
) -> Result<bool, OracleError> {
    oracle::is_popular_bruteforce(p, mu, limit)
}

/// Is `mu`, restricted to `among`, popular in the reduced problem of those
/// agents with the full house set? Houses held by excluded agents are
/// released to the deviations.
pub fn is_popular_among(
    p: &Problem,
    mu: &Matching,
    among: &[AgentId],
    limit: usize,
) -> Result<bool, PopularityError> {
    let houses: Vec<HouseId> = p.houses().collect();
    let red = reduce(p, among, &houses)?;
    let restricted = red.restrict_matching(mu)?;
    Ok(oracle::is_popular_bruteforce(&red.problem, &restricted, limit)?)
}

// --- blocking triple from a concrete majority improvement ----------------

struct Component {
    // Agents in house-flow order: agents[t + 1] takes agents[t]'s house.
    agents: Vec<AgentId>,
    is_cycle: bool,
}

// Movers partition into trading cycles and chains of the "takes whose house"
// relation; a chain head takes an unmatched house or nothing, a chain tail's
// house is left behind.
fn decompose(p: &Problem, mu: &Matching, better: &Matching) -> Vec<Component> {
    let owners = mu.owners(p.n_houses());
    let n = p.n_agents();
    let mut donor: Vec<Option<AgentId>> = vec![None; n];
    let mut taker: Vec<Option<AgentId>> = vec![None; n];
    let movers: Vec<AgentId> = p
        .agents()
        .filter(|&i| mu.house_of(i) != better.house_of(i))
        .collect();
    for &i in &movers {
        if let Some(h) = better.house_of(i) {
            if let Some(d) = owners[h.0] {
                debug_assert!(d != i, "a mover cannot take its own house");
                donor[i.0] = Some(d);
                taker[d.0] = Some(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for &start in &movers {
        if seen[start.0] {
            continue;
        }
        // Walk back to the chain head, or around the cycle.
        let mut head = start;
        let mut is_cycle = false;
        while let Some(d) = donor[head.0] {
            if d == start {
                is_cycle = true;
                break;
            }
            head = d;
        }
        let mut agents = vec![head];
        seen[head.0] = true;
        let mut cur = head;
        while let Some(t) = taker[cur.0] {
            if t == head {
                break;
            }
            agents.push(t);
            seen[t.0] = true;
            cur = t;
        }
        if is_cycle {
            // Canonical rotation: minimal agent first.
            let min_pos = agents
                .iter()
                .enumerate()
                .min_by_key(|(_, a)| a.0)
                .map(|(pos, _)| pos)
                .unwrap();
            agents.rotate_left(min_pos);
        }
        components.push(Component { agents, is_cycle });
    }
    components.sort_by_key(|c| c.agents.iter().map(|a| a.0).min().unwrap());
    components
}

fn pad_agents(n: usize, movers: &[AgentId]) -> Vec<AgentId> {
    let mut agents = movers.to_vec();
    let want = 3.min(n);
    for i in 0..n {
        if agents.len() >= want {
            break;
        }
        if !agents.contains(&AgentId(i)) {
            agents.push(AgentId(i));
        }
    }
    agents.sort();
    agents
}

fn apply(mu: &Matching, moves: &[(AgentId, Option<HouseId>)]) -> Matching {
    let mut out = mu.clone();
    for &(i, h) in moves {
        out.set(i, h);
    }
    out
}

/// Given a matching `better` that beats `mu` by whole-population majority,
/// constructs a group of at most three agents whose local deviation already
/// beats `mu` by majority within the group. Follows the trading chain/cycle
/// decomposition of the movers and the per-shape case analysis.
pub fn blocking_triple_from_improvement(
    p: &Problem,
    mu: &Matching,
    better: &Matching,
) -> Result<BlockingTriple, PopularityError> {
    let all: Vec<AgentId> = p.agents().collect();
    if p.pairwise_comparison(better, mu, &all) <= p.pairwise_comparison(mu, better, &all) {
        return Err(PopularityError::NotAMajorityImprovement);
    }
    for comp in decompose(p, mu, better) {
        let improved: Vec<bool> = comp
            .agents
            .iter()
            .map(|&i| p.prefers(i, better.house_of(i), mu.house_of(i)))
            .collect();
        let plus = improved.iter().filter(|&&b| b).count();
        if 2 * plus <= comp.agents.len() {
            continue;
        }
        let triple = build_triple(p, mu, better, &comp, &improved);
        debug_assert!(
            p.pairwise_comparison(&triple.deviation, mu, &triple.agents)
                > p.pairwise_comparison(mu, &triple.deviation, &triple.agents),
            "constructed deviation must win its majority"
        );
        return Ok(triple);
    }
    unreachable!("a majority improvement always contains a majority chain or cycle")
}

fn build_triple(
    p: &Problem,
    mu: &Matching,
    better: &Matching,
    comp: &Component,
    improved: &[bool],
) -> BlockingTriple {
    let a = &comp.agents;
    let m = a.len();
    if comp.is_cycle {
        if m == 2 {
            let moves = [(a[0], better.house_of(a[0])), (a[1], better.house_of(a[1]))];
            return BlockingTriple {
                agents: pad_agents(p.n_agents(), &[a[0], a[1]]),
                deviation: apply(mu, &moves),
            };
        }
        let t = (0..m)
            .find(|&t| improved[t] && improved[(t + 1) % m])
            .expect("a majority cycle has two adjacent winners");
        let j = a[t];
        let i = a[(t + 1) % m];
        let k = a[(t + m - 1) % m];
        let moves = [
            (i, mu.house_of(j)),
            (j, mu.house_of(k)),
            (k, mu.house_of(i)),
        ];
        return BlockingTriple {
            agents: pad_agents(p.n_agents(), &[i, j, k]),
            deviation: apply(mu, &moves),
        };
    }
    match m {
        1 => BlockingTriple {
            agents: pad_agents(p.n_agents(), &[a[0]]),
            deviation: apply(mu, &[(a[0], better.house_of(a[0]))]),
        },
        2 => BlockingTriple {
            agents: pad_agents(p.n_agents(), &[a[0], a[1]]),
            deviation: apply(
                mu,
                &[(a[0], better.house_of(a[0])), (a[1], mu.house_of(a[0]))],
            ),
        },
        _ => {
            if let Some(t) = (0..m - 1).find(|&t| improved[t] && improved[t + 1]) {
                let j = a[t];
                let i = a[t + 1];
                if t == 0 {
                    // The winning pair starts at the chain head: the head's
                    // new house is unmatched, so the pair moves alone.
                    let moves = [(j, better.house_of(j)), (i, mu.house_of(j))];
                    BlockingTriple {
                        agents: pad_agents(p.n_agents(), &[i, j]),
                        deviation: apply(mu, &moves),
                    }
                } else {
                    let k = a[t - 1];
                    let moves = [
                        (i, mu.house_of(j)),
                        (j, mu.house_of(k)),
                        (k, mu.house_of(i)),
                    ];
                    BlockingTriple {
                        agents: pad_agents(p.n_agents(), &[i, j, k]),
                        deviation: apply(mu, &moves),
                    }
                }
            } else {
                // No adjacent winners: the chain alternates and both ends
                // improve. Move the head onto its unmatched house, the tail
                // onto its predecessor's house, and park the predecessor on
                // whatever was freed.
                debug_assert!(improved[0] && improved[m - 1]);
                let head = a[0];
                let before_tail = a[m - 2];
                let tail = a[m - 1];
                let leftover = mu.house_of(tail).or_else(|| mu.house_of(head));
                let moves = [
                    (head, better.house_of(head)),
                    (tail, mu.house_of(before_tail)),
                    (before_tail, leftover),
                ];
                BlockingTriple {
                    agents: pad_agents(p.n_agents(), &[head, before_tail, tail]),
                    deviation: apply(mu, &moves),
                }
            }
        }
    }
}
