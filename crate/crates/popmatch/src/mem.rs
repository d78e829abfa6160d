//! The minimal-envy matching algorithm, the minimal-envy test, and a
//! Pareto-efficiency check.
//!
//! The algorithm works on the bipartite graph connecting each unmatched agent
//! to his first and second house. It repeatedly matches leaves (a first house
//! wanted by a single surviving first agent, then a second house wanted by a
//! single surviving second agent), excludes one agent pointing at a house
//! with three or more surviving edges when no leaf exists, and finally walks
//! the remaining cycles, alternating first and second houses. Excluded agents
//! are rematched by running the same procedure on the leftover sub-problem.
//! The result allocates every first house to one of its first agents and
//! maximizes the number of agents holding their first or second house; it is
//! also Pareto efficient.

use crate::problem::{
    reduce, AgentId, HoldingKind, HouseClassification, HouseId, Matching, Problem,
};

/// What happened to each agent within one recursive run, in original ids.
#[derive(Clone, Debug, Default)]
pub struct MemRound {
    /// Matches of a first house to its lone surviving first agent.
    pub leaf_first: Vec<(AgentId, HouseId)>,
    /// Matches of a second house to its lone surviving second agent.
    pub leaf_second: Vec<(AgentId, HouseId)>,
    /// Agents excluded from this run and deferred to the next one.
    pub excluded: Vec<AgentId>,
    /// Matches made while walking the two-edge cycles.
    pub cycle: Vec<(AgentId, HouseId)>,
}

#[derive(Clone, Debug)]
pub struct MemTrace {
    pub rounds: Vec<MemRound>,
    pub final_matching: Matching,
}

// Per-run state over the run's reduced problem.
struct Round<'a> {
    p: &'a Problem,
    cls: HouseClassification,
    unmatched_agent: Vec<bool>,
    unmatched_house: Vec<bool>,
    // Surviving first/second agents per house.
    fa_count: Vec<usize>,
    sa_count: Vec<usize>,
    assignment: Vec<Option<HouseId>>,
    record: MemRound,
    // Original ids for the trace.
    to_parent_agent: Vec<AgentId>,
    to_parent_house: Vec<HouseId>,
}

enum Bucket {
    LeafFirst,
    LeafSecond,
    Cycle,
}

impl<'a> Round<'a> {
    fn new(p: &'a Problem, to_parent_agent: Vec<AgentId>, to_parent_house: Vec<HouseId>) -> Self {
        let cls = HouseClassification::new(p);
        let mut fa_count = vec![0; p.n_houses()];
        let mut sa_count = vec![0; p.n_houses()];
        for i in p.agents() {
            fa_count[cls.first_house(i).0] += 1;
            if let Some(s) = cls.second_house(i) {
                sa_count[s.0] += 1;
            }
        }
        Round {
            p,
            cls,
            unmatched_agent: vec![true; p.n_agents()],
            unmatched_house: vec![true; p.n_houses()],
            fa_count,
            sa_count,
            assignment: vec![None; p.n_agents()],
            record: MemRound::default(),
            to_parent_agent,
            to_parent_house,
        }
    }

    fn drop_from_counts(&mut self, i: AgentId) {
        self.fa_count[self.cls.first_house(i).0] -= 1;
        if let Some(s) = self.cls.second_house(i) {
            self.sa_count[s.0] -= 1;
        }
    }

    fn bind(&mut self, i: AgentId, h: HouseId, bucket: Bucket) {
        debug_assert!(self.unmatched_agent[i.0] && self.unmatched_house[h.0]);
        self.unmatched_agent[i.0] = false;
        self.unmatched_house[h.0] = false;
        self.drop_from_counts(i);
        self.assignment[i.0] = Some(h);
        let pair = (self.to_parent_agent[i.0], self.to_parent_house[h.0]);
        match bucket {
            Bucket::LeafFirst => self.record.leaf_first.push(pair),
            Bucket::LeafSecond => self.record.leaf_second.push(pair),
            Bucket::Cycle => self.record.cycle.push(pair),
        }
    }

    fn exclude(&mut self, i: AgentId) {
        debug_assert!(self.unmatched_agent[i.0]);
        self.unmatched_agent[i.0] = false;
        self.drop_from_counts(i);
        self.record.excluded.push(self.to_parent_agent[i.0]);
    }

    fn surviving(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.unmatched_agent
            .iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(i, _)| AgentId(i))
    }

    // Step 1. All first houses wanted by exactly one surviving first agent.
    fn match_first_leaves(&mut self) -> bool {
        let mut any = false;
        for i in (0..self.p.n_agents()).map(AgentId) {
            if !self.unmatched_agent[i.0] {
                continue;
            }
            let f = self.cls.first_house(i);
            if self.fa_count[f.0] == 1 {
                debug_assert!(self.unmatched_house[f.0]);
                self.bind(i, f, Bucket::LeafFirst);
                any = true;
            }
        }
        any
    }

    // Step 2. One second house wanted by exactly one surviving second agent.
    fn match_one_second_leaf(&mut self) -> bool {
        let candidate = self.surviving().find(|&i| {
            self.cls
                .second_house(i)
                .is_some_and(|s| self.sa_count[s.0] == 1)
        });
        if let Some(i) = candidate {
            let s = self.cls.second_house(i).unwrap();
            debug_assert!(self.unmatched_house[s.0]);
            self.bind(i, s, Bucket::LeafSecond);
            true
        } else {
            false
        }
    }

    // Step 3. Exclude one agent pointing at an over-demanded house; agents
    // whose first house is over-demanded take precedence.
    fn exclude_one(&mut self) -> bool {
        let by_first = self
            .surviving()
            .find(|&i| self.fa_count[self.cls.first_house(i).0] > 2);
        let candidate = by_first.or_else(|| {
            self.surviving().find(|&i| {
                self.cls
                    .second_house(i)
                    .is_some_and(|s| self.sa_count[s.0] > 2)
            })
        });
        if let Some(i) = candidate {
            self.exclude(i);
            true
        } else {
            false
        }
    }

    // Step 4. Every surviving pointed house now has exactly two edges; the
    // components are alternating cycles. Walk each, matching first and second
    // houses alternately.
    fn match_cycles(&mut self) {
        debug_assert!(self.two_edges_everywhere());
        loop {
            // `let`-else keeps the survivor scan from borrowing across the
            // walk below.
            let Some(start) = self.surviving().next() else {
                break;
            };
            let mut i = start;
            while self.unmatched_agent[i.0] {
                let f = self.cls.first_house(i);
                debug_assert!(self.unmatched_house[f.0]);
                self.bind(i, f, Bucket::Cycle);
                let partner = self.cls.first_agents(f).iter().copied().find(|&j| self.unmatched_agent[j.0]);
                let Some(j) = partner else {
                    break;
                };
                let second = self.cls.second_house(j);
                let Some(s) = second else {
                    debug_assert!(false, "cycle members have second houses");
                    self.exclude(j);
                    break;
                };
                debug_assert!(self.unmatched_house[s.0]);
                self.bind(j, s, Bucket::Cycle);
                let next = self.cls.second_agents(s).iter().copied().find(|&k| self.unmatched_agent[k.0]);
                match next {
                    Some(k) => i = k,
                    None => break,
                }
            }
        }
    }

    fn two_edges_everywhere(&self) -> bool {
        self.p.houses().all(|h| {
            if !self.unmatched_house[h.0] {
                return true;
            }
            let edges = self.fa_count[h.0] + self.sa_count[h.0];
            edges == 0 || edges == 2
        })
    }

    fn run(mut self) -> (MemRound, Vec<(AgentId, HouseId)>) {
        loop {
            if self.match_first_leaves() {
                continue;
            }
            if self.match_one_second_leaf() {
                continue;
            }
            if self.exclude_one() {
                continue;
            }
            break;
        }
        self.match_cycles();
        let matched = self
            .assignment
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.map(|h| (self.to_parent_agent[i], self.to_parent_house[h.0]))
            })
            .collect();
        (self.record, matched)
    }
}

/// Runs the algorithm to completion, recursing on excluded agents and
/// leftover houses until every agent is matched.
pub fn run(p: &Problem) -> MemTrace {
    let mut slots: Vec<Option<HouseId>> = vec![None; p.n_agents()];
    let mut rounds = Vec::new();
    let mut agents: Vec<AgentId> = p.agents().collect();
    let mut houses: Vec<HouseId> = p.houses().collect();
    while !agents.is_empty() {
        let red = reduce(p, &agents, &houses).expect("every run keeps houses >= agents");
        let round = Round::new(&red.problem, agents.clone(), houses.clone());
        let (record, matched) = round.run();
        for &(agent, house) in &matched {
            debug_assert!(slots[agent.0].is_none());
            slots[agent.0] = Some(house);
        }
        agents = record.excluded.clone();
        let used: Vec<HouseId> = matched.iter().map(|&(_, h)| h).collect();
        houses.retain(|h| !used.contains(h));
        rounds.push(record);
        debug_assert!(rounds.len() <= p.n_agents(), "every run must match someone");
    }
    let final_matching = Matching::new(p, slots).expect("runs assign disjoint houses");
    MemTrace {
        rounds,
        final_matching,
    }
}

/// Minimal envy holds exactly when every first house goes to one of its first
/// agents and the number of agents holding their first or second house is the
/// maximum achievable; the algorithm's own output supplies that maximum.
pub fn is_minimal_envy(p: &Problem, mu: &Matching) -> bool {
    let cls = HouseClassification::new(p);
    let owners = mu.owners(p.n_houses());
    let first_ok = cls
        .first_houses()
        .all(|f| owners[f.0].is_some_and(|o| cls.first_house(o) == f));
    if !first_ok {
        return false;
    }
    let reference = run(p).final_matching;
    first_or_second_count(p, &cls, mu) == first_or_second_count(p, &cls, &reference)
}

fn first_or_second_count(p: &Problem, cls: &HouseClassification, mu: &Matching) -> usize {
    p.agents()
        .filter(|&i| {
            matches!(
                cls.holding_kind(p, i, mu.house_of(i)),
                HoldingKind::First | HoldingKind::Second
            )
        })
        .count()
}

/// A strict Pareto improvement over some matching: the listed agents all
/// strictly prefer `improved`, everyone else keeps their house.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParetoImprovement {
    pub agents: Vec<AgentId>,
    pub improved: Matching,
}

/// Searches the strict-improvement digraph (an edge from each agent to the
/// owner of every house he strictly prefers) for a direct grab of a preferred
/// unmatched house or a trading cycle. `None` means Pareto efficient.
pub fn pareto_improvement(p: &Problem, mu: &Matching) -> Option<ParetoImprovement> {
    let owners = mu.owners(p.n_houses());
    // A preferred unmatched house: the holder alone improves.
    for i in p.agents() {
        let best_free = p
            .ranking(i)
            .iter()
            .copied()
            .take_while(|&h| p.prefers(i, Some(h), mu.house_of(i)))
            .find(|&h| owners[h.0].is_none());
        if let Some(h) = best_free {
            let mut improved = mu.clone();
            improved.set(i, Some(h));
            return Some(ParetoImprovement {
                agents: vec![i],
                improved,
            });
        }
    }
    // Otherwise look for a cycle among strict-improvement edges.
    let n = p.n_agents();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; n];
    for start in p.agents() {
        if marks[start.0] != Mark::New {
            continue;
        }
        // Iterative DFS over first-better-owner edges, tracking the path.
        let mut path: Vec<(AgentId, usize)> = vec![(start, 0)];
        marks[start.0] = Mark::Active;
        while let Some(&mut (i, ref mut edge)) = path.last_mut() {
            let targets: Vec<AgentId> = p
                .ranking(i)
                .iter()
                .copied()
                .take_while(|&h| p.prefers(i, Some(h), mu.house_of(i)))
                .filter_map(|h| owners[h.0])
                .collect();
            if *edge >= targets.len() {
                marks[i.0] = Mark::Done;
                path.pop();
                continue;
            }
            let next = targets[*edge];
            *edge += 1;
            match marks[next.0] {
                Mark::Active => {
                    let cycle_start = path.iter().position(|&(a, _)| a == next).unwrap();
                    let cycle: Vec<AgentId> = path[cycle_start..].iter().map(|&(a, _)| a).collect();
                    let mut improved = mu.clone();
                    for (pos, &agent) in cycle.iter().enumerate() {
                        let successor = cycle[(pos + 1) % cycle.len()];
                        improved.set(agent, mu.house_of(successor));
                    }
                    return Some(ParetoImprovement {
                        agents: cycle,
                        improved,
                    });
                }
                Mark::New => {
                    marks[next.0] = Mark::Active;
                    path.push((next, 0));
                }
                Mark::Done => {}
            }
        }
    }
    None
}

pub fn is_pareto_efficient(p: &Problem, mu: &Matching) -> bool {
    pareto_improvement(p, mu).is_none()
}
