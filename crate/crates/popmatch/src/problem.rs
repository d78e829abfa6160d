//! Problem and matching data model: agents, houses, strict preference
//! rankings, the pairwise-comparison primitive, envy sets, first/second house
//! classification and problem reduction.

use std::fmt;

use thiserror::Error;

/// Index of an agent, dense within a [`Problem`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AgentId(pub usize);

/// Index of a house, dense within a [`Problem`]. "No house" is represented as
/// `Option::<HouseId>::None` throughout the crate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct HouseId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for HouseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error("expected {expected} rankings, got {got}")]
    RankingCountMismatch { expected: usize, got: usize },
    #[error("agent {agent} ranks house {house} more than once")]
    DuplicateHouseInRanking { agent: usize, house: usize },
    #[error("agent {agent} ranks {got} houses, expected {expected}")]
    IncompleteRanking {
        agent: usize,
        got: usize,
        expected: usize,
    },
    #[error("agent {agent} ranks unknown house {house}")]
    HouseOutOfRange { agent: usize, house: usize },
    #[error("{houses} houses cannot cover {agents} agents")]
    HouseCountBelowAgentCount { agents: usize, houses: usize },
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("matching has {got} slots, problem has {expected} agents")]
    AgentCountMismatch { expected: usize, got: usize },
    #[error("agent {agent} is assigned unknown house {house}")]
    HouseOutOfRange { agent: usize, house: usize },
    #[error("house {house} is assigned to two agents")]
    HouseAssignedTwice { house: usize },
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("agent subset is empty")]
    EmptyAgentSubset,
    #[error("house subset of size {houses} cannot cover {agents} agents")]
    EmptyHouseSubset { agents: usize, houses: usize },
    #[error("agent {0} listed twice in subset")]
    DuplicateAgent(usize),
    #[error("house {0} listed twice in subset")]
    DuplicateHouse(usize),
    #[error("unknown agent {0} in subset")]
    UnknownAgent(usize),
    #[error("unknown house {0} in subset")]
    UnknownHouse(usize),
    #[error("agent {agent} holds house {house} outside the house subset")]
    HoldingOutsideSubset { agent: usize, house: usize },
}

/// A house allocation problem: `n_agents` agents, `n_houses >= n_agents`
/// houses, and one complete strict ranking of all houses per agent. Having no
/// house is strictly worse than every house for every agent.
///
/// Immutable after construction; all queries are pure.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Problem {
    n_agents: usize,
    n_houses: usize,
    rankings: Vec<Vec<HouseId>>,
    // rank[i][h] = position of house h in agent i's ranking, 0 = best.
    rank: Vec<Vec<u32>>,
}

impl Problem {
    /// Validates and builds a problem from per-agent ranking lists. Each list
    /// must be a permutation of all house ids.
    pub fn new(
        n_agents: usize,
        n_houses: usize,
        rankings: Vec<Vec<HouseId>>,
    ) -> Result<Self, ProblemError> {
        if n_houses < n_agents {
            return Err(ProblemError::HouseCountBelowAgentCount {
                agents: n_agents,
                houses: n_houses,
            });
        }
        if rankings.len() != n_agents {
            return Err(ProblemError::RankingCountMismatch {
                expected: n_agents,
                got: rankings.len(),
            });
        }
        let mut rank = vec![vec![u32::MAX; n_houses]; n_agents];
        for (i, list) in rankings.iter().enumerate() {
            for (pos, &HouseId(h)) in list.iter().enumerate() {
                if h >= n_houses {
                    return Err(ProblemError::HouseOutOfRange { agent: i, house: h });
                }
                if rank[i][h] != u32::MAX {
                    return Err(ProblemError::DuplicateHouseInRanking { agent: i, house: h });
                }
                rank[i][h] = pos as u32;
            }
            if list.len() != n_houses {
                return Err(ProblemError::IncompleteRanking {
                    agent: i,
                    got: list.len(),
                    expected: n_houses,
                });
            }
        }
        Ok(Problem {
            n_agents,
            n_houses,
            rankings,
            rank,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_houses(&self) -> usize {
        self.n_houses
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.n_agents).map(AgentId)
    }

    pub fn houses(&self) -> impl Iterator<Item = HouseId> {
        (0..self.n_houses).map(HouseId)
    }

    /// Agent `i`'s ranking, best house first.
    pub fn ranking(&self, i: AgentId) -> &[HouseId] {
        &self.rankings[i.0]
    }

    /// Position of `h` in `i`'s ranking; 0 is the top choice.
    pub fn rank_of(&self, i: AgentId, h: HouseId) -> u32 {
        self.rank[i.0][h.0]
    }

    /// Does agent `i` strictly prefer `a` over `b`? No house is worse than
    /// every house; equal arguments compare false.
    pub fn prefers(&self, i: AgentId, a: Option<HouseId>, b: Option<HouseId>) -> bool {
        match (a, b) {
            (Some(a), Some(b)) => self.rank[i.0][a.0] < self.rank[i.0][b.0],
            (Some(_), None) => true,
            (None, _) => false,
        }
    }

    /// Number of agents in `among` that strictly prefer their house in `mu`
    /// over their house in `nu`.
    pub fn pairwise_comparison(&self, mu: &Matching, nu: &Matching, among: &[AgentId]) -> usize {
        among
            .iter()
            .filter(|&&j| self.prefers(j, mu.house_of(j), nu.house_of(j)))
            .count()
    }

    /// Agents for which some house beats their assignment. With complete
    /// strict rankings this is exactly the set of agents not holding their
    /// top choice.
    pub fn envying_agents(&self, mu: &Matching) -> Vec<AgentId> {
        self.agents()
            .filter(|&i| mu.house_of(i) != Some(self.rankings[i.0][0]))
            .collect()
    }
}

/// An injective partial assignment of agents to houses; `None` means
/// unmatched.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Matching {
    slots: Vec<Option<HouseId>>,
}

impl Matching {
    /// Validates slot count, house ids and injectivity against `p`.
    pub fn new(p: &Problem, slots: Vec<Option<HouseId>>) -> Result<Self, MatchingError> {
        if slots.len() != p.n_agents {
            return Err(MatchingError::AgentCountMismatch {
                expected: p.n_agents,
                got: slots.len(),
            });
        }
        let mut taken = vec![false; p.n_houses];
        for (i, slot) in slots.iter().enumerate() {
            if let Some(HouseId(h)) = *slot {
                if h >= p.n_houses {
                    return Err(MatchingError::HouseOutOfRange { agent: i, house: h });
                }
                if taken[h] {
                    return Err(MatchingError::HouseAssignedTwice { house: h });
                }
                taken[h] = true;
            }
        }
        Ok(Matching { slots })
    }

    /// The all-unmatched matching.
    pub fn empty(p: &Problem) -> Self {
        Matching {
            slots: vec![None; p.n_agents],
        }
    }

    /// Convenience constructor from `(agent index, house index)` pairs;
    /// unlisted agents stay unmatched.
    pub fn from_pairs(p: &Problem, pairs: &[(usize, usize)]) -> Result<Self, MatchingError> {
        let mut slots = vec![None; p.n_agents()];
        for &(a, h) in pairs {
            if a >= slots.len() {
                return Err(MatchingError::AgentCountMismatch {
                    expected: p.n_agents(),
                    got: a + 1,
                });
            }
            slots[a] = Some(HouseId(h));
        }
        Matching::new(p, slots)
    }

    pub fn house_of(&self, i: AgentId) -> Option<HouseId> {
        self.slots[i.0]
    }

    pub fn slots(&self) -> &[Option<HouseId>] {
        &self.slots
    }

    pub fn n_agents(&self) -> usize {
        self.slots.len()
    }

    /// Inverse map house -> agent for a problem with `n_houses` houses.
    pub fn owners(&self, n_houses: usize) -> Vec<Option<AgentId>> {
        let mut owners = vec![None; n_houses];
        for (i, slot) in self.slots.iter().enumerate() {
            if let Some(HouseId(h)) = *slot {
                debug_assert!(owners[h].is_none(), "house {h} assigned twice");
                owners[h] = Some(AgentId(i));
            }
        }
        owners
    }

    /// Houses of `p` not assigned to any agent.
    pub fn unmatched_houses(&self, p: &Problem) -> Vec<HouseId> {
        let owners = self.owners(p.n_houses());
        p.houses().filter(|h| owners[h.0].is_none()).collect()
    }

    pub(crate) fn set(&mut self, i: AgentId, h: Option<HouseId>) {
        self.slots[i.0] = h;
    }
}

/// How an agent relates to a house it might hold.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HoldingKind {
    /// The agent's top choice.
    First,
    /// The agent's best house among those that are nobody's top choice
    /// (unmatched counts as second exactly when no such house exists).
    Second,
    /// Somebody else's first house, ranked above the agent's second house
    /// but not his own first.
    OtherFirst,
    /// Strictly worse than the agent's second house, including being
    /// unmatched while a second house exists.
    Bad,
}

/// First/second house structure of a problem.
///
/// An agent's *first house* is its top choice; the *first agents* of a house
/// are the agents top-ranking it. An agent's *second house* is its best house
/// among those that are nobody's first house (`None` when every house is
/// somebody's first), and the *second agents* of a house are the agents for
/// which it is second. The first-house set and second-house set are disjoint.
#[derive(Clone, Debug)]
pub struct HouseClassification {
    first_house: Vec<HouseId>,
    second_house: Vec<Option<HouseId>>,
    is_first: Vec<bool>,
    is_second: Vec<bool>,
    first_agents: Vec<Vec<AgentId>>,
    second_agents: Vec<Vec<AgentId>>,
}

impl HouseClassification {
    pub fn new(p: &Problem) -> Self {
        let mut first_house = Vec::with_capacity(p.n_agents());
        let mut is_first = vec![false; p.n_houses()];
        let mut first_agents = vec![Vec::new(); p.n_houses()];
        for i in p.agents() {
            let f = p.ranking(i)[0];
            first_house.push(f);
            is_first[f.0] = true;
            first_agents[f.0].push(i);
        }
        let mut second_house = Vec::with_capacity(p.n_agents());
        let mut is_second = vec![false; p.n_houses()];
        let mut second_agents = vec![Vec::new(); p.n_houses()];
        for i in p.agents() {
            let s = p.ranking(i).iter().copied().find(|h| !is_first[h.0]);
            second_house.push(s);
            if let Some(s) = s {
                is_second[s.0] = true;
                second_agents[s.0].push(i);
            }
        }
        HouseClassification {
            first_house,
            second_house,
            is_first,
            is_second,
            first_agents,
            second_agents,
        }
    }

    pub fn first_house(&self, i: AgentId) -> HouseId {
        self.first_house[i.0]
    }

    pub fn second_house(&self, i: AgentId) -> Option<HouseId> {
        self.second_house[i.0]
    }

    pub fn is_first_house(&self, h: HouseId) -> bool {
        self.is_first[h.0]
    }

    pub fn is_second_house(&self, h: HouseId) -> bool {
        self.is_second[h.0]
    }

    pub fn first_houses(&self) -> impl Iterator<Item = HouseId> + '_ {
        self.is_first
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(h, _)| HouseId(h))
    }

    pub fn second_houses(&self) -> impl Iterator<Item = HouseId> + '_ {
        self.is_second
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(h, _)| HouseId(h))
    }

    pub fn first_agents(&self, h: HouseId) -> &[AgentId] {
        &self.first_agents[h.0]
    }

    pub fn second_agents(&self, h: HouseId) -> &[AgentId] {
        &self.second_agents[h.0]
    }

    /// Classifies a holding for agent `i`. `None` counts as the second house
    /// exactly when no second house exists, and as bad otherwise.
    pub fn holding_kind(&self, p: &Problem, i: AgentId, holding: Option<HouseId>) -> HoldingKind {
        if holding == Some(self.first_house[i.0]) {
            return HoldingKind::First;
        }
        if holding == self.second_house[i.0] {
            return HoldingKind::Second;
        }
        if p.prefers(i, self.second_house[i.0], holding) {
            return HoldingKind::Bad;
        }
        // Better than the second house yet neither first nor second: must be
        // somebody else's first house.
        debug_assert!(holding.is_some_and(|h| self.is_first[h.0]));
        HoldingKind::OtherFirst
    }

    /// Is `holding` strictly worse than agent `i`'s second house?
    pub fn is_bad(&self, p: &Problem, i: AgentId, holding: Option<HouseId>) -> bool {
        self.holding_kind(p, i, holding) == HoldingKind::Bad
    }
}

/// A sub-problem over subsets of agents and houses, re-indexed densely, with
/// maps back to the parent. Relative preference order is preserved.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub problem: Problem,
    agent_map: Vec<AgentId>,
    house_map: Vec<HouseId>,
    house_back: Vec<Option<HouseId>>,
}

/// Restricts `p` to the given agents and houses. The subsets keep their given
/// order for re-indexing; the house subset must be at least as large as the
/// agent subset.
pub fn reduce(p: &Problem, agents: &[AgentId], houses: &[HouseId]) -> Result<Reduction, ReduceError> {
    if agents.is_empty() {
        return Err(ReduceError::EmptyAgentSubset);
    }
    if houses.len() < agents.len() {
        return Err(ReduceError::EmptyHouseSubset {
            agents: agents.len(),
            houses: houses.len(),
        });
    }
    let mut seen_agent = vec![false; p.n_agents()];
    for &AgentId(a) in agents {
        if a >= p.n_agents() {
            return Err(ReduceError::UnknownAgent(a));
        }
        if seen_agent[a] {
            return Err(ReduceError::DuplicateAgent(a));
        }
        seen_agent[a] = true;
    }
    let mut house_back = vec![None; p.n_houses()];
    for (new, &HouseId(h)) in houses.iter().enumerate() {
        if h >= p.n_houses() {
            return Err(ReduceError::UnknownHouse(h));
        }
        if house_back[h].is_some() {
            return Err(ReduceError::DuplicateHouse(h));
        }
        house_back[h] = Some(HouseId(new));
    }
    let rankings = agents
        .iter()
        .map(|&a| {
            p.ranking(a)
                .iter()
                .filter_map(|&h| house_back[h.0])
                .collect()
        })
        .collect();
    let problem = Problem::new(agents.len(), houses.len(), rankings)
        .expect("restriction of a valid problem is valid");
    Ok(Reduction {
        problem,
        agent_map: agents.to_vec(),
        house_map: houses.to_vec(),
        house_back,
    })
}

impl Reduction {
    pub fn parent_agent(&self, i: AgentId) -> AgentId {
        self.agent_map[i.0]
    }

    pub fn parent_house(&self, h: HouseId) -> HouseId {
        self.house_map[h.0]
    }

    /// Restricts a parent matching to the reduced agents. Fails if a reduced
    /// agent holds a house outside the house subset.
    pub fn restrict_matching(&self, mu: &Matching) -> Result<Matching, ReduceError> {
        let mut slots = Vec::with_capacity(self.agent_map.len());
        for &a in &self.agent_map {
            let slot = match mu.house_of(a) {
                None => None,
                Some(h) => match self.house_back[h.0] {
                    Some(new) => Some(new),
                    None => {
                        return Err(ReduceError::HoldingOutsideSubset {
                            agent: a.0,
                            house: h.0,
                        })
                    }
                },
            };
            slots.push(slot);
        }
        Ok(Matching::new(&self.problem, slots).expect("restriction preserves injectivity"))
    }

    /// Lifts a reduced matching back to the parent index space; parent agents
    /// outside the reduction stay unmatched.
    pub fn lift_matching(&self, parent: &Problem, mu: &Matching) -> Matching {
        let mut slots = vec![None; parent.n_agents()];
        for (new, &a) in self.agent_map.iter().enumerate() {
            slots[a.0] = mu.house_of(AgentId(new)).map(|h| self.house_map[h.0]);
        }
        Matching::new(parent, slots).expect("lift preserves injectivity")
    }
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    pub fn problem(rankings: &[&[usize]]) -> Problem {
        let n_houses = rankings.first().map_or(0, |r| r.len());
        Problem::new(
            rankings.len(),
            n_houses,
            rankings
                .iter()
                .map(|r| r.iter().map(|&h| HouseId(h)).collect())
                .collect(),
        )
        .expect("test fixture must be valid")
    }

    // Houses a..d are indices 0..3 in all four-house fixtures.
    pub fn table1() -> Problem {
        problem(&[&[0, 3, 2, 1], &[0, 1, 3, 2], &[0, 1, 2, 3], &[0, 2, 1, 3]])
    }

    pub fn table2() -> Problem {
        problem(&[&[0, 3, 1, 2], &[3, 1, 0, 2], &[0, 2, 1, 3], &[3, 1, 2, 0]])
    }

    pub fn table6() -> Problem {
        problem(&[&[0, 1, 2, 3], &[1, 0, 2, 3], &[1, 2, 0, 3], &[1, 2, 0, 3]])
    }

    /// table1 plus a clone of agent 2 (index 4) and a universally-last fifth
    /// house.
    pub fn example1_clone() -> Problem {
        problem(&[
            &[0, 3, 2, 1, 4],
            &[0, 1, 3, 2, 4],
            &[0, 1, 2, 3, 4],
            &[0, 2, 1, 3, 4],
            &[0, 1, 3, 2, 4],
        ])
    }

    pub fn matching(p: &Problem, pairs: &[(usize, usize)]) -> Matching {
        Matching::from_pairs(p, pairs).expect("test matching must be valid")
    }
}
