//! Exhaustive ground truth for small instances: enumerate every matching and
//! compute the popular, minimal-envy and most-popular sets directly from
//! their definitions, with no shortcuts shared with the fast algorithms.

use thiserror::Error;

use crate::problem::{reduce, AgentId, HouseId, Matching, Problem};

/// Default cap on agents for full matching enumeration.
pub const DEFAULT_LIMIT: usize = 6;
/// Default cap on agents for the subset-times-matching search of
/// [`most_popular_set`].
pub const DEFAULT_SUBSET_LIMIT: usize = 5;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance with {agents} agents exceeds the enumeration limit {limit}")]
    InstanceTooLarge { agents: usize, limit: usize },
    #[error("oracle cross-check failed: {0}")]
    CrossCheckFailed(String),
}

fn guard(agents: usize, limit: usize) -> Result<(), OracleError> {
    if agents > limit {
        Err(OracleError::InstanceTooLarge { agents, limit })
    } else {
        Ok(())
    }
}

/// Every injective partial assignment of agents to houses, in a fixed
/// depth-first order: agents by index, each trying "unmatched" first and then
/// the houses in ascending order.
pub fn enumerate_matchings(p: &Problem, limit: usize) -> Result<Vec<Matching>, OracleError> {
    guard(p.n_agents(), limit)?;
    let mut out = Vec::new();
    let mut slots: Vec<Option<HouseId>> = vec![None; p.n_agents()];
    let mut taken = vec![false; p.n_houses()];
    fn descend(
        p: &Problem,
        agent: usize,
        slots: &mut Vec<Option<HouseId>>,
        taken: &mut Vec<bool>,
        out: &mut Vec<Matching>,
    ) {
        if agent == p.n_agents() {
            out.push(
                Matching::new(p, slots.clone()).expect("enumeration preserves injectivity"),
            );
            return;
        }
        slots[agent] = None;
        descend(p, agent + 1, slots, taken, out);
        for h in 0..p.n_houses() {
            if !taken[h] {
                taken[h] = true;
                slots[agent] = Some(HouseId(h));
                descend(p, agent + 1, slots, taken, out);
                slots[agent] = None;
                taken[h] = false;
            }
        }
    }
    descend(p, 0, &mut slots, &mut taken, &mut out);
    Ok(out)
}

// Per-agent rank of the assigned house, with a sentinel one past the worst
// house for "unmatched". Lower is better, so majority comparisons reduce to
// counting coordinate-wise wins.
fn rank_vector(p: &Problem, mu: &Matching) -> Vec<u32> {
    p.agents()
        .map(|i| match mu.house_of(i) {
            Some(h) => p.rank_of(i, h),
            None => p.n_houses() as u32,
        })
        .collect()
}

fn beats(challenger: &[u32], incumbent: &[u32]) -> bool {
    let mut plus = 0usize;
    let mut minus = 0usize;
    for (c, i) in challenger.iter().zip(incumbent) {
        if c < i {
            plus += 1;
        } else if i < c {
            minus += 1;
        }
    }
    plus > minus
}

/// All matchings that no other matching beats in whole-population majority
/// comparison.
pub fn popular_set(p: &Problem, limit: usize) -> Result<Vec<Matching>, OracleError> {
    let all = enumerate_matchings(p, limit)?;
    let ranks: Vec<Vec<u32>> = all.iter().map(|mu| rank_vector(p, mu)).collect();
    Ok(all
        .iter()
        .zip(&ranks)
        .filter(|(_, mine)| !ranks.iter().any(|other| beats(other, mine)))
        .map(|(mu, _)| mu.clone())
        .collect())
}

/// Does any matching at all beat `mu` by majority?
pub fn is_popular_bruteforce(p: &Problem, mu: &Matching, limit: usize) -> Result<bool, OracleError> {
    let all = enumerate_matchings(p, limit)?;
    let mine = rank_vector(p, mu);
    Ok(!all.iter().any(|other| beats(&rank_vector(p, other), &mine)))
}

fn envy_count(p: &Problem, mu: &Matching) -> usize {
    p.envying_agents(mu).len()
}

// Envy inside the reduced problem of the envying agents and the houses not
// held by the others, straight from the definition.
fn remaining_envy(p: &Problem, mu: &Matching) -> usize {
    let envious = p.envying_agents(mu);
    let mut kept = vec![true; p.n_houses()];
    let mut is_envious = vec![false; p.n_agents()];
    for &i in &envious {
        is_envious[i.0] = true;
    }
    for i in p.agents() {
        if !is_envious[i.0] {
            if let Some(h) = mu.house_of(i) {
                kept[h.0] = false;
            }
        }
    }
    envious
        .iter()
        .filter(|&&i| {
            p.houses()
                .any(|h| kept[h.0] && p.prefers(i, Some(h), mu.house_of(i)))
        })
        .count()
}

/// All matchings that minimize the number of envying agents, and among those
/// the envy of the reduced problem of envying agents and leftover houses.
pub fn minimal_envy_set(p: &Problem, limit: usize) -> Result<Vec<Matching>, OracleError> {
    let all = enumerate_matchings(p, limit)?;
    let stage1: Vec<(usize, &Matching)> = all.iter().map(|mu| (envy_count(p, mu), mu)).collect();
    let min1 = stage1.iter().map(|(e, _)| *e).min().unwrap_or(0);
    let survivors: Vec<&Matching> = stage1
        .iter()
        .filter(|(e, _)| *e == min1)
        .map(|(_, mu)| *mu)
        .collect();
    let stage2: Vec<usize> = survivors.iter().map(|mu| remaining_envy(p, mu)).collect();
    let min2 = stage2.iter().copied().min().unwrap_or(0);
    Ok(survivors
        .into_iter()
        .zip(stage2)
        .filter(|(_, e)| *e == min2)
        .map(|(mu, _)| mu.clone())
        .collect())
}

/// A matching popular among a maximum-cardinality agent subset, together
/// with that subset.
#[derive(Clone, Debug)]
pub struct MostPopular {
    pub max_subset_size: usize,
    /// Each witness is a full matching (excluded agents padded with leftover
    /// houses in index order, for display only) plus the subset it is
    /// popular among.
    pub witnesses: Vec<(Matching, Vec<AgentId>)>,
}

impl MostPopular {
    /// Does some witness agree with `mu` on exactly the subset `subset`?
    pub fn contains_restricted(&self, mu: &Matching, subset: &[AgentId]) -> bool {
        self.witnesses.iter().any(|(wit, j)| {
            j.as_slice() == subset && subset.iter().all(|&i| wit.house_of(i) == mu.house_of(i))
        })
    }
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<AgentId>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn descend(n: usize, k: usize, start: usize, current: &mut Vec<AgentId>, out: &mut Vec<Vec<AgentId>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for next in start..n {
            current.push(AgentId(next));
            descend(n, k, next + 1, current, out);
            current.pop();
        }
    }
    descend(n, k, 0, &mut current, &mut out);
    out
}

fn extend_for_display(p: &Problem, restricted: &Matching, subset: &[AgentId]) -> Matching {
    let mut slots: Vec<Option<HouseId>> = vec![None; p.n_agents()];
    let mut taken = vec![false; p.n_houses()];
    for &i in subset {
        let h = restricted.house_of(i);
        slots[i.0] = h;
        if let Some(h) = h {
            taken[h.0] = true;
        }
    }
    let mut leftovers = (0..p.n_houses()).filter(|&h| !taken[h]);
    for i in p.agents() {
        if slots[i.0].is_none() && !subset.contains(&i) {
            slots[i.0] = leftovers.next().map(HouseId);
        }
    }
    Matching::new(p, slots).expect("display extension keeps injectivity")
}

/// Finds the largest subset size such that some matching is popular among the
/// subset (with the full house set), and returns every witness at that size.
pub fn most_popular_set(p: &Problem, limit: usize) -> Result<MostPopular, OracleError> {
    guard(p.n_agents(), limit)?;
    if p.n_agents() == 0 {
        return Ok(MostPopular {
            max_subset_size: 0,
            witnesses: vec![(Matching::empty(p), Vec::new())],
        });
    }
    let houses: Vec<HouseId> = p.houses().collect();
    for size in (1..=p.n_agents()).rev() {
        let mut witnesses = Vec::new();
        for subset in subsets_of_size(p.n_agents(), size) {
            let red = reduce(p, &subset, &houses).expect("full house set covers any subset");
            for mu in popular_set(&red.problem, limit)? {
                let lifted = red.lift_matching(p, &mu);
                witnesses.push((extend_for_display(p, &lifted, &subset), subset.clone()));
            }
        }
        if !witnesses.is_empty() {
            return Ok(MostPopular {
                max_subset_size: size,
                witnesses,
            });
        }
    }
    Ok(MostPopular {
        max_subset_size: 0,
        witnesses: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ReportOptions {
    pub limit: usize,
    pub subset_limit: usize,
    pub with_most_popular: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            limit: DEFAULT_LIMIT,
            subset_limit: DEFAULT_SUBSET_LIMIT,
            with_most_popular: false,
        }
    }
}

/// Exhaustive summary of a small instance. Construction re-verifies two
/// structural identities and fails loudly rather than returning inconsistent
/// sets: when popular matchings exist they must equal the minimal-envy set,
/// and every minimal-envy matching must appear among the most-popular
/// witnesses (restricted to its first-or-second receivers).
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub n_matchings: usize,
    pub popular: Vec<Matching>,
    pub minimal_envy: Vec<Matching>,
    pub most_popular: Option<MostPopular>,
}

impl OracleReport {
    pub fn max_popular_subset_size(&self) -> Option<usize> {
        self.most_popular.as_ref().map(|mp| mp.max_subset_size)
    }
}

pub fn report(p: &Problem, opts: &ReportOptions) -> Result<OracleReport, OracleError> {
    let n_matchings = enumerate_matchings(p, opts.limit)?.len();
    let popular = popular_set(p, opts.limit)?;
    let minimal_envy = minimal_envy_set(p, opts.limit)?;
    if !popular.is_empty() && popular != minimal_envy {
        return Err(OracleError::CrossCheckFailed(format!(
            "popular set ({}) differs from minimal-envy set ({}) although popular matchings exist",
            popular.len(),
            minimal_envy.len()
        )));
    }
    let most_popular = if opts.with_most_popular {
        let mp = most_popular_set(p, opts.subset_limit)?;
        let cls = crate::problem::HouseClassification::new(p);
        for mu in &minimal_envy {
            let receivers: Vec<AgentId> = p
                .agents()
                .filter(|&i| {
                    matches!(
                        cls.holding_kind(p, i, mu.house_of(i)),
                        crate::problem::HoldingKind::First | crate::problem::HoldingKind::Second
                    )
                })
                .collect();
            if receivers.len() != mp.max_subset_size || !mp.contains_restricted(mu, &receivers) {
                return Err(OracleError::CrossCheckFailed(
                    "a minimal-envy matching is missing from the most-popular witnesses".into(),
                ));
            }
        }
        Some(mp)
    } else {
        None
    };
    Ok(OracleReport {
        n_matchings,
        popular,
        minimal_envy,
        most_popular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::test_fixtures::{example1_clone, matching, problem, table1, table2, table6};

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    #[test]
    fn counts_tiny_spaces() {
        let one = problem(&[&[0]]);
        assert_eq!(enumerate_matchings(&one, 6).unwrap().len(), 2);
        let two = problem(&[&[0, 1], &[1, 0]]);
        assert_eq!(enumerate_matchings(&two, 6).unwrap().len(), 7);
        assert_eq!(enumerate_matchings(&table2(), 6).unwrap().len(), 209);
    }

    #[test]
    fn enumeration_is_deterministic_and_duplicate_free() {
        let p = table2();
        let a = enumerate_matchings(&p, 6).unwrap();
        let b = enumerate_matchings(&p, 6).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
    }

    #[test]
    fn guard_rejects_large_instances() {
        let p = table2();
        assert_eq!(
            enumerate_matchings(&p, 3).err(),
            Some(OracleError::InstanceTooLarge { agents: 4, limit: 3 })
        );
    }

    #[test]
    fn popular_set_of_table2_is_exactly_two() {
        let p = table2();
        let set = popular_set(&p, 6).unwrap();
        let expected = vec![
            matching(&p, &[(0, A), (1, B), (2, C), (3, D)]),
            matching(&p, &[(0, A), (1, D), (2, C), (3, B)]),
        ];
        let mut set_sorted = set;
        set_sorted.sort();
        let mut expected = expected;
        expected.sort();
        assert_eq!(set_sorted, expected);
    }

    #[test]
    fn popular_set_of_table1_is_the_expected_pair() {
        let p = table1();
        let set = popular_set(&p, 6).unwrap();
        assert!(set.contains(&matching(&p, &[(0, D), (1, A), (2, B), (3, C)])));
        // Hand enumeration: house a can go to agent 2 or agent 3 only.
        assert_eq!(set.len(), 2);
        assert!(set.contains(&matching(&p, &[(0, D), (1, B), (2, A), (3, C)])));
    }

    #[test]
    fn popular_set_of_table6_is_empty() {
        assert!(popular_set(&table6(), 6).unwrap().is_empty());
    }

    #[test]
    fn minimal_envy_set_of_table1_contains_expected_matching() {
        let p = table1();
        let set = minimal_envy_set(&p, 6).unwrap();
        assert!(set.contains(&matching(&p, &[(0, D), (1, A), (2, B), (3, C)])));
    }

    #[test]
    fn minimal_envy_set_of_table6_shape() {
        let p = table6();
        let set = minimal_envy_set(&p, 6).unwrap();
        // House a to agent 1, houses b and c to two distinct agents of
        // {2,3,4}; the third gets d or stays unmatched: 3 * 2 * 2 matchings.
        assert_eq!(set.len(), 12);
        for mu in &set {
            assert_eq!(mu.house_of(AgentId(0)), Some(HouseId(A)));
            let rest: Vec<_> = [1, 2, 3]
                .iter()
                .map(|&i| mu.house_of(AgentId(i)))
                .collect();
            assert!(rest.contains(&Some(HouseId(B))));
            assert!(rest.contains(&Some(HouseId(C))));
        }
    }

    #[test]
    fn minimal_envy_is_first_choices_when_disjoint() {
        let p = problem(&[&[0, 1], &[1, 0]]);
        let set = minimal_envy_set(&p, 6).unwrap();
        assert_eq!(set, vec![matching(&p, &[(0, 0), (1, 1)])]);
    }

    #[test]
    fn most_popular_on_table6() {
        let p = table6();
        let mp = most_popular_set(&p, 5).unwrap();
        assert_eq!(mp.max_subset_size, 3);
        let witness = matching(&p, &[(0, D), (1, A), (2, B), (3, C)]);
        let subset = vec![AgentId(1), AgentId(2), AgentId(3)];
        assert!(mp.contains_restricted(&witness, &subset));
        assert!(mp.witnesses.iter().any(|(m, j)| *m == witness && *j == subset));
    }

    #[test]
    fn most_popular_reduces_to_popular_set_when_one_exists() {
        let p = table2();
        let mp = most_popular_set(&p, 5).unwrap();
        assert_eq!(mp.max_subset_size, 4);
        let mut projected: Vec<Matching> = mp.witnesses.iter().map(|(m, _)| m.clone()).collect();
        projected.sort();
        projected.dedup();
        let mut popular = popular_set(&p, 6).unwrap();
        popular.sort();
        assert_eq!(projected, popular);
    }

    #[test]
    fn most_popular_on_clone_instance_excludes_one_contested_agent() {
        let p = example1_clone();
        let mp = most_popular_set(&p, 5).unwrap();
        assert_eq!(mp.max_subset_size, 4);
        let mut excluded: Vec<usize> = mp
            .witnesses
            .iter()
            .map(|(_, j)| {
                (0..p.n_agents())
                    .find(|&i| !j.contains(&AgentId(i)))
                    .expect("one agent excluded")
            })
            .collect();
        excluded.sort();
        excluded.dedup();
        // Indices 1, 2, 4 are agents 2, 3 and the clone 2'.
        assert_eq!(excluded, vec![1, 2, 4]);
    }

    #[test]
    fn report_checks_hold_on_fixtures() {
        let opts = ReportOptions {
            with_most_popular: true,
            ..ReportOptions::default()
        };
        for p in [table1(), table2(), table6()] {
            let rep = report(&p, &opts).expect("cross-checks must pass");
            if !rep.popular.is_empty() {
                assert_eq!(rep.popular, rep.minimal_envy);
            }
        }
    }
}
