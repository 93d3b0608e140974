use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::icl::{Exemplar, ExemplarSet, Ordering, RewardEvaluator, RewardMode, Scorer};

pub const DEFAULT_BUDGET: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStrategy {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingStrategy {
    Exhaustive,
    GreedyInsertion,
}

impl SelectionStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionStrategy::Exhaustive => "exhaustive",
            SelectionStrategy::Greedy => "greedy",
        }
    }
}

impl OrderingStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderingStrategy::Exhaustive => "exhaustive",
            OrderingStrategy::GreedyInsertion => "greedy_insertion",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for OrderingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SelectionStrategy::Exhaustive),
            "greedy" => Ok(SelectionStrategy::Greedy),
            _ => Err(Error::config(format!("unknown selection strategy `{s}`"))),
        }
    }
}

impl FromStr for OrderingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(OrderingStrategy::Exhaustive),
            "greedy_insertion" | "greedy-insertion" | "greedy" => Ok(OrderingStrategy::GreedyInsertion),
            _ => Err(Error::config(format!("unknown ordering strategy `{s}`"))),
        }
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by i + 1
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).try_fold(1u128, |acc, i| acc.checked_mul(i)).unwrap_or(u128::MAX)
}

fn check_budget(required: u128, budget: u64) -> Result<()> {
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// All size-`k` index combinations of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let Some(i) = (0..k).rev().find(|&i| c[i] != i + n - k) else {
            return out;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Advances `p` to the next lexicographic permutation; false after the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn sorted_ids<'a>(dataset: &'a [Exemplar], idx: &[usize]) -> Vec<&'a str> {
    let mut ids: Vec<&str> = idx.iter().map(|&i| dataset[i].id()).collect();
    ids.sort_unstable();
    ids
}

/// Index of the best candidate: highest reward, ties to the smallest sorted
/// id sequence.
fn best_subset(dataset: &[Exemplar], cands: &[Vec<usize>], rewards: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..cands.len() {
        let better = rewards[i] > rewards[best]
            || (rewards[i] == rewards[best] && sorted_ids(dataset, &cands[i]) < sorted_ids(dataset, &cands[best]));
        if better {
            best = i;
        }
    }
    best
}

fn evaluate_all<S: Scorer + ?Sized>(ev: &RewardEvaluator<'_, S>, cands: &[Vec<usize>]) -> Result<Vec<f64>> {
    cands.par_iter().map(|c| ev.evaluate(c)).collect()
}

/// Picks `k` exemplars from `dataset` maximizing the reward.
///
/// `probe` is the held-out evaluation set (ignored in literal mode). The
/// exhaustive strategy refuses when `C(|dataset|, k)` exceeds `budget`; the
/// greedy strategy refuses when its `k` forward steps would.
pub fn select_exemplars<S: Scorer + ?Sized>(
    dataset: &[Exemplar],
    probe: &[Exemplar],
    k: usize,
    scorer: &S,
    mode: RewardMode,
    strategy: SelectionStrategy,
    budget: u64,
) -> Result<ExemplarSet> {
    let n = dataset.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!("k = {k} must lie in 1..={n}")));
    }
    let ev = RewardEvaluator::new(scorer, dataset, probe, mode)?;
    let (chosen, reward) = match strategy {
        SelectionStrategy::Exhaustive => {
            check_budget(binomial(n, k), budget)?;
            let cands = combinations(n, k);
            let rewards = evaluate_all(&ev, &cands)?;
            let b = best_subset(dataset, &cands, &rewards);
            (cands[b].clone(), rewards[b])
        }
        SelectionStrategy::Greedy => {
            check_budget((0..k).map(|s| (n - s) as u128).sum(), budget)?;
            let mut chosen: Vec<usize> = Vec::with_capacity(k);
            let mut reward = f64::NAN;
            for _ in 0..k {
                let cands: Vec<Vec<usize>> = (0..n)
                    .filter(|i| !chosen.contains(i))
                    .map(|i| {
                        let mut c = chosen.clone();
                        c.push(i);
                        c.sort_unstable();
                        c
                    })
                    .collect();
                let rewards = evaluate_all(&ev, &cands)?;
                let b = best_subset(dataset, &cands, &rewards);
                chosen = cands[b].clone();
                reward = rewards[b];
            }
            (chosen, reward)
        }
    };
    Ok(ExemplarSet {
        members: chosen.iter().map(|&i| dataset[i].clone()).collect(),
        source_ids: chosen,
        reward,
        evaluations: ev.evaluations(),
    })
}

/// Finds the context order of `selected` maximizing the reward.
///
/// Exhaustive search walks permutations in lexicographic order and keeps the
/// first maximum. Greedy insertion adds members in index order, each at the
/// position giving the highest reward, ties to the lexicographically smaller
/// sequence.
pub fn optimize_ordering<S: Scorer + ?Sized>(
    selected: &ExemplarSet,
    probe: &[Exemplar],
    scorer: &S,
    mode: RewardMode,
    strategy: OrderingStrategy,
    budget: u64,
) -> Result<Ordering> {
    let m = selected.len();
    if m == 0 {
        return Err(Error::validation("cannot order an empty exemplar set"));
    }
    let ev = RewardEvaluator::new(scorer, &selected.members, probe, mode)?;
    let (permutation, reward) = match strategy {
        OrderingStrategy::Exhaustive => {
            check_budget(factorial(m), budget)?;
            let mut perms = Vec::new();
            let mut p: Vec<usize> = (0..m).collect();
            loop {
                perms.push(p.clone());
                if !next_permutation(&mut p) {
                    break;
                }
            }
            let rewards = evaluate_all(&ev, &perms)?;
            let mut best = 0;
            for i in 1..perms.len() {
                if rewards[i] > rewards[best] {
                    best = i;
                }
            }
            (perms[best].clone(), rewards[best])
        }
        OrderingStrategy::GreedyInsertion => {
            check_budget((m * (m + 1) / 2) as u128, budget)?;
            let mut order: Vec<usize> = Vec::with_capacity(m);
            let mut reward = f64::NAN;
            for item in 0..m {
                let cands: Vec<Vec<usize>> = (0..=order.len())
                    .map(|pos| {
                        let mut c = order.clone();
                        c.insert(pos, item);
                        c
                    })
                    .collect();
                let rewards = evaluate_all(&ev, &cands)?;
                let mut best = 0;
                for i in 1..cands.len() {
                    if rewards[i] > rewards[best] || (rewards[i] == rewards[best] && cands[i] < cands[best]) {
                        best = i;
                    }
                }
                order = cands[best].clone();
                reward = rewards[best];
            }
            (order, reward)
        }
    };
    Ok(Ordering {
        permutation,
        reward,
        evaluations: ev.evaluations(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_and_factorial() {
        assert_eq!(binomial(6, 2), 15);
        assert_eq!(binomial(50, 3), 19_600);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(factorial(0), 1);
        assert_eq!(factorial(7), 5040);
        assert_eq!(factorial(40), u128::MAX);
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn permutations_walk_in_order() {
        let mut p = vec![0, 1, 2];
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all[1], vec![0, 2, 1]);
        assert_eq!(all[5], vec![2, 1, 0]);
    }
}
