mod common;

use common::{as_set, brute_force_order, brute_force_subset, ordering_fixtures, random_exemplars, rng, selection_fixtures};
use gda_core::casedata::{DiagnosisLabel, PatientCase};
use gda_core::icl::{
    optimize_ordering, select_exemplars, Exemplar, OrderingStrategy, RewardMode, Scorer, SelectionReport,
    SelectionStrategy, SimilarityScorer,
};
use gda_core::Error;
use proptest::prelude::*;

#[test]
fn exhaustive_selection_matches_enumeration() {
    for (dataset, probe, k, mode) in selection_fixtures() {
        let got = select_exemplars(&dataset, &probe, k, &SimilarityScorer, mode, SelectionStrategy::Exhaustive, 10_000)
            .unwrap();
        let (best, argmax) = brute_force_subset(&SimilarityScorer, &dataset, &probe, k, mode);
        assert_eq!(got.reward, best);
        assert!(argmax.contains(&got.source_ids), "{:?} not among {argmax:?}", got.source_ids);
        assert_eq!(got.members.len(), k);
    }
}

#[test]
fn exhaustive_ordering_matches_enumeration() {
    for (members, probe, mode) in ordering_fixtures() {
        let set = as_set(members.clone());
        let got = optimize_ordering(&set, &probe, &SimilarityScorer, mode, OrderingStrategy::Exhaustive, 10_000).unwrap();
        let (best, argmax) = brute_force_order(&SimilarityScorer, &members, &probe, mode);
        assert_eq!(got.reward, best);
        assert!(argmax.contains(&got.permutation));
        // the first maximum in lexicographic order
        assert_eq!(&got.permutation, argmax.iter().min().unwrap());
    }
}

#[test]
fn greedy_never_beats_the_optimum_and_stays_close() {
    let mut ratios = Vec::new();
    for (dataset, probe, k, mode) in selection_fixtures() {
        let g = select_exemplars(&dataset, &probe, k, &SimilarityScorer, mode, SelectionStrategy::Greedy, 10_000)
            .unwrap();
        let (best, _) = brute_force_subset(&SimilarityScorer, &dataset, &probe, k, mode);
        assert!(g.reward <= best);
        if best > 0.0 {
            ratios.push(g.reward / best);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean >= 0.8, "mean greedy/optimum ratio {mean}");
}

#[test]
fn greedy_insertion_never_beats_exhaustive_ordering() {
    for (members, probe, mode) in ordering_fixtures() {
        let set = as_set(members);
        let ex = optimize_ordering(&set, &probe, &SimilarityScorer, mode, OrderingStrategy::Exhaustive, 10_000).unwrap();
        let gr =
            optimize_ordering(&set, &probe, &SimilarityScorer, mode, OrderingStrategy::GreedyInsertion, 10_000).unwrap();
        assert!(gr.reward <= ex.reward);
        let m = set.len() as u64;
        assert!(gr.evaluations <= m * (m + 1) / 2);
        let mut p = gr.permutation.clone();
        p.sort_unstable();
        assert_eq!(p, (0..set.len()).collect::<Vec<_>>());
    }
}

#[test]
fn budget_is_enforced() {
    let mut r = rng(9);
    let dataset = random_exemplars("d", 12, 4, 3, &mut r);
    let probe = random_exemplars("p", 4, 4, 3, &mut r);
    let e = select_exemplars(&dataset, &probe, 6, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Exhaustive, 900);
    assert!(matches!(e, Err(Error::BudgetExceeded { .. })), "{e:?}");
    let ok = select_exemplars(&dataset, &probe, 6, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Greedy, 900);
    assert!(ok.is_ok());
    let set = as_set(dataset[..7].to_vec());
    let e = optimize_ordering(&set, &probe, &SimilarityScorer, RewardMode::Heldout, OrderingStrategy::Exhaustive, 5039);
    assert!(matches!(e, Err(Error::BudgetExceeded { .. })));
}

#[test]
fn bad_k_and_overlapping_probe_are_rejected() {
    let mut r = rng(10);
    let dataset = random_exemplars("d", 5, 4, 3, &mut r);
    let probe = random_exemplars("p", 3, 4, 3, &mut r);
    for k in [0, 6] {
        assert!(select_exemplars(&dataset, &probe, k, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Greedy, 100)
            .is_err());
    }
    let overlap = dataset[..2].to_vec();
    assert!(select_exemplars(&dataset, &overlap, 2, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Greedy, 100)
        .is_err());
}

/// Ignores position: majority label of the context, ties to the first label.
struct Majority;

impl Scorer for Majority {
    fn predict(&self, context: &[&Exemplar], _q: &PatientCase, _e: &[f64]) -> gda_core::Result<DiagnosisLabel> {
        let mut counts = [0usize; DiagnosisLabel::COUNT];
        for ex in context {
            counts[ex.label().index()] += 1;
        }
        let best = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
        DiagnosisLabel::from_index(best)
    }
}

#[test]
fn order_insensitive_scorer_keeps_identity() {
    for (members, probe, _) in ordering_fixtures() {
        let set = as_set(members);
        for s in [OrderingStrategy::Exhaustive, OrderingStrategy::GreedyInsertion] {
            let o = optimize_ordering(&set, &probe, &Majority, RewardMode::Heldout, s, 10_000).unwrap();
            assert_eq!(o.permutation, (0..set.len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn selection_is_deterministic_across_runs() {
    let (dataset, probe, k, mode) = selection_fixtures().remove(3);
    let a = select_exemplars(&dataset, &probe, k, &SimilarityScorer, mode, SelectionStrategy::Exhaustive, 10_000).unwrap();
    let b = select_exemplars(&dataset, &probe, k, &SimilarityScorer, mode, SelectionStrategy::Exhaustive, 10_000).unwrap();
    assert_eq!(a.source_ids, b.source_ids);
    assert_eq!(a.evaluations, b.evaluations);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn report_round_trips(seed in 0u64..500, k in 1usize..4) {
        let mut r = rng(seed);
        let dataset = random_exemplars("d", 6, 4, 4, &mut r);
        let probe = random_exemplars("p", 5, 4, 4, &mut r);
        let set = select_exemplars(&dataset, &probe, k, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Greedy, 10_000).unwrap();
        let ord = optimize_ordering(&set, &probe, &SimilarityScorer, RewardMode::Heldout, OrderingStrategy::GreedyInsertion, 10_000).unwrap();
        let rep = SelectionReport::new(&set, &ord, SelectionStrategy::Greedy, OrderingStrategy::GreedyInsertion, RewardMode::Heldout, 10_000).unwrap();
        let back = SelectionReport::parse(&rep.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), rep.to_text());
        prop_assert_eq!(rep.ordered_ids.len(), k);
    }

    #[test]
    fn selected_reward_is_a_fraction(seed in 0u64..500) {
        let mut r = rng(seed);
        let dataset = random_exemplars("d", 6, 3, 3, &mut r);
        let probe = random_exemplars("p", 4, 3, 3, &mut r);
        let set = select_exemplars(&dataset, &probe, 2, &SimilarityScorer, RewardMode::Heldout, SelectionStrategy::Exhaustive, 10_000).unwrap();
        prop_assert!((0.0..=1.0).contains(&set.reward));
        prop_assert!((set.reward * 4.0 - (set.reward * 4.0).round()).abs() < 1e-12);
    }
}
