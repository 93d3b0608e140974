use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::icl::{Exemplar, Scorer};

/// Which cases a context is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardMode {
    /// The context's own members, each predicted with itself left out.
    Literal,
    /// A probe set disjoint from the context.
    Heldout,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::Literal => "literal",
            RewardMode::Heldout => "heldout",
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(RewardMode::Literal),
            "heldout" => Ok(RewardMode::Heldout),
            _ => Err(Error::config(format!("unknown reward mode `{s}` (literal|heldout)"))),
        }
    }
}

fn id_set<'a>(xs: &[&'a Exemplar]) -> Result<BTreeSet<&'a str>> {
    let mut set = BTreeSet::new();
    for x in xs {
        if !set.insert(x.id()) {
            return Err(Error::validation(format!("duplicate exemplar id `{}`", x.id())));
        }
    }
    Ok(set)
}

/// Fraction of `eval_set` the scorer labels correctly given `context`.
pub fn reward<S: Scorer + ?Sized>(
    scorer: &S,
    context: &[&Exemplar],
    eval_set: &[&Exemplar],
    mode: RewardMode,
) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(Error::validation("reward needs a nonempty evaluation set"));
    }
    let ctx_ids = id_set(context)?;
    let eval_ids = id_set(eval_set)?;
    match mode {
        RewardMode::Literal if ctx_ids != eval_ids => {
            return Err(Error::validation(
                "literal reward evaluates the context itself; evaluation set differs",
            ))
        }
        RewardMode::Heldout => {
            if let Some(id) = ctx_ids.intersection(&eval_ids).next() {
                return Err(Error::validation(format!("held-out case `{id}` is also in the context")));
            }
        }
        _ => {}
    }
    let mut correct = 0usize;
    for e in eval_set {
        let ok = match mode {
            RewardMode::Heldout => scorer.predict(context, &e.case, &e.embedding)? == e.label(),
            RewardMode::Literal => {
                let loo: Vec<&Exemplar> = context.iter().copied().filter(|c| c.id() != e.id()).collect();
                !loo.is_empty() && scorer.predict(&loo, &e.case, &e.embedding)? == e.label()
            }
        };
        correct += ok as usize;
    }
    Ok(correct as f64 / eval_set.len() as f64)
}

/// Memoized reward over contexts given as index lists into a fixed dataset.
pub struct RewardEvaluator<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    dataset: &'a [Exemplar],
    probe: Vec<&'a Exemplar>,
    mode: RewardMode,
    memo: Mutex<HashMap<Vec<usize>, f64>>,
    evaluations: AtomicU64,
}

impl<'a, S: Scorer + ?Sized> RewardEvaluator<'a, S> {
    /// `probe` is required in held-out mode and ignored in literal mode.
    pub fn new(scorer: &'a S, dataset: &'a [Exemplar], probe: &'a [Exemplar], mode: RewardMode) -> Result<Self> {
        let all: Vec<&Exemplar> = dataset.iter().collect();
        let ids = id_set(&all)?;
        let probe: Vec<&Exemplar> = match mode {
            RewardMode::Literal => Vec::new(),
            RewardMode::Heldout => {
                if probe.is_empty() {
                    return Err(Error::validation("held-out reward needs a nonempty probe set"));
                }
                let p: Vec<&Exemplar> = probe.iter().collect();
                if let Some(id) = id_set(&p)?.intersection(&ids).next() {
                    return Err(Error::validation(format!("probe case `{id}` is also a candidate exemplar")));
                }
                p
            }
        };
        Ok(RewardEvaluator {
            scorer,
            dataset,
            probe,
            mode,
            memo: Mutex::new(HashMap::new()),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn mode(&self) -> RewardMode {
        self.mode
    }

    pub fn dataset(&self) -> &'a [Exemplar] {
        self.dataset
    }

    /// Distinct contexts scored so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(AtomicOrdering::Relaxed)
    }

    pub fn evaluate(&self, context: &[usize]) -> Result<f64> {
        if let Some(&r) = self.memo.lock().expect("memo lock").get(context) {
            return Ok(r);
        }
        let ctx: Vec<&Exemplar> = context.iter().map(|&i| &self.dataset[i]).collect();
        let r = match self.mode {
            RewardMode::Literal => reward(self.scorer, &ctx, &ctx, self.mode)?,
            RewardMode::Heldout => reward(self.scorer, &ctx, &self.probe, self.mode)?,
        };
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.insert(context.to_vec(), r).is_none() {
            self.evaluations.fetch_add(1, AtomicOrdering::Relaxed);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casedata::case::{DiagnosisLabel, Gender, PatientCase};

    struct Fixed(DiagnosisLabel);

    impl Scorer for Fixed {
        fn predict(&self, _: &[&Exemplar], _: &PatientCase, _: &[f64]) -> Result<DiagnosisLabel> {
            Ok(self.0)
        }
    }

    fn ex(id: &str, label: DiagnosisLabel) -> Exemplar {
        let case = PatientCase::new(id, Gender::Female, 50.0, 100.0, 15.0).with_diagnosis(label);
        Exemplar::new(case, 50.0, vec![1.0]).unwrap()
    }

    #[test]
    fn counting() {
        let ctx = [ex("c", DiagnosisLabel::GHD)];
        let ev: Vec<Exemplar> = ["a", "b", "d"]
            .iter()
            .map(|i| ex(i, DiagnosisLabel::GHD))
            .chain([ex("e", DiagnosisLabel::Stunt)])
            .collect();
        let ctx_refs: Vec<&Exemplar> = ctx.iter().collect();
        let ev_refs: Vec<&Exemplar> = ev.iter().collect();
        let r = reward(&Fixed(DiagnosisLabel::GHD), &ctx_refs, &ev_refs, RewardMode::Heldout).unwrap();
        assert_eq!(r, 0.75);
        assert!(reward(&Fixed(DiagnosisLabel::GHD), &ctx_refs, &[], RewardMode::Heldout).is_err());
        assert!(reward(&Fixed(DiagnosisLabel::GHD), &ev_refs, &ev_refs, RewardMode::Heldout).is_err());
        assert!(reward(&Fixed(DiagnosisLabel::GHD), &ctx_refs, &ev_refs, RewardMode::Literal).is_err());
    }

    #[test]
    fn literal_singleton_counts_as_miss() {
        let ctx = [ex("a", DiagnosisLabel::GHD)];
        let refs: Vec<&Exemplar> = ctx.iter().collect();
        assert_eq!(reward(&Fixed(DiagnosisLabel::GHD), &refs, &refs, RewardMode::Literal).unwrap(), 0.0);
    }

    #[test]
    fn memo_counts_distinct_contexts() {
        let data: Vec<Exemplar> = ["a", "b", "c"].iter().map(|i| ex(i, DiagnosisLabel::GHD)).collect();
        let scorer = Fixed(DiagnosisLabel::GHD);
        let ev = RewardEvaluator::new(&scorer, &data, &[], RewardMode::Literal).unwrap();
        assert_eq!(ev.evaluate(&[0, 1]).unwrap(), 1.0);
        assert_eq!(ev.evaluate(&[0, 1]).unwrap(), 1.0);
        ev.evaluate(&[1, 0]).unwrap();
        assert_eq!(ev.evaluations(), 2);
    }
}
