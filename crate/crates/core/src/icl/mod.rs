//! Exemplar selection and ordering for in-context prediction.
//!
//! A [`Scorer`] predicts a label for a query given an ordered context of
//! labeled exemplars. The reward of a context is the scorer's accuracy on an
//! evaluation set; [`select_exemplars`] maximizes it over size-`k` subsets and
//! [`optimize_ordering`] over permutations of the chosen subset.

mod report;
mod reward;
mod scorer;
mod search;

pub use report::SelectionReport;
pub use reward::{reward, RewardEvaluator, RewardMode};
pub use scorer::{internal_scorer_predict, Scorer, SimilarityScorer};
pub use search::{
    binomial, factorial, optimize_ordering, select_exemplars, OrderingStrategy, SelectionStrategy,
    DEFAULT_BUDGET,
};

use crate::casedata::case::{DiagnosisLabel, PatientCase};
use crate::error::{Error, Result};
use crate::fusion::{integrate_patient_data, IntegratedRecord};

/// A labeled case with its integrated record and embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub case: PatientCase,
    pub record: IntegratedRecord,
    pub embedding: Vec<f64>,
}

impl Exemplar {
    pub fn new(case: PatientCase, bone_age_months: f64, embedding: Vec<f64>) -> Result<Self> {
        if case.diagnosis.is_none() {
            return Err(Error::validation(format!("exemplar `{}` has no label", case.case_id)));
        }
        if embedding.is_empty() || embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "exemplar `{}` needs a finite, nonempty embedding",
                case.case_id
            )));
        }
        let record = integrate_patient_data(&case, bone_age_months)?;
        Ok(Exemplar {
            case,
            record,
            embedding,
        })
    }

    pub fn id(&self) -> &str {
        &self.case.case_id
    }

    pub fn label(&self) -> DiagnosisLabel {
        self.case.diagnosis.expect("exemplars are labeled")
    }
}

/// A chosen subset, members in ascending dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    pub members: Vec<Exemplar>,
    /// Indices into the dataset the members were drawn from.
    pub source_ids: Vec<usize>,
    pub reward: f64,
    pub evaluations: u64,
}

impl ExemplarSet {
    pub fn ids(&self) -> Vec<&str> {
        self.members.iter().map(Exemplar::id).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members rearranged by `order`.
    pub fn ordered(&self, order: &Ordering) -> Result<Vec<&Exemplar>> {
        order.check(self.len())?;
        Ok(order.permutation.iter().map(|&i| &self.members[i]).collect())
    }
}

/// A permutation over the members of an [`ExemplarSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub permutation: Vec<usize>,
    pub reward: f64,
    pub evaluations: u64,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            permutation: (0..n).collect(),
            reward: f64::NAN,
            evaluations: 0,
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        if self.permutation.len() != n {
            return Err(Error::validation(format!(
                "ordering has {} entries for {n} exemplars",
                self.permutation.len()
            )));
        }
        for &i in &self.permutation {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::validation(format!("ordering {:?} is not a permutation", self.permutation)));
            }
        }
        Ok(())
    }
}
