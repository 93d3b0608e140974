use crate::casedata::case::{DiagnosisLabel, PatientCase};
use crate::error::{Error, Result};
use crate::icl::Exemplar;
use crate::numerics::tensor::cosine;

/// Predicts a label for `query` from an ordered context.
///
/// Implementations must be deterministic for a given `(context, query)`.
pub trait Scorer: Sync {
    fn predict(&self, context: &[&Exemplar], query: &PatientCase, query_embedding: &[f64]) -> Result<DiagnosisLabel>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn predict(&self, context: &[&Exemplar], query: &PatientCase, query_embedding: &[f64]) -> Result<DiagnosisLabel> {
        (**self).predict(context, query, query_embedding)
    }
}

/// Similarity voting: exemplar at position `r` votes for its label with
/// weight `cos(query, exemplar) * (r + 1) / |context|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimilarityScorer;

impl Scorer for SimilarityScorer {
    fn predict(&self, context: &[&Exemplar], _query: &PatientCase, query_embedding: &[f64]) -> Result<DiagnosisLabel> {
        internal_scorer_predict(context, query_embedding)
    }
}

/// Highest total vote among labels present in the context; ties go to the
/// label listed first in [`DiagnosisLabel::ALL`].
pub fn internal_scorer_predict(context: &[&Exemplar], query_embedding: &[f64]) -> Result<DiagnosisLabel> {
    if context.is_empty() {
        return Err(Error::validation("scorer context is empty"));
    }
    let m = context.len() as f64;
    let mut votes: [Option<f64>; DiagnosisLabel::COUNT] = [None; DiagnosisLabel::COUNT];
    for (rank, ex) in context.iter().enumerate() {
        if ex.embedding.len() != query_embedding.len() {
            return Err(Error::dimension(format!(
                "exemplar `{}` embedding has {} dims, query has {}",
                ex.id(),
                ex.embedding.len(),
                query_embedding.len()
            )));
        }
        let w = cosine(query_embedding, &ex.embedding) * (rank + 1) as f64 / m;
        *votes[ex.label().index()].get_or_insert(0.0) += w;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in votes.iter().enumerate() {
        if let Some(v) = *v {
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    DiagnosisLabel::from_index(best.expect("nonempty context").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casedata::case::Gender;

    fn ex(id: &str, label: DiagnosisLabel, emb: Vec<f64>) -> Exemplar {
        let case = PatientCase::new(id, Gender::Male, 60.0, 100.0, 20.0).with_diagnosis(label);
        Exemplar::new(case, 60.0, emb).unwrap()
    }

    #[test]
    fn single_exemplar_wins() {
        let a = ex("a", DiagnosisLabel::GHD, vec![1.0, 0.0]);
        assert_eq!(internal_scorer_predict(&[&a], &[-1.0, 0.0]).unwrap(), DiagnosisLabel::GHD);
        assert!(internal_scorer_predict(&[], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn identical_exemplar_dominates() {
        let a = ex("a", DiagnosisLabel::Stunt, vec![0.0, 1.0, 0.0]);
        let b = ex("b", DiagnosisLabel::GHD, vec![1.0, 0.0, 0.0]);
        let c = ex("c", DiagnosisLabel::Normal, vec![0.0, 0.0, 1.0]);
        let q = [1.0, 0.0, 0.0];
        assert_eq!(internal_scorer_predict(&[&b, &a, &c], &q).unwrap(), DiagnosisLabel::GHD);
    }

    #[test]
    fn reversing_equal_similarities_flips() {
        let a = ex("a", DiagnosisLabel::Stunt, vec![1.0, 1.0]);
        let b = ex("b", DiagnosisLabel::GHD, vec![1.0, 1.0]);
        let q = [2.0, 2.0];
        assert_eq!(internal_scorer_predict(&[&a, &b], &q).unwrap(), DiagnosisLabel::GHD);
        assert_eq!(internal_scorer_predict(&[&b, &a], &q).unwrap(), DiagnosisLabel::Stunt);
    }

    #[test]
    fn ties_go_to_first_label() {
        let a = ex("a", DiagnosisLabel::Stunt, vec![1.0, 0.0]);
        let b = ex("b", DiagnosisLabel::Normal, vec![0.0, 1.0]);
        assert_eq!(internal_scorer_predict(&[&a, &b], &[0.0, 0.0]).unwrap(), DiagnosisLabel::Normal);
    }
}
