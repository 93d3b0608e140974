use crate::advisor::render::parse_case_block;
use crate::advisor::treatment::treatment_for;
use crate::advisor::{CompletionBackend, GenerationSettings, CASE_HEADER, DIAGNOSIS_PREFIX, QUESTION_TREATMENT};
use crate::casedata::case::{DiagnosisLabel, PatientCase};
use crate::error::{Error, Result};
use crate::fusion::{embed_case, TextEncoder};
use crate::icl::{internal_scorer_predict, Exemplar};

/// Offline stand-in for a chat model.
///
/// Diagnosis turn: reads the exemplars and the query back out of the prompt,
/// embeds them with its encoder and answers with the similarity scorer's
/// label. Treatment turn: looks the stated diagnosis up in the treatment
/// table.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub encoder: TextEncoder,
}

impl MockBackend {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        Ok(MockBackend {
            encoder: TextEncoder::with_dim(dim, seed)?,
        })
    }

    pub fn diagnose(&self, prompt: &str) -> Result<DiagnosisLabel> {
        let (examples, query) = split_prompt(prompt)?;
        let fmt_err = |e: Error| format_error(prompt, e.to_string());
        let context = examples
            .iter()
            .map(|case| {
                let b = case.bone_age_months.unwrap_or(0.0);
                Exemplar::new(case.clone(), b, embed_case(case, b, &self.encoder)?)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(fmt_err)?;
        if context.is_empty() {
            return Err(format_error(prompt, "prompt has no labeled examples".into()));
        }
        let q = embed_case(&query, query.bone_age_months.unwrap_or(0.0), &self.encoder).map_err(fmt_err)?;
        let refs: Vec<&Exemplar> = context.iter().collect();
        internal_scorer_predict(&refs, &q)
    }
}

fn format_error(prompt: &str, message: String) -> Error {
    Error::Format {
        message,
        raw_response: prompt.to_string(),
    }
}

/// Labeled example cases and the query case of a rendered prompt.
fn split_prompt(prompt: &str) -> Result<(Vec<PatientCase>, PatientCase)> {
    let lines: Vec<&str> = prompt.lines().collect();
    let is_example = |l: &str| l.starts_with("Example ") && l.ends_with(" :");
    let case_at = lines
        .iter()
        .position(|l| *l == CASE_HEADER)
        .ok_or_else(|| format_error(prompt, "prompt has no `Case :` block".into()))?;
    let mut examples = Vec::new();
    let mut i = 0;
    while i < case_at {
        if is_example(lines[i]) {
            let end = (i + 1..case_at).find(|&j| is_example(lines[j])).unwrap_or(case_at);
            let id = format!("example-{}", examples.len() + 1);
            let (case, label) = parse_case_block(&id, &lines[i + 1..end].join("\n"))
                .map_err(|e| format_error(prompt, e.to_string()))?;
            if label.is_none() {
                return Err(format_error(prompt, format!("{id} has no diagnosis")));
            }
            examples.push(case);
            i = end;
        } else {
            i += 1;
        }
    }
    let end = (case_at + 1..lines.len())
        .find(|&j| lines[j].starts_with("Q : "))
        .unwrap_or(lines.len());
    let (query, _) = parse_case_block("query", &lines[case_at + 1..end].join("\n"))
        .map_err(|e| format_error(prompt, e.to_string()))?;
    Ok((examples, query))
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock(d={},seed={})", self.encoder.dim(), self.encoder.seed)
    }

    fn complete(&self, prompt: &str, _settings: &GenerationSettings) -> Result<String> {
        let last_q = prompt.lines().rev().find(|l| l.starts_with("Q : "));
        if last_q == Some(format!("Q : {QUESTION_TREATMENT}").as_str()) {
            let answer = prompt
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix("A : "))
                .ok_or_else(|| format_error(prompt, "treatment question without a diagnosis answer".into()))?;
            let name = answer.trim().strip_prefix(DIAGNOSIS_PREFIX).unwrap_or(answer).trim();
            let label = DiagnosisLabel::from_display_name(name)
                .ok_or_else(|| format_error(prompt, format!("unknown diagnosis `{name}`")))?;
            return Ok(treatment_for(label).to_string());
        }
        let label = self.diagnose(prompt)?;
        Ok(format!("{DIAGNOSIS_PREFIX} {}", label.display_name()))
    }
}
