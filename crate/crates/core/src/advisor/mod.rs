//! Prompt assembly, completion backends and the two-question exchange.
//!
//! A prompt is laid out as
//!
//! ```text
//! <role preamble>
//!
//! Example 1 :
//! <case layout>
//! Preliminary diagnosis : <label>
//!
//! …
//!
//! Case :
//! <case layout>
//!
//! Q : <diagnosis question>
//! ```
//!
//! The treatment turn repeats that text and appends `A : <first answer>` and
//! `Q : <treatment question>`.

mod mock;
mod remote;
pub mod render;
pub mod treatment;

use std::fmt::Write as _;
use std::time::Duration;

pub use mock::MockBackend;
pub use remote::{RemoteBackend, DEFAULT_API_URL, ENV_API_KEY, ENV_API_URL};
pub use render::{parse_case_block, render_case, DIAGNOSIS_PREFIX};
pub use treatment::{treatment_for, PLACEHOLDER};

use crate::casedata::case::{ensure_valid, PatientCase};
use crate::error::{Error, Result};
use crate::icl::Exemplar;

pub const ROLE_PREAMBLE: &str = include_str!("preamble.txt");
pub const QUESTION_DIAGNOSIS: &str = "Please give the preliminary diagnosis of the case above.";
pub const QUESTION_TREATMENT: &str =
    "Please give a reasonable and reliable treatment plan according to the above diagnosis.";
pub const CASE_HEADER: &str = "Case :";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub role_preamble: String,
    pub exemplar_block: String,
    pub case_block: String,
    pub question_1: String,
    pub question_2: String,
}

impl Prompt {
    /// First-turn text.
    pub fn diagnosis_text(&self) -> String {
        let mut s = format!("{}\n\n", self.role_preamble);
        if !self.exemplar_block.is_empty() {
            s.push_str(&self.exemplar_block);
            s.push('\n');
        }
        s.push_str(&self.case_block);
        let _ = write!(s, "\nQ : {}\n", self.question_1);
        s
    }

    /// Second-turn text, carrying the first answer.
    pub fn treatment_text(&self, diagnosis_answer: &str) -> String {
        format!(
            "{}\nA : {}\n\nQ : {}\n",
            self.diagnosis_text(),
            diagnosis_answer.trim(),
            self.question_2
        )
    }
}

/// Exemplar layout with the bone age the pipeline actually used.
fn exemplar_text(index: usize, ex: &Exemplar) -> String {
    let mut case = ex.case.clone();
    case.bone_age_months = Some(ex.record.bone_age_months);
    format!(
        "Example {index} :\n{}{DIAGNOSIS_PREFIX} {}\n",
        render_case(&case),
        ex.label().display_name()
    )
}

pub fn build_prompt(context: &[&Exemplar], query: &PatientCase) -> Result<Prompt> {
    ensure_valid(query)?;
    let exemplar_block = context
        .iter()
        .enumerate()
        .map(|(i, ex)| exemplar_text(i + 1, ex))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Prompt {
        role_preamble: ROLE_PREAMBLE.to_string(),
        exemplar_block,
        case_block: format!("{CASE_HEADER}\n{}", render_case(query)),
        question_1: QUESTION_DIAGNOSIS.to_string(),
        question_2: QUESTION_TREATMENT.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    /// Per-request bound, connect through body.
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: None,
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, prompt: &str, settings: &GenerationSettings) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advice {
    pub diagnosis_text: String,
    pub treatment_text: String,
    pub backend_id: String,
    /// Text of the last response received.
    pub raw_response: String,
}

/// Diagnosis text from a first-turn answer, without any `A :` or
/// `Preliminary diagnosis :` prefix.
pub fn parse_diagnosis(response: &str) -> Result<String> {
    let mut s = response.trim();
    s = s.strip_prefix("A :").unwrap_or(s).trim();
    s = s.strip_prefix(DIAGNOSIS_PREFIX).unwrap_or(s).trim();
    let first = s.lines().next().unwrap_or("").trim();
    if first.is_empty() {
        return Err(Error::Format {
            message: "response carries no diagnosis".into(),
            raw_response: response.to_string(),
        });
    }
    Ok(first.to_string())
}

/// Runs the diagnosis turn, then the treatment turn.
pub fn complete(backend: &dyn CompletionBackend, prompt: &Prompt, settings: &GenerationSettings) -> Result<Advice> {
    let first = backend.complete(&prompt.diagnosis_text(), settings)?;
    let diagnosis_text = parse_diagnosis(&first)?;
    let second = backend.complete(&prompt.treatment_text(&first), settings)?;
    let mut treatment = second.trim();
    treatment = treatment.strip_prefix("A :").unwrap_or(treatment).trim();
    if treatment.is_empty() {
        return Err(Error::Format {
            message: "response carries no treatment".into(),
            raw_response: second.clone(),
        });
    }
    Ok(Advice {
        diagnosis_text,
        treatment_text: treatment.to_string(),
        backend_id: backend.id(),
        raw_response: second,
    })
}
