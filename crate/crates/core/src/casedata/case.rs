use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            other => Err(Error::validation(format!("unknown gender `{other}`"))),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed set of diagnoses. The declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagnosisLabel {
    Normal,
    Stunt,
    GHD,
    GrowthRetardation,
    EarlyPuberty,
    PrecociousPuberty,
    CentralPrecociousPuberty,
    IdiopathicShortStature,
}

impl DiagnosisLabel {
    pub const ALL: [DiagnosisLabel; 8] = [
        DiagnosisLabel::Normal,
        DiagnosisLabel::Stunt,
        DiagnosisLabel::GHD,
        DiagnosisLabel::GrowthRetardation,
        DiagnosisLabel::EarlyPuberty,
        DiagnosisLabel::PrecociousPuberty,
        DiagnosisLabel::CentralPrecociousPuberty,
        DiagnosisLabel::IdiopathicShortStature,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Index {
            index: i,
            len: Self::COUNT,
        })
    }

    /// Serialized name used in case files and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisLabel::Normal => "Normal",
            DiagnosisLabel::Stunt => "Stunt",
            DiagnosisLabel::GHD => "GHD",
            DiagnosisLabel::GrowthRetardation => "GrowthRetardation",
            DiagnosisLabel::EarlyPuberty => "EarlyPuberty",
            DiagnosisLabel::PrecociousPuberty => "PrecociousPuberty",
            DiagnosisLabel::CentralPrecociousPuberty => "CentralPrecociousPuberty",
            DiagnosisLabel::IdiopathicShortStature => "IdiopathicShortStature",
        }
    }

    /// Clinical wording used inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            DiagnosisLabel::Normal => "Normal",
            DiagnosisLabel::Stunt => "Stunt",
            DiagnosisLabel::GHD => "Growth hormone deficiency",
            DiagnosisLabel::GrowthRetardation => "Growth retardation",
            DiagnosisLabel::EarlyPuberty => "Early puberty",
            DiagnosisLabel::PrecociousPuberty => "Precocious puberty",
            DiagnosisLabel::CentralPrecociousPuberty => "Central precocious puberty",
            DiagnosisLabel::IdiopathicShortStature => "Idiopathic short stature",
        }
    }

    pub fn from_display_name(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.display_name().eq_ignore_ascii_case(s) || l.as_str() == s)
    }
}

impl FromStr for DiagnosisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown diagnosis label `{s}`")))
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One GH stimulation test: `(minute, value)` pairs.
pub type GhSeries = Vec<(f64, f64)>;

/// Structured multimodal patient record.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientCase {
    pub case_id: String,
    pub gender: Gender,
    pub age_months: f64,
    pub height_cm: f64,
    pub weight_kg: f64,
    pub gestational_age_weeks: Option<f64>,
    pub birth_weight_kg: Option<f64>,
    pub birth_length_cm: Option<f64>,
    pub father_height_cm: Option<f64>,
    pub mother_height_cm: Option<f64>,
    /// Named lab values, e.g. `blood_glucose`, `FT3`, `FT4`.
    pub labs: BTreeMap<String, f64>,
    /// Zero or more stimulation tests (a case may carry two, one per stimulant).
    pub gh_stimulation: Vec<GhSeries>,
    pub bone_age_months: Option<f64>,
    pub xray_path: Option<String>,
    pub diagnosis: Option<DiagnosisLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl PatientCase {
    pub fn new(case_id: impl Into<String>, gender: Gender, age_months: f64, height_cm: f64, weight_kg: f64) -> Self {
        PatientCase {
            case_id: case_id.into(),
            gender,
            age_months,
            height_cm,
            weight_kg,
            gestational_age_weeks: None,
            birth_weight_kg: None,
            birth_length_cm: None,
            father_height_cm: None,
            mother_height_cm: None,
            labs: BTreeMap::new(),
            gh_stimulation: Vec::new(),
            bone_age_months: None,
            xray_path: None,
            diagnosis: None,
        }
    }

    pub fn with_diagnosis(mut self, label: DiagnosisLabel) -> Self {
        self.diagnosis = Some(label);
        self
    }

    /// Peak GH value over every stimulation series, or 0.0 without any.
    pub fn hormone_level(&self) -> f64 {
        self.gh_stimulation
            .iter()
            .flatten()
            .map(|&(_, v)| v)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            .unwrap_or(0.0)
    }
}

fn open_range(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v > lo && v < hi
}

/// Every violated invariant of `case`; empty means valid.
pub fn validate_case(case: &PatientCase) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };
    if case.case_id.is_empty() {
        push("case_id", "must not be empty".into());
    }
    if !(case.age_months.is_finite() && case.age_months > 0.0 && case.age_months <= 216.0) {
        push("age_months", format!("{} is outside (0, 216]", case.age_months));
    }
    if !open_range(case.height_cm, 30.0, 220.0) {
        push("height_cm", format!("{} is outside (30, 220)", case.height_cm));
    }
    if !open_range(case.weight_kg, 1.0, 150.0) {
        push("weight_kg", format!("{} is outside (1, 150)", case.weight_kg));
    }
    if let Some(b) = case.bone_age_months {
        if !open_range(b, 0.0, 240.0) {
            push("bone_age_months", format!("{b} is outside (0, 240)"));
        }
    }
    let optional = [
        ("gestational_age_weeks", case.gestational_age_weeks),
        ("birth_weight_kg", case.birth_weight_kg),
        ("birth_length_cm", case.birth_length_cm),
        ("father_height_cm", case.father_height_cm),
        ("mother_height_cm", case.mother_height_cm),
    ];
    for (name, value) in optional {
        if let Some(v) = value {
            if !(v.is_finite() && v > 0.0) {
                push(name, format!("{v} must be a positive number"));
            }
        }
    }
    for (name, v) in &case.labs {
        if !v.is_finite() {
            push(&format!("lab.{name}"), "must be finite".into());
        }
    }
    for series in &case.gh_stimulation {
        if series.windows(2).any(|w| w[1].0 <= w[0].0) {
            push(
                "gh_stimulation monotonicity",
                "minutes must be strictly increasing".into(),
            );
        }
        if series.iter().any(|(m, v)| !m.is_finite() || !v.is_finite()) {
            push("gh_stimulation", "values must be finite".into());
        }
    }
    out
}

/// [`validate_case`] as a `Result`, joining all violations into one message.
pub fn ensure_valid(case: &PatientCase) -> Result<()> {
    let v = validate_case(case);
    if v.is_empty() {
        Ok(())
    } else {
        let joined: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(Error::validation(format!(
            "case `{}`: {}",
            case.case_id,
            joined.join("; ")
        )))
    }
}

/// Worked example patient: a 7-year-2-month boy with a bone age
/// of 4.8 years and two GH stimulation tests peaking at 13.48.
pub fn reference_case() -> PatientCase {
    let mut case = PatientCase::new("reference", Gender::Male, 86.0, 144.0, 18.0);
    case.gestational_age_weeks = Some(40.0);
    case.birth_weight_kg = Some(5.4);
    case.birth_length_cm = Some(50.0);
    case.father_height_cm = Some(176.0);
    case.mother_height_cm = Some(152.0);
    case.labs.insert("blood_glucose".into(), 4.76);
    case.labs.insert("FT3".into(), 7.8);
    case.labs.insert("FT4".into(), 1.42);
    case.gh_stimulation = vec![
        vec![(9.0, 1.23), (30.0, 2.19), (60.0, 4.962), (90.0, 6.947)],
        vec![(9.0, 0.51), (30.0, 1.17), (60.0, 12.9), (90.0, 13.48)],
    ];
    case.bone_age_months = Some(57.6);
    case.diagnosis = Some(DiagnosisLabel::IdiopathicShortStature);
    case
}
