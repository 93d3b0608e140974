//! Numbered-section case layout and its parser.
//!
//! ```text
//! 1. Personal history :
//! Gender : male
//! Full age : 7 years and 2 months
//! Gestational age : 40 weeks
//! Birth weight : 5.4kg
//! Birth length : 50cm
//!
//! 2. Family history :
//! Father height : 176cm
//! Mother's height : 152cm
//!
//! 3. Physical examination :
//! Height : 144.0cm
//! Weight : 18kg
//!
//! 4. Auxiliary examination :
//! Blood glucose : 4.76
//! Thyroid function FT3 : 7.8
//! FT4 : 1.42
//!
//! 5. Laboratory test :
//! GH (growth hormone) :
//! 9' 1.23 30' 2.19 60' 4.962 90' 6.947
//! Bone age : 4.8 years old
//! ```
//!
//! Absent optional lines are omitted; an empty section reads `None`.

use std::fmt::Write as _;

use crate::casedata::case::{DiagnosisLabel, Gender, PatientCase};
use crate::error::{Error, Result};

pub const DIAGNOSIS_PREFIX: &str = "Preliminary diagnosis :";

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn height_text(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        v.to_string()
    }
}

fn lab_display(name: &str) -> String {
    match name {
        "blood_glucose" => "Blood glucose".to_string(),
        "FT3" => "Thyroid function FT3".to_string(),
        other => other.to_string(),
    }
}

fn lab_name(display: &str) -> String {
    match display {
        "Blood glucose" => "blood_glucose".to_string(),
        "Thyroid function FT3" => "FT3".to_string(),
        other => other.to_string(),
    }
}

fn section(out: &mut String, title: &str, lines: &[String]) {
    let _ = writeln!(out, "{title} :");
    if lines.is_empty() {
        out.push_str("None\n");
    }
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
}

/// The case layout, ending in a newline. The case id and label are not part
/// of it.
pub fn render_case(case: &PatientCase) -> String {
    let years = (case.age_months / 12.0).floor();
    let months = round6(case.age_months - 12.0 * years);
    let mut personal = vec![
        format!("Gender : {}", case.gender.as_str()),
        format!("Full age : {years} years and {months} months"),
    ];
    if let Some(v) = case.gestational_age_weeks {
        personal.push(format!("Gestational age : {v} weeks"));
    }
    if let Some(v) = case.birth_weight_kg {
        personal.push(format!("Birth weight : {v}kg"));
    }
    if let Some(v) = case.birth_length_cm {
        personal.push(format!("Birth length : {v}cm"));
    }
    let mut family = Vec::new();
    if let Some(v) = case.father_height_cm {
        family.push(format!("Father height : {v}cm"));
    }
    if let Some(v) = case.mother_height_cm {
        family.push(format!("Mother's height : {v}cm"));
    }
    let physical = vec![
        format!("Height : {}cm", height_text(case.height_cm)),
        format!("Weight : {}kg", case.weight_kg),
    ];
    let mut names: Vec<&String> = case.labs.keys().collect();
    let rank = |n: &str| ["blood_glucose", "FT3", "FT4"].iter().position(|k| *k == n).unwrap_or(3);
    names.sort_by_key(|n| rank(n));
    let auxiliary: Vec<String> = names
        .into_iter()
        .map(|n| format!("{} : {}", lab_display(n), case.labs[n]))
        .collect();
    let mut lab = Vec::new();
    if !case.gh_stimulation.is_empty() {
        lab.push("GH (growth hormone) :".to_string());
        for series in &case.gh_stimulation {
            let parts: Vec<String> = series.iter().map(|(m, v)| format!("{m}' {v}")).collect();
            lab.push(parts.join(" "));
        }
    }
    if let Some(b) = case.bone_age_months {
        lab.push(format!("Bone age : {} years old", b / 12.0));
    }

    let mut out = String::new();
    section(&mut out, "1. Personal history", &personal);
    out.push('\n');
    section(&mut out, "2. Family history", &family);
    out.push('\n');
    section(&mut out, "3. Physical examination", &physical);
    out.push('\n');
    section(&mut out, "4. Auxiliary examination", &auxiliary);
    out.push('\n');
    section(&mut out, "5. Laboratory test", &lab);
    out
}

fn is_section_header(line: &str) -> bool {
    line.split_once(". ")
        .is_some_and(|(n, rest)| n.parse::<u32>().is_ok() && rest.ends_with(" :"))
}

/// Parses a block written by [`render_case`], optionally followed by a
/// `Preliminary diagnosis : …` line.
pub fn parse_case_block(case_id: &str, text: &str) -> Result<(PatientCase, Option<DiagnosisLabel>)> {
    let bad = |line: usize, field: &str, message: String| Error::Parse {
        line,
        field: field.to_string(),
        message,
    };
    let num = |line: usize, field: &str, s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(line, field, format!("`{s}` is not a number")))
    };
    let mut gender = None;
    let mut age = None;
    let mut height = None;
    let mut weight = None;
    let mut case = PatientCase::new(case_id, Gender::Male, 0.0, 0.0, 0.0);
    let mut label = None;
    let mut in_gh = false;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line == "None" || is_section_header(line) {
            continue;
        }
        if line == "GH (growth hormone) :" {
            in_gh = true;
            continue;
        }
        if in_gh && line.contains('\'') && !line.contains(" : ") {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() % 2 != 0 {
                return Err(bad(n, "gh_stimulation", "expected minute/value pairs".into()));
            }
            let series = toks
                .chunks(2)
                .map(|p| {
                    let m = p[0]
                        .strip_suffix('\'')
                        .ok_or_else(|| bad(n, "gh_stimulation", format!("bad minute `{}`", p[0])))?;
                    Ok((num(n, "gh_stimulation", m)?, num(n, "gh_stimulation", p[1])?))
                })
                .collect::<Result<Vec<_>>>()?;
            case.gh_stimulation.push(series);
            continue;
        }
        in_gh = false;
        let (key, value) = line
            .split_once(" : ")
            .ok_or_else(|| bad(n, "line", format!("expected `name : value`, got `{line}`")))?;
        let value = value.trim();
        match key {
            "Gender" => gender = Some(value.parse::<Gender>().map_err(|e| bad(n, "gender", e.to_string()))?),
            "Full age" => {
                let (y, m) = value
                    .strip_suffix(" months")
                    .and_then(|v| v.split_once(" years and "))
                    .ok_or_else(|| bad(n, "age_months", format!("bad age `{value}`")))?;
                age = Some(num(n, "age_months", y)? * 12.0 + num(n, "age_months", m)?);
            }
            "Gestational age" => {
                let v = value.strip_suffix(" weeks").unwrap_or(value);
                case.gestational_age_weeks = Some(num(n, "gestational_age_weeks", v)?);
            }
            "Birth weight" => {
                case.birth_weight_kg = Some(num(n, "birth_weight_kg", value.trim_end_matches("kg"))?);
            }
            "Birth length" => {
                case.birth_length_cm = Some(num(n, "birth_length_cm", value.trim_end_matches("cm"))?);
            }
            "Father height" => {
                case.father_height_cm = Some(num(n, "father_height_cm", value.trim_end_matches("cm"))?);
            }
            "Mother's height" => {
                case.mother_height_cm = Some(num(n, "mother_height_cm", value.trim_end_matches("cm"))?);
            }
            "Height" => height = Some(num(n, "height_cm", value.trim_end_matches("cm"))?),
            "Weight" => weight = Some(num(n, "weight_kg", value.trim_end_matches("kg"))?),
            "Bone age" => {
                let y = value
                    .strip_suffix(" years old")
                    .ok_or_else(|| bad(n, "bone_age_months", format!("bad bone age `{value}`")))?;
                case.bone_age_months = Some(round6(num(n, "bone_age_months", y)? * 12.0));
            }
            "Preliminary diagnosis" => {
                label = Some(
                    DiagnosisLabel::from_display_name(value)
                        .ok_or_else(|| bad(n, "label", format!("unknown diagnosis `{value}`")))?,
                );
            }
            other => {
                let v = num(n, other, value)?;
                case.labs.insert(lab_name(other), v);
            }
        }
    }
    case.gender = gender.ok_or_else(|| bad(0, "gender", "missing".into()))?;
    case.age_months = age.ok_or_else(|| bad(0, "age_months", "missing".into()))?;
    case.height_cm = height.ok_or_else(|| bad(0, "height_cm", "missing".into()))?;
    case.weight_kg = weight.ok_or_else(|| bad(0, "weight_kg", "missing".into()))?;
    case.diagnosis = label;
    Ok((case, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casedata::case::reference_case;

    #[test]
    fn reference_case_lines() {
        let text = render_case(&reference_case());
        assert!(text.contains("\nBone age : 4.8 years old\n"));
        assert!(text.contains("\nFull age : 7 years and 2 months\n"));
        assert!(text.contains("\nHeight : 144.0cm\n"));
        assert!(text.contains("\nBirth weight : 5.4kg\n"));
        assert!(text.contains("9' 0.51 30' 1.17 60' 12.9 90' 13.48\n"));
    }

    #[test]
    fn parse_inverts_render() {
        let mut c = reference_case();
        c.diagnosis = None;
        c.case_id = "q".into();
        let (back, label) = parse_case_block("q", &render_case(&c)).unwrap();
        assert_eq!(label, None);
        assert_eq!(back, c);
    }

    #[test]
    fn empty_sections_read_none() {
        let c = PatientCase::new("x", Gender::Female, 13.0, 78.5, 13.5);
        let text = render_case(&c);
        assert!(text.contains("2. Family history :\nNone\n"));
        assert_eq!(parse_case_block("x", &text).unwrap().0, c);
    }
}
