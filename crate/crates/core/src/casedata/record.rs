//! Line-delimited case records.
//!
//! One case per line, whitespace-separated `name=value` fields:
//!
//! ```text
//! case_id=clinic-1 gender=female age_months=13 height_cm=78.5 weight_kg=13.5 label=Stunt
//! ```
//!
//! The five required fields come first in the order shown. Optional fields
//! follow in any order: `gestational_age_weeks`, `birth_weight_kg`,
//! `birth_length_cm`, `father_height_cm`, `mother_height_cm`,
//! `bone_age_months`, `xray`, `lab.<name>`, and `gh`. A GH value lists one or
//! more stimulation tests separated by `;`, each a comma list of
//! `minute:value` pairs. `label` is always last; `label=-` means unlabeled.
//! Blank lines and lines starting with `#` are skipped. In string values
//! `%`, space, tab, CR, LF and `=` are percent-escaped.

use std::path::Path;

use crate::casedata::case::{ensure_valid, DiagnosisLabel, GhSeries, PatientCase};
use crate::error::{Error, Result};

const REQUIRED: [&str; 5] = ["case_id", "gender", "age_months", "height_cm", "weight_kg"];

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            '=' => out.push_str("%3D"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3).ok_or("truncated escape")?;
        let ch = match code {
            "25" => '%',
            "20" => ' ',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            "3D" => '=',
            other => return Err(format!("unknown escape %{other}")),
        };
        out.push(ch);
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

fn push_real(out: &mut Vec<String>, name: &str, v: Option<f64>) {
    if let Some(v) = v {
        out.push(format!("{name}={v}"));
    }
}

fn format_gh(series: &[GhSeries]) -> String {
    series
        .iter()
        .map(|s| {
            s.iter()
                .map(|(m, v)| format!("{m}:{v}"))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Serializes a case as a single record line (no trailing newline).
pub fn case_to_line(case: &PatientCase) -> String {
    let mut f = vec![
        format!("case_id={}", escape(&case.case_id)),
        format!("gender={}", case.gender),
        format!("age_months={}", case.age_months),
        format!("height_cm={}", case.height_cm),
        format!("weight_kg={}", case.weight_kg),
    ];
    push_real(&mut f, "gestational_age_weeks", case.gestational_age_weeks);
    push_real(&mut f, "birth_weight_kg", case.birth_weight_kg);
    push_real(&mut f, "birth_length_cm", case.birth_length_cm);
    push_real(&mut f, "father_height_cm", case.father_height_cm);
    push_real(&mut f, "mother_height_cm", case.mother_height_cm);
    push_real(&mut f, "bone_age_months", case.bone_age_months);
    for (name, v) in &case.labs {
        f.push(format!("lab.{}={v}", escape(name)));
    }
    if !case.gh_stimulation.is_empty() {
        f.push(format!("gh={}", format_gh(&case.gh_stimulation)));
    }
    if let Some(p) = &case.xray_path {
        f.push(format!("xray={}", escape(p)));
    }
    f.push(format!(
        "label={}",
        case.diagnosis.map_or("-", DiagnosisLabel::as_str)
    ));
    f.join(" ")
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_real(line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| parse_err(line, field, format!("`{raw}` is not a number")))
}

fn parse_gh(line: usize, raw: &str) -> Result<Vec<GhSeries>> {
    raw.split(';')
        .map(|series| {
            series
                .split(',')
                .map(|pair| {
                    let (m, v) = pair
                        .split_once(':')
                        .ok_or_else(|| parse_err(line, "gh", format!("`{pair}` is not minute:value")))?;
                    Ok((parse_real(line, "gh", m)?, parse_real(line, "gh", v)?))
                })
                .collect()
        })
        .collect()
}

/// Parses one record line. `line` is the 1-based line number used in errors.
pub fn parse_case_line(text: &str, line: usize) -> Result<PatientCase> {
    let fields: Vec<(&str, &str)> = text
        .split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| parse_err(line, tok, "expected name=value"))
        })
        .collect::<Result<_>>()?;
    for (i, name) in REQUIRED.iter().enumerate() {
        match fields.get(i) {
            Some((n, _)) if n == name => {}
            Some((n, _)) => {
                return Err(parse_err(line, name, format!("expected `{name}` but found `{n}`")))
            }
            None => return Err(parse_err(line, name, "missing required field")),
        }
    }
    let case_id = unescape(fields[0].1).map_err(|m| parse_err(line, "case_id", m))?;
    let gender = fields[1]
        .1
        .parse()
        .map_err(|_| parse_err(line, "gender", format!("`{}` is not male or female", fields[1].1)))?;
    let mut case = PatientCase::new(
        case_id,
        gender,
        parse_real(line, "age_months", fields[2].1)?,
        parse_real(line, "height_cm", fields[3].1)?,
        parse_real(line, "weight_kg", fields[4].1)?,
    );
    let rest = &fields[REQUIRED.len()..];
    for (pos, (name, raw)) in rest.iter().enumerate() {
        match *name {
            "gestational_age_weeks" => case.gestational_age_weeks = Some(parse_real(line, name, raw)?),
            "birth_weight_kg" => case.birth_weight_kg = Some(parse_real(line, name, raw)?),
            "birth_length_cm" => case.birth_length_cm = Some(parse_real(line, name, raw)?),
            "father_height_cm" => case.father_height_cm = Some(parse_real(line, name, raw)?),
            "mother_height_cm" => case.mother_height_cm = Some(parse_real(line, name, raw)?),
            "bone_age_months" => case.bone_age_months = Some(parse_real(line, name, raw)?),
            "gh" => case.gh_stimulation = parse_gh(line, raw)?,
            "xray" => case.xray_path = Some(unescape(raw).map_err(|m| parse_err(line, name, m))?),
            "label" => {
                if pos + 1 != rest.len() {
                    return Err(parse_err(line, "label", "label must be the last field"));
                }
                if *raw != "-" {
                    case.diagnosis = Some(
                        raw.parse()
                            .map_err(|_| parse_err(line, "label", format!("unknown label `{raw}`")))?,
                    );
                }
            }
            other => match other.strip_prefix("lab.") {
                Some(lab) if !lab.is_empty() => {
                    let lab = unescape(lab).map_err(|m| parse_err(line, other, m))?;
                    case.labs.insert(lab, parse_real(line, other, raw)?);
                }
                _ => return Err(parse_err(line, other, "unknown field")),
            },
        }
    }
    ensure_valid(&case).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("line {line}: {msg}")),
        other => other,
    })?;
    Ok(case)
}

/// Parses a whole record file's contents.
pub fn parse_cases_str(text: &str) -> Result<Vec<PatientCase>> {
    let mut cases = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        cases.push(parse_case_line(trimmed, i + 1)?);
    }
    let mut seen = std::collections::HashSet::new();
    for c in &cases {
        if !seen.insert(c.case_id.as_str()) {
            return Err(Error::validation(format!("duplicate case_id `{}`", c.case_id)));
        }
    }
    Ok(cases)
}

pub fn parse_cases(path: impl AsRef<Path>) -> Result<Vec<PatientCase>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cases_str(&text)
}

pub fn cases_to_string(cases: &[PatientCase]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&case_to_line(c));
        out.push('\n');
    }
    out
}

pub fn write_cases(path: impl AsRef<Path>, cases: &[PatientCase]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cases_to_string(cases)).map_err(|e| Error::io(path, e))
}
