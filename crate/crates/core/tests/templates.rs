use std::path::PathBuf;

use gda_core::advisor::{
    build_prompt, complete, render_case, treatment_for, GenerationSettings, MockBackend, PLACEHOLDER, ROLE_PREAMBLE,
};
use gda_core::casedata::{parse_cases, reference_case, DiagnosisLabel};
use gda_core::fusion::{format_context_string, integrate_patient_data};
use gda_core::icl::Exemplar;

fn golden(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn context_string_golden() {
    let r = integrate_patient_data(&reference_case(), 57.6).unwrap();
    assert_eq!(format!("{}\n", format_context_string(&r)), golden("context_string.txt"));
}

#[test]
fn case_block_golden() {
    assert_eq!(render_case(&reference_case()), golden("reference_case_block.txt"));
}

#[test]
fn zero_shot_prompt_golden() {
    let p = build_prompt(&[], &reference_case()).unwrap();
    assert_eq!(p.diagnosis_text(), golden("reference_prompt.txt"));
    assert!(p.diagnosis_text().starts_with(ROLE_PREAMBLE));
}

#[test]
fn treatment_turn_golden() {
    let p = build_prompt(&[], &reference_case()).unwrap();
    assert_eq!(
        p.treatment_text("Preliminary diagnosis : Idiopathic short stature"),
        golden("reference_treatment_prompt.txt")
    );
}

#[test]
fn one_shot_prompt_golden() {
    let mut twin = reference_case();
    twin.case_id = "twin".into();
    let ex = Exemplar::new(twin, 57.6, vec![1.0; 4]).unwrap();
    let mut query = reference_case();
    query.diagnosis = None;
    let p = build_prompt(&[&ex], &query).unwrap();
    assert_eq!(p.diagnosis_text(), golden("reference_one_shot_prompt.txt"));
}

#[test]
fn treatment_table_golden() {
    let text = golden("treatments.txt");
    let mut seen = 0;
    for line in text.lines() {
        let (label, want) = line.split_once('\t').unwrap();
        let label: DiagnosisLabel = label.parse().unwrap();
        assert_eq!(treatment_for(label), want, "{label}");
        seen += 1;
    }
    assert_eq!(seen, DiagnosisLabel::COUNT);
    assert_eq!(
        treatment_for(DiagnosisLabel::CentralPrecociousPuberty),
        "Leuporelin 3.75 mg subcutaneous injection once a day for 21 days"
    );
    assert_eq!(treatment_for(DiagnosisLabel::Normal), PLACEHOLDER);
}

#[test]
fn mock_advice_for_every_label() {
    let mock = MockBackend::new(16, 7).unwrap();
    let table = golden("treatments.txt");
    for line in table.lines() {
        let (label, want) = line.split_once('\t').unwrap();
        let label: DiagnosisLabel = label.parse().unwrap();
        let mut c = reference_case();
        c.case_id = "ex".into();
        c.diagnosis = Some(label);
        let ex = Exemplar::new(c, 57.6, vec![1.0; 16]).unwrap();
        let p = build_prompt(&[&ex], &reference_case()).unwrap();
        let advice = complete(&mock, &p, &GenerationSettings::default()).unwrap();
        assert_eq!(advice.diagnosis_text, label.display_name());
        assert_eq!(advice.treatment_text, want);
    }
}

#[test]
fn reference_context_fixture_yields_the_expected_answer() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let ctx = parse_cases(dir.join("reference_context.txt")).unwrap();
    let mock = MockBackend::new(32, 7).unwrap();
    let ex: Vec<Exemplar> = ctx
        .into_iter()
        .map(|c| {
            let b = c.bone_age_months.unwrap();
            let e = gda_core::fusion::embed_case(&c, b, &mock.encoder).unwrap();
            Exemplar::new(c, b, e).unwrap()
        })
        .collect();
    let refs: Vec<&Exemplar> = ex.iter().collect();
    let query = parse_cases(dir.join("reference_case.txt")).unwrap().remove(0);
    let advice = complete(&mock, &build_prompt(&refs, &query).unwrap(), &GenerationSettings::default()).unwrap();
    assert_eq!(advice.diagnosis_text, "Idiopathic short stature");
    assert_eq!(advice.treatment_text, "Recombinant human growth hormone 27 units subcutaneous injection / day.");
}
