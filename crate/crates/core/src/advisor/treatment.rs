use crate::casedata::case::DiagnosisLabel;

pub const PLACEHOLDER: &str = "No template available \u{2014} clinician review required";

/// Fixed label → treatment table used by the offline backend.
///
/// Entries other than the placeholder are reproduced verbatim from the
/// published case answers, attributed by the diagnosis printed beside them.
pub fn treatment_for(label: DiagnosisLabel) -> &'static str {
    use DiagnosisLabel::*;
    match label {
        IdiopathicShortStature => "Recombinant human growth hormone 27 units subcutaneous injection / day.",
        CentralPrecociousPuberty => "Leuporelin 3.75 mg subcutaneous injection once a day for 21 days",
        EarlyPuberty => "Interventional therapy with drugs such as leuporelin should be used.",
        PrecociousPuberty => "Growth hormone should be used for the interventional therapy",
        GrowthRetardation => "Growth hormone should be used for interventional therapy",
        GHD => "Growth hormone 6 units subcutaneous injection / day",
        Normal | Stunt => PLACEHOLDER,
    }
}

pub fn has_template(label: DiagnosisLabel) -> bool {
    treatment_for(label) != PLACEHOLDER
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_labels_have_templates() {
        let n = DiagnosisLabel::ALL.iter().filter(|&&l| has_template(l)).count();
        assert_eq!(n, 6);
        assert_eq!(treatment_for(DiagnosisLabel::Stunt), PLACEHOLDER);
    }
}
