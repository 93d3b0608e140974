//! Patient-case data model, record files, synthetic cases, and X-ray handling.

pub mod case;
pub mod record;
pub mod synth;
pub mod xray;

pub use case::{ensure_valid, reference_case, validate_case, DiagnosisLabel, Gender, GhSeries, PatientCase, Violation};
pub use record::{case_to_line, parse_case_line, parse_cases, parse_cases_str, write_cases};
pub use synth::{generate_synthetic_cases, uniform_mix};
pub use xray::{anonymize_image, load_xray, preprocess_xray, synthetic_hand_xray, Laterality, Rect, XrayImage};
