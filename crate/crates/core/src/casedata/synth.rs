//! Label-conditioned synthetic cases.
//!
//! Anthropometrics are drawn around a linear height/weight-for-age centerline
//! with a per-label z-score window, so a label can be read back from the
//! numbers. Bone age is chronological age plus a per-label offset, and the
//! GH stimulation peak is drawn from a per-label window:
//!
//! | label                    | height z       | bone age − age | GH peak |
//! |--------------------------|----------------|----------------|---------|
//! | Normal                   | −1 … 1         | −6 … 6         | 10 … 20 |
//! | Stunt                    | −3 … −2        | −6 … 0         | 10 … 20 |
//! | GHD                      | −3 … −2        | −24 … −12      | 2 … 7   |
//! | GrowthRetardation        | −2 … −1.5      | −18 … −6       | 8 … 12  |
//! | EarlyPuberty             | 0 … 1          | 12 … 18        | 10 … 20 |
//! | PrecociousPuberty        | 0.5 … 1.5      | 18 … 24        | 10 … 20 |
//! | CentralPrecociousPuberty | 1 … 2          | 24 … 30        | 10 … 20 |
//! | IdiopathicShortStature   | −3 … −2        | −6 … 6         | 10 … 20 |

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::casedata::case::{DiagnosisLabel, Gender, PatientCase};
use crate::error::{Error, Result};
use crate::numerics::tensor::seeded_rng;

pub const GH_MINUTES: [f64; 4] = [0.0, 30.0, 60.0, 90.0];

/// Healthy height centerline in cm.
pub fn height_centerline(age_months: f64) -> f64 {
    50.0 + 0.55 * age_months
}

/// One notional standard deviation of height in cm.
pub fn height_sd(age_months: f64) -> f64 {
    2.0 + 0.03 * age_months
}

pub fn weight_centerline(age_months: f64) -> f64 {
    3.3 + 0.22 * age_months
}

pub fn weight_sd(age_months: f64) -> f64 {
    0.5 + 0.03 * age_months
}

struct Profile {
    age: (u32, u32),
    height_z: (f64, f64),
    weight_z: (f64, f64),
    bone_offset: (f64, f64),
    gh_peak: (f64, f64),
}

fn profile(label: DiagnosisLabel) -> Profile {
    use DiagnosisLabel::*;
    let base = Profile {
        age: (12, 180),
        height_z: (-1.0, 1.0),
        weight_z: (-1.0, 1.0),
        bone_offset: (-6.0, 6.0),
        gh_peak: (10.0, 20.0),
    };
    match label {
        Normal => base,
        Stunt => Profile {
            height_z: (-3.0, -2.0),
            weight_z: (-2.0, -1.0),
            bone_offset: (-6.0, 0.0),
            ..base
        },
        GHD => Profile {
            height_z: (-3.0, -2.0),
            bone_offset: (-24.0, -12.0),
            gh_peak: (2.0, 7.0),
            ..base
        },
        GrowthRetardation => Profile {
            height_z: (-2.0, -1.5),
            weight_z: (-2.5, -1.5),
            bone_offset: (-18.0, -6.0),
            gh_peak: (8.0, 12.0),
            ..base
        },
        EarlyPuberty => Profile {
            age: (60, 120),
            height_z: (0.0, 1.0),
            bone_offset: (12.0, 18.0),
            ..base
        },
        PrecociousPuberty => Profile {
            age: (60, 120),
            height_z: (0.5, 1.5),
            bone_offset: (18.0, 24.0),
            ..base
        },
        CentralPrecociousPuberty => Profile {
            age: (60, 120),
            height_z: (1.0, 2.0),
            bone_offset: (24.0, 30.0),
            ..base
        },
        IdiopathicShortStature => Profile {
            height_z: (-3.0, -2.0),
            ..base
        },
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// Per-label counts for `n` cases by largest remainder; ties go to the
/// label declared first.
fn allocate(n: usize, mix: &BTreeMap<DiagnosisLabel, f64>) -> Vec<(DiagnosisLabel, usize)> {
    let mut alloc: Vec<(DiagnosisLabel, usize, f64)> = mix
        .iter()
        .map(|(&l, &p)| {
            let exact = p * n as f64;
            (l, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = alloc.iter().map(|a| a.1).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        alloc[i].1 += 1;
    }
    alloc.into_iter().map(|(l, c, _)| (l, c)).collect()
}

pub fn uniform_mix() -> BTreeMap<DiagnosisLabel, f64> {
    DiagnosisLabel::ALL
        .into_iter()
        .map(|l| (l, 1.0 / DiagnosisLabel::COUNT as f64))
        .collect()
}

fn sample_case(id: String, label: DiagnosisLabel, rng: &mut ChaCha8Rng) -> PatientCase {
    let p = profile(label);
    let age = rng.gen_range(p.age.0..=p.age.1) as f64;
    let gender = if rng.gen_bool(0.5) {
        Gender::Male
    } else {
        Gender::Female
    };
    let hz = rng.gen_range(p.height_z.0..=p.height_z.1);
    let wz = rng.gen_range(p.weight_z.0..=p.weight_z.1);
    let height = round_to(height_centerline(age) + hz * height_sd(age), 1);
    let weight = round_to(weight_centerline(age) + wz * weight_sd(age), 1).max(1.5);
    let bone = round_to(
        (age + rng.gen_range(p.bone_offset.0..=p.bone_offset.1)).clamp(1.0, 239.0),
        1,
    );
    let peak = rng.gen_range(p.gh_peak.0..=p.gh_peak.1);
    let peak_at = rng.gen_range(2..4);
    let series = GH_MINUTES
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let v = if i == peak_at {
                peak
            } else {
                peak * rng.gen_range(0.1..0.7)
            };
            (m, round_to(v, 2))
        })
        .collect();

    let mut case = PatientCase::new(id, gender, age, height, weight);
    case.gestational_age_weeks = Some(rng.gen_range(37..=41) as f64);
    case.birth_weight_kg = Some(round_to(rng.gen_range(2.5..4.0), 2));
    case.birth_length_cm = Some(round_to(rng.gen_range(47.0..53.0), 1));
    case.father_height_cm = Some(round_to(rng.gen_range(160.0..185.0), 0));
    case.mother_height_cm = Some(round_to(rng.gen_range(150.0..170.0), 0));
    case.labs.insert("blood_glucose".into(), round_to(rng.gen_range(3.9..6.1), 2));
    case.labs.insert("FT3".into(), round_to(rng.gen_range(3.5..8.0), 2));
    case.labs.insert("FT4".into(), round_to(rng.gen_range(0.9..1.7), 2));
    case.gh_stimulation = vec![series];
    case.bone_age_months = Some(bone);
    case.diagnosis = Some(label);
    case
}

/// `n` labeled cases, a pure function of `(n, seed, label_mix)`.
pub fn generate_synthetic_cases(
    n: usize,
    seed: u64,
    label_mix: &BTreeMap<DiagnosisLabel, f64>,
) -> Result<Vec<PatientCase>> {
    if n == 0 {
        return Err(Error::validation("need at least one case"));
    }
    if label_mix.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::validation("label proportions must be non-negative"));
    }
    let total: f64 = label_mix.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "label proportions sum to {total}, not 1"
        )));
    }
    let mut labels: Vec<DiagnosisLabel> = allocate(n, label_mix)
        .into_iter()
        .flat_map(|(l, c)| std::iter::repeat(l).take(c))
        .collect();
    let mut rng = seeded_rng(seed);
    labels.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| sample_case(format!("syn-{:04}", i + 1), l, &mut rng))
        .collect())
}
