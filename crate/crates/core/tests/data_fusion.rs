mod common;

use common::rng;
use gda_core::advisor::{parse_case_block, render_case};
use gda_core::casedata::{
    case_to_line, generate_synthetic_cases, parse_case_line, parse_cases_str, reference_case, uniform_mix,
    validate_case, DiagnosisLabel, Gender, PatientCase,
};
use gda_core::fusion::{
    build_adjacency, embed_case, format_context_string, gnn_propagate, integrate_patient_data, EmbeddingMatrix,
    TextEncoder,
};
use gda_core::numerics::Tensor;
use proptest::prelude::*;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

#[test]
fn three_node_adjacency_by_hand() {
    // cos(0,1) = 0.8, cos(1,2) = 0.6, cos(0,2) = 0; one neighbor each gives
    // edges 0-1 and 1-2, degrees with self-loops 2, 3, 2.
    let emb = EmbeddingMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.8, 0.6], vec![0.0, 1.0]], ids(3)).unwrap();
    let a = build_adjacency(&emb, 1).unwrap();
    let s6 = 1.0 / 6f64.sqrt();
    let want = [0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5];
    for (g, w) in a.data().iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{:?}", a.data());
    }
}

#[test]
fn two_node_graph_layer_by_hand() {
    let h0 = EmbeddingMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]], ids(2)).unwrap();
    let a = build_adjacency(&h0, 1).unwrap();
    assert!(a.data().iter().all(|v| (v - 0.5).abs() < 1e-15));
    let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap();
    let h = gnn_propagate(&a, &h0, &w).unwrap();
    for (g, want) in h.rows.data().iter().zip([2.0, 6.0, 2.0, 6.0]) {
        assert!((g - want).abs() < 1e-12);
    }
    assert_eq!(h.ids, h0.ids);
}

#[test]
fn adjacency_rejects_k_at_least_n() {
    let emb = EmbeddingMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], ids(2)).unwrap();
    assert!(build_adjacency(&emb, 2).is_err());
}

#[test]
fn context_string_for_the_reference_case() {
    let r = integrate_patient_data(&reference_case(), 57.6).unwrap();
    assert_eq!(format_context_string(&r), "[CLS] 57.6 [SEP] 86 [SEP] 13.48 [SEP]");
}

#[test]
fn synthetic_cases_are_valid_deterministic_and_rendered_faithfully() {
    let a = generate_synthetic_cases(40, 3, &uniform_mix()).unwrap();
    let b = generate_synthetic_cases(40, 3, &uniform_mix()).unwrap();
    assert_eq!(a, b);
    for c in &a {
        assert!(validate_case(c).is_empty(), "{:?}", validate_case(c));
        let line = case_to_line(c);
        assert_eq!(&parse_case_line(&line, 1).unwrap(), c);
        let (back, label) = parse_case_block(&c.case_id, &render_case(c)).unwrap();
        assert_eq!(label, None);
        assert_eq!(back.age_months, c.age_months);
        assert_eq!(back.height_cm, c.height_cm);
        assert_eq!(back.weight_kg, c.weight_kg);
        assert_eq!(back.labs, c.labs);
        assert_eq!(back.gh_stimulation, c.gh_stimulation);
        assert_eq!(back.hormone_level(), c.hormone_level());
    }
}

#[test]
fn malformed_record_names_the_line() {
    let text = "case_id=a gender=male age_months=10 height_cm=70 weight_kg=9 label=Normal\n\
                case_id=b gender=male age_months=ten height_cm=70 weight_kg=9 label=-\n";
    let err = parse_cases_str(text).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn embeddings_are_a_pure_function_of_the_case() {
    let enc = TextEncoder::with_dim(16, 4).unwrap();
    let c = reference_case();
    let a = embed_case(&c, 57.6, &enc).unwrap();
    let b = embed_case(&c, 57.6, &TextEncoder::with_dim(16, 4).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 16);
    assert_ne!(a, embed_case(&c, 60.0, &enc).unwrap());
    assert_ne!(a, embed_case(&c, 57.6, &TextEncoder::with_dim(16, 5).unwrap()).unwrap());
}

fn arb_case() -> impl Strategy<Value = PatientCase> {
    (
        "[a-z][a-z0-9 =%-]{0,8}",
        any::<bool>(),
        1u32..=2160,
        301u32..2200,
        11u32..1500,
        prop::option::of(1u32..2400),
        prop::collection::btree_map("[A-Za-z][A-Za-z0-9_]{0,6}", 0u32..10000, 0..3),
        prop::collection::vec(
            (prop::collection::btree_set(0u32..180, 1..5), prop::collection::vec(0u32..5000, 5)),
            0..3,
        ),
        prop::option::of(0usize..DiagnosisLabel::COUNT),
    )
        .prop_map(|(id, male, age, h, w, bone, labs, gh, label)| {
            let g = if male { Gender::Male } else { Gender::Female };
            let mut c = PatientCase::new(id, g, age as f64 / 10.0, h as f64 / 10.0, w as f64 / 10.0);
            c.bone_age_months = bone.map(|b| b as f64 / 10.0);
            c.labs = labs.into_iter().map(|(k, v)| (k, v as f64 / 100.0)).collect();
            c.gh_stimulation = gh
                .into_iter()
                .map(|(ms, vs)| ms.into_iter().zip(vs).map(|(m, v)| (m as f64, v as f64 / 100.0)).collect())
                .collect();
            c.diagnosis = label.map(|i| DiagnosisLabel::ALL[i]);
            c
        })
}

fn arb_embeddings() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..8, 2usize..5).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn case_lines_round_trip(c in arb_case()) {
        let line = case_to_line(&c);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(parse_case_line(&line, 1).unwrap(), c);
    }

    #[test]
    fn adjacency_is_symmetric_with_positive_diagonal(rows in arb_embeddings(), k in 1usize..4) {
        let n = rows.len();
        prop_assume!(k < n);
        let emb = EmbeddingMatrix::from_rows(rows, ids(n)).unwrap();
        let a = build_adjacency(&emb, k).unwrap();
        for i in 0..n {
            prop_assert!(a.data()[i * n + i] > 0.0);
            for j in 0..n {
                prop_assert!(a.data()[i * n + j] >= 0.0);
                prop_assert!((a.data()[i * n + j] - a.data()[j * n + i]).abs() < 1e-15);
            }
        }
        // D^-1/2 (A+I) D^-1/2 with 0/1 entries: Â_ij² = 1/(d_i d_j) on edges.
        let deg: Vec<f64> = (0..n).map(|i| 1.0 / a.data()[i * n + i]).collect();
        for (i, di) in deg.iter().enumerate() {
            let edges = (0..n).filter(|&j| a.data()[i * n + j] > 0.0).count() as f64;
            prop_assert!((di - edges).abs() < 1e-9);
        }
    }

    #[test]
    fn graph_layer_with_identity_is_linear_in_h0(rows in arb_embeddings(), c in -3.0f64..3.0) {
        let n = rows.len();
        let d = rows[0].len();
        let emb = EmbeddingMatrix::from_rows(rows.clone(), ids(n)).unwrap();
        let a = build_adjacency(&emb, 1).unwrap();
        let scaled = EmbeddingMatrix::from_rows(rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect(), ids(n)).unwrap();
        let h = gnn_propagate(&a, &emb, &Tensor::identity(d)).unwrap();
        let hs = gnn_propagate(&a, &scaled, &Tensor::identity(d)).unwrap();
        for (x, y) in h.rows.data().iter().zip(hs.rows.data()) {
            prop_assert!((x * c - y).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_output_is_finite(seed in 0u64..1000, tokens in prop::collection::vec("[a-z0-9.]{1,6}", 1..10)) {
        let enc = TextEncoder::with_dim(8, seed).unwrap();
        let v = enc.encode(&tokens.join(" ")).unwrap();
        prop_assert_eq!(v.len(), 8);
        prop_assert!(v.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn random_embeddings_graph_is_deterministic() {
    let mut r = rng(77);
    let rows: Vec<Vec<f64>> = (0..10).map(|_| Tensor::uniform(&[6], 1.0, &mut r).into_data()).collect();
    let emb = EmbeddingMatrix::from_rows(rows, ids(10)).unwrap();
    assert_eq!(build_adjacency(&emb, 3).unwrap(), build_adjacency(&emb, 3).unwrap());
}
