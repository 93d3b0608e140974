#![allow(dead_code)]

pub mod checks;

use gda_core::casedata::{generate_synthetic_cases, uniform_mix, DiagnosisLabel, Gender, PatientCase};
use gda_core::fusion::{embed_case, TextEncoder};
use gda_core::icl::{reward, Exemplar, RewardMode, Scorer};
use gda_core::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn labeled_case(id: &str, label: DiagnosisLabel) -> PatientCase {
    PatientCase::new(id, Gender::Female, 60.0, 105.0, 17.0).with_diagnosis(label)
}

/// `n` exemplars with embeddings in `[-1, 1]^dim` and labels drawn from the
/// first `labels` classes.
pub fn random_exemplars(prefix: &str, n: usize, dim: usize, labels: usize, rng: &mut ChaCha8Rng) -> Vec<Exemplar> {
    (0..n)
        .map(|i| {
            let label = DiagnosisLabel::ALL[rng.gen_range(0..labels)];
            let emb: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Exemplar::new(labeled_case(&format!("{prefix}{i}"), label), 60.0, emb).unwrap()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Best reward over every `k`-subset of `dataset`, enumerated by bitmask.
pub fn brute_force_subset<S: Scorer>(
    scorer: &S,
    dataset: &[Exemplar],
    probe: &[Exemplar],
    k: usize,
    mode: RewardMode,
) -> (f64, Vec<Vec<usize>>) {
    let n = dataset.len();
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let ctx: Vec<&Exemplar> = idx.iter().map(|&i| &dataset[i]).collect();
        let r = match mode {
            RewardMode::Literal => reward(scorer, &ctx, &ctx, mode).unwrap(),
            RewardMode::Heldout => {
                let p: Vec<&Exemplar> = probe.iter().collect();
                reward(scorer, &ctx, &p, mode).unwrap()
            }
        };
        if r > best {
            best = r;
            argmax.clear();
        }
        if r == best {
            argmax.push(idx);
        }
    }
    (best, argmax)
}

/// All permutations of `0..n` by Heap's algorithm.
pub fn heap_permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            go(k - 1, a, out);
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    go(n, &mut a, &mut out);
    out
}

/// Best reward over every ordering of `members`.
pub fn brute_force_order<S: Scorer>(
    scorer: &S,
    members: &[Exemplar],
    probe: &[Exemplar],
    mode: RewardMode,
) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for p in heap_permutations(members.len()) {
        let ctx: Vec<&Exemplar> = p.iter().map(|&i| &members[i]).collect();
        let r = match mode {
            RewardMode::Literal => reward(scorer, &ctx, &ctx, mode).unwrap(),
            RewardMode::Heldout => reward(scorer, &ctx, &probe.iter().collect::<Vec<_>>(), mode).unwrap(),
        };
        if r > best {
            best = r;
            argmax.clear();
        }
        if r == best {
            argmax.push(p);
        }
    }
    (best, argmax)
}

/// Depthwise then pointwise convolution written as plain nested loops over
/// `[row][col][channel]`, zero padding `pad`, stride `stride`.
pub fn naive_separable(
    x: &[Vec<Vec<f64>>],
    depth: &[Vec<Vec<f64>>],
    point: &[Vec<f64>],
    stride: usize,
    pad: usize,
) -> Vec<Vec<Vec<f64>>> {
    let (h, w, c) = (x.len(), x[0].len(), x[0][0].len());
    let k = depth.len();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let co = point[0].len();
    let mut out = vec![vec![vec![0.0; co]; ow]; oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut mid = vec![0.0; c];
            for (ch, m) in mid.iter_mut().enumerate() {
                for i in 0..k {
                    for j in 0..k {
                        let y = (oy * stride + i) as isize - pad as isize;
                        let xx = (ox * stride + j) as isize - pad as isize;
                        if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w {
                            *m += x[y as usize][xx as usize][ch] * depth[i][j][ch];
                        }
                    }
                }
            }
            for o in 0..co {
                out[oy][ox][o] = (0..c).map(|ch| mid[ch] * point[ch][o]).sum();
            }
        }
    }
    out
}

pub fn to_nested3(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let s = t.shape();
    (0..s[0])
        .map(|i| (0..s[1]).map(|j| (0..s[2]).map(|c| t.data()[(i * s[1] + j) * s[2] + c]).collect()).collect())
        .collect()
}

pub fn to_nested2(t: &Tensor) -> Vec<Vec<f64>> {
    let s = t.shape();
    (0..s[0]).map(|i| t.data()[i * s[1]..(i + 1) * s[1]].to_vec()).collect()
}

/// The planted-cluster synthetic set (n=50, seed 7) embedded at d=32.
pub fn planted_cluster_exemplars() -> Vec<Exemplar> {
    let cases = generate_synthetic_cases(50, 7, &uniform_mix()).unwrap();
    let enc = TextEncoder::with_dim(32, 7).unwrap();
    cases
        .iter()
        .map(|c| {
            let b = c.bone_age_months.unwrap();
            Exemplar::new(c.clone(), b, embed_case(c, b, &enc).unwrap()).unwrap()
        })
        .collect()
}

/// Mean absolute difference written out by hand.
pub fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s / a.len() as f64
}

/// Two Adam steps on f(θ) = θ², θ₀ = 0.5, with every intermediate spelled out.
pub fn adam_oracle() -> [f64; 2] {
    let (lr, b1, b2, eps) = (0.001, 0.9, 0.999, 1e-7);
    let theta0: f64 = 0.5;
    let g1 = 2.0 * theta0;
    let m1 = (1.0 - b1) * g1;
    let v1 = (1.0 - b2) * g1 * g1;
    let theta1 = theta0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
    let g2 = 2.0 * theta1;
    let m2 = b1 * m1 + (1.0 - b1) * g2;
    let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
    let theta2 = theta1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
    [theta1, theta2]
}

/// Ten selection fixtures: |D| cycles through 5..=8, k alternates 2 and 3,
/// and the reward mode alternates literal and held-out.
pub fn selection_fixtures() -> Vec<(Vec<Exemplar>, Vec<Exemplar>, usize, RewardMode)> {
    (0..10u64)
        .map(|i| {
            let mut r = rng(100 + i);
            let n = 5 + (i as usize % 4);
            let k = 2 + (i as usize % 2);
            let mode = if i % 2 == 0 { RewardMode::Heldout } else { RewardMode::Literal };
            let dataset = random_exemplars("d", n, 4, 3, &mut r);
            let probe = random_exemplars("p", 6, 4, 3, &mut r);
            (dataset, probe, k, mode)
        })
        .collect()
}

/// Ordering fixtures with |S| from 2 to 5, two per size, both reward modes.
pub fn ordering_fixtures() -> Vec<(Vec<Exemplar>, Vec<Exemplar>, RewardMode)> {
    let mut out = Vec::new();
    for m in 2..=5usize {
        for (j, mode) in [RewardMode::Heldout, RewardMode::Literal].into_iter().enumerate() {
            let mut r = rng(200 + 10 * m as u64 + j as u64);
            let members = random_exemplars("s", m, 4, 3, &mut r);
            let probe = random_exemplars("p", 8, 4, 3, &mut r);
            out.push((members, probe, mode));
        }
    }
    out
}

pub fn as_set(members: Vec<Exemplar>) -> gda_core::icl::ExemplarSet {
    gda_core::icl::ExemplarSet {
        source_ids: (0..members.len()).collect(),
        members,
        reward: f64::NAN,
        evaluations: 0,
    }
}
