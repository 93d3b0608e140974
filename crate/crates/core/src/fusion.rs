//! Integration of bone age, age and hormone level into one record, the
//! `[CLS] … [SEP]` context string, a toy attention text encoder, and one
//! layer of graph propagation over case embeddings.

use rand::Rng;

use crate::casedata::case::{DiagnosisLabel, PatientCase};
use crate::error::{Error, Result};
use crate::numerics::attention::{multi_head_attention, AttentionWeights};
use crate::numerics::tensor::{cosine, matmul, matmul_nt, matmul_tn, seeded_rng, Tensor};

/// `(bone_age, age, hormone_level)` with the case's label, in that fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedRecord {
    pub bone_age_months: f64,
    pub age_months: f64,
    pub hormone_level: f64,
    pub label: Option<DiagnosisLabel>,
}

impl IntegratedRecord {
    pub fn as_array(&self) -> [f64; 3] {
        [self.bone_age_months, self.age_months, self.hormone_level]
    }
}

pub fn integrate_patient_data(case: &PatientCase, bone_age_months: f64) -> Result<IntegratedRecord> {
    if !bone_age_months.is_finite() {
        return Err(Error::validation(format!(
            "case `{}`: bone age {bone_age_months} is not finite",
            case.case_id
        )));
    }
    if !(case.age_months.is_finite() && case.age_months > 0.0) {
        return Err(Error::validation(format!(
            "case `{}`: age_months is missing or invalid",
            case.case_id
        )));
    }
    let hormone_level = case.hormone_level();
    if !hormone_level.is_finite() {
        return Err(Error::validation(format!("case `{}`: hormone level is not finite", case.case_id)));
    }
    Ok(IntegratedRecord {
        bone_age_months,
        age_months: case.age_months,
        hormone_level,
        label: case.diagnosis,
    })
}

/// `"[CLS] {bone_age} [SEP] {age} [SEP] {hormone_level} [SEP]"`, reals in
/// shortest round-trip form.
pub fn format_context_string(record: &IntegratedRecord) -> String {
    format!(
        "[CLS] {} [SEP] {} [SEP] {} [SEP]",
        record.bone_age_months, record.age_months, record.hormone_level
    )
}

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed token embeddings followed by one residual self-attention layer and
/// mean pooling. No positional encoding: token order does not matter.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub seed: u64,
    pub attention: AttentionWeights,
}

pub const DEFAULT_HEADS: usize = 4;

impl TextEncoder {
    pub fn new(dim: usize, heads: usize, seed: u64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::config(format!("embedding dimension must be at least 4, got {dim}")));
        }
        let mut rng = seeded_rng(seed ^ 0x5eed_a77e_u64);
        Ok(TextEncoder {
            seed,
            attention: AttentionWeights::new(dim, heads, &mut rng)?,
        })
    }

    /// Default head count for `dim`: 4 when it divides, else 2, else 1.
    pub fn with_dim(dim: usize, seed: u64) -> Result<Self> {
        let heads = [DEFAULT_HEADS, 2, 1].into_iter().find(|h| dim % h == 0).unwrap_or(1);
        Self::new(dim, heads, seed)
    }

    pub fn dim(&self) -> usize {
        self.attention.dim()
    }

    /// Unit-variance lookup row for `token`, seeded by its FNV-1a hash.
    pub fn token_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng = seeded_rng(fnv1a(token) ^ self.seed);
        let bound = 3f64.sqrt();
        (0..self.dim()).map(|_| rng.gen_range(-bound..bound)).collect()
    }

    pub fn token_matrix(&self, context: &str) -> Result<Tensor> {
        let tokens = tokenize(context);
        if tokens.is_empty() {
            return Err(Error::validation("cannot encode an empty string"));
        }
        let data = tokens.iter().flat_map(|t| self.token_embedding(t)).collect();
        Tensor::new(vec![tokens.len(), self.dim()], data)
    }

    pub fn encode(&self, context: &str) -> Result<Vec<f64>> {
        let x = self.token_matrix(context)?;
        let (attended, _) = multi_head_attention(&x, &self.attention)?;
        let (l, d) = x.dims2()?;
        let mut pooled = vec![0.0; d];
        for r in 0..l {
            for (p, (a, b)) in pooled.iter_mut().zip(x.row(r).iter().zip(attended.row(r))) {
                *p += a + b;
            }
        }
        pooled.iter_mut().for_each(|v| *v /= l as f64);
        Ok(pooled)
    }
}

pub fn encode_text(context: &str, encoder: &TextEncoder) -> Result<Tensor> {
    Ok(Tensor::from_vec(encoder.encode(context)?))
}

/// Integrate → format → encode for one case.
pub fn embed_case(case: &PatientCase, bone_age_months: f64, encoder: &TextEncoder) -> Result<Vec<f64>> {
    let record = integrate_patient_data(case, bone_age_months)?;
    encoder.encode(&format_context_string(&record))
}

/// `N` embeddings (rows of an `N×d` tensor) aligned with case ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Tensor,
    pub ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Tensor, ids: Vec<String>) -> Result<Self> {
        let (n, _) = rows.dims2()?;
        if n != ids.len() {
            return Err(Error::dimension(format!("{n} embeddings for {} ids", ids.len())));
        }
        if !rows.is_finite() {
            return Err(Error::validation("embeddings must be finite"));
        }
        Ok(EmbeddingMatrix { rows, ids })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, ids: Vec<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::dimension("embeddings have different lengths"));
        }
        let n = rows.len();
        Self::new(Tensor::new(vec![n, d], rows.concat())?, ids)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }
}

/// Cosine k-nearest-neighbor graph, symmetrized, with self-loops, normalized
/// as `D^(-1/2) (A + I) D^(-1/2)`. Similarity ties go to the lower index.
pub fn build_adjacency(embeddings: &EmbeddingMatrix, k: usize) -> Result<Tensor> {
    let n = embeddings.len();
    if k >= n.max(1) {
        return Err(Error::validation(format!("k = {k} must be below the {n} nodes")));
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let mut others: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, cosine(embeddings.row(i), embeddings.row(j))))
            .collect();
        others.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &(j, _) in others.iter().take(k) {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
        a[i * n + i] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    Tensor::new(vec![n, n], a)
}

fn check_gnn_dims(adjacency: &Tensor, h0: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, n2) = adjacency.dims2()?;
    let (hn, d) = h0.dims2()?;
    let (wd, wo) = weight.dims2()?;
    if n != n2 || n != hn || d != wd {
        return Err(Error::validation(format!(
            "graph layer dims disagree: adjacency {n}×{n2}, features {hn}×{d}, weight {wd}×{wo}"
        )));
    }
    Ok((n, d, wo))
}

/// One linear graph layer `H = Â · H0 · W`.
pub fn gnn_propagate(adjacency: &Tensor, h0: &EmbeddingMatrix, weight: &Tensor) -> Result<EmbeddingMatrix> {
    let (n, d, out) = check_gnn_dims(adjacency, &h0.rows, weight)?;
    let ah = matmul(adjacency.data(), h0.rows.data(), n, n, d);
    let h = matmul(&ah, weight.data(), n, d, out);
    EmbeddingMatrix::new(Tensor::new(vec![n, out], h)?, h0.ids.clone())
}

/// Gradients of [`gnn_propagate`] w.r.t. `H0` and `W` given `dL/dH`.
pub fn gnn_backward(adjacency: &Tensor, h0: &Tensor, weight: &Tensor, grad_h: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, d, out) = check_gnn_dims(adjacency, h0, weight)?;
    if grad_h.shape() != [n, out] {
        return Err(Error::validation("graph layer gradient has the wrong shape"));
    }
    let ah = matmul(adjacency.data(), h0.data(), n, n, d);
    let g_w = matmul_tn(&ah, grad_h.data(), n, d, out);
    let g_ah = matmul_nt(grad_h.data(), weight.data(), n, out, d);
    let g_h0 = matmul_tn(adjacency.data(), &g_ah, n, n, d);
    Ok((Tensor::new(vec![n, d], g_h0)?, Tensor::new(vec![d, out], g_w)?))
}
