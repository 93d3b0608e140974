//! Multi-head scaled dot-product self-attention with a hand-written backward pass.
//!
//! Projections are stored as full `d×d` matrices; head `h` reads columns
//! `h·d_h .. (h+1)·d_h` of the query, key and value projections. No positional
//! encoding is applied, so the layer is permutation-equivariant over rows.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul, matmul_nt, matmul_tn, Tensor, INIT_BOUND};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub input: Tensor,
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
}

/// Intermediates kept from the forward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// One `L×L` row-stochastic matrix per head.
    probs: Vec<Vec<f64>>,
    concat: Vec<f64>,
}

impl AttentionCache {
    /// Attention weights of head `h`, `L×L`.
    pub fn attention_weights(&self, head: usize) -> Tensor {
        let l = self.input.shape()[0];
        Tensor::new(vec![l, l], self.probs[head].clone()).expect("cached probs are L×L")
    }

    pub fn heads(&self) -> usize {
        self.probs.len()
    }
}

impl AttentionWeights {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(AttentionWeights {
            query: Tensor::uniform(&[dim, dim], INIT_BOUND, rng),
            key: Tensor::uniform(&[dim, dim], INIT_BOUND, rng),
            value: Tensor::uniform(&[dim, dim], INIT_BOUND, rng),
            output: Tensor::uniform(&[dim, dim], INIT_BOUND, rng),
            heads,
        })
    }

    pub fn identity(dim: usize, heads: usize) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(AttentionWeights {
            query: Tensor::identity(dim),
            key: Tensor::identity(dim),
            value: Tensor::identity(dim),
            output: Tensor::identity(dim),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.shape()[0]
    }
}

fn check_heads(dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || dim % heads != 0 {
        return Err(Error::config(format!(
            "model dimension {dim} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

fn softmax_rows(scores: &mut [f64], cols: usize) {
    for row in scores.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Copies columns `[off, off + w)` of an `rows×d` matrix.
fn slice_cols(m: &[f64], rows: usize, d: usize, off: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * w);
    for r in 0..rows {
        out.extend_from_slice(&m[r * d + off..r * d + off + w]);
    }
    out
}

fn scatter_cols(dst: &mut [f64], src: &[f64], rows: usize, d: usize, off: usize, w: usize) {
    for r in 0..rows {
        dst[r * d + off..r * d + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
    }
}

pub fn multi_head_attention(x: &Tensor, w: &AttentionWeights) -> Result<(Tensor, AttentionCache)> {
    let (l, d) = x.dims2()?;
    if l == 0 {
        return Err(Error::validation("attention needs at least one position"));
    }
    check_heads(d, w.heads)?;
    for (name, m) in [("query", &w.query), ("key", &w.key), ("value", &w.value), ("output", &w.output)] {
        if m.shape() != [d, d] {
            return Err(Error::dimension(format!(
                "{name} projection is {:?}, expected [{d}, {d}]",
                m.shape()
            )));
        }
    }
    let dh = d / w.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = matmul(x.data(), w.query.data(), l, d, d);
    let k = matmul(x.data(), w.key.data(), l, d, d);
    let v = matmul(x.data(), w.value.data(), l, d, d);
    let mut concat = vec![0.0; l * d];
    let mut probs = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let off = h * dh;
        let qh = slice_cols(&q, l, d, off, dh);
        let kh = slice_cols(&k, l, d, off, dh);
        let vh = slice_cols(&v, l, d, off, dh);
        let mut s = matmul_nt(&qh, &kh, l, dh, l);
        s.iter_mut().for_each(|x| *x *= scale);
        softmax_rows(&mut s, l);
        let oh = matmul(&s, &vh, l, l, dh);
        scatter_cols(&mut concat, &oh, l, d, off, dh);
        probs.push(s);
    }
    let out = matmul(&concat, w.output.data(), l, d, d);
    let cache = AttentionCache {
        input: x.clone(),
        q,
        k,
        v,
        probs,
        concat,
    };
    Ok((Tensor::new(vec![l, d], out)?, cache))
}

pub fn multi_head_attention_backward(
    w: &AttentionWeights,
    cache: &AttentionCache,
    grad_out: &Tensor,
) -> Result<AttentionGrads> {
    let (l, d) = cache.input.dims2()?;
    if grad_out.shape() != [l, d] {
        return Err(Error::dimension("attention gradient has the wrong shape"));
    }
    let dh = d / w.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let gy = grad_out.data();
    let g_output = matmul_tn(&cache.concat, gy, l, d, d);
    let g_concat = matmul_nt(gy, w.output.data(), l, d, d);

    let mut gq = vec![0.0; l * d];
    let mut gk = vec![0.0; l * d];
    let mut gv = vec![0.0; l * d];
    for h in 0..w.heads {
        let off = h * dh;
        let p = &cache.probs[h];
        let qh = slice_cols(&cache.q, l, d, off, dh);
        let kh = slice_cols(&cache.k, l, d, off, dh);
        let vh = slice_cols(&cache.v, l, d, off, dh);
        let goh = slice_cols(&g_concat, l, d, off, dh);
        let gp = matmul_nt(&goh, &vh, l, dh, l);
        let gvh = matmul_tn(p, &goh, l, l, dh);
        // softmax backward, row by row
        let mut gs = vec![0.0; l * l];
        for r in 0..l {
            let pr = &p[r * l..(r + 1) * l];
            let gpr = &gp[r * l..(r + 1) * l];
            let inner: f64 = pr.iter().zip(gpr).map(|(a, b)| a * b).sum();
            for c in 0..l {
                gs[r * l + c] = pr[c] * (gpr[c] - inner) * scale;
            }
        }
        let gqh = matmul(&gs, &kh, l, l, dh);
        let gkh = matmul_tn(&gs, &qh, l, l, dh);
        scatter_cols(&mut gq, &gqh, l, d, off, dh);
        scatter_cols(&mut gk, &gkh, l, d, off, dh);
        scatter_cols(&mut gv, &gvh, l, d, off, dh);
    }
    let x = cache.input.data();
    let g_query = matmul_tn(x, &gq, l, d, d);
    let g_key = matmul_tn(x, &gk, l, d, d);
    let g_value = matmul_tn(x, &gv, l, d, d);
    let mut gx = matmul_nt(&gq, w.query.data(), l, d, d);
    for (acc, v) in gx.iter_mut().zip(matmul_nt(&gk, w.key.data(), l, d, d)) {
        *acc += v;
    }
    for (acc, v) in gx.iter_mut().zip(matmul_nt(&gv, w.value.data(), l, d, d)) {
        *acc += v;
    }
    Ok(AttentionGrads {
        input: Tensor::new(vec![l, d], gx)?,
        query: Tensor::new(vec![d, d], g_query)?,
        key: Tensor::new(vec![d, d], g_key)?,
        value: Tensor::new(vec![d, d], g_value)?,
        output: Tensor::new(vec![d, d], g_output)?,
    })
}
