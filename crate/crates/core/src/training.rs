//! Classification head trained on the ordered exemplar set, its evaluation,
//! and curve export.
//!
//! The head is a one-hidden-layer tanh network over each exemplar's
//! embedding concatenated with five clinical features (see
//! [`clinical_features`]).
//! Training visits the exemplars in the chosen order, one Adam step per
//! example; the epoch loss is the mean of the per-example cross-entropies
//! seen during that pass.

use std::fmt::Write as _;
use std::path::Path;

use crate::casedata::case::{DiagnosisLabel, PatientCase};
use crate::casedata::synth::{height_centerline, height_sd, weight_centerline, weight_sd};
use crate::checkpoint::{write_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::fusion::IntegratedRecord;
use crate::icl::{Exemplar, ExemplarSet, Ordering};
use crate::numerics::adam::{adam_step, AdamConfig, AdamState};
use crate::numerics::dense::{dense_backward, dense_forward};
use crate::numerics::loss::{mae_in_months, softmax, softmax_cross_entropy};
use crate::numerics::tensor::{matmul, matmul_tn, seeded_rng, Tensor, INIT_BOUND};

pub const CLINICAL_FEATURES: usize = 5;
pub const DEFAULT_HIDDEN: usize = 512;
pub const HEAD_CHECKPOINT_KIND: &str = "gda-head";

/// Height and weight SDS against the synthetic centerline, bone-age lead in
/// years, peak GH / 10 and age in decades of months.
pub fn clinical_features(case: &PatientCase, record: &IntegratedRecord) -> [f64; CLINICAL_FEATURES] {
    let age = record.age_months;
    [
        (case.height_cm - height_centerline(age)) / height_sd(age),
        (case.weight_kg - weight_centerline(age)) / weight_sd(age),
        (record.bone_age_months - age) / 12.0,
        record.hormone_level / 10.0,
        age / 120.0,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Also train the graph layer's `d×d` weight (identity otherwise).
    pub train_gnn: bool,
    pub hidden: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            seed,
            adam: AdamConfig::default(),
            train_gnn: false,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

/// Head weights, optional graph weight and their optimizer state.
///
/// The head is `features → tanh(x·W1 + b1) → ·W2 + b2 → logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub gnn_weight: Option<Tensor>,
    pub adam: Vec<AdamState>,
}

impl ModelParams {
    pub fn new(embedding_dim: usize, hidden: usize, train_gnn: bool, seed: u64, adam: AdamConfig) -> Self {
        let mut rng = seeded_rng(seed);
        let inputs = embedding_dim + CLINICAL_FEATURES;
        let hidden_weight = Tensor::uniform(&[inputs, hidden], INIT_BOUND, &mut rng);
        let head_weight = Tensor::uniform(&[hidden, DiagnosisLabel::COUNT], INIT_BOUND, &mut rng);
        let head_bias = Tensor::zeros(&[DiagnosisLabel::COUNT]);
        let gnn_weight = train_gnn.then(|| Tensor::identity(embedding_dim));
        let mut p = ModelParams {
            hidden_weight,
            hidden_bias: Tensor::zeros(&[hidden]),
            head_weight,
            head_bias,
            gnn_weight,
            adam: Vec::new(),
        };
        p.adam = p.tensors().into_iter().map(|t| AdamState::for_param(t, adam)).collect();
        p
    }

    pub fn embedding_dim(&self) -> usize {
        self.hidden_weight.shape()[0] - CLINICAL_FEATURES
    }

    pub fn hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut n = vec!["hidden_weight", "hidden_bias", "head_weight", "head_bias"];
        if self.gnn_weight.is_some() {
            n.push("gnn_weight");
        }
        n
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut t = vec![&self.hidden_weight, &self.hidden_bias, &self.head_weight, &self.head_bias];
        t.extend(self.gnn_weight.as_ref());
        t
    }

    /// Head input for one exemplar.
    pub fn features(&self, embedding: &[f64], case: &PatientCase, record: &IntegratedRecord) -> Result<Vec<f64>> {
        let d = self.embedding_dim();
        if embedding.len() != d {
            return Err(Error::dimension(format!("embedding has {} dims, head expects {d}", embedding.len())));
        }
        let mut x = match &self.gnn_weight {
            Some(w) => matmul(embedding, w.data(), 1, d, d),
            None => embedding.to_vec(),
        };
        x.extend(clinical_features(case, record));
        Ok(x)
    }

    pub fn logits(&self, ex: &Exemplar) -> Result<Vec<f64>> {
        let x = self.features(&ex.embedding, &ex.case, &ex.record)?;
        let h: Vec<f64> = dense_forward(&x, &self.hidden_weight, &self.hidden_bias)?
            .into_iter()
            .map(f64::tanh)
            .collect();
        dense_forward(&h, &self.head_weight, &self.head_bias)
    }

    /// Argmax label; ties to the first label.
    pub fn predict(&self, ex: &Exemplar) -> Result<DiagnosisLabel> {
        let p = softmax(&self.logits(ex)?);
        let best = (1..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        DiagnosisLabel::from_index(best)
    }

    /// Cross-entropy of one exemplar and the gradient for every tensor in
    /// [`tensors`](Self::tensors) order.
    pub fn loss_and_grads(&self, ex: &Exemplar) -> Result<(f64, Vec<Tensor>)> {
        let x = self.features(&ex.embedding, &ex.case, &ex.record)?;
        let h: Vec<f64> = dense_forward(&x, &self.hidden_weight, &self.hidden_bias)?
            .into_iter()
            .map(f64::tanh)
            .collect();
        let logits = dense_forward(&h, &self.head_weight, &self.head_bias)?;
        let (loss, g) = softmax_cross_entropy(&logits, ex.label().index())?;
        let g_out = dense_backward(&h, &self.head_weight, &g)?;
        let g_pre: Vec<f64> = g_out.input.iter().zip(&h).map(|(g, h)| g * (1.0 - h * h)).collect();
        let g_hid = dense_backward(&x, &self.hidden_weight, &g_pre)?;
        let mut grads = vec![g_hid.weight, g_hid.bias, g_out.weight, g_out.bias];
        if self.gnn_weight.is_some() {
            let d = self.embedding_dim();
            grads.push(Tensor::new(vec![d, d], matmul_tn(&ex.embedding, &g_hid.input[..d], 1, d, d))?);
        }
        Ok((loss, grads))
    }

    fn apply(&mut self, grads: &[Tensor]) -> Result<()> {
        let mut adam = std::mem::take(&mut self.adam);
        let mut tensors: Vec<&mut Tensor> = vec![
            &mut self.hidden_weight,
            &mut self.hidden_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ];
        tensors.extend(self.gnn_weight.as_mut());
        let out = tensors
            .into_iter()
            .zip(grads)
            .zip(adam.iter_mut())
            .try_for_each(|((p, g), st)| adam_step(p, g, st));
        self.adam = adam;
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let values = self.tensors().into_iter().flat_map(|t| t.data().to_vec()).collect();
        write_checkpoint(
            path,
            HEAD_CHECKPOINT_KIND,
            &[
                ("embedding_dim", self.embedding_dim().to_string()),
                ("hidden", self.hidden().to_string()),
                ("clinical", CLINICAL_FEATURES.to_string()),
                ("classes", DiagnosisLabel::COUNT.to_string()),
                ("gnn", (self.gnn_weight.is_some() as u8).to_string()),
            ],
            values,
        )
    }

    /// Weights only; optimizer state restarts from zero.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.kind != HEAD_CHECKPOINT_KIND {
            return Err(Error::validation(format!("not a head checkpoint: `{}`", ckpt.kind)));
        }
        let d: usize = ckpt
            .field("embedding_dim")?
            .parse()
            .map_err(|_| Error::validation("bad checkpoint field `embedding_dim`"))?;
        let hidden: usize = ckpt
            .field("hidden")?
            .parse()
            .map_err(|_| Error::validation("bad checkpoint field `hidden`"))?;
        let mut p = ModelParams::new(d, hidden, ckpt.field("gnn")? == "1", 0, AdamConfig::default());
        let total: usize = p.tensors().iter().map(|t| t.len()).sum();
        if total != ckpt.values.len() {
            return Err(Error::validation(format!(
                "head checkpoint carries {} values, expected {total}",
                ckpt.values.len()
            )));
        }
        let mut off = 0;
        let mut tensors: Vec<&mut Tensor> = vec![
            &mut p.hidden_weight,
            &mut p.hidden_bias,
            &mut p.head_weight,
            &mut p.head_bias,
        ];
        tensors.extend(p.gnn_weight.as_mut());
        for t in tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&ckpt.values[off..off + n]);
            off += n;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    /// Bone-age MAE per epoch, when a regressor was trained alongside.
    pub mae_in_months: Option<Vec<f64>>,
    pub params: ModelParams,
}

impl TrainRun {
    pub fn with_mae_curve(mut self, mae: Vec<f64>) -> Result<Self> {
        if mae.len() != self.losses.len() {
            return Err(Error::validation(format!(
                "{} MAE entries for {} epochs",
                mae.len(),
                self.losses.len()
            )));
        }
        self.mae_in_months = Some(mae);
        Ok(self)
    }
}

/// Trains a fresh head on `selected` visited in `order`.
pub fn train_model(selected: &ExemplarSet, order: &Ordering, config: &TrainConfig) -> Result<TrainRun> {
    let first = selected
        .members
        .first()
        .ok_or_else(|| Error::validation("cannot train on an empty exemplar set"))?;
    let params = ModelParams::new(first.embedding.len(), config.hidden, config.train_gnn, config.seed, config.adam);
    train_from(params, selected, order, config)
}

/// Continues training from `params`.
pub fn train_from(
    mut params: ModelParams,
    selected: &ExemplarSet,
    order: &Ordering,
    config: &TrainConfig,
) -> Result<TrainRun> {
    if config.epochs == 0 {
        return Err(Error::validation("epochs must be at least 1"));
    }
    let sequence = selected.ordered(order)?;
    if sequence.is_empty() {
        return Err(Error::validation("cannot train on an empty exemplar set"));
    }
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut total = 0.0;
        for ex in &sequence {
            let (loss, grads) = params.loss_and_grads(ex)?;
            total += loss;
            params.apply(&grads)?;
        }
        let mean = total / sequence.len() as f64;
        if !mean.is_finite() {
            return Err(Error::validation("training loss diverged"));
        }
        losses.push(mean);
    }
    Ok(TrainRun {
        config: config.clone(),
        losses,
        mae_in_months: None,
        params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by label order.
    pub confusion: [[u64; DiagnosisLabel::COUNT]; DiagnosisLabel::COUNT],
    /// Integrated bone age against the recorded one, over cases that have it.
    pub mae_in_months: Option<f64>,
}

impl EvaluationReport {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate_model(params: &ModelParams, test_set: &[Exemplar]) -> Result<EvaluationReport> {
    if test_set.is_empty() {
        return Err(Error::validation("evaluation needs a nonempty test set"));
    }
    let mut confusion = [[0u64; DiagnosisLabel::COUNT]; DiagnosisLabel::COUNT];
    let mut correct = 0usize;
    let (mut pred_ba, mut true_ba) = (Vec::new(), Vec::new());
    for ex in test_set {
        let p = params.predict(ex)?;
        confusion[ex.label().index()][p.index()] += 1;
        correct += (p == ex.label()) as usize;
        if let Some(b) = ex.case.bone_age_months {
            pred_ba.push(ex.record.bone_age_months);
            true_ba.push(b);
        }
    }
    Ok(EvaluationReport {
        accuracy: correct as f64 / test_set.len() as f64,
        confusion,
        mae_in_months: if pred_ba.is_empty() {
            None
        } else {
            Some(mae_in_months(&pred_ba, &true_ba)?)
        },
    })
}

pub fn curves_csv(run: &TrainRun) -> String {
    let mut s = String::from("epoch,loss,mae_in_months\n");
    for (i, loss) in run.losses.iter().enumerate() {
        let mae = run
            .mae_in_months
            .as_ref()
            .map(|m| m[i].to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", i + 1, loss, mae);
    }
    s
}

pub fn export_curves(run: &TrainRun, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curves_csv(run)).map_err(|e| Error::io(path, e))
}

/// Inverse of [`curves_csv`]: the loss column and, if every row has one, the
/// MAE column.
pub fn parse_curves(text: &str) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,loss,mae_in_months") {
        return Err(Error::validation("curves file has the wrong header"));
    }
    let (mut losses, mut maes) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let bad = || Error::Parse {
            line: i + 2,
            field: "curves".into(),
            message: format!("malformed row `{line}`"),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 || cols[0].parse::<usize>().ok() != Some(i + 1) {
            return Err(bad());
        }
        losses.push(cols[1].parse().map_err(|_| bad())?);
        if !cols[2].is_empty() {
            maes.push(cols[2].parse().map_err(|_| bad())?);
        }
    }
    let mae = match maes.len() {
        0 => None,
        n if n == losses.len() => Some(maes),
        _ => return Err(Error::validation("curves file has a partial MAE column")),
    };
    Ok((losses, mae))
}
