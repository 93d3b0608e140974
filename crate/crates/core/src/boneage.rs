//! Xception-lite bone-age regressor.
//!
//! Each block is depthwise conv → pointwise conv (+bias) → tanh → 2×2 average
//! pool. The head is a global average pool followed by an affine map to one
//! scalar, multiplied by a fixed `output_scale` so the raw output is a
//! fraction of the bone-age range. Trained with squared error in months,
//! reported as mean absolute error in months.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::casedata::xray::XrayImage;
use crate::checkpoint::{write_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::numerics::adam::{adam_step, AdamConfig, AdamState};
use crate::numerics::conv::{
    add_channel_bias, avg_pool2, avg_pool2_backward, channel_bias_grad, depthwise_conv,
    depthwise_conv_backward, global_avg_pool, global_avg_pool_backward, pointwise_conv,
    pointwise_conv_backward, tanh_backward, tanh_forward, ConvParams,
};
use crate::numerics::loss::{mae_in_months, squared_error};
use crate::numerics::tensor::{dot, seeded_rng, Tensor, INIT_BOUND};

const CHECKPOINT_KIND: &str = "gda-boneage";

#[derive(Debug, Clone, PartialEq)]
pub struct BoneAgeConfig {
    /// `(rows, cols)` of the preprocessed input.
    pub input_size: (usize, usize),
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub output_scale: f64,
}

impl Default for BoneAgeConfig {
    fn default() -> Self {
        BoneAgeConfig {
            input_size: (64, 64),
            channels: vec![8, 16, 32],
            kernel: 3,
            output_scale: 240.0,
        }
    }
}

impl BoneAgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config("need at least one block with nonzero channels"));
        }
        let (mut h, mut w) = self.input_size;
        for _ in &self.channels {
            h /= 2;
            w /= 2;
            if h == 0 || w == 0 {
                return Err(Error::config(format!(
                    "input {:?} is too small for {} pooling blocks",
                    self.input_size,
                    self.channels.len()
                )));
            }
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::config("output scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableBlock {
    pub depth: Tensor,
    pub point: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoneAgeModel {
    pub config: BoneAgeConfig,
    pub blocks: Vec<SeparableBlock>,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

struct BlockCache {
    input: Tensor,
    mid: Tensor,
    act: Tensor,
}

pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    last_shape: Vec<usize>,
    features: Vec<f64>,
}

/// Anything that maps an image to a bone age in months.
pub trait BoneAgePredictor {
    fn predict(&self, image: &XrayImage) -> Result<f64>;
}

impl BoneAgeModel {
    pub fn new(config: BoneAgeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let k = config.kernel;
        let mut c_in = 1;
        let mut blocks = Vec::with_capacity(config.channels.len());
        for &c_out in &config.channels {
            blocks.push(SeparableBlock {
                depth: Tensor::uniform(&[k, k, c_in], INIT_BOUND, &mut rng),
                point: Tensor::uniform(&[c_in, c_out], INIT_BOUND, &mut rng),
                bias: Tensor::zeros(&[c_out]),
            });
            c_in = c_out;
        }
        Ok(BoneAgeModel {
            head_weight: Tensor::uniform(&[c_in], INIT_BOUND, &mut rng),
            head_bias: Tensor::zeros(&[1]),
            blocks,
            config,
        })
    }

    /// Every trainable tensor, in checkpoint order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.depth, &b.point, &b.bias]);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.depth);
            out.push(&mut b.point);
            out.push(&mut b.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (h, w) = self.config.input_size;
        if x.shape() != [h, w, 1] {
            return Err(Error::validation(format!(
                "model expects a {h}×{w}×1 image, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Prediction in months together with the intermediates for backprop.
    pub fn forward(&self, x: &Tensor) -> Result<(f64, ForwardCache)> {
        self.check_input(x)?;
        let conv = ConvParams::default();
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for b in &self.blocks {
            let mid = depthwise_conv(&cur, &b.depth, conv)?;
            let mut pre = pointwise_conv(&mid, &b.point)?;
            add_channel_bias(&mut pre, b.bias.data())?;
            let act = tanh_forward(&pre);
            let pooled = avg_pool2(&act)?;
            caches.push(BlockCache {
                input: cur,
                mid,
                act,
            });
            cur = pooled;
        }
        let features = global_avg_pool(&cur)?;
        let raw = dot(&features, self.head_weight.data()) + self.head_bias.data()[0];
        Ok((
            self.config.output_scale * raw,
            ForwardCache {
                blocks: caches,
                last_shape: cur.shape().to_vec(),
                features,
            },
        ))
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `dL/dprediction`.
    pub fn backward(&self, cache: &ForwardCache, grad_pred: f64) -> Result<Vec<Tensor>> {
        let conv = ConvParams::default();
        let g_raw = grad_pred * self.config.output_scale;
        let g_head_w = Tensor::from_vec(cache.features.iter().map(|f| f * g_raw).collect());
        let g_head_b = Tensor::from_vec(vec![g_raw]);
        let g_feat: Vec<f64> = self.head_weight.data().iter().map(|w| w * g_raw).collect();
        let mut g = global_avg_pool_backward(&cache.last_shape, &g_feat)?;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g_act = avg_pool2_backward(c.act.shape(), &g)?;
            let g_pre = tanh_backward(&c.act, &g_act);
            let g_bias = Tensor::from_vec(channel_bias_grad(&g_pre)?);
            let (g_mid, g_point) = pointwise_conv_backward(&c.mid, &b.point, &g_pre)?;
            let (g_in, g_depth) = depthwise_conv_backward(&c.input, &b.depth, conv, &g_mid)?;
            block_grads.push([g_depth, g_point, g_bias]);
            g = g_in;
        }
        let mut out: Vec<Tensor> = block_grads.into_iter().rev().flatten().collect();
        out.push(g_head_w);
        out.push(g_head_b);
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w) = self.config.input_size;
        let channels: Vec<String> = self.config.channels.iter().map(ToString::to_string).collect();
        let values = self.params().into_iter().flat_map(|t| t.data().to_vec()).collect();
        write_checkpoint(
            path,
            CHECKPOINT_KIND,
            &[
                ("input", format!("{h}x{w}")),
                ("channels", channels.join(",")),
                ("kernel", self.config.kernel.to_string()),
                ("output_scale", self.config.output_scale.to_string()),
            ],
            values,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::validation(format!("not a bone-age checkpoint: `{}`", ckpt.kind)));
        }
        let bad = |k: &str| Error::validation(format!("bad checkpoint field `{k}`"));
        let (h, w) = ckpt
            .field("input")?
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
            .ok_or_else(|| bad("input"))?;
        let channels = ckpt
            .field("channels")?
            .split(',')
            .map(|c| c.parse().map_err(|_| bad("channels")))
            .collect::<Result<Vec<usize>>>()?;
        let config = BoneAgeConfig {
            input_size: (h, w),
            channels,
            kernel: ckpt.field("kernel")?.parse().map_err(|_| bad("kernel"))?,
            output_scale: ckpt.field("output_scale")?.parse().map_err(|_| bad("output_scale"))?,
        };
        let mut model = BoneAgeModel::new(config, 0)?;
        if model.param_count() != ckpt.values.len() {
            return Err(Error::validation(format!(
                "checkpoint carries {} values, config needs {}",
                ckpt.values.len(),
                model.param_count()
            )));
        }
        let mut offset = 0;
        for t in model.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&ckpt.values[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }
}

impl BoneAgePredictor for BoneAgeModel {
    fn predict(&self, image: &XrayImage) -> Result<f64> {
        predict_bone_age(self, image)
    }
}

pub fn predict_bone_age(model: &BoneAgeModel, image: &XrayImage) -> Result<f64> {
    Ok(model.forward(image.pixels())?.0)
}

#[derive(Debug, Clone)]
pub struct BoneAgeTrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl BoneAgeTrainOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        BoneAgeTrainOptions {
            epochs,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoneAgeTrainReport {
    /// Mean squared error (months²) over each epoch's per-example updates.
    pub epoch_losses: Vec<f64>,
    /// Training-set MAE after the last epoch.
    pub final_train_mae: f64,
}

/// Per-example Adam training on squared error, visiting the dataset in a
/// seeded shuffled order each epoch. `on_epoch` runs after every epoch.
pub fn train_bone_age_with(
    model: &mut BoneAgeModel,
    dataset: &[(XrayImage, f64)],
    options: &BoneAgeTrainOptions,
    mut on_epoch: impl FnMut(usize, &BoneAgeModel) -> Result<()>,
) -> Result<BoneAgeTrainReport> {
    if dataset.is_empty() {
        return Err(Error::validation("bone-age training needs at least one image"));
    }
    if options.epochs == 0 {
        return Err(Error::validation("epochs must be at least 1"));
    }
    let mut states: Vec<AdamState> = model
        .params()
        .into_iter()
        .map(|p| AdamState::for_param(p, options.adam))
        .collect();
    let mut rng = seeded_rng(options.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (img, target) = &dataset[i];
            let (pred, cache) = model.forward(img.pixels())?;
            let (loss, g) = squared_error(pred, *target);
            total += loss;
            let grads = model.backward(&cache, g)?;
            for ((p, gr), st) in model.params_mut().into_iter().zip(&grads).zip(&mut states) {
                adam_step(p, gr, st)?;
            }
        }
        epoch_losses.push(total / dataset.len() as f64);
        on_epoch(epoch, model)?;
    }
    let final_train_mae = evaluate_bone_age(&*model, dataset)?.mae_in_months;
    Ok(BoneAgeTrainReport {
        epoch_losses,
        final_train_mae,
    })
}

pub fn train_bone_age(
    model: &mut BoneAgeModel,
    dataset: &[(XrayImage, f64)],
    epochs: usize,
    seed: u64,
) -> Result<BoneAgeTrainReport> {
    train_bone_age_with(model, dataset, &BoneAgeTrainOptions::new(epochs, seed), |_, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoneAgeEvaluation {
    pub mae_in_months: f64,
    pub predictions: Vec<f64>,
    pub abs_errors: Vec<f64>,
}

pub fn evaluate_bone_age<P: BoneAgePredictor + ?Sized>(
    model: &P,
    dataset: &[(XrayImage, f64)],
) -> Result<BoneAgeEvaluation> {
    if dataset.is_empty() {
        return Err(Error::validation("bone-age evaluation needs at least one image"));
    }
    let predictions = dataset
        .iter()
        .map(|(img, _)| model.predict(img))
        .collect::<Result<Vec<_>>>()?;
    let actual: Vec<f64> = dataset.iter().map(|(_, y)| *y).collect();
    let abs_errors = predictions.iter().zip(&actual).map(|(p, a)| (p - a).abs()).collect();
    Ok(BoneAgeEvaluation {
        mae_in_months: mae_in_months(&predictions, &actual)?,
        predictions,
        abs_errors,
    })
}

/// Synthetic training set: bone ages evenly spread over `[12, 216]` months in
/// a seeded order, each rendered by [`synthetic_hand_xray`](crate::casedata::xray::synthetic_hand_xray).
pub fn synthetic_bone_age_dataset(n: usize, size: (usize, usize), seed: u64) -> Result<Vec<(XrayImage, f64)>> {
    let mut ages: Vec<f64> = (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            ((12.0 + 204.0 * t) * 10.0).round() / 10.0
        })
        .collect();
    ages.shuffle(&mut seeded_rng(seed));
    ages.into_iter()
        .enumerate()
        .map(|(i, b)| {
            let img = crate::casedata::xray::synthetic_hand_xray(b, size, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))?;
            Ok((img, b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> BoneAgeConfig {
        BoneAgeConfig {
            input_size: (8, 8),
            channels: vec![2, 3],
            kernel: 3,
            output_scale: 240.0,
        }
    }

    #[test]
    fn zero_image_gives_head_bias() {
        let model = BoneAgeModel::new(BoneAgeConfig::default(), 3).unwrap();
        let img = XrayImage::from_fn(64, 64, "z", |_, _| 0.0).unwrap();
        assert_eq!(predict_bone_age(&model, &img).unwrap(), 0.0);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let model = BoneAgeModel::new(small_config(), 0).unwrap();
        let img = XrayImage::from_fn(9, 8, "x", |_, _| 0.5).unwrap();
        assert!(matches!(predict_bone_age(&model, &img), Err(Error::Validation(_))));
    }

    #[test]
    fn epochs_and_dataset_are_validated() {
        let mut model = BoneAgeModel::new(small_config(), 0).unwrap();
        assert!(train_bone_age(&mut model, &[], 1, 0).is_err());
        let img = XrayImage::from_fn(8, 8, "x", |_, _| 0.5).unwrap();
        assert!(train_bone_age(&mut model, &[(img, 10.0)], 0, 0).is_err());
        assert!(evaluate_bone_age(&model, &[]).is_err());
    }

    #[test]
    fn single_example_is_memorized() {
        let mut model = BoneAgeModel::new(small_config(), 1).unwrap();
        let img = crate::casedata::xray::synthetic_hand_xray(100.0, (8, 8), 4).unwrap();
        let data = vec![(img, 100.0)];
        let report = train_bone_age(&mut model, &data, 200, 0).unwrap();
        assert!(report.final_train_mae < 1.0, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = BoneAgeModel::new(small_config(), 9).unwrap();
        model.save(&path).unwrap();
        assert_eq!(BoneAgeModel::load(&path).unwrap(), model);
    }

    #[test]
    fn constant_predictor_mae() {
        struct Const(f64);
        impl BoneAgePredictor for Const {
            fn predict(&self, _: &XrayImage) -> Result<f64> {
                Ok(self.0)
            }
        }
        let img = XrayImage::from_fn(2, 2, "c", |_, _| 0.0).unwrap();
        let data = vec![(img.clone(), 50.0), (img, 70.0)];
        let eval = evaluate_bone_age(&Const(60.0), &data).unwrap();
        assert_eq!(eval.mae_in_months, 10.0);
        assert_eq!(eval.abs_errors, vec![10.0, 10.0]);
    }
}
