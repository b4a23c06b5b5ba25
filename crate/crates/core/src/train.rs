//! Mini-batch training of the hourglass on ranking or dense depth losses.
//!
//! Each image in a batch gets its own graph; graphs run on the rayon pool
//! and their gradients are summed in batch order, so a run is bit-identical
//! for a given seed regardless of thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{invalid, Result};
use crate::hourglass::Model;
use crate::loss::{MetricLoss, PairQuery};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of pair losses over the batch divided by its query count.
    #[default]
    Ranking,
    /// Mean over images of the dense loss between `exp(-score)` and depth.
    FullDepth,
}

fn default_epochs() -> usize {
    5
}
fn default_batch() -> usize {
    4
}
fn default_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Seeds the per-epoch shuffle.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub dense_loss: MetricLoss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            seed: 0,
            objective: Objective::default(),
            dense_loss: MetricLoss::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// One training image with its supervision.
#[derive(Clone, Debug)]
pub struct TrainItem {
    /// `1 × 3 × H × W`.
    pub image: Tensor<f32>,
    pub queries: Vec<PairQuery>,
    pub depth: Option<DepthMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the per-batch losses.
    pub loss: f64,
    pub seconds: f64,
}

struct ImageGrad {
    loss: f64,
    grads: Vec<Option<Tensor<f32>>>,
}

fn image_grad(model: &Model<f32>, item: &TrainItem, cfg: &TrainConfig) -> Result<ImageGrad> {
    let mut g = Graph::new();
    let x = g.constant(item.image.clone())?;
    let (z, params) = model.forward_graph(&mut g, x, true)?;
    let root = match cfg.objective {
        Objective::Ranking => g.ranking_loss(z, &item.queries)?,
        Objective::FullDepth => {
            let depth = item
                .depth
                .as_ref()
                .ok_or_else(|| invalid("full-depth training needs a depth map per image"))?;
            let neg = g.scale(z, -1.0)?;
            let pred = g.exp(neg)?;
            g.metric_loss(pred, depth, cfg.dense_loss)?
        }
    };
    g.backward(root)?;
    Ok(ImageGrad {
        loss: g.value(root).data()[0] as f64,
        grads: params.iter().map(|v| g.grad(*v).cloned()).collect(),
    })
}

/// Loss and summed gradient of one batch, normalised per the objective.
pub fn batch_gradient(model: &Model<f32>, batch: &[&TrainItem], cfg: &TrainConfig) -> Result<(f64, Vec<Tensor<f32>>)> {
    let per_image: Vec<ImageGrad> = batch
        .par_iter()
        .map(|item| image_grad(model, item, cfg))
        .collect::<Result<_>>()?;
    let denom = match cfg.objective {
        Objective::Ranking => batch.iter().map(|b| b.queries.len()).sum::<usize>(),
        Objective::FullDepth => batch.len(),
    };
    if denom == 0 {
        return Err(invalid("batch has no supervision"));
    }
    let scale = 1.0 / denom as f64;
    let mut sums: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut loss = 0.0;
    for img in &per_image {
        loss += img.loss;
        for (acc, g) in sums.iter_mut().zip(&img.grads) {
            if let Some(g) = g {
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += *v as f64;
                }
            }
        }
    }
    let total = model
        .tensors()
        .iter()
        .zip(sums)
        .map(|(t, s)| Tensor::new(t.shape().to_vec(), s.into_iter().map(|v| (v * scale) as f32).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss * scale, total))
}

/// Runs `cfg.epochs` epochs of Adam, calling `on_epoch` after each.
pub fn train(
    model: &mut Model<f32>,
    data: &[TrainItem],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("no training data"));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainItem> = chunk.iter().map(|i| &data[*i]).collect();
            if batch.iter().all(|b| b.queries.is_empty()) && cfg.objective == Objective::Ranking {
                continue;
            }
            let (loss, grads) = batch_gradient(model, &batch, cfg)?;
            adam.step(model.tensors_mut(), &grads)?;
            sum += loss;
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: if batches > 0 { sum / batches as f64 } else { 0.0 },
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} loss {:.6} ({:.1}s)", epoch, stats.loss, stats.seconds);
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::Pixel;
    use crate::hourglass::HourglassConfig;
    use crate::loss::{image_loss, Relation};

    fn toy_data() -> Vec<TrainItem> {
        (0..4)
            .map(|k| {
                let image = Tensor::from_fn(vec![1, 3, 16, 16], |i| ((i * 7 + k * 3) % 11) as f32 / 11.0);
                let q = |a: (usize, usize), b: (usize, usize), r| PairQuery::new(Pixel::new(a.0, a.1), Pixel::new(b.0, b.1), r).unwrap();
                TrainItem {
                    image,
                    queries: vec![
                        q((12, 3), (2, 3), Relation::Closer),
                        q((1, 9), (14, 9), Relation::Farther),
                        q((5, 5), (5, 6), Relation::Equal),
                    ],
                    depth: Some(DepthMap::from_fn(16, 16, |r, _| 10.0 - 0.5 * r as f64).unwrap()),
                }
            })
            .collect()
    }

    fn cfg(objective: Objective) -> TrainConfig {
        TrainConfig {
            epochs: 8,
            batch_size: 2,
            lr: 2e-3,
            seed: 1,
            objective,
            dense_loss: MetricLoss::LogMse,
        }
    }

    #[test]
    fn batch_loss_is_sum_over_query_count() {
        let model = Model::<f32>::new(HourglassConfig::desk(), 0).unwrap();
        let data = toy_data();
        let batch: Vec<&TrainItem> = data.iter().collect();
        let (loss, _) = batch_gradient(&model, &batch, &cfg(Objective::Ranking)).unwrap();
        let by_hand: f64 = data
            .iter()
            .map(|d| image_loss(&model.forward(&d.image).unwrap(), &d.queries).unwrap())
            .sum::<f64>()
            / 12.0;
        assert!((loss - by_hand).abs() < 1e-5, "{loss} vs {by_hand}");
    }

    #[test]
    fn ranking_training_reduces_loss_deterministically() {
        let data = toy_data();
        let run = || {
            let mut model = Model::<f32>::new(HourglassConfig::desk(), 3).unwrap();
            let hist = train(&mut model, &data, &cfg(Objective::Ranking), |_| {}).unwrap();
            (hist, model.tensors().to_vec())
        };
        let (hist, params) = run();
        assert!(hist.last().unwrap().loss < hist[0].loss, "{hist:?}");
        let (hist2, params2) = run();
        assert_eq!(params, params2);
        assert_eq!(hist.iter().map(|h| h.loss).collect::<Vec<_>>(), hist2.iter().map(|h| h.loss).collect::<Vec<_>>());
    }

    #[test]
    fn full_depth_training_reduces_loss() {
        let data = toy_data();
        let mut model = Model::<f32>::new(HourglassConfig::desk(), 4).unwrap();
        let hist = train(&mut model, &data, &cfg(Objective::FullDepth), |_| {}).unwrap();
        assert!(hist.last().unwrap().loss < hist[0].loss, "{hist:?}");
        let mut no_depth = data.clone();
        no_depth[0].depth = None;
        assert!(train(&mut model, &no_depth, &cfg(Objective::FullDepth), |_| {}).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut model = Model::<f32>::new(HourglassConfig::desk(), 0).unwrap();
        let data = toy_data();
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train(&mut model, &data, &bad, |_| {}).is_err());
        assert!(train(&mut model, &[], &TrainConfig::default(), |_| {}).is_err());
    }
}
