use rand::seq::SliceRandom;

use super::features::FeatureVector;
use super::loss::loss_and_grad;
use super::params::EncoderParams;
use crate::catalog::{render, Corpus, TrainingPair};
use crate::error::{Error, Result};
use crate::optim::{warmup_cosine, AdamConfig, LazyAdam};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub weight_decay: f64,
    pub warmup_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            batch_size: 32,
            epochs: 3,
            seed: 0,
            shuffle: true,
            weight_decay: 1e-2,
            warmup_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean batch loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Trains on (anchor text, positive text) pairs with mini-batch AdamW and a
/// warmup + cosine schedule. A trailing partial batch is kept.
pub fn train_contrastive(
    mut params: EncoderParams,
    pairs: &[(String, String)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.batch_size < 1 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate {} is invalid", cfg.lr)));
    }
    let feats: Vec<(FeatureVector, FeatureVector)> = pairs
        .iter()
        .map(|(a, p)| (params.featurize(a), params.featurize(p)))
        .collect();

    let batches_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut opt = LazyAdam::new(AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = rng_from(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let anchors: Vec<FeatureVector> = chunk.iter().map(|&i| feats[i].0.clone()).collect();
            let positives: Vec<FeatureVector> = chunk.iter().map(|&i| feats[i].1.clone()).collect();
            let (loss, grad) = loss_and_grad(&params, &anchors, &positives, true)
                .map_err(|e| diagnose(e, epoch, step))?;
            let grad = grad.expect("gradient requested");
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient at epoch {epoch}, step {step}")));
            }
            let lr = warmup_cosine(step, total_steps, cfg.lr, cfg.warmup_frac);
            opt.step(params.weights_mut(), &grad, lr);
            sum += loss;
            step += 1;
        }
        let mean = sum / batches_per_epoch as f64;
        log::debug!("encoder epoch {epoch}: mean loss {mean:.5}");
        epoch_losses.push(mean);
    }
    if params.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("encoder weights after training".into()));
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

fn diagnose(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, step {step}")),
        other => other,
    }
}

/// Resolves each pair's positive through the corpus using the pair's
/// rendering, then trains.
pub fn train_on_pairs(
    params: EncoderParams,
    pairs: &[TrainingPair],
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let texts = materialize(pairs, corpus)?;
    train_contrastive(params, &texts, cfg)
}

pub fn materialize(pairs: &[TrainingPair], corpus: &Corpus) -> Result<Vec<(String, String)>> {
    pairs
        .iter()
        .map(|p| {
            let tool = corpus.tool(&p.tool_id).ok_or_else(|| Error::DanglingGold {
                query_id: p.query_id.clone(),
                tool_id: p.tool_id.clone(),
            })?;
            Ok((p.anchor.clone(), render(tool, p.rendering)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{infonce_loss, ContrastiveBatch};

    fn pairs() -> Vec<(String, String)> {
        [
            ("will it rain tomorrow", "Weather Forecast API"),
            ("price of apple shares", "Stock Quote Service"),
            ("book a flight to rome", "Flight Booking Engine"),
            ("play some jazz", "Music Streaming Player"),
            ("vegan lasagna recipe", "Recipe Finder"),
            ("directions to the museum", "Maps Routing"),
            ("latest headlines", "News Aggregator Feed"),
            ("send a message to mom", "Messaging Gateway"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            lr: 1e-2,
            batch_size: 8,
            epochs,
            seed: 3,
            shuffle: true,
            weight_decay: 0.0,
            warmup_frac: 0.05,
        }
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let p = EncoderParams::random(1 << 10, 8, 0.05, 1).unwrap();
        let out = train_contrastive(p.clone(), &pairs(), &cfg(0)).unwrap();
        assert_eq!(out.params, p);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let p = EncoderParams::random(1 << 10, 8, 0.05, 1).unwrap();
        let batch = ContrastiveBatch::new(pairs()).unwrap();
        let before = infonce_loss(&p, &batch).unwrap();
        let out = train_contrastive(p, &pairs(), &cfg(200)).unwrap();
        let after = infonce_loss(&out.params, &batch).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert!(after < 0.1 * before);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = EncoderParams::random(1 << 10, 8, 0.05, 1).unwrap();
        let c = TrainConfig { batch_size: 3, ..cfg(5) };
        let a = train_contrastive(p.clone(), &pairs(), &c).unwrap();
        let b = train_contrastive(p, &pairs(), &c).unwrap();
        assert!(a
            .params
            .weights()
            .iter()
            .zip(b.params.weights())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn rejects_bad_config() {
        let p = EncoderParams::random(1 << 6, 2, 0.05, 1).unwrap();
        let c = TrainConfig { batch_size: 0, ..cfg(1) };
        assert!(train_contrastive(p.clone(), &pairs(), &c).is_err());
        assert!(train_contrastive(p, &[], &cfg(1)).is_err());
    }
}
