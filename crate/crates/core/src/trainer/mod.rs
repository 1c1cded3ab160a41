//! Per-query SGD with validation-based early stopping, and the full
//! loss × model comparison built on top of it.

mod experiment;
mod report;

pub use experiment::{
    derive_seed, run_experiment, CellMetrics, Comparison, ExperimentConfig, ExperimentReport, ReportRow, SplitSizes,
};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{FeatureSchema, PreparedDataset, PreparedQuery};
use crate::error::{Error, Result};
use crate::losses::{LossKind, DEFAULT_SOFTRANK_SIGMA};
use crate::metrics::mean_ndcg;
use crate::scoring::{ModelConfig, ModelMode, RankingModel};

pub const DEFAULT_MAX_EPOCHS: usize = 100;
pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_LEARNING_RATE: f64 = 0.003;
/// Negatives kept next to the booked item when training the smoothed objective.
pub const SOFTRANK_NEGATIVES: usize = 8;
/// Validation NDCG must beat the best so far by more than this.
pub const IMPROVEMENT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub mode: ModelMode,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub softrank_sigma: f64,
    pub softrank_negatives: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(loss: LossKind, mode: ModelMode) -> Self {
        Self {
            loss,
            mode,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            softrank_sigma: DEFAULT_SOFTRANK_SIGMA,
            softrank_negatives: SOFTRANK_NEGATIVES,
            seed: 0,
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "need 0 < patience ({}) < max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.softrank_sigma > 0.0 && self.softrank_sigma.is_finite()) {
            return Err(Error::Config(format!("softrank sigma must be positive, got {}", self.softrank_sigma)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.softrank_negatives == 0 {
            return Err(Error::Config("softrank needs at least one negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-query training loss.
    pub train_loss: f64,
    pub validation_ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_validation_ndcg(&self) -> f64 {
        self.epochs[self.best_epoch - 1].validation_ndcg
    }
}

/// Booked item plus up to `negatives` non-booked items drawn without
/// replacement, in original order.
fn truncate_list(q: &PreparedQuery, negatives: usize, rng: &mut ChaCha8Rng) -> Option<PreparedQuery> {
    let booked = q.booked_index()?;
    let others: Vec<usize> = (0..q.num_items()).filter(|&j| j != booked).collect();
    if others.len() <= negatives {
        return None;
    }
    let mut keep: Vec<usize> = index::sample(rng, others.len(), negatives).into_iter().map(|i| others[i]).collect();
    keep.push(booked);
    keep.sort_unstable();
    Some(q.select_items(&keep))
}

/// One forward/backward pass; gradients accumulate into the model.
fn accumulate_query(model: &mut RankingModel, q: &PreparedQuery, config: &TrainConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, q)?;
    let out = config
        .loss
        .evaluate(tape.value(f.scores).data(), &q.labels, config.softrank_sigma)?;
    if !out.value.is_finite() {
        return Ok(out.value);
    }
    let seed = Tensor::new(vec![q.num_items(), 1], out.score_gradients)?;
    tape.backward_with_seed(f.scores, seed, model.params_mut())?;
    Ok(out.value)
}

pub fn train(
    schema: &FeatureSchema,
    train_ds: &PreparedDataset,
    validation: &PreparedDataset,
    config: &TrainConfig,
) -> Result<(RankingModel, TrainHistory)> {
    config.validate()?;
    if train_ds.is_empty() || validation.is_empty() {
        return Err(Error::Training("training and validation sets must be non-empty".into()));
    }
    let mut model = RankingModel::new(schema, config.mode, config.model.clone(), config.seed)?;
    let mut best = model.params().clone();
    let mut best_ndcg = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_ds.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut total_loss = 0.0;
        for &qi in &order {
            let q = &train_ds.queries[qi];
            let truncated = match config.loss {
                LossKind::SoftRank => truncate_list(q, config.softrank_negatives, &mut rng),
                _ => None,
            };
            let q = truncated.as_ref().unwrap_or(q);
            let loss = accumulate_query(&mut model, q, config)
                .map_err(|e| Error::Training(format!("epoch {epoch}, query `{}`: {e}", q.query_id)))?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}, query `{}`",
                    q.query_id
                )));
            }
            total_loss += loss;
            model
                .params_mut()
                .sgd_step(config.learning_rate)
                .map_err(|e| Error::Training(format!("epoch {epoch}, query `{}`: {e}", q.query_id)))?;
        }

        let validation_ndcg = mean_ndcg(&model, validation)?.mean;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total_loss / train_ds.len() as f64,
            validation_ndcg,
        });
        if validation_ndcg > best_ndcg + IMPROVEMENT_EPSILON {
            best_ndcg = validation_ndcg;
            best_epoch = epoch;
            best.copy_values_from(model.params())?;
        } else if epoch - best_epoch >= config.patience {
            model.load_parameters(&best)?;
            return Ok((
                model,
                TrainHistory {
                    epochs,
                    stop_reason: StopReason::EarlyStop,
                    best_epoch,
                },
            ));
        }
    }
    model.load_parameters(&best)?;
    Ok((
        model,
        TrainHistory {
            epochs,
            stop_reason: StopReason::MaxEpochs,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_standardization, fit_standardization, split_holdout};
    use crate::generator::{generate, random_ranker_ndcg, GeneratorConfig};

    fn small_setup(n: usize, seed: u64) -> (FeatureSchema, PreparedDataset, PreparedDataset, f64) {
        let g = generate(&GeneratorConfig {
            num_queries: n,
            seed,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let split = split_holdout(&g.dataset, seed).unwrap();
        let stats = fit_standardization(&split.train, &g.schema).unwrap();
        let train = apply_standardization(&split.train, &stats, &g.schema).unwrap();
        let val = apply_standardization(&split.validation, &stats, &g.schema).unwrap();
        (g.schema, train, val, random_ranker_ndcg(&split.validation))
    }

    fn quick(loss: LossKind, mode: ModelMode) -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            patience: 10,
            model: ModelConfig {
                widths: vec![16, 8],
                compressor_dim: 4,
            },
            ..TrainConfig::new(loss, mode)
        }
    }

    #[test]
    fn zero_learning_rate_stops_after_patience_plus_one() {
        let (schema, train_ds, val, _) = small_setup(60, 1);
        let config = TrainConfig {
            learning_rate: 0.0,
            model: ModelConfig {
                widths: vec![4],
                compressor_dim: 2,
            },
            ..TrainConfig::new(LossKind::RankNet, ModelMode::Sir)
        };
        let (_, history) = train(&schema, &train_ds, &val, &config).unwrap();
        assert_eq!(history.epochs.len(), DEFAULT_PATIENCE + 1);
        assert_eq!(history.stop_reason, StopReason::EarlyStop);
        assert_eq!(history.best_epoch, 1);
        let first = history.epochs[0].validation_ndcg;
        assert!(history.epochs.iter().all(|e| e.validation_ndcg == first));
    }

    #[test]
    fn every_loss_beats_random_on_a_small_set() {
        let (schema, train_ds, val, random) = small_setup(400, 2);
        for loss in LossKind::ALL {
            let (model, history) = train(&schema, &train_ds, &val, &quick(loss, ModelMode::Sir)).unwrap();
            let final_ndcg = mean_ndcg(&model, &val).unwrap().mean;
            assert_eq!(final_ndcg, history.best_validation_ndcg(), "{loss}");
            assert!(final_ndcg > random, "{loss}: {final_ndcg} vs {random}");
            let max = history.epochs.iter().map(|e| e.validation_ndcg).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(history.best_validation_ndcg(), max);
            assert!(history.epochs.len() <= 30);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (schema, train_ds, val, _) = small_setup(80, 3);
        for loss in [LossKind::SoftRank, LossKind::LambdaRank] {
            let config = TrainConfig {
                max_epochs: 4,
                patience: 2,
                seed: 9,
                ..quick(loss, ModelMode::DeepOnly)
            };
            let (ma, ha) = train(&schema, &train_ds, &val, &config).unwrap();
            let (mb, hb) = train(&schema, &train_ds, &val, &config).unwrap();
            assert_eq!(serde_json::to_string(&ha).unwrap(), serde_json::to_string(&hb).unwrap());
            assert_eq!(
                serde_json::to_string(ma.params()).unwrap(),
                serde_json::to_string(mb.params()).unwrap()
            );
        }
    }

    #[test]
    fn diverging_training_reports_context() {
        let (schema, train_ds, val, _) = small_setup(60, 4);
        let config = TrainConfig {
            learning_rate: 1e300,
            ..quick(LossKind::RankNet, ModelMode::DeepOnly)
        };
        match train(&schema, &train_ds, &val, &config) {
            Err(Error::Training(msg)) => assert!(msg.contains("epoch") && msg.contains("query"), "{msg}"),
            other => panic!("expected a training error, got {:?}", other.map(|(_, h)| h)),
        }
    }

    #[test]
    fn softrank_lists_are_truncated_to_nine() {
        let (_, train_ds, _, _) = small_setup(60, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for q in &train_ds.queries {
            match truncate_list(q, 8, &mut rng) {
                Some(t) => {
                    assert_eq!(t.num_items(), 9);
                    assert_eq!(t.labels.iter().sum::<f64>(), 1.0);
                }
                None => assert!(q.num_items() <= 9),
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let (schema, train_ds, val, _) = small_setup(40, 6);
        for config in [
            TrainConfig { patience: 100, ..TrainConfig::new(LossKind::RankNet, ModelMode::Sir) },
            TrainConfig { softrank_sigma: 0.0, ..TrainConfig::new(LossKind::SoftRank, ModelMode::Sir) },
        ] {
            assert!(matches!(train(&schema, &train_ds, &val, &config), Err(Error::Config(_))));
        }
    }
}
