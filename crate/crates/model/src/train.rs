//! Mini-batch training with Adam and best-validation model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vcrg_core::tokenize::TokenStore;
use vcrg_core::{LabelVector, Splits};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{argmax, encoder_forward, loss_and_backward, Tokens};
use crate::optim::Adam;
use crate::params::ModelParams;
use crate::scalar::Scalar;

/// Salt separating the shuffle stream from the initialization stream.
const SHUFFLE_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// One line of the metrics log. Accuracies are `None` for empty splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    /// Parameters from the epoch with the highest validation accuracy
    /// (earliest on ties); the last epoch when there is no validation split.
    pub best: ModelParams<S>,
    pub best_epoch: usize,
    pub last: ModelParams<S>,
    pub history: Vec<EpochMetrics>,
}

impl<S> TrainOutcome<S> {
    pub fn best_metrics(&self) -> Option<&EpochMetrics> {
        self.history.iter().find(|m| m.epoch == self.best_epoch)
    }
}

/// Token lists converted to model precision, indexed by node id.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub tokens: Vec<Tokens<S>>,
    pub labels: Vec<Option<usize>>,
    pub classes: usize,
    pub input_dim: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(store: &TokenStore, labels: &LabelVector) -> Result<Self> {
        let n = store.records.len();
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} token lists", labels.len())));
        }
        let width = store.header.token_width();
        let tokens = store
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.id as usize != i {
                    return Err(Error::Shape(format!("record {i} has id {}", r.id)));
                }
                Tokens::from_record(r, width)
            })
            .collect::<Result<_>>()?;
        Ok(Self { tokens, labels: labels.as_slice().to_vec(), classes: labels.class_count(), input_dim: width })
    }

    fn labeled(&self, ids: &[usize], split: &str) -> Result<Vec<(usize, usize)>> {
        ids.iter()
            .map(|&v| match self.labels.get(v) {
                Some(&Some(y)) => Ok((v, y)),
                Some(None) => Err(Error::Config(format!("{split} node {v} has no label"))),
                None => Err(Error::Shape(format!("{split} node {v} outside 0..{}", self.labels.len()))),
            })
            .collect()
    }

    /// Fraction of `ids` predicted correctly; `None` for an empty split.
    pub fn accuracy(&self, params: &ModelParams<S>, ids: &[usize]) -> Result<Option<f64>> {
        if ids.is_empty() {
            return Ok(None);
        }
        let pairs = self.labeled(ids, "evaluated")?;
        let hits = pairs
            .par_iter()
            .map(|&(v, y)| Ok(usize::from(argmax(&encoder_forward(params, &self.tokens[v])?.0) == y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(hits.iter().sum::<usize>() as f64 / ids.len() as f64))
    }

    /// Predicted class of every node.
    pub fn predictions(&self, params: &ModelParams<S>) -> Result<Vec<usize>> {
        self.tokens.par_iter().map(|t| Ok(argmax(&encoder_forward(params, t)?.0))).collect()
    }
}

/// Trains from a fresh seeded initialization. `on_epoch` runs after every
/// epoch with the metrics, current parameters and whether they are the new
/// best; an error from it aborts training.
pub fn train<S, F>(dataset: &Dataset<S>, splits: &Splits, config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome<S>>
where
    S: Scalar,
    F: FnMut(&EpochMetrics, &ModelParams<S>, bool) -> Result<()>,
{
    config.validate()?;
    splits.validate(dataset.tokens.len())?;
    let train_pairs = dataset.labeled(&splits.train, "train")?;
    if train_pairs.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let model = config.model(dataset.input_dim, dataset.classes);
    let mut params = ModelParams::<S>::init(model, config.seed)?;
    let mut adam = Adam::new(&params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut order = train_pairs;
    let mut best: Option<(f64, usize, ModelParams<S>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Tokens<S>, usize)> = chunk.iter().map(|&(v, y)| (&dataset.tokens[v], y)).collect();
            let (loss, grads) = loss_and_backward(&params, &batch)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            adam.step(&mut params, &grads);
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: dataset.accuracy(&params, &splits.train)?,
            val_acc: dataset.accuracy(&params, &splits.val)?,
            test_acc: dataset.accuracy(&params, &splits.test)?,
        };
        log::info!("epoch {epoch}: loss {:.4} val {:?}", metrics.train_loss, metrics.val_acc);
        let score = metrics.val_acc.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score > *b || (metrics.val_acc.is_none()),
        };
        if improved {
            best = Some((score, epoch, params.clone()));
        }
        on_epoch(&metrics, &params, improved)?;
        history.push(metrics);
    }
    let (best, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params.clone(), 0),
    };
    Ok(TrainOutcome { best, best_epoch, last: params, history })
}
