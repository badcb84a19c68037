use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::data::{prepare, Example};
use super::evaluate::score;
use crate::error::{Error, Result};
use crate::nbody::{read_dataset, Split};
use crate::rng::stream;
use crate::segnn::{GraphBatch, ModelConfig, Network};
use crate::tensor::ops::{self, Metric};
use crate::tensor::{differentiate, Adam, DenseTensor, ParamId, ParamStore, Tape};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const BEST_FILE: &str = "best.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// One line of `metrics.jsonl`. Epoch 0 scores the initial parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

/// One line of `timing.jsonl`. Kept apart from the metrics so that the
/// metrics log is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub epoch: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: usize,
    pub num_parameters: usize,
    pub train_samples: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub test_mae: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamStore,
}

pub struct TrainOutcome {
    /// Network holding the best-validation parameters.
    pub network: Network,
    pub summary: Summary,
    pub history: Vec<EpochMetrics>,
}

/// Rebuilds a network from a checkpoint. Parameters that do not fit the
/// architecture described by `model` are a layout mismatch.
pub fn restore(model: &ModelConfig, params: &ParamStore) -> Result<Network> {
    let mut net = Network::new(model)?;
    net.params_mut().load_values(params).map_err(|e| Error::LayoutMismatch {
        slot: "checkpoint parameters".into(),
        reason: e.to_string(),
    })?;
    Ok(net)
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    restore(&ck.model, &ck.params)
}

fn save_checkpoint(path: &Path, net: &Network) -> Result<()> {
    let ck = Checkpoint {
        model: net.config().clone(),
        params: net.params().clone(),
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&ck)?)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn json_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Non-finite values anywhere in a step mean the run has diverged.
fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NanGradient { .. } | Error::NonFinite { .. } => Error::TrainingDiverged { epoch, loss: f64::NAN },
        e => e,
    }
}

/// Loss and gradients of one micro-batch, weighted by its share `weight` of
/// the full batch.
fn chunk_gradients(
    net: &Network,
    chunk: &[&Example],
    metric: Metric,
    weight: f64,
) -> Result<(f64, BTreeMap<ParamId, DenseTensor>)> {
    let graphs: Vec<_> = chunk.iter().map(|e| e.graph.clone()).collect();
    let batch = GraphBatch::new(&graphs, net.config())?;
    let target: Vec<f64> = chunk.iter().flat_map(|e| e.target.iter().copied()).collect();
    let mut tape = Tape::new();
    let pred = net.forward(&mut tape, &batch)?;
    let rows = tape.value(pred).rows();
    let target = tape.constant(DenseTensor::matrix(rows, target.len() / rows.max(1), target)?);
    let loss = ops::loss(&mut tape, metric, pred, target)?;
    let value = tape.value(loss).data()[0];
    let loss = ops::scale(&mut tape, loss, weight)?;
    Ok((value * weight, differentiate(&tape, loss, net.params())?))
}

/// Gradient of the batch mean loss. Micro-batches are differentiated in
/// parallel and summed in micro-batch order.
fn batch_gradients(
    net: &Network,
    batch: &[&Example],
    metric: Metric,
    micro: usize,
) -> Result<(f64, BTreeMap<ParamId, DenseTensor>)> {
    let n = batch.len() as f64;
    let parts: Vec<_> = batch
        .par_chunks(micro)
        .map(|c| chunk_gradients(net, c, metric, c.len() as f64 / n))
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        for (id, t) in g {
            grads.get_mut(&id).expect("same parameters").add_assign(&t);
        }
    }
    Ok((loss, grads))
}

struct Splits {
    train: Vec<Example>,
    val: Vec<Example>,
    test: Vec<Example>,
}

fn load_splits(config: &RunConfig) -> Result<Splits> {
    let ds = read_dataset(&config.dataset)?;
    let mut train = ds.split(Split::Train).to_vec();
    if let Some(n) = config.train_samples {
        if n > train.len() {
            return Err(Error::Config(format!(
                "train_samples {n} exceeds the {} training samples in {}",
                train.len(),
                config.dataset.display()
            )));
        }
        train.truncate(n);
    }
    let splits = Splits {
        train: prepare(&train, &config.model, config.target)?,
        val: prepare(ds.split(Split::Val), &config.model, config.target)?,
        test: prepare(ds.split(Split::Test), &config.model, config.target)?,
    };
    if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
        return Err(Error::Config("every split needs at least one sample".into()));
    }
    Ok(splits)
}

/// Trains on `config.dataset` and writes into `config.output_dir`:
///
/// | file | content |
/// |---|---|
/// | `config.json` | the resolved run config |
/// | `metrics.jsonl` | `{epoch, train_loss, val_mse}` per epoch, epoch 0 first |
/// | `timing.jsonl` | `{epoch, seconds}` per epoch |
/// | `checkpoint.json` | parameters after the last finished epoch |
/// | `best.json` | parameters with the lowest validation MSE |
/// | `summary.json` | best epoch and test errors of the best parameters |
///
/// The run is a function of the config alone: the model seed is replaced by
/// `config.seed` and batches are shuffled from a stream of the same seed.
/// A non-finite loss aborts with [`Error::TrainingDiverged`], leaving the
/// last good checkpoint in place.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut config = config.clone();
    config.model.seed = config.seed;
    let splits = load_splits(&config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), config.to_json() + "\n")?;
    let mut metrics = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
    let mut timing = BufWriter::new(File::create(dir.join(TIMING_FILE))?);

    let mut net = Network::new(&config.model)?;
    let mut adam = Adam::new(config.model.optimizer, net.params())?;
    let mut rng = stream(config.seed, 1);
    let eval_bs = config.eval_batch_size;

    let start = Instant::now();
    let initial = EpochMetrics {
        epoch: 0,
        train_loss: score(&net, &splits.train, config.loss, eval_bs).map_err(diverged(0))?,
        val_mse: score(&net, &splits.val, Metric::Mse, eval_bs).map_err(diverged(0))?,
    };
    if !initial.val_mse.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, loss: initial.val_mse });
    }
    json_line(&mut metrics, &initial)?;
    json_line(&mut timing, &EpochTiming { epoch: 0, seconds: start.elapsed().as_secs_f64() })?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &net)?;
    save_checkpoint(&dir.join(BEST_FILE), &net)?;
    let (mut best_epoch, mut best_val) = (0, initial.val_mse);
    let mut best_params = net.params().clone();
    let mut history = vec![initial];

    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let lr = config.schedule.rate(config.model.optimizer.lr, epoch - 1, config.epochs);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &splits.train[i]).collect();
            let (loss, grads) =
                batch_gradients(&net, &batch, config.loss, config.micro_batch).map_err(diverged(epoch))?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            net.params_mut().set_gradients(grads)?;
            adam.step_with_lr(net.params_mut(), lr).map_err(diverged(epoch))?;
            total += loss * idx.len() as f64;
        }
        let val_mse = score(&net, &splits.val, Metric::Mse, eval_bs).map_err(diverged(epoch))?;
        if !val_mse.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: val_mse });
        }
        let m = EpochMetrics {
            epoch,
            train_loss: total / order.len() as f64,
            val_mse,
        };
        json_line(&mut metrics, &m)?;
        save_checkpoint(&dir.join(CHECKPOINT_FILE), &net)?;
        if val_mse < best_val {
            (best_epoch, best_val) = (epoch, val_mse);
            best_params = net.params().clone();
            save_checkpoint(&dir.join(BEST_FILE), &net)?;
        }
        json_line(&mut timing, &EpochTiming { epoch, seconds: start.elapsed().as_secs_f64() })?;
        history.push(m);
    }

    net.params_mut().load_values(&best_params)?;
    let summary = Summary {
        epochs: config.epochs,
        num_parameters: net.num_parameters(),
        train_samples: splits.train.len(),
        best_epoch,
        best_val_mse: best_val,
        test_mse: score(&net, &splits.test, Metric::Mse, eval_bs)?,
        test_mae: score(&net, &splits.test, Metric::Mae, eval_bs)?,
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(TrainOutcome {
        network: net,
        summary,
        history,
    })
}

