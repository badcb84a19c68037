use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::data::Example;
use crate::error::{Error, Result};
use crate::segnn::{GraphBatch, Network};
use crate::tensor::ops::Metric;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub num_samples: usize,
    pub batches: usize,
    pub mean_forward_seconds: f64,
}

fn error_sum(metric: Metric, pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(a, b)| match metric {
            Metric::Mse => (a - b) * (a - b),
            Metric::Mae => (a - b).abs(),
        })
        .sum()
}

fn batch_error(net: &Network, chunk: &[Example], metric: Metric) -> Result<(f64, usize)> {
    let graphs: Vec<_> = chunk.iter().map(|e| e.graph.clone()).collect();
    let batch = GraphBatch::new(&graphs, net.config())?;
    let pred = net.predict(&batch)?;
    let target: Vec<f64> = chunk.iter().flat_map(|e| e.target.iter().copied()).collect();
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok((error_sum(metric, pred.data(), &target), target.len()))
}

fn check_nonempty(examples: &[Example], batch_size: usize) -> Result<()> {
    if examples.is_empty() || batch_size == 0 {
        return Err(Error::Config("evaluation needs samples and a positive batch size".into()));
    }
    Ok(())
}

/// Mean error over every target entry, with batches run one after another so
/// that the reported forward time is per batch on an otherwise idle pool.
pub fn evaluate(net: &Network, examples: &[Example], metric: Metric, batch_size: usize) -> Result<EvalReport> {
    check_nonempty(examples, batch_size)?;
    let (mut total, mut count, mut seconds, mut batches) = (0.0, 0, 0.0, 0);
    for chunk in examples.chunks(batch_size) {
        let start = Instant::now();
        let (s, n) = batch_error(net, chunk, metric)?;
        seconds += start.elapsed().as_secs_f64();
        total += s;
        count += n;
        batches += 1;
    }
    Ok(EvalReport {
        metric,
        value: total / count as f64,
        num_samples: examples.len(),
        batches,
        mean_forward_seconds: seconds / batches as f64,
    })
}

/// Same value as [`evaluate`] with batches scored in parallel. Batch sums are
/// combined in batch order, so the result does not depend on scheduling.
pub fn score(net: &Network, examples: &[Example], metric: Metric, batch_size: usize) -> Result<f64> {
    check_nonempty(examples, batch_size)?;
    let parts: Vec<(f64, usize)> = examples
        .par_chunks(batch_size)
        .map(|c| batch_error(net, c, metric))
        .collect::<Result<_>>()?;
    let (total, count) = parts.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
    Ok(total / count as f64)
}

/// Error of predicting zero for every target entry. For position targets this
/// is the mean squared displacement of the split.
pub fn zero_baseline(examples: &[Example], metric: Metric) -> f64 {
    let (total, count) = examples.iter().fold((0.0, 0), |(s, n), e| {
        (s + error_sum(metric, &vec![0.0; e.target.len()], &e.target), n + e.target.len())
    });
    total / count as f64
}
