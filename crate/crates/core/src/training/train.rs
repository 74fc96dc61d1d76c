use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::data::Sample;
use crate::geometry::PointCloud;
use crate::model::{Model, RowMode, SplitReference};
use crate::numerics::{alloc, Graph, Tensor};

use super::adam::{adam_step, AdamState};
use super::config::{lr_at, TrainConfig};
use super::loss::{total_loss, LossValues};
use super::metrics::{aggregate, cloud_metrics, CloudMetrics, MetricsRecord, SampleMetrics, MEAN_CLASS};
use super::TrainError;

/// Runs `f` over `items` in order, on `pool` when one is given. Results come
/// back in input order either way.
pub(crate) fn map_ordered<T: Sync, R: Send>(
    pool: Option<&ThreadPool>,
    items: &[T],
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    match pool {
        Some(p) => p.install(|| items.par_iter().map(&f).collect()),
        None => items.iter().map(f).collect(),
    }
}

pub(crate) fn build_pool(threads: usize) -> Result<Option<ThreadPool>, TrainError> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| TrainError::Config(format!("cannot start {threads} worker threads: {e}")))
}

#[derive(Clone, Debug)]
pub struct StepReport {
    /// Optimizer steps taken so far, this one included.
    pub step: usize,
    /// Zero-based epoch.
    pub epoch: usize,
    pub lr: f64,
    /// Batch means of the loss terms, measured before the update.
    pub losses: LossValues,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub steps: usize,
    pub epochs: usize,
    pub history: Vec<MetricsRecord>,
    pub step_losses: Vec<LossValues>,
    pub stopped_early: bool,
}

struct SampleGrad {
    grads: Vec<Tensor>,
    metrics: SampleMetrics,
}

fn sample_gradient(model: &Model, sample: &Sample, alpha: f64) -> Result<SampleGrad, TrainError> {
    let mut g = Graph::with_params(model.params());
    let trace = model.forward(&mut g, &sample.image, SplitReference::GroundTruth(&sample.cloud), RowMode::Compact)?;
    for (what, v) in [("initial prediction", trace.s_cloud), ("reconstruction", trace.f_cloud)] {
        if g.value(v).data().iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFinite(format!(
                "{what} of {} sample {} has non-finite coordinates",
                sample.class_name(),
                sample.seed
            )));
        }
    }
    let loss = total_loss(&mut g, model, &trace, &sample.cloud, alpha)?;
    let losses = loss.values(&g);
    if !(losses.total.is_finite() && losses.shape.is_finite() && losses.region.is_finite()) {
        return Err(TrainError::NonFinite(format!(
            "loss of {} sample {} is {:?}",
            sample.class_name(),
            sample.seed,
            losses
        )));
    }
    let f = PointCloud::from_tensor(g.value(trace.f_cloud))?;
    let grads = g.backward(loss.total)?.into_dense(model.params());
    drop(g);
    let metrics = cloud_metrics(&f, &sample.cloud, None)?;
    Ok(SampleGrad { grads, metrics: SampleMetrics { class: sample.class_name().to_string(), metrics, losses } })
}

fn accumulate(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) {
    match acc {
        None => *acc = Some(grads),
        Some(acc) => {
            for (a, g) in acc.iter_mut().zip(grads) {
                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
        }
    }
}

/// Mean gradient and per-sample metrics of one batch. Members are reduced in
/// batch order whether or not they ran in parallel.
fn batch_gradient(
    model: &Model,
    batch: &[&Sample],
    alpha: f64,
    pool: Option<&ThreadPool>,
) -> Result<(Vec<Tensor>, Vec<SampleMetrics>), TrainError> {
    let mut acc = None;
    let mut metrics = Vec::with_capacity(batch.len());
    match pool {
        None => {
            for s in batch {
                let sg = sample_gradient(model, s, alpha)?;
                accumulate(&mut acc, sg.grads);
                metrics.push(sg.metrics);
            }
        }
        Some(_) => {
            for sg in map_ordered(pool, batch, |s| sample_gradient(model, s, alpha)) {
                let sg = sg?;
                accumulate(&mut acc, sg.grads);
                metrics.push(sg.metrics);
            }
        }
    }
    let mut grads = acc.ok_or_else(|| TrainError::Domain("empty batch".into()))?;
    let n = batch.len() as f64;
    for t in &mut grads {
        for x in t.data_mut() {
            *x /= n;
        }
    }
    Ok((grads, metrics))
}

fn mean_losses(metrics: &[SampleMetrics]) -> LossValues {
    let n = metrics.len() as f64;
    let mut out = LossValues::default();
    for m in metrics {
        out.shape += m.losses.shape;
        out.region += m.losses.region;
        out.total += m.losses.total;
    }
    LossValues { shape: out.shape / n, region: out.region / n, total: out.total / n }
}

fn save(model: &Model, path: &Path) -> Result<(), TrainError> {
    model.save_checkpoint(path).map_err(TrainError::from)
}

/// Trains `model` in place.
///
/// Every epoch appends a `train` row built from the training forward passes
/// and, on evaluation epochs, one row per entry of `eval_sets`. `observer`
/// sees every optimizer step and stops training by returning `false`.
pub fn train(
    model: &mut Model,
    train_set: &[Sample],
    eval_sets: &[(&str, &[Sample])],
    config: &TrainConfig,
    mut observer: impl FnMut(&StepReport) -> bool,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Domain("training set is empty".into()));
    }
    alloc::retain_freed_memory();
    let pool = build_pool(config.threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.params());
    let start = Instant::now();
    let wall = |start: &Instant| if config.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        order.shuffle(&mut rng);
        let mut epoch_metrics = Vec::with_capacity(train_set.len());
        let mut stop = false;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let step = batch_gradient(model, &batch, config.alpha, pool.as_ref())
                .and_then(|(grads, metrics)| adam_step(model.params_mut(), &grads, &mut adam, lr).map(|_| metrics));
            let metrics = match step {
                Ok(m) => m,
                Err(TrainError::NonFinite(detail)) => {
                    // adam_step validates before touching anything, so the
                    // parameters are still the last good ones.
                    let dumped = match &config.checkpoint {
                        Some(p) => {
                            save(model, p)?;
                            format!("; last good checkpoint written to {}", p.display())
                        }
                        None => String::new(),
                    };
                    return Err(TrainError::NonFinite(format!(
                        "{detail} (epoch {epoch}, step {}){dumped}",
                        report.steps + 1
                    )));
                }
                Err(e) => return Err(e),
            };
            report.steps += 1;
            let losses = mean_losses(&metrics);
            report.step_losses.push(losses);
            epoch_metrics.extend(metrics);
            let info = StepReport { step: report.steps, epoch, lr, losses };
            log::debug!("epoch {epoch} step {} loss {:.6}", report.steps, losses.total);
            if !observer(&info) || config.max_steps.is_some_and(|m| report.steps >= m) {
                stop = true;
                break;
            }
        }
        report.epochs = epoch + 1;
        let ms = wall(&start);
        report.history.extend(aggregate(epoch + 1, "train", &epoch_metrics, ms).into_iter().filter(|r| r.class == MEAN_CLASS));
        let last = stop || epoch + 1 == config.epochs;
        if last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
            for (label, set) in eval_sets {
                if set.is_empty() {
                    continue;
                }
                let opts = EvalOptions { epoch: epoch + 1, alpha: config.alpha, points: config.eval_points };
                let rows = evaluate_with(model, set, label, &opts, pool.as_ref())?;
                let ms = wall(&start);
                report.history.extend(rows.into_iter().filter(|r| r.class == MEAN_CLASS).map(|mut r| {
                    r.wall_ms = ms;
                    r
                }));
            }
        }
        if let Some(p) = &config.checkpoint {
            if last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
                save(model, p)?;
            }
        }
        if let Some(last) = report.history.iter().rev().find(|r| r.split == "train") {
            log::info!("epoch {} cd {:.5} iou {:.3} loss {:.4}", epoch + 1, last.cd_eval, last.iou, last.loss_total);
        }
        if stop {
            report.stopped_early = true;
            break 'epochs;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub epoch: usize,
    pub alpha: f64,
    /// Common cardinality for the Chamfer and IoU; `None` matches sizes.
    pub points: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { epoch: 0, alpha: 0.1, points: None }
    }
}

/// Per-sample metrics: reconstruction quality of the inference-mode
/// prediction, and the loss terms of a ground-truth-split forward pass.
pub fn evaluate_sample(model: &Model, sample: &Sample, options: &EvalOptions) -> Result<SampleMetrics, TrainError> {
    let mut g = Graph::with_params(model.params());
    let f_i = model.encode_image(&mut g, &sample.image)?;
    let inference = model.forward_from_feature(&mut g, f_i, SplitReference::Prediction, RowMode::Compact)?;
    let pred = PointCloud::from_tensor(g.value(inference.f_cloud))?;
    let supervised =
        model.forward_from_feature(&mut g, f_i, SplitReference::GroundTruth(&sample.cloud), RowMode::Compact)?;
    let losses = total_loss(&mut g, model, &supervised, &sample.cloud, options.alpha)?.values(&g);
    drop(g);
    let metrics: CloudMetrics = cloud_metrics(&pred, &sample.cloud, options.points)?;
    Ok(SampleMetrics { class: sample.class_name().to_string(), metrics, losses })
}

/// Per-class rows followed by the `mean` row.
pub fn evaluate(model: &Model, samples: &[Sample], split: &str, options: &EvalOptions) -> Result<Vec<MetricsRecord>, TrainError> {
    evaluate_with(model, samples, split, options, None)
}

pub fn evaluate_parallel(
    model: &Model,
    samples: &[Sample],
    split: &str,
    options: &EvalOptions,
    threads: usize,
) -> Result<Vec<MetricsRecord>, TrainError> {
    let pool = build_pool(threads)?;
    evaluate_with(model, samples, split, options, pool.as_ref())
}

fn evaluate_with(
    model: &Model,
    samples: &[Sample],
    split: &str,
    options: &EvalOptions,
    pool: Option<&ThreadPool>,
) -> Result<Vec<MetricsRecord>, TrainError> {
    alloc::retain_freed_memory();
    let per_sample = map_ordered(pool, samples, |s| evaluate_sample(model, s, options))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(options.epoch, split, &per_sample, 0))
}
