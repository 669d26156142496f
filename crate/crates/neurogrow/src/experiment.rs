//! The growth loop and the doubling study.

use std::time::Instant;

use log::{info, warn};
use neurogrow_core::data::{split, BatchRef, Dataset, SplitSpec, Targets};
use neurogrow_core::diagnostics::{evaluate, grad_check, measure_inactivity, EvalResult, InactivityReport};
use neurogrow_core::growth::{allocate, apply_plan, ExpansionPlan, ExtendContext, ExtenderKind, FireflyConfig};
use neurogrow_core::nn::{train_epoch, AdamState, Network, OutputHead};
use neurogrow_core::Matrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Task};
use crate::datasets::DataBundle;
use crate::error::Result;

const STREAM_TRAIN: u64 = 1;
const STREAM_GROWTH: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Neurons added at a stage: `ceil(fraction * total_width)`. The small slack
/// keeps products such as `0.3 * 110` from rounding up a whole neuron.
pub fn stage_budget(fraction: f64, total_width: usize) -> usize {
    (fraction * total_width as f64 - 1e-9).ceil().max(1.0) as usize
}

/// Total hidden width after each of `n_stages` single-layer stages.
pub fn width_sequence(start: usize, fraction: f64, n_stages: usize) -> Vec<usize> {
    let mut out = vec![start];
    for _ in 0..n_stages {
        let w = *out.last().expect("non-empty");
        out.push(w + stage_budget(fraction, w));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub epochs: usize,
    /// 0 when no epoch beat the starting weights.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Adam epochs until the validation loss has not improved for `patience`
/// epochs (or `max_epochs` is reached). The network and optimizer state are
/// restored to the best epoch, the starting point included.
pub fn fit_early_stopping(
    net: &mut Network,
    adam: &mut AdamState,
    train: &Dataset,
    val: &Dataset,
    rule: StopRule,
    rng: &mut ChaCha8Rng,
) -> Result<FitSummary> {
    let mut best = (evaluate(net, val.view())?.loss, 0, net.clone(), adam.clone());
    let mut since = 0;
    let mut epochs = 0;
    while epochs < rule.max_epochs && since < rule.patience {
        train_epoch(net, train.view(), rule.batch_size, rule.lr, rng, adam)?;
        epochs += 1;
        let loss = evaluate(net, val.view())?.loss;
        if loss < best.0 {
            best = (loss, epochs, net.clone(), adam.clone());
            since = 0;
        } else {
            since += 1;
        }
    }
    let (best_val_loss, best_epoch, best_net, best_adam) = best;
    *net = best_net;
    *adam = best_adam;
    Ok(FitSummary { epochs, best_epoch, best_val_loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    /// 0 is the initial training; stage `k >= 1` grows the network, then trains.
    pub stage: u32,
    pub widths_before: Vec<usize>,
    pub widths_after: Vec<usize>,
    pub plan: ExpansionPlan,
    pub adjustment_passes: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub train: EvalResult,
    pub val: EvalResult,
    pub test: EvalResult,
    /// Audit on the training set after the stage's training; "new" means
    /// born at this stage.
    pub inactivity: InactivityReport,
    /// New neurons that never fire on the training set right after insertion.
    pub inactive_new_at_insert: usize,
    pub seconds: f64,
}

impl StageRecord {
    pub fn total_width(&self) -> usize {
        self.widths_after.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAggregate {
    pub stage: u32,
    pub n_seeds: usize,
    pub total_width: MeanStd,
    pub train_loss: MeanStd,
    pub val_loss: MeanStd,
    pub test_loss: MeanStd,
    pub test_accuracy: Option<MeanStd>,
    pub inactive_new: MeanStd,
}

pub fn aggregate(runs: &[SeedRun]) -> Vec<StageAggregate> {
    let n_stages = runs.iter().map(|r| r.stages.len()).min().unwrap_or(0);
    (0..n_stages)
        .map(|k| {
            let rows: Vec<&StageRecord> = runs.iter().map(|r| &r.stages[k]).collect();
            let col = |f: &dyn Fn(&StageRecord) -> f64| MeanStd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let acc: Option<Vec<f64>> = rows.iter().map(|r| r.test.accuracy).collect();
            StageAggregate {
                stage: rows[0].stage,
                n_seeds: rows.len(),
                total_width: col(&|r| r.total_width() as f64),
                train_loss: col(&|r| r.train.loss),
                val_loss: col(&|r| r.val.loss),
                test_loss: col(&|r| r.test.loss),
                test_accuracy: acc.map(|a| MeanStd::of(&a)),
                inactive_new: col(&|r| r.inactivity.totals().inactive_new as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub aggregates: Vec<StageAggregate>,
    /// Final networks, one per seed, in `runs` order.
    #[serde(skip)]
    pub networks: Vec<Network>,
}

fn head_for(task: Task) -> OutputHead {
    match task {
        Task::Classification => OutputHead::SoftmaxLogits,
        Task::Reconstruction => OutputHead::Identity,
    }
}

fn output_dim(cfg: &ExperimentConfig, train: &Dataset) -> usize {
    match cfg.task {
        Task::Classification => train.n_classes().unwrap_or(1),
        Task::Reconstruction => train.n_features(),
    }
}

fn new_inactive(net: &Network, x: &Matrix, stage: u32) -> Result<usize> {
    Ok(measure_inactivity(net, x, Some(stage))?.totals().inactive_new)
}

struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    train: Dataset,
    val: Dataset,
    test: &'a Dataset,
    rule: StopRule,
}

impl SeedContext<'_> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        seed: u64,
        net: &Network,
        plan: ExpansionPlan,
        widths_before: Vec<usize>,
        passes: usize,
        fit: FitSummary,
        at_insert: usize,
        started: Instant,
    ) -> Result<StageRecord> {
        let stage = plan.stage;
        Ok(StageRecord {
            seed,
            stage,
            widths_before,
            widths_after: net.hidden_widths(),
            plan,
            adjustment_passes: passes,
            epochs: fit.epochs,
            best_epoch: fit.best_epoch,
            train: evaluate(net, self.train.view())?,
            val: evaluate(net, self.val.view())?,
            test: evaluate(net, self.test.view())?,
            inactivity: measure_inactivity(net, self.train.x(), Some(stage))?,
            inactive_new_at_insert: at_insert,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    fn adjust_batch(&self, rng: &mut ChaCha8Rng) -> Option<Dataset> {
        let n = self.cfg.swe_adjust_rows.count()?;
        if n >= self.train.len() {
            return None;
        }
        let mut idx = sample(rng, self.train.len(), n).into_vec();
        idx.sort_unstable();
        Some(self.train.subset(&idx))
    }
}

/// One seed of the growth loop.
pub fn run_seed(cfg: &ExperimentConfig, data: &DataBundle, seed: u64) -> Result<(SeedRun, Network)> {
    let (train, val) = split(&data.train, SplitSpec { val_fraction: cfg.val_fraction, seed })?;
    let ctx = SeedContext {
        cfg,
        train,
        val,
        test: &data.test,
        rule: StopRule {
            max_epochs: cfg.max_epochs_per_stage,
            patience: cfg.early_stop_patience,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
        },
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rng = stream(seed, STREAM_TRAIN);
    let mut growth_rng = stream(seed, STREAM_GROWTH);
    let loss_kind = head_for(cfg.task).loss_kind();
    let mut net = Network::mlp(
        ctx.train.n_features(),
        &cfg.hidden,
        output_dim(cfg, &ctx.train),
        head_for(cfg.task),
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(&net);
    let mut stages = Vec::with_capacity(cfg.n_stages + 1);

    let started = Instant::now();
    let fit = fit_early_stopping(&mut net, &mut adam, &ctx.train, &ctx.val, ctx.rule, &mut train_rng)?;
    let widths = net.hidden_widths();
    let plan = ExpansionPlan::zeros(0, cfg.hidden.len());
    stages.push(ctx.record(seed, &net, plan, widths, 0, fit, 0, started)?);
    info!("seed {seed} stage 0: widths {:?}, test loss {:.6}", net.hidden_widths(), stages[0].test.loss);

    for k in 1..=cfg.n_stages as u32 {
        let started = Instant::now();
        let before = net.hidden_widths();
        let budget = stage_budget(cfg.growth_fraction, before.iter().sum());
        let probes = cfg.probes_per_layer.count().unwrap_or(budget.max(8));
        let plan = allocate(cfg.distributor, &net, budget, probes, ctx.train.view(), loss_kind, k, &mut growth_rng)?;
        let adjust = ctx.adjust_batch(&mut growth_rng);
        let data = match (&adjust, cfg.extender) {
            (Some(a), ExtenderKind::Swe) => a.view(),
            _ => ctx.train.view(),
        };
        let ext = ExtendContext {
            data,
            loss_kind,
            lr: cfg.lr,
            firefly: FireflyConfig {
                pool_factor: cfg.pool_factor,
                candidate_epochs: cfg.candidate_epochs,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
            },
        };
        let (grown, stats) = apply_plan(&net, &plan, cfg.extender, &ext, &mut growth_rng)?;
        net = grown;
        adam.grow_to(&net)?;
        let at_insert = new_inactive(&net, ctx.train.x(), k)?;
        if cfg.extender == ExtenderKind::Swe && at_insert > 0 {
            warn!("seed {seed} stage {k}: {at_insert} new neurons never fire on the training set after insertion");
        }
        let fit = fit_early_stopping(&mut net, &mut adam, &ctx.train, &ctx.val, ctx.rule, &mut train_rng)?;
        let rec = ctx.record(seed, &net, plan, before, stats.adjustment_passes, fit, at_insert, started)?;
        info!(
            "seed {seed} stage {k}: widths {:?}, {} epochs, test loss {:.6}",
            rec.widths_after, rec.epochs, rec.test.loss
        );
        stages.push(rec);
    }
    Ok((SeedRun { seed, stages }, net))
}

pub fn run_growth_experiment(cfg: &ExperimentConfig, data: &DataBundle) -> Result<RunReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut networks = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (run, net) = run_seed(cfg, data, seed)?;
        runs.push(run);
        networks.push(net);
    }
    Ok(RunReport { config_hash: cfg.hash(), config: cfg.clone(), aggregates: aggregate(&runs), runs, networks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InactivityRecord {
    pub seed: u64,
    pub extender: ExtenderKind,
    pub width_before: usize,
    pub width_after: usize,
    pub base_epochs: usize,
    pub new_total: usize,
    pub inactive_new: usize,
    pub inactive_new_pct: f64,
    pub inactive_new_at_insert: usize,
    pub test_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtenderSummary {
    pub extender: ExtenderKind,
    pub n_seeds: usize,
    pub inactive_new_pct: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InactivityStudy {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub records: Vec<InactivityRecord>,
    pub summary: Vec<ExtenderSummary>,
}

/// Trains a one-hidden-layer network with early stopping, doubles the layer
/// with every configured extender, trains a few more epochs and audits the
/// new neurons.
pub fn run_inactivity_study(cfg: &ExperimentConfig, data: &DataBundle) -> Result<InactivityStudy> {
    cfg.validate()?;
    cfg.validate_inactivity()?;
    let loss_kind = head_for(cfg.task).loss_kind();
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let (train, val) = split(&data.train, SplitSpec { val_fraction: cfg.val_fraction, seed })?;
        let audit = if cfg.inactivity.split == "test" { &data.test } else { &train };
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base =
            Network::mlp(train.n_features(), &cfg.hidden, output_dim(cfg, &train), head_for(cfg.task), &mut init_rng)?;
        let mut base_adam = AdamState::new(&base);
        let rule = StopRule {
            max_epochs: cfg.max_epochs_per_stage,
            patience: cfg.early_stop_patience,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
        };
        let fit = fit_early_stopping(&mut base, &mut base_adam, &train, &val, rule, &mut stream(seed, STREAM_TRAIN))?;
        let width = cfg.hidden[0];
        info!("seed {seed}: base network trained for {} epochs", fit.epochs);
        for (i, &extender) in cfg.inactivity.extenders.iter().enumerate() {
            let mut growth_rng = stream(seed, 16 + 2 * i as u64);
            let mut train_rng = stream(seed, 17 + 2 * i as u64);
            let plan = ExpansionPlan { stage: 1, per_layer_counts: vec![width] };
            let ext = ExtendContext {
                data: train.view(),
                loss_kind,
                lr: cfg.lr,
                firefly: FireflyConfig {
                    pool_factor: cfg.pool_factor,
                    candidate_epochs: cfg.candidate_epochs,
                    batch_size: cfg.batch_size,
                    lr: cfg.lr,
                },
            };
            let (mut net, _) = apply_plan(&base, &plan, extender, &ext, &mut growth_rng)?;
            let mut adam = base_adam.clone();
            adam.grow_to(&net)?;
            let at_insert = new_inactive(&net, audit.x(), 1)?;
            if extender == ExtenderKind::Swe && at_insert > 0 {
                warn!("seed {seed}: {at_insert} shared-weights neurons never fire right after insertion");
            }
            for _ in 0..cfg.inactivity.extra_epochs {
                train_epoch(&mut net, train.view(), cfg.batch_size, cfg.lr, &mut train_rng, &mut adam)?;
            }
            let report = measure_inactivity(&net, audit.x(), Some(1))?.totals();
            let test = evaluate(&net, data.test.view())?;
            info!(
                "seed {seed} {}: {} of {} new neurons inactive",
                extender.name(),
                report.inactive_new,
                report.new_total
            );
            records.push(InactivityRecord {
                seed,
                extender,
                width_before: width,
                width_after: net.hidden_widths()[0],
                base_epochs: fit.epochs,
                new_total: report.new_total,
                inactive_new: report.inactive_new,
                inactive_new_pct: report.inactive_new_pct(),
                inactive_new_at_insert: at_insert,
                test_loss: test.loss,
                test_accuracy: test.accuracy,
            });
        }
    }
    let summary = cfg
        .inactivity
        .extenders
        .iter()
        .map(|&e| {
            let pcts: Vec<f64> = records.iter().filter(|r| r.extender == e).map(|r| r.inactive_new_pct).collect();
            ExtenderSummary { extender: e, n_seeds: pcts.len(), inactive_new_pct: MeanStd::of(&pcts) }
        })
        .collect();
    Ok(InactivityStudy { config_hash: cfg.hash(), config: cfg.clone(), records, summary })
}

/// Largest relative error of backpropagation against finite differences over
/// `trials` small random networks, each checked with both losses.
pub fn random_gradcheck(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        for head in [OutputHead::Identity, OutputHead::SoftmaxLogits] {
            let widths: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=6)).collect();
            let (n_in, n_out, rows) = (rng.random_range(2..=5), rng.random_range(2..=4), rng.random_range(2..=8));
            let mut net = Network::mlp(n_in, &widths, n_out, head, &mut rng)?;
            for layer in net.layers_mut() {
                layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
            let x = Matrix::from_fn(rows, n_in, |_, _| rng.random_range(0.0..1.0));
            let y = match head {
                OutputHead::Identity => Targets::Dense(Matrix::from_fn(rows, n_out, |_, _| rng.random_range(0.0..1.0))),
                OutputHead::SoftmaxLogits => Targets::Labels {
                    labels: (0..rows).map(|_| rng.random_range(0..n_out)).collect(),
                    n_classes: n_out,
                },
            };
            let report = grad_check(&net, BatchRef { x: &x, targets: &y }, head.loss_kind(), 1e-6)?;
            worst = worst.max(report.max_rel_error);
        }
    }
    Ok(worst)
}
