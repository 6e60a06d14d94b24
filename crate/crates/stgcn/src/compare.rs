//! The strategy-comparison harness: trains one model per partition strategy
//! under an identical seed and configuration, then tabulates validation
//! accuracy so the strategies can be compared side by side.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gcn::model::{ModelMeta, ModelParams, TrainConfig};
use crate::gcn::ops::FeatureMode;
use crate::gcn::train::{evaluate, prepare_samples, train};
use crate::partition::{average_distances, partition_count, Strategy, TieRule};
use crate::skeleton::builtin_layout;

/// Configuration shared by every comparison arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub layout_name: String,
    pub train: TrainConfig,
    /// Per-layer `(out_channels, temporal_stride)` plan; kept small so the
    /// whole comparison finishes in minutes on a CPU.
    pub model_plan: Vec<(usize, usize)>,
    pub tie_rule: TieRule,
    /// Strategies that get an additional mask-enabled arm next to the
    /// default mask-off arm.
    pub mask_strategies: Vec<Strategy>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            layout_name: "openpose18".into(),
            train: TrainConfig {
                initial_lr: 0.05,
                decay_factor: 0.1,
                decay_epochs: vec![80],
                weight_decay: 0.0001,
                dropout: 0.1,
                epochs: 100,
                batch_size: 8,
                seed: 7,
                fixed_frames: 32,
            },
            model_plan: vec![(16, 1), (32, 2)],
            tie_rule: TieRule::ByIndex,
            mask_strategies: vec![Strategy::Index],
        }
    }
}

/// One table row: a (strategy, mask) arm and its results.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub strategy: Strategy,
    pub mask: bool,
    pub top1: f64,
    pub top5: f64,
    pub final_train_loss: f64,
    /// Population variance of validation accuracy over the last 10 epochs —
    /// a stability indicator, no threshold asserted.
    pub val_acc_variance: f64,
    /// Set when this arm aborted (e.g. training diverged).
    pub failed: Option<String>,
}

/// All rows of one comparison run, in strategy order (mask-off arms first).
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed.is_some())
    }

    /// Comma-separated rendering with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,mask,top1,top5,final_train_loss,val_acc_variance,status\n");
        for row in &self.rows {
            let status = match &row.failed {
                None => "ok".to_string(),
                Some(reason) => format!("failed: {reason}"),
            };
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.8},{}\n",
                row.strategy,
                if row.mask { "on" } else { "off" },
                row.top1,
                row.top5,
                row.final_train_loss,
                row.val_acc_variance,
                status
            ));
        }
        out
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<5} {:>8} {:>8} {:>12} {:>14}  {}\n",
            "strategy", "mask", "top1", "top5", "final_loss", "acc_variance", "status"
        ));
        for row in &self.rows {
            let status = match &row.failed {
                None => "ok",
                Some(reason) => reason.as_str(),
            };
            out.push_str(&format!(
                "{:<12} {:<5} {:>8.4} {:>8.4} {:>12.6} {:>14.8}  {}\n",
                row.strategy.to_string(),
                if row.mask { "on" } else { "off" },
                row.top1,
                row.top5,
                row.final_train_loss,
                row.val_acc_variance,
                status
            ));
        }
        out
    }
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

/// Run every comparison arm over `dataset`. Each of the four strategies
/// trains once with masking off; strategies listed in `mask_strategies`
/// train a second time with masking on. A diverging arm produces a failed
/// row instead of aborting the whole comparison.
pub fn run_compare(config: &CompareConfig, dataset: &Dataset) -> Result<CompareReport> {
    let layout = builtin_layout(&config.layout_name)?;
    if dataset.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train_sequences: Vec<_> = dataset.train.iter().map(|s| s.sequence.clone()).collect();
    let profile = average_distances(&train_sequences, &layout)?;

    let mut arms: Vec<(Strategy, bool)> = Strategy::ALL.iter().map(|&s| (s, false)).collect();
    for &s in Strategy::ALL.iter() {
        if config.mask_strategies.contains(&s) {
            arms.push((s, true));
        }
    }

    let mut rows = Vec::with_capacity(arms.len());
    for (strategy, mask) in arms {
        let needs_profile = (strategy == Strategy::SpatialConfig).then_some(&profile);
        let prepared_train = prepare_samples(
            &layout,
            strategy,
            &dataset.train,
            needs_profile,
            config.tie_rule,
            config.train.fixed_frames,
            FeatureMode::Raw,
        )?;
        let prepared_val = prepare_samples(
            &layout,
            strategy,
            &dataset.validation,
            needs_profile,
            config.tie_rule,
            config.train.fixed_frames,
            FeatureMode::Raw,
        )?;

        let meta = ModelMeta {
            strategy,
            layout_name: config.layout_name.clone(),
            num_partitions: partition_count(strategy, &layout),
            num_joints: layout.num_joints(),
            in_channels: 3,
            num_classes: dataset.num_classes,
            temporal_kernel_size: 9,
            mask_enabled: mask,
        };
        let mut model = ModelParams::new(meta, &config.model_plan, config.train.seed)?;

        match train(&mut model, &prepared_train, &prepared_val, &config.train) {
            Ok(metrics) => {
                // Top-5 is reported for every run; on datasets with fewer
                // than five classes it is the exhaustive top-n (trivially 1).
                let top5_n = 5.min(dataset.num_classes);
                let top1 = evaluate(&model, &prepared_val, 1)?;
                let top5 = evaluate(&model, &prepared_val, top5_n)?;
                let final_train_loss = metrics.last().map(|m| m.train_loss).unwrap_or(f64::NAN);
                let tail = metrics.len().saturating_sub(10);
                let last_accs: Vec<f64> = metrics[tail..]
                    .iter()
                    .filter_map(|m| m.val_accuracy)
                    .collect();
                rows.push(CompareRow {
                    strategy,
                    mask,
                    top1,
                    top5,
                    final_train_loss,
                    val_acc_variance: population_variance(&last_accs),
                    failed: None,
                });
            }
            Err(Error::Diverged { epoch, loss }) => {
                rows.push(CompareRow {
                    strategy,
                    mask,
                    top1: f64::NAN,
                    top5: f64::NAN,
                    final_train_loss: loss,
                    val_acc_variance: f64::NAN,
                    failed: Some(format!("diverged at epoch {epoch}")),
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(CompareReport { rows })
}
