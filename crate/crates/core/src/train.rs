//! Squared loss, RMSprop with momentum, and staged training over growing
//! sub-volume sizes.

use std::time::Instant;

use rand::Rng;

use crate::datapipe::{sample_subvolume, Augmentation};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rng::{stream, Stream};
use crate::volume::{LabelVolume, Volume};

pub const EPSILON: f64 = 1e-5;
pub const RHO_MSE: f64 = 0.9;
pub const RHO_M: f64 = 0.9;

pub const LR_FLOOR: f64 = 1e-6;
pub const LR_SCALE: f64 = 1e-2;
pub const LR_HALF_LIFE: f64 = 100.0;

/// Learning rate at `epoch` epochs into a stage; halves towards the floor
/// every 100 epochs.
pub fn lr(epoch: u64) -> f64 {
    LR_FLOOR + LR_SCALE * 0.5f64.powf(epoch as f64 / LR_HALF_LIFE)
}

/// Mean squared error between probabilities and the one-hot target, and its
/// gradient w.r.t. the probabilities.
pub fn loss_and_grad(probs: &Volume, target: &LabelVolume) -> Result<(f64, Volume)> {
    if probs.dims() != target.dims() {
        return Err(Error::shape(format!(
            "probabilities {} do not match target {}",
            probs.dims(),
            target.dims()
        )));
    }
    let y = target.one_hot();
    let n = probs.dims().len() as f64;
    let loss = probs
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / n;
    let grad = probs.zip_map(&y, |p, t| 2.0 * (p - t) / n)?;
    Ok((loss, grad))
}

/// Running mean square and momentum, one entry per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub mse: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            mse: vec![0.0; len],
            momentum: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse.is_empty()
    }

    /// One update of `theta` from `grad`, starting at weight `offset`.
    pub fn step_at(&mut self, offset: usize, theta: &mut [f64], grad: &[f64], lr: f64) {
        let mse = &mut self.mse[offset..offset + theta.len()];
        let m = &mut self.momentum[offset..offset + theta.len()];
        for i in 0..theta.len() {
            let g = grad[i];
            mse[i] = RHO_MSE * mse[i] + (1.0 - RHO_MSE) * g * g;
            let normalized = g / (mse[i].sqrt() + EPSILON);
            m[i] = RHO_M * m[i] + (1.0 - RHO_M) * normalized;
            theta[i] -= lr * m[i];
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if theta.len() != self.len() || grad.len() != self.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} weights, got {} parameters and {} gradients",
                self.len(),
                theta.len(),
                grad.len()
            )));
        }
        self.step_at(0, theta, grad, lr);
        Ok(())
    }
}

pub fn rmsprop_step(net: &mut Network, opt: &mut OptimizerState, grads: &Network, lr: f64) -> Result<()> {
    if net.param_count() != opt.len() || grads.param_count() != opt.len() {
        return Err(Error::shape("optimizer state does not match the network"));
    }
    let mut offset = 0;
    for (theta, g) in net.tensors_mut().into_iter().zip(grads.tensors()) {
        if theta.len() != g.len() {
            return Err(Error::shape("gradient layout does not match the network"));
        }
        opt.step_at(offset, theta, g, lr);
        offset += theta.len();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub epochs: u64,
    pub size: [usize; 3],
}

/// Bootstrapping stages, run in order; the learning-rate epoch restarts at
/// every stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub stages: Vec<Stage>,
}

impl Schedule {
    pub fn desk() -> Self {
        Schedule {
            stages: vec![
                Stage { epochs: 300, size: [16, 16, 8] },
                Stage { epochs: 200, size: [32, 32, 12] },
                Stage { epochs: 100, size: [48, 48, 16] },
            ],
        }
    }

    pub fn total_epochs(&self) -> u64 {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    /// Stage index and epoch within it for a global epoch.
    pub fn position(&self, global: u64) -> Option<(usize, u64)> {
        let mut start = 0;
        for (i, s) in self.stages.iter().enumerate() {
            if global < start + s.epochs {
                return Some((i, global - start));
            }
            start += s.epochs;
        }
        None
    }

    /// Every stage must fit inside every training volume.
    pub fn validate(&self, spatial: &[[usize; 3]]) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::config("schedule", "no stages"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.size.contains(&0) {
                return Err(Error::config(format!("stage {i}"), "zero sub-volume extent"));
            }
            for v in spatial {
                if (0..3).any(|a| s.size[a] > v[a]) {
                    return Err(Error::config(
                        format!("stage {i}"),
                        format!("sub-volume {:?} larger than training volume {:?}", s.size, v),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub volumes: Vec<(Volume, LabelVolume)>,
    pub augmentation: Augmentation,
}

impl TrainingSet {
    pub fn spatial(&self) -> Vec<[usize; 3]> {
        self.volumes.iter().map(|(v, _)| v.dims().spatial()).collect()
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: Network,
    pub opt: OptimizerState,
    /// Completed epochs across all stages.
    pub epoch: u64,
    pub seed: u64,
}

impl TrainState {
    pub fn new(net: Network, seed: u64) -> Self {
        let opt = OptimizerState::new(net.param_count());
        TrainState {
            net,
            opt,
            epoch: 0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub stage: usize,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,stage,lr,loss,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:.3}",
            self.epoch, self.stage, self.lr, self.loss, self.wall_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// One update: sample, forward, loss, backward, optimizer step.
pub fn train_epoch(state: &mut TrainState, data: &TrainingSet, schedule: &Schedule) -> Result<EpochRecord> {
    let (stage, stage_epoch) = schedule
        .position(state.epoch)
        .ok_or_else(|| Error::config("schedule", "schedule already complete"))?;
    let started = Instant::now();
    let mut sampling = stream(state.seed, Stream::Sampling, state.epoch);
    let mut augment = stream(state.seed, Stream::Augmentation, state.epoch);
    let which = if data.volumes.len() > 1 {
        sampling.random_range(0..data.volumes.len())
    } else {
        0
    };
    let (source, target) = &data.volumes[which];
    let sample = sample_subvolume(
        source,
        target,
        schedule.stages[stage].size,
        data.augmentation,
        &mut sampling,
        &mut augment,
    )?;
    let (probs, cache) = state.net.forward(&sample.input)?;
    let (loss, dy) = loss_and_grad(&probs, &sample.target)?;
    let grads = state.net.backward(&cache, &dy)?;
    let rate = lr(stage_epoch);
    rmsprop_step(&mut state.net, &mut state.opt, &grads, rate)?;
    let record = EpochRecord {
        epoch: state.epoch,
        stage,
        lr: rate,
        loss,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    state.epoch += 1;
    Ok(record)
}

/// Runs the remaining epochs of `schedule`, calling `on_epoch` after each.
pub fn train_loop(
    state: &mut TrainState,
    data: &TrainingSet,
    schedule: &Schedule,
    mut on_epoch: impl FnMut(&EpochRecord, &TrainState) -> Result<Control>,
) -> Result<()> {
    if data.volumes.is_empty() {
        return Err(Error::config("data", "no training volumes"));
    }
    for (v, l) in &data.volumes {
        if v.dims().spatial() != l.spatial() {
            return Err(Error::shape("training volume and labels differ in size"));
        }
        if v.dims().channels != state.net.architecture().input_channels {
            return Err(Error::config("data", "channel count does not match the architecture"));
        }
        if l.num_classes() != state.net.architecture().output_channels() {
            return Err(Error::config("data", "class count does not match the architecture"));
        }
    }
    schedule.validate(&data.spatial())?;
    if state.opt.len() != state.net.param_count() {
        return Err(Error::shape("optimizer state does not match the network"));
    }
    while state.epoch < schedule.total_epochs() {
        let record = train_epoch(state, data, schedule)?;
        if on_epoch(&record, state)? == Control::Stop {
            break;
        }
    }
    Ok(())
}

/// Fraction of voxels whose arg-max class equals the label.
pub fn voxel_accuracy(probs: &Volume, target: &LabelVolume) -> Result<f64> {
    if probs.dims() != target.dims() {
        return Err(Error::shape("probabilities and labels differ in shape"));
    }
    let pred = probs.argmax();
    let hits = pred
        .labels()
        .iter()
        .zip(target.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / target.labels().len() as f64)
}
