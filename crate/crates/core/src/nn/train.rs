//! Training loop for the two pretext tasks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{
    adam_step, batch_gradient, AdamHyper, EncoderSpec, HeadNorm, HeadSpec, NetworkParams,
    NetworkSpec, OptimizerState,
};
use crate::dataprep::TrainingSet;
use crate::error::{Error, Result};
use crate::geom::{rotation_to_target, KnnIndex, Point3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainTask {
    Direction,
    Distance,
}

impl TrainTask {
    pub fn output_dim(&self) -> usize {
        match self {
            TrainTask::Direction => 3,
            TrainTask::Distance => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainTask::Direction => "direction",
            TrainTask::Distance => "distance",
        }
    }
}

impl std::str::FromStr for TrainTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainTask> {
        match s {
            "direction" => Ok(TrainTask::Direction),
            "distance" => Ok(TrainTask::Distance),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hyper: AdamHyper,
    /// Seeds both initialization and the shuffling stream.
    pub seed: u64,
    /// Neighborhood size assembled around each training seed.
    pub input_k: usize,
    pub encoder_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub norm: HeadNorm,
}

impl TrainConfig {
    /// Reference hyperparameters with the task-specific neighborhood
    /// size.
    pub fn for_task(task: TrainTask) -> TrainConfig {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            hyper: AdamHyper::default(),
            seed: 42,
            input_k: match task {
                TrainTask::Direction => 100,
                TrainTask::Distance => 30,
            },
            encoder_widths: vec![64, 128, 256],
            head_widths: vec![128, 64, 32],
            norm: HeadNorm::Layer,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// Mean per-sample loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Assemble the network inputs for one task: seed-centered neighborhoods
/// for the direction task, ground-truth-rotated neighborhoods for the
/// distance task.
pub fn assemble_task_inputs(
    task: TrainTask,
    dataset: &TrainingSet,
    input_k: usize,
) -> Result<(Vec<Vec<Point3>>, Vec<Vec<f64>>)> {
    if dataset.samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let indices: Vec<KnnIndex> = dataset
        .clouds
        .iter()
        .map(KnnIndex::build)
        .collect::<Result<_>>()?;
    let mut inputs = Vec::with_capacity(dataset.samples.len());
    let mut targets = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        let cloud = dataset.cloud(sample.cloud_id);
        let index = &indices[sample.cloud_id];
        let hits = index.query(sample.seed, input_k.min(cloud.len()));
        let offsets: Vec<Point3> = match task {
            TrainTask::Direction => hits
                .into_iter()
                .map(|(i, _)| cloud.points()[i] - sample.seed)
                .collect(),
            TrainTask::Distance => {
                let rot = rotation_to_target(sample.gt_direction)?;
                hits.into_iter()
                    .map(|(i, _)| rot.mul_vec(cloud.points()[i] - sample.seed))
                    .collect()
            }
        };
        inputs.push(offsets);
        targets.push(match task {
            TrainTask::Direction => vec![
                sample.gt_direction.x,
                sample.gt_direction.y,
                sample.gt_direction.z,
            ],
            TrainTask::Distance => vec![sample.gt_distance],
        });
    }
    Ok((inputs, targets))
}

/// Train a network for one pretext task. Deterministic given the config
/// seed: initialization and per-epoch shuffling both derive from it.
pub fn train(task: TrainTask, dataset: &TrainingSet, config: &TrainConfig) -> Result<TrainReport> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidParameter(
            "epochs and batch_size must be >= 1".into(),
        ));
    }
    let (inputs, targets) = assemble_task_inputs(task, dataset, config.input_k)?;
    let spec = NetworkSpec {
        encoder: EncoderSpec {
            per_point_widths: config.encoder_widths.clone(),
        },
        head: HeadSpec {
            hidden_widths: config.head_widths.clone(),
            output_dim: task.output_dim(),
            norm: config.norm,
        },
    };
    let mut params = NetworkParams::init(spec, config.seed, config.input_k)?;
    params.task = Some(task);
    let mut state = OptimizerState::new(params.param_count(), config.hyper);
    // Shuffling uses its own stream so it cannot collide with init draws.
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(0x5u64);

    let n = inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch_inputs: Vec<Vec<Point3>> = Vec::with_capacity(config.batch_size);
    let mut batch_targets: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_inputs.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_inputs.push(inputs[i].clone());
                batch_targets.push(targets[i].clone());
            }
            let result = batch_gradient(&params, &batch_inputs, &batch_targets)?;
            if !result.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam_step(&mut params, &result.grad, &mut state)
                .map_err(|_| Error::Diverged { epoch })?;
            if let Some(next) = result.bn_running_next {
                params.bn_running = next;
            }
            loss_sum += result.loss * chunk.len() as f64;
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainReport {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::{build_training_set, DataPrepConfig};
    use crate::shapes::{Shape, SurfaceSource};

    fn toy_set(seed: u64) -> TrainingSet {
        let config = DataPrepConfig {
            seeds_per_source: 64,
            sparse_size: 128,
            group_size: 16,
            master_seed: seed,
            ..DataPrepConfig::default()
        };
        build_training_set(
            &[SurfaceSource::Analytic(Shape::sphere(Point3::ZERO, 0.4))],
            &config,
        )
        .unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            hyper: AdamHyper::default(),
            seed: 7,
            input_k: 12,
            encoder_widths: vec![8, 16],
            head_widths: vec![8],
            norm: HeadNorm::Layer,
        }
    }

    #[test]
    fn final_loss_below_first_epoch() {
        let set = toy_set(1);
        let config = TrainConfig {
            epochs: 12,
            hyper: AdamHyper {
                lr: 3e-3,
                ..AdamHyper::default()
            },
            ..tiny_config()
        };
        let report = train(TrainTask::Direction, &set, &config).unwrap();
        assert_eq!(report.epoch_losses.len(), 12);
        assert!(
            report.epoch_losses.last().unwrap() < &report.epoch_losses[0],
            "losses {:?}",
            report.epoch_losses
        );
    }

    #[test]
    fn single_sample_memorization() {
        let mut set = toy_set(2);
        set.samples.truncate(1);
        let config = TrainConfig {
            epochs: 500,
            batch_size: 1,
            hyper: AdamHyper {
                lr: 1e-2,
                ..AdamHyper::default()
            },
            ..tiny_config()
        };
        let report = train(TrainTask::Distance, &set, &config).unwrap();
        assert!(
            *report.epoch_losses.last().unwrap() < 1e-6,
            "final loss {}",
            report.epoch_losses.last().unwrap()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let set = toy_set(3);
        let config = tiny_config();
        let a = train(TrainTask::Direction, &set, &config).unwrap();
        let b = train(TrainTask::Direction, &set, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn distance_task_has_scalar_targets() {
        let set = toy_set(4);
        let (inputs, targets) = assemble_task_inputs(TrainTask::Distance, &set, 8).unwrap();
        assert_eq!(inputs.len(), set.samples.len());
        assert!(targets.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn distance_inputs_are_rotated_onto_target_axis() {
        // One cloud point placed exactly along the ground-truth direction:
        // its rotated offset must land on the +x axis at the true distance.
        let dir = Point3::new(0.6, -0.4, 0.7).normalized().unwrap();
        let seed = Point3::new(0.2, 0.1, -0.3);
        let surface_point = seed + dir * 0.013;
        let set = TrainingSet {
            samples: vec![crate::dataprep::TrainingSample {
                seed,
                cloud_id: 0,
                gt_direction: dir,
                gt_distance: 0.013,
            }],
            clouds: vec![crate::geom::PointCloud::new(vec![surface_point])],
            sparse_size: 1,
            group_size: 1,
            config_hash: 0,
        };
        let (inputs, targets) = assemble_task_inputs(TrainTask::Distance, &set, 4).unwrap();
        assert_eq!(targets[0], vec![0.013]);
        let rotated = inputs[0][0];
        assert!((rotated.x - 0.013).abs() < 1e-12);
        assert!(rotated.y.abs() < 1e-12 && rotated.z.abs() < 1e-12);
    }
}
