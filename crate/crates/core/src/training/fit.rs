use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{adamw_step, loss_and_grad, save_checkpoint, Checkpoint, LossWeights, OptimizerState, TrainConfig, TrainError};
use crate::geometry::PointCloud;
use crate::model::{GeneratorConfig, Parameters};

/// Example-weighted mean of the batch losses seen during one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub cd: f64,
    pub reg: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: Parameters<f32>,
    pub optimizer: OptimizerState<f32>,
    pub log: Vec<EpochLog>,
}

/// Stream for shuffling and VAE noise; kept apart from the parameter
/// initialisation stream so both are reproducible on their own.
fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains from a fresh initialisation. See [`fit_from`].
pub fn fit(
    dataset: &[PointCloud<f32>],
    generator: &GeneratorConfig,
    train: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome, TrainError> {
    let params = Parameters::init(generator, train.seed)?;
    let optimizer = OptimizerState::new(&params);
    fit_from(dataset, generator, train, params, optimizer, checkpoint_dir, on_epoch)
}

/// Runs `train.epochs` epochs of shuffled mini-batch AdamW.
///
/// With `checkpoint_dir` set, a checkpoint `epoch_NNNNN.rpgk` is written every
/// `save_every` epochs and `final.rpgk` at the end. Results are identical for
/// any thread count.
pub fn fit_from(
    dataset: &[PointCloud<f32>],
    generator: &GeneratorConfig,
    train: &TrainConfig,
    mut params: Parameters<f32>,
    mut optimizer: OptimizerState<f32>,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if train.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
    }
    params.check_shapes(generator)?;
    let mut rng = data_rng(train.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(train.epochs);

    let save = |name: String, params: &Parameters<f32>, opt: &OptimizerState<f32>| -> Result<(), TrainError> {
        if let Some(dir) = checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            let ck = Checkpoint {
                generator: generator.clone(),
                train: train.clone(),
                params: params.clone(),
                optimizer: opt.clone(),
            };
            save_checkpoint(&dir.join(name), &ck)?;
        }
        Ok(())
    };

    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let weights = LossWeights {
            lambda: train.lambda,
            beta: train.beta_at(epoch),
        };
        let lr = train.lr_at(epoch);
        let mut sums = [0.0f64; 4];
        for (b, chunk) in order.chunks(train.batch_size).enumerate() {
            let batch: Vec<PointCloud<f32>> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let noise: Option<Vec<Vec<f32>>> = generator.vae_mode.then(|| {
                chunk
                    .iter()
                    .map(|_| {
                        (0..generator.latent_width)
                            .map(|_| rng.sample::<f32, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            });
            let (loss, grads) = loss_and_grad(&params, &batch, generator, weights, noise.as_deref())?;
            if !loss.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch: epoch + 1, batch: b });
            }
            adamw_step(&mut params, &grads, &mut optimizer, &train.adamw, lr)?;
            let w = chunk.len() as f64;
            sums[0] += loss.cd * w;
            sums[1] += loss.reg * w;
            sums[2] += loss.kl * w;
            sums[3] += loss.total * w;
        }
        let n = dataset.len() as f64;
        let entry = EpochLog {
            epoch: epoch + 1,
            cd: sums[0] / n,
            reg: sums[1] / n,
            kl: sums[2] / n,
            total: sums[3] / n,
        };
        on_epoch(&entry);
        log.push(entry);
        if train.save_every > 0 && (epoch + 1) % train.save_every == 0 {
            save(format!("epoch_{:05}.rpgk", epoch + 1), &params, &optimizer)?;
        }
    }
    save("final.rpgk".into(), &params, &optimizer)?;
    Ok(FitOutcome { params, optimizer, log })
}
