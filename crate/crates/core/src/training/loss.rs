use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{Tape, Tensor, Var};
use crate::geometry::{chamfer_distance, PointCloud};
use crate::model::graph::{self, StageVars};
use crate::model::{GeneratorConfig, ParamSet, Parameters};
use crate::Real;

/// Weights of the objective `cd + lambda * reg + beta * kl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
}

/// Batch-mean loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cd: f64,
    pub reg: f64,
    pub kl: f64,
    pub total: f64,
}

/// Loss terms of a single example as recorded on a tape.
#[derive(Clone, Debug)]
pub struct ExampleLoss {
    pub cd: Var,
    pub reg: Var,
    pub kl: Option<Var>,
    pub total: Var,
    pub stages: Vec<StageVars>,
    pub mean: Var,
    pub logvar: Option<Var>,
}

/// Chamfer distance between a constant target and generated points `pred`
/// (`3 x M`), differentiated with the nearest-neighbour matches held fixed.
pub fn chamfer_on_tape<T: Real>(tape: &mut Tape<T>, target: &PointCloud<T>, pred: Var) -> Result<Var, TrainError> {
    let pred_cloud = PointCloud::from_columns(tape.value(pred).data())?;
    let ch = chamfer_distance(target.points(), pred_cloud.points())?;
    let n = target.len();
    let m = pred_cloud.len();

    let matched_pred = tape.gather_cols(pred, ch.p_matches.iter().map(|nb| nb.index).collect())?;
    let tgt = tape.constant(Tensor::matrix(3, n, target.to_columns()));
    let diff = tape.sub(matched_pred, tgt)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    let forward = tape.scale(s, 1.0 / n as f64)?;

    let matched_tgt: Vec<[T; 3]> = ch.q_matches.iter().map(|nb| target.points()[nb.index]).collect();
    let matched_tgt = PointCloud::new(matched_tgt)?;
    let matched_tgt = tape.constant(Tensor::matrix(3, m, matched_tgt.to_columns()));
    let diff = tape.sub(pred, matched_tgt)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    let backward = tape.scale(s, 1.0 / m as f64)?;

    Ok(tape.add(forward, backward)?)
}

/// Mean over stages `1..=D` of the mean scaling factor produced at that stage.
pub fn scale_regularizer<T: Real>(tape: &mut Tape<T>, stages: &[StageVars]) -> Result<Var, TrainError> {
    let depth = stages.len() - 1;
    let mut acc: Option<Var> = None;
    for st in &stages[1..] {
        let m = tape.mean(st.alpha)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, m)?,
            None => m,
        });
    }
    Ok(tape.scale(acc.expect("at least one stage"), 1.0 / depth as f64)?)
}

/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)`.
pub fn gaussian_kl<T: Real>(tape: &mut Tape<T>, mean: Var, logvar: Var) -> Result<Var, TrainError> {
    let dims = tape.value(mean).numel();
    let mu2 = tape.square(mean)?;
    let var = tape.exp(logvar)?;
    let t = tape.add(mu2, var)?;
    let t = tape.sub(t, logvar)?;
    let s = tape.sum(t)?;
    let offset = tape.constant(Tensor::scalar(T::of(-(dims as f64))));
    let s = tape.add(s, offset)?;
    Ok(tape.scale(s, 0.5)?)
}

/// Records the full objective for one cloud.
///
/// In VAE mode the decoder input is `mean + exp(logvar / 2) * noise`; with
/// `noise = None` the mean is used directly.
pub fn example_loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamSet<Var>,
    config: &GeneratorConfig,
    cloud: &PointCloud<T>,
    noise: Option<&[T]>,
    weights: LossWeights,
) -> Result<ExampleLoss, TrainError> {
    let x = tape.constant(Tensor::matrix(3, cloud.len(), cloud.to_columns()));
    let latent = graph::encode_on_tape(tape, p, x)?;
    let z = match (latent.logvar, noise) {
        (Some(lv), Some(eta)) => {
            let half = tape.scale(lv, 0.5)?;
            let sd = tape.exp(half)?;
            let eta = tape.constant(Tensor::column(eta.to_vec()));
            let jitter = tape.mul(sd, eta)?;
            tape.add(latent.mean, jitter)?
        }
        _ => latent.mean,
    };
    let stages = graph::generate_on_tape(tape, p, config, z)?;
    let pred = stages.last().unwrap().points;
    let cd = chamfer_on_tape(tape, cloud, pred)?;
    let reg = scale_regularizer(tape, &stages)?;
    let mut total = {
        let r = tape.scale(reg, weights.lambda)?;
        tape.add(cd, r)?
    };
    let kl = match latent.logvar {
        Some(lv) => {
            let kl = gaussian_kl(tape, latent.mean, lv)?;
            let w = tape.scale(kl, weights.beta)?;
            total = tape.add(total, w)?;
            Some(kl)
        }
        None => None,
    };
    Ok(ExampleLoss {
        cd,
        reg,
        kl,
        total,
        stages,
        mean: latent.mean,
        logvar: latent.logvar,
    })
}

fn breakdown<T: Real>(tape: &Tape<T>, l: &ExampleLoss) -> LossBreakdown {
    LossBreakdown {
        cd: tape.value(l.cd).item().as_f64(),
        reg: tape.value(l.reg).item().as_f64(),
        kl: l.kl.map_or(0.0, |v| tape.value(v).item().as_f64()),
        total: tape.value(l.total).item().as_f64(),
    }
}

fn check_batch<T>(batch: &[PointCloud<T>], noise: Option<&[Vec<T>]>) -> Result<(), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if let Some(n) = noise {
        if n.len() != batch.len() {
            return Err(TrainError::NoiseCount {
                expected: batch.len(),
                found: n.len(),
            });
        }
    }
    Ok(())
}

fn mean_breakdown(parts: &[LossBreakdown]) -> LossBreakdown {
    let n = parts.len() as f64;
    let mut out = LossBreakdown::default();
    for p in parts {
        out.cd += p.cd;
        out.reg += p.reg;
        out.kl += p.kl;
        out.total += p.total;
    }
    LossBreakdown {
        cd: out.cd / n,
        reg: out.reg / n,
        kl: out.kl / n,
        total: out.total / n,
    }
}

/// Batch-mean objective without gradients.
pub fn total_loss<T: Real>(
    params: &Parameters<T>,
    batch: &[PointCloud<T>],
    config: &GeneratorConfig,
    weights: LossWeights,
    noise: Option<&[Vec<T>]>,
) -> Result<LossBreakdown, TrainError> {
    check_batch(batch, noise)?;
    let parts = batch
        .iter()
        .enumerate()
        .map(|(i, cloud)| {
            let mut tape = Tape::new();
            let p = graph::bind_frozen(&mut tape, params);
            let eta = noise.map(|n| n[i].as_slice());
            let l = example_loss_on_tape(&mut tape, &p, config, cloud, eta, weights)?;
            Ok(breakdown(&tape, &l))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(mean_breakdown(&parts))
}

/// Batch-mean objective and its gradient with respect to every parameter.
///
/// Examples are evaluated in parallel on independent tapes; gradients are
/// summed in batch order, so the result does not depend on the thread count.
pub fn loss_and_grad<T: Real>(
    params: &Parameters<T>,
    batch: &[PointCloud<T>],
    config: &GeneratorConfig,
    weights: LossWeights,
    noise: Option<&[Vec<T>]>,
) -> Result<(LossBreakdown, Parameters<T>), TrainError> {
    check_batch(batch, noise)?;
    let per_example = batch
        .par_iter()
        .enumerate()
        .map(|(i, cloud)| {
            let mut tape = Tape::new();
            let p = graph::bind_trainable(&mut tape, params);
            let eta = noise.map(|n| n[i].as_slice());
            let l = example_loss_on_tape(&mut tape, &p, config, cloud, eta, weights)?;
            let mut grads = tape.backward(l.total)?;
            let g = p.map(|_, v| grads.take(*v));
            Ok((breakdown(&tape, &l), g))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let scale = T::of(1.0 / batch.len() as f64);
    let mut iter = per_example.into_iter();
    let (first_loss, mut acc) = iter.next().expect("non-empty batch");
    let mut parts = vec![first_loss];
    for (loss, g) in iter {
        parts.push(loss);
        for (a, b) in acc.values_mut().into_iter().zip(g.values()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + *y;
            }
        }
    }
    for t in acc.values_mut() {
        for x in t.data_mut() {
            *x = *x * scale;
        }
    }
    Ok((mean_breakdown(&parts), acc))
}
