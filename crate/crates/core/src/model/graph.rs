//! Tape-level forward passes shared by inference and training.

use super::{GeneratorConfig, Linear, ModelError, ParamSet, Parameters};
use crate::autodiff::{Tape, Tensor, Var};
use crate::Real;

/// Floor on the largest sibling offset norm before dividing by it.
pub const OFFSET_NORM_EPS: f64 = 1e-12;

/// Records every parameter as a differentiable leaf.
pub fn bind_trainable<T: Real>(tape: &mut Tape<T>, params: &Parameters<T>) -> ParamSet<Var> {
    params.map(|_, t| tape.var(t.clone().with_grad()))
}

/// Records every parameter as a constant (inference).
pub fn bind_frozen<T: Real>(tape: &mut Tape<T>, params: &Parameters<T>) -> ParamSet<Var> {
    params.map(|_, t| tape.constant(t.clone()))
}

/// `W x + b`, with the bias repeated across the columns of `x`.
pub fn linear<T: Real>(tape: &mut Tape<T>, layer: &Linear<Var>, x: Var) -> Result<Var, ModelError> {
    let wx = tape.matmul(layer.weight, x)?;
    Ok(add_bias(tape, wx, layer.bias)?)
}

fn add_bias<T: Real>(tape: &mut Tape<T>, x: Var, bias: Var) -> Result<Var, ModelError> {
    let cols = tape.value(x).shape()[1];
    if cols == 1 {
        return Ok(tape.add(x, bias)?);
    }
    let ones = tape.constant(Tensor::ones(&[1, cols]));
    let tiled = tape.matmul(bias, ones)?;
    Ok(tape.add(x, tiled)?)
}

/// Encoder outputs: the latent code (mean in VAE mode) and the optional log-variance.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mean: Var,
    pub logvar: Option<Var>,
}

/// Shared per-point MLP, max-pool over points, then fully-connected head(s).
/// `points` is `3 x N`.
pub fn encode_on_tape<T: Real>(tape: &mut Tape<T>, p: &ParamSet<Var>, points: Var) -> Result<LatentVars, ModelError> {
    let mut h = points;
    for layer in &p.encoder_layers {
        let pre = linear(tape, layer, h)?;
        h = tape.leaky_relu(pre)?;
    }
    let pooled = tape.max_rows(h)?;
    let mean = linear(tape, &p.encoder_head, pooled)?;
    let logvar = match &p.encoder_logvar {
        Some(head) => Some(linear(tape, head, pooled)?),
        None => None,
    };
    Ok(LatentVars { mean, logvar })
}

/// `tanh(M_s s + M_h h)` for a batch of columns: `s: 3 x n`, `h: U x n`.
pub fn substructure_on_tape<T: Real>(tape: &mut Tape<T>, p: &ParamSet<Var>, s: Var, h: Var) -> Result<Var, ModelError> {
    let ms = tape.matmul(p.m_s, s)?;
    let mh = tape.matmul(p.m_h, h)?;
    let pre = tape.add(ms, mh)?;
    Ok(tape.tanh(pre)?)
}

/// One stage of the generation trace as recorded on a tape.
#[derive(Clone, Debug)]
pub struct StageVars {
    /// `3 x n` point coordinates.
    pub points: Var,
    /// `1 x n` scaling factors.
    pub alpha: Var,
    /// Distinct structural representations, `U x m`.
    pub structure: Var,
    /// Column of `structure` holding each point's representation (siblings share one).
    pub structure_index: Vec<usize>,
    pub count: usize,
}

/// Slot layout of one expansion: child `i * k + m` is the `m`-th child of parent `i`.
fn child_parents(n: usize, k: usize) -> Vec<usize> {
    (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect()
}

fn child_slots(n: usize, k: usize) -> Vec<usize> {
    (0..n).flat_map(|_| 0..k).collect()
}

/// Root stage: the origin with representation `z` and scale 1.
pub fn root_stage<T: Real>(tape: &mut Tape<T>, z: Var) -> StageVars {
    StageVars {
        points: tape.constant(Tensor::zeros(&[3, 1])),
        alpha: tape.constant(Tensor::ones(&[1, 1])),
        structure: z,
        structure_index: vec![0],
        count: 1,
    }
}

/// Expands every point of `stage` into `k` children using embeddings `embedding`.
pub fn expand_stage<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamSet<Var>,
    embedding: Var,
    stage: &StageVars,
) -> Result<StageVars, ModelError> {
    let n = stage.count;
    let k = tape.value(embedding).shape()[1];
    let parents = child_parents(n, k);

    // h' = tanh(M_s s + M_h h), one column per parent.
    let ms = tape.matmul(p.m_s, stage.points)?;
    let mh_distinct = tape.matmul(p.m_h, stage.structure)?;
    let mh = if stage.structure_index.iter().copied().eq(0..n) && tape.value(mh_distinct).shape()[1] == n {
        mh_distinct
    } else {
        tape.gather_cols(mh_distinct, stage.structure_index.clone())?
    };
    let pre = tape.add(ms, mh)?;
    let h_new = tape.tanh(pre)?;

    // First MLP layer on concat(e_m, h'), split by input block so each block is
    // evaluated once per distinct column and then tiled to the n*k children.
    let first = &p.mlp[0];
    let embed_width = tape.value(embedding).shape()[0];
    let u = tape.value(h_new).shape()[0];
    let w_e = tape.slice(first.weight, 1, 0, embed_width)?;
    let w_h = tape.slice(first.weight, 1, embed_width, embed_width + u)?;
    let we = tape.matmul(w_e, embedding)?;
    let we = tape.gather_cols(we, child_slots(n, k))?;
    let wh = tape.matmul(w_h, h_new)?;
    let wh = tape.gather_cols(wh, parents.clone())?;
    let pre = tape.add(we, wh)?;
    let pre = add_bias(tape, pre, first.bias)?;
    let mut act = tape.leaky_relu(pre)?;
    for layer in &p.mlp[1..] {
        let pre = linear(tape, layer, act)?;
        act = tape.leaky_relu(pre)?;
    }
    let offsets = linear(tape, &p.offset_head, act)?;
    let raw_scale = linear(tape, &p.scale_head, act)?;

    // alpha' = sigmoid(raw) * alpha_parent
    let parent_alpha = tape.gather_cols(stage.alpha, parents.clone())?;
    let squashed = tape.sigmoid(raw_scale)?;
    let alpha = tape.mul(squashed, parent_alpha)?;

    // o_max: largest offset norm among each parent's children.
    let sq = tape.square(offsets)?;
    let ones_row = tape.constant(Tensor::ones(&[1, 3]));
    let sq_norms = tape.matmul(ones_row, sq)?;
    let grouped = tape.reshape(sq_norms, &[n, k])?;
    let max_sq = tape.max_rows(grouped)?;
    let max_sq = tape.clamp_min(max_sq, OFFSET_NORM_EPS * OFFSET_NORM_EPS)?;
    let o_max = tape.sqrt(max_sq)?;
    let o_max = tape.reshape(o_max, &[1, n])?;
    let o_max = tape.gather_cols(o_max, parents.clone())?;

    // s' = s + (o / o_max) * alpha'
    let step_len = tape.div(alpha, o_max)?;
    let ones_col = tape.constant(Tensor::ones(&[3, 1]));
    let step_len = tape.matmul(ones_col, step_len)?;
    let step = tape.mul(offsets, step_len)?;
    let origin = tape.gather_cols(stage.points, parents.clone())?;
    let points = tape.add(origin, step)?;

    Ok(StageVars {
        points,
        alpha,
        structure: h_new,
        structure_index: parents,
        count: n * k,
    })
}

/// Runs every expansion stage from latent `z` (`U x 1`). Returns `D + 1` stages.
pub fn generate_on_tape<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamSet<Var>,
    config: &GeneratorConfig,
    z: Var,
) -> Result<Vec<StageVars>, ModelError> {
    let shape = tape.value(z).shape().to_vec();
    if shape != [config.latent_width, 1] {
        return Err(ModelError::LatentWidth {
            expected: config.latent_width,
            found: shape,
        });
    }
    let mut stages = vec![root_stage(tape, z)];
    for d in 0..config.stages() {
        let next = expand_stage(tape, p, p.embeddings[d], stages.last().unwrap())?;
        stages.push(next);
    }
    Ok(stages)
}
