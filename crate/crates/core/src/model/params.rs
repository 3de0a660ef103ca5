use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GeneratorConfig, ModelError};
use crate::autodiff::Tensor;
use crate::Real;

/// Affine layer `y = W x + b` with `W: [out, in]`, `b: [out, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear<P> {
    pub weight: P,
    pub bias: P,
}

/// Every trainable tensor of the model, generic over what is stored per
/// tensor (values, tape handles, gradients, optimizer moments, shapes).
///
/// [`ParamSet::map`], [`ParamSet::values`], [`ParamSet::values_mut`] and
/// [`ParamSet::into_values`] all visit tensors in the canonical parameter order used by
/// checkpoints and the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<P> {
    /// Per-point shared MLP of the encoder.
    pub encoder_layers: Vec<Linear<P>>,
    /// Fully-connected head producing the latent code (the mean in VAE mode).
    pub encoder_head: Linear<P>,
    /// Log-variance head, present only in VAE mode.
    pub encoder_logvar: Option<Linear<P>>,
    /// `U x 3` point projection of the substructure function.
    pub m_s: P,
    /// `U x U` structural projection of the substructure function.
    pub m_h: P,
    /// Hidden layers of the expansion MLP, shared by all stages.
    pub mlp: Vec<Linear<P>>,
    pub offset_head: Linear<P>,
    pub scale_head: Linear<P>,
    /// `embed_width x k(d)` child embeddings of each stage.
    pub embeddings: Vec<P>,
}

/// Model parameters holding concrete values.
pub type Parameters<T> = ParamSet<Tensor<T>>;

fn map_linear<P, Q>(name: &str, l: &Linear<P>, f: &mut impl FnMut(&str, &P) -> Q) -> Linear<Q> {
    Linear {
        weight: f(&format!("{name}.weight"), &l.weight),
        bias: f(&format!("{name}.bias"), &l.bias),
    }
}

impl<P> ParamSet<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&str, &P) -> Q) -> ParamSet<Q> {
        let f = &mut f;
        ParamSet {
            encoder_layers: self
                .encoder_layers
                .iter()
                .enumerate()
                .map(|(i, l)| map_linear(&format!("encoder.layer{i}"), l, f))
                .collect(),
            encoder_head: map_linear("encoder.head", &self.encoder_head, f),
            encoder_logvar: self.encoder_logvar.as_ref().map(|l| map_linear("encoder.logvar", l, f)),
            m_s: f("expansion.m_s", &self.m_s),
            m_h: f("expansion.m_h", &self.m_h),
            mlp: self
                .mlp
                .iter()
                .enumerate()
                .map(|(i, l)| map_linear(&format!("expansion.mlp{i}"), l, f))
                .collect(),
            offset_head: map_linear("expansion.offset_head", &self.offset_head, f),
            scale_head: map_linear("expansion.scale_head", &self.scale_head, f),
            embeddings: self
                .embeddings
                .iter()
                .enumerate()
                .map(|(d, e)| f(&format!("embedding.stage{d}"), e))
                .collect(),
        }
    }

    pub fn into_values(self) -> Vec<P> {
        let mut out = Vec::new();
        for l in self.encoder_layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.encoder_head.weight);
        out.push(self.encoder_head.bias);
        if let Some(l) = self.encoder_logvar {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.m_s);
        out.push(self.m_h);
        for l in self.mlp {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.offset_head.weight);
        out.push(self.offset_head.bias);
        out.push(self.scale_head.weight);
        out.push(self.scale_head.bias);
        out.extend(self.embeddings);
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.map(|n, _| n.to_string()).into_values()
    }

    pub fn values(&self) -> Vec<&P> {
        let mut out = Vec::new();
        for l in &self.encoder_layers {
            out.extend([&l.weight, &l.bias]);
        }
        out.extend([&self.encoder_head.weight, &self.encoder_head.bias]);
        if let Some(l) = &self.encoder_logvar {
            out.extend([&l.weight, &l.bias]);
        }
        out.extend([&self.m_s, &self.m_h]);
        for l in &self.mlp {
            out.extend([&l.weight, &l.bias]);
        }
        out.extend([&self.offset_head.weight, &self.offset_head.bias]);
        out.extend([&self.scale_head.weight, &self.scale_head.bias]);
        out.extend(self.embeddings.iter());
        out
    }

    pub fn values_mut(&mut self) -> Vec<&mut P> {
        let mut out = Vec::new();
        for l in &mut self.encoder_layers {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out.extend([&mut self.encoder_head.weight, &mut self.encoder_head.bias]);
        if let Some(l) = &mut self.encoder_logvar {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out.extend([&mut self.m_s, &mut self.m_h]);
        for l in &mut self.mlp {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out.extend([&mut self.offset_head.weight, &mut self.offset_head.bias]);
        out.extend([&mut self.scale_head.weight, &mut self.scale_head.bias]);
        out.extend(self.embeddings.iter_mut());
        out
    }
}

/// Whether a parameter belongs to the encoder (as opposed to the generator).
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("encoder.")
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// `U(-b, b)` with `b = 1/sqrt(fan_in)`.
    FanIn(usize),
    /// `0.1 * N(0, 1)`.
    Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub shape: Vec<usize>,
    init: Init,
}

fn linear_spec(fan_in: usize, fan_out: usize) -> Linear<ParamSpec> {
    Linear {
        weight: ParamSpec {
            shape: vec![fan_out, fan_in],
            init: Init::FanIn(fan_in),
        },
        bias: ParamSpec {
            shape: vec![fan_out, 1],
            init: Init::FanIn(fan_in),
        },
    }
}

fn chain(input: usize, widths: &[usize]) -> Vec<Linear<ParamSpec>> {
    let mut fan_in = input;
    widths
        .iter()
        .map(|&w| {
            let l = linear_spec(fan_in, w);
            fan_in = w;
            l
        })
        .collect()
}

impl ParamSet<ParamSpec> {
    /// Shapes and initialisers implied by a configuration.
    pub fn layout(config: &GeneratorConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let u = config.latent_width;
        let enc_out = *config.encoder_hidden.last().unwrap();
        let mlp_out = *config.mlp_hidden.last().unwrap();
        Ok(ParamSet {
            encoder_layers: chain(3, &config.encoder_hidden),
            encoder_head: linear_spec(enc_out, u),
            encoder_logvar: config.vae_mode.then(|| linear_spec(enc_out, u)),
            m_s: ParamSpec {
                shape: vec![u, 3],
                init: Init::FanIn(3),
            },
            m_h: ParamSpec {
                shape: vec![u, u],
                init: Init::FanIn(u),
            },
            mlp: chain(config.embed_width + u, &config.mlp_hidden),
            offset_head: linear_spec(mlp_out, 3),
            scale_head: linear_spec(mlp_out, 1),
            embeddings: config
                .k_schedule
                .iter()
                .map(|&k| ParamSpec {
                    shape: vec![config.embed_width, k],
                    init: Init::Embedding,
                })
                .collect(),
        })
    }
}

impl<T: Real> Parameters<T> {
    /// Deterministic initialisation from `seed`: fan-in scaled uniform weights
    /// and biases, embeddings drawn from `0.1 * N(0, 1)`.
    pub fn init(config: &GeneratorConfig, seed: u64) -> Result<Self, ModelError> {
        let layout = ParamSet::layout(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(layout.map(|_, spec| {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::FanIn(fan_in) => {
                    let b = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| T::of(rng.random_range(-b..b))).collect()
                }
                Init::Embedding => (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        T::of(0.1 * z)
                    })
                    .collect(),
            };
            Tensor::new(spec.shape.clone(), data).expect("layout shape")
        }))
    }

    pub fn parameter_count(&self) -> usize {
        self.values().iter().map(|t| t.numel()).sum()
    }

    /// (encoder, generator) parameter counts.
    pub fn split_counts(&self) -> (usize, usize) {
        let mut enc = 0;
        let mut gen = 0;
        self.map(|name, t| {
            if is_encoder_param(name) {
                enc += t.numel();
            } else {
                gen += t.numel();
            }
        });
        (enc, gen)
    }

    pub fn cast<U: Real>(&self) -> Parameters<U> {
        self.map(|_, t| t.cast())
    }

    /// Checks every tensor shape against what `config` implies.
    pub fn check_shapes(&self, config: &GeneratorConfig) -> Result<(), ModelError> {
        let layout = ParamSet::layout(config)?;
        let expected: Vec<(String, Vec<usize>)> = layout.map(|n, s| (n.to_string(), s.shape.clone())).into_values();
        let found: Vec<(String, Vec<usize>)> = self.map(|n, t| (n.to_string(), t.shape().to_vec())).into_values();
        for (name, shape) in &expected {
            match found.iter().find(|(n, _)| n == name) {
                None => {
                    return Err(ModelError::ShapeMismatch {
                        name: name.clone(),
                        expected: shape.clone(),
                        found: vec![],
                    })
                }
                Some((_, s)) if s != shape => {
                    return Err(ModelError::ShapeMismatch {
                        name: name.clone(),
                        expected: shape.clone(),
                        found: s.clone(),
                    })
                }
                _ => {}
            }
        }
        if let Some((name, s)) = found.iter().find(|(n, _)| !expected.iter().any(|(e, _)| e == n)) {
            return Err(ModelError::ShapeMismatch {
                name: name.clone(),
                expected: vec![],
                found: s.clone(),
            });
        }
        Ok(())
    }
}
