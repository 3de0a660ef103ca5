//! The recursive point cloud generator.
//!
//! Generation starts from the origin with structural representation `z` and
//! scale 1. Each stage `d` replaces every point by `k(d)` children:
//!
//! ```text
//! h'  = tanh(M_s s + M_h h)                  shared by all siblings
//! o_m, a_m = MLP(concat(e_m, h'))            e_m: stage-d child embedding
//! alpha'_m = sigmoid(a_m) * alpha
//! s'_m  = s + o_m / max_j |o_j| * alpha'_m
//! ```
//!
//! `M_s`, `M_h` and the MLP are shared across every stage; the embeddings
//! are shared across all expansions of one stage. Children of point `i`
//! occupy slots `i*k .. (i+1)*k` of the next stage, which defines the parent
//! pointers used by [`segment`].

mod config;
pub mod graph;
mod params;
mod trace;

use thiserror::Error;

pub use config::GeneratorConfig;
pub use params::{is_encoder_param, Linear, ParamSet, ParamSpec, Parameters};
pub use trace::{segment, GenerationTrace, StageState};

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::geometry::{GeometryError, PointCloud};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("latent code must be {expected} x 1, got {found:?}")]
    LatentWidth { expected: usize, found: Vec<usize> },
    #[error("scaling factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("stage {stage} out of range for a {depth}-stage generator")]
    StageOutOfRange { stage: usize, depth: usize },
    #[error("ancestor stage {ancestor} must be below stage {stage} <= {depth}")]
    StageOrder { stage: usize, ancestor: usize, depth: usize },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

/// Deterministic parameter initialisation.
pub fn init_parameters<T: Real>(config: &GeneratorConfig, seed: u64) -> Result<Parameters<T>, ModelError> {
    Parameters::init(config, seed)
}

/// Encoder output. `logvar` is present in VAE mode; `mean` is the latent code.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent<T> {
    pub mean: Vec<T>,
    pub logvar: Option<Vec<T>>,
}

impl<T: Real> Latent<T> {
    pub fn code(&self) -> &[T] {
        &self.mean
    }
}

/// Encodes a cloud into its latent code. Invariant to the order of points.
pub fn encode<T: Real>(cloud: &PointCloud<T>, params: &Parameters<T>) -> Result<Latent<T>, ModelError> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud.into());
    }
    let mut tape = Tape::new();
    let p = graph::bind_frozen(&mut tape, params);
    let x = tape.constant(Tensor::matrix(3, cloud.len(), cloud.to_columns()));
    let out = graph::encode_on_tape(&mut tape, &p, x)?;
    Ok(Latent {
        mean: tape.value(out.mean).data().to_vec(),
        logvar: out.logvar.map(|v| tape.value(v).data().to_vec()),
    })
}

/// `tanh(M_s s + M_h h)` for a single point.
pub fn extract_substructure<T: Real>(s: [T; 3], h: &[T], params: &Parameters<T>) -> Result<Vec<T>, ModelError> {
    let mut tape = Tape::new();
    let p = graph::bind_frozen(&mut tape, params);
    let s = tape.constant(Tensor::column(s.to_vec()));
    let h = tape.constant(Tensor::column(h.to_vec()));
    let out = graph::substructure_on_tape(&mut tape, &p, s, h)?;
    Ok(tape.value(out).data().to_vec())
}

/// One child produced by [`expand_point`].
#[derive(Clone, Debug, PartialEq)]
pub struct Child<T> {
    pub point: [T; 3],
    pub structure: Vec<T>,
    pub alpha: T,
}

/// Expands a single point at stage `stage` into `k(stage)` children.
pub fn expand_point<T: Real>(
    s: [T; 3],
    h: &[T],
    alpha: T,
    stage: usize,
    params: &Parameters<T>,
    config: &GeneratorConfig,
) -> Result<Vec<Child<T>>, ModelError> {
    config.validate()?;
    if !(alpha > T::zero()) {
        return Err(ModelError::NonPositiveScale(alpha.as_f64()));
    }
    if stage >= config.stages() {
        return Err(ModelError::StageOutOfRange {
            stage,
            depth: config.stages(),
        });
    }
    let mut tape = Tape::new();
    let p = graph::bind_frozen(&mut tape, params);
    let parent = graph::StageVars {
        points: tape.constant(Tensor::column(s.to_vec())),
        alpha: tape.constant(Tensor::matrix(1, 1, vec![alpha])),
        structure: tape.constant(Tensor::column(h.to_vec())),
        structure_index: vec![0],
        count: 1,
    };
    let next = graph::expand_stage(&mut tape, &p, p.embeddings[stage], &parent)?;
    let state = StageState::from_vars(&tape, &next, Some(next.structure_index.clone()));
    Ok((0..state.len())
        .map(|m| Child {
            point: state.points[m],
            structure: state.structure_row(m).to_vec(),
            alpha: state.alpha[m],
        })
        .collect())
}

/// Runs all expansion stages from latent code `z`.
pub fn generate<T: Real>(
    z: &[T],
    params: &Parameters<T>,
    config: &GeneratorConfig,
) -> Result<GenerationTrace<T>, ModelError> {
    config.validate()?;
    let mut tape = Tape::new();
    let p = graph::bind_frozen(&mut tape, params);
    let z = tape.constant(Tensor::column(z.to_vec()));
    let stages = graph::generate_on_tape(&mut tape, &p, config, z)?;
    Ok(GenerationTrace::from_vars(&tape, &stages, &config.k_schedule))
}

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Rpg<T> {
    pub config: GeneratorConfig,
    pub params: Parameters<T>,
}

impl<T: Real> Rpg<T> {
    pub fn new(config: GeneratorConfig, params: Parameters<T>) -> Result<Self, ModelError> {
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn init(config: GeneratorConfig, seed: u64) -> Result<Self, ModelError> {
        let params = init_parameters(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn encode(&self, cloud: &PointCloud<T>) -> Result<Latent<T>, ModelError> {
        encode(cloud, &self.params)
    }

    pub fn generate(&self, z: &[T]) -> Result<GenerationTrace<T>, ModelError> {
        generate(z, &self.params, &self.config)
    }

    /// Encode, then decode from the latent code (the mean in VAE mode).
    pub fn reconstruct_trace(&self, cloud: &PointCloud<T>) -> Result<GenerationTrace<T>, ModelError> {
        let latent = self.encode(cloud)?;
        self.generate(latent.code())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            k_schedule: vec![2, 3],
            latent_width: 8,
            embed_width: 4,
            mlp_hidden: vec![8, 8],
            encoder_hidden: vec![8, 16],
            vae_mode: false,
        }
    }

    #[test]
    fn presets_have_expected_leaf_counts() {
        assert_eq!(GeneratorConfig::rpg3125().leaf_count(), 3125);
        assert_eq!(GeneratorConfig::rpg2048().leaf_count(), 2048);
        assert_eq!(GeneratorConfig::rpg2048().stage_sizes(), vec![1, 8, 32, 128, 512, 2048]);
        let c = GeneratorConfig::default();
        assert_eq!((c.latent_width, c.embed_width), (512, 64));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.k_schedule = vec![2, 0];
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig(_))));
        c.k_schedule.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a: Parameters<f32> = init_parameters(&tiny(), 7).unwrap();
        let b: Parameters<f32> = init_parameters(&tiny(), 7).unwrap();
        let c: Parameters<f32> = init_parameters(&tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn traversals_agree_on_order() {
        let mut cfg = tiny();
        cfg.vae_mode = true;
        let mut p: Parameters<f64> = init_parameters(&cfg, 1).unwrap();
        let names = p.names();
        let shapes: Vec<Vec<usize>> = p.values().iter().map(|t| t.shape().to_vec()).collect();
        let mapped: Vec<Vec<usize>> = p.map(|_, t| t.shape().to_vec()).into_values();
        let muts: Vec<Vec<usize>> = p.values_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mapped);
        assert_eq!(shapes, muts);
        assert_eq!(names.len(), shapes.len());
        assert_eq!(names[0], "encoder.layer0.weight");
        assert!(names.contains(&"encoder.logvar.bias".to_string()));
        assert_eq!(names.last().unwrap(), "embedding.stage1");
    }

    #[test]
    fn m_h_has_u_squared_entries_at_preset_width() {
        let layout = ParamSet::layout(&GeneratorConfig::rpg2048()).unwrap();
        assert_eq!(layout.m_h.shape.iter().product::<usize>(), 262144);
        assert_eq!(layout.m_s.shape, vec![512, 3]);
        assert_eq!(layout.embeddings[0].shape, vec![64, 8]);
        assert_eq!(layout.embeddings[4].shape, vec![64, 4]);
    }

    #[test]
    fn zero_input_substructure_is_zero() {
        let p: Parameters<f64> = init_parameters(&tiny(), 3).unwrap();
        let h = extract_substructure([0.0; 3], &[0.0; 8], &p).unwrap();
        assert_eq!(h, vec![0.0; 8]);
    }

    #[test]
    fn expand_point_contract() {
        let cfg = tiny();
        let p: Parameters<f64> = init_parameters(&cfg, 5).unwrap();
        let h: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = [0.1, -0.2, 0.3];
        let children = expand_point(s, &h, 0.5, 1, &p, &cfg).unwrap();
        assert_eq!(children.len(), 3);
        let dists: Vec<f64> = children
            .iter()
            .map(|c| (0..3).map(|k| (c.point[k] - s[k]).powi(2)).sum::<f64>().sqrt())
            .collect();
        for (c, d) in children.iter().zip(&dists) {
            assert_eq!(c.structure, children[0].structure);
            assert!(c.alpha > 0.0 && c.alpha < 0.5);
            assert!(*d <= c.alpha * (1.0 + 1e-12));
        }
        // the farthest-offset sibling sits exactly on its alpha sphere
        assert!(children
            .iter()
            .zip(&dists)
            .any(|(c, d)| (d - c.alpha).abs() <= 1e-12 * c.alpha));

        assert!(matches!(expand_point(s, &h, 0.0, 0, &p, &cfg), Err(ModelError::NonPositiveScale(_))));
        assert!(matches!(expand_point(s, &h, 1.0, 2, &p, &cfg), Err(ModelError::StageOutOfRange { .. })));
    }

    #[test]
    fn single_child_lies_on_its_alpha_sphere() {
        let mut cfg = tiny();
        cfg.k_schedule = vec![1, 1];
        let p: Parameters<f64> = init_parameters(&cfg, 9).unwrap();
        let h = vec![0.3; 8];
        let c = &expand_point([0.0; 3], &h, 1.0, 0, &p, &cfg).unwrap()[0];
        let d = c.point.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((d - c.alpha).abs() < 1e-12);
    }

    #[test]
    fn generate_cardinalities_and_segmentation() {
        let mut cfg = tiny();
        cfg.k_schedule = vec![2, 2];
        let p: Parameters<f32> = init_parameters(&cfg, 2).unwrap();
        let z = vec![0.1f32; 8];
        let trace = generate(&z, &p, &cfg).unwrap();
        let sizes: Vec<usize> = trace.stages.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![1, 2, 4]);
        assert_eq!(trace.stages[0].points, vec![[0.0; 3]]);
        assert_eq!(trace.stages[0].alpha, vec![1.0]);
        assert_eq!(trace.stages[0].structure, z);
        assert_eq!(segment(&trace, 2, 1).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(segment(&trace, 2, 0).unwrap(), vec![0; 4]);
        assert!(matches!(segment(&trace, 1, 1), Err(ModelError::StageOrder { .. })));
        assert!(matches!(generate(&[0.0f32; 3], &p, &cfg), Err(ModelError::LatentWidth { .. })));
    }

    #[test]
    fn check_shapes_names_the_mismatch() {
        let p: Parameters<f32> = init_parameters(&tiny(), 0).unwrap();
        let mut other = tiny();
        other.latent_width = 16;
        match p.check_shapes(&other) {
            Err(ModelError::ShapeMismatch { name, .. }) => assert_eq!(name, "encoder.head.weight"),
            e => panic!("unexpected {e:?}"),
        }
        assert!(p.check_shapes(&tiny()).is_ok());
    }
}
