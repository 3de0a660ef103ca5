//! Structural invariants of generation traces over random configurations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpg_core::geometry::PointCloud;
use rpg_core::model::{encode, expand_point, extract_substructure, segment, GeneratorConfig, Rpg};

const CASES: u64 = 120;

fn random_config(rng: &mut ChaCha8Rng) -> GeneratorConfig {
    let depth = rng.random_range(1..=4);
    let k_schedule = (0..depth).map(|_| rng.random_range(1..=4)).collect();
    let widths = |rng: &mut ChaCha8Rng, max_layers: usize| -> Vec<usize> {
        let n = rng.random_range(1..=max_layers);
        (0..n).map(|_| rng.random_range(2..=12)).collect()
    };
    GeneratorConfig {
        k_schedule,
        latent_width: rng.random_range(2..=16),
        embed_width: rng.random_range(1..=6),
        mlp_hidden: widths(rng, 3),
        encoder_hidden: widths(rng, 3),
        vae_mode: rng.random_bool(0.5),
    }
}

fn random_cloud(rng: &mut ChaCha8Rng) -> PointCloud<f64> {
    let n = rng.random_range(1..=64);
    PointCloud::new((0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))).collect()).unwrap()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

#[test]
pub fn generation_invariants_hold_for_random_configs() {
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let config = random_config(&mut rng);
        let model: Rpg<f64> = Rpg::init(config.clone(), case).unwrap();
        let cloud = random_cloud(&mut rng);
        let trace = model.reconstruct_trace(&cloud).unwrap();
        let ctx = format!("case {case}, {config:?}");

        assert_eq!(trace.depth(), config.stages(), "{ctx}");
        let root = &trace.stages[0];
        assert_eq!(root.points, vec![[0.0; 3]], "{ctx}");
        assert_eq!(root.alpha, vec![1.0], "{ctx}");

        for d in 0..config.stages() {
            let k = config.k_schedule[d];
            let (parent, child) = (&trace.stages[d], &trace.stages[d + 1]);
            assert_eq!(child.len(), k * parent.len(), "cardinality at stage {d}, {ctx}");
            assert_eq!(child.alpha.len(), child.len());
            assert_eq!(child.structure.len(), child.len() * config.latent_width);
            let pointers = child.parent.as_ref().unwrap();
            assert_eq!(pointers.len(), child.len());

            for j in 0..child.len() {
                let i = pointers[j];
                assert_eq!(i, j / k, "contiguous child slots, {ctx}");
                assert_eq!(child.structure_row(j), child.structure_row(i * k), "sibling rows, {ctx}");

                let a = child.alpha[j];
                assert!(a > 0.0 && a <= parent.alpha[i], "alpha path at stage {d}, {ctx}");

                let r = dist(&child.points[j], &parent.points[i]);
                let slack = 4.0 * f64::EPSILON * (1.0 + dist(&parent.points[i], &[0.0; 3]));
                assert!(r <= a * (1.0 + 1e-12) + slack, "containment {r} > {a}, {ctx}");
            }
        }

        // Permuted and duplicated inputs give bit-identical codes.
        let mut perm: Vec<usize> = (0..cloud.len()).collect();
        perm.shuffle(&mut rng);
        let z = encode(&cloud, &model.params).unwrap();
        assert_eq!(encode(&cloud.permuted(&perm), &model.params).unwrap(), z, "{ctx}");
        let mut doubled = cloud.points().to_vec();
        doubled.extend_from_slice(cloud.points());
        assert_eq!(encode(&PointCloud::new(doubled).unwrap(), &model.params).unwrap(), z, "{ctx}");
        assert_eq!(z.logvar.is_some(), config.vae_mode);
    }
}

#[test]
pub fn leaf_paths_replay_in_isolation() {
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let config = random_config(&mut rng);
        let model: Rpg<f64> = Rpg::init(config.clone(), case).unwrap();
        let z: Vec<f64> = (0..config.latent_width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let trace = model.generate(&z).unwrap();
        let leaves = trace.leaves();
        let leaf = rng.random_range(0..leaves.len());

        let mut path = vec![leaf];
        for d in (1..=trace.depth()).rev() {
            let up = trace.stages[d].parent.as_ref().unwrap()[*path.last().unwrap()];
            path.push(up);
        }
        path.reverse();

        let mut h = z.clone();
        let mut s = [0.0; 3];
        let mut alpha = 1.0;
        for d in 0..trace.depth() {
            let node = path[d + 1];
            let h_next = extract_substructure(s, &h, &model.params).unwrap();
            assert_eq!(h_next, trace.stages[d + 1].structure_row(node), "case {case}, stage {d}");

            let children = expand_point(s, &h, alpha, d, &model.params, &config).unwrap();
            let m = node % config.k_schedule[d];
            assert_eq!(children[m].point, trace.stages[d + 1].points[node], "case {case}, stage {d}");
            assert_eq!(children[m].alpha, trace.stages[d + 1].alpha[node]);
            assert_eq!(children[m].structure, h_next);

            h = h_next;
            s = children[m].point;
            alpha = children[m].alpha;
        }
    }
}

#[test]
fn segmentation_labels_follow_parent_blocks() {
    let config = GeneratorConfig {
        k_schedule: vec![5, 3, 2],
        latent_width: 8,
        embed_width: 4,
        mlp_hidden: vec![8],
        encoder_hidden: vec![8],
        vae_mode: false,
    };
    let model: Rpg<f32> = Rpg::init(config, 3).unwrap();
    let trace = model.generate(&[0.2; 8]).unwrap();
    let labels = segment(&trace, 3, 1).unwrap();
    assert_eq!(labels.len(), 30);
    for part in 0..5 {
        assert_eq!(labels.iter().filter(|&&l| l == part).count(), 6);
    }
    assert_eq!(segment(&trace, 3, 0).unwrap(), vec![0; 30]);
    assert_eq!(segment(&trace, 3, 2).unwrap(), (0..30).map(|j| j / 2).collect::<Vec<_>>());
}

#[test]
fn distinct_clouds_give_distinct_codes() {
    let config = GeneratorConfig {
        k_schedule: vec![2],
        latent_width: 8,
        embed_width: 2,
        mlp_hidden: vec![4],
        encoder_hidden: vec![8, 16],
        vae_mode: false,
    };
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: Rpg<f32> = Rpg::init(config.clone(), seed).unwrap();
        let a = random_cloud(&mut rng).cast::<f32>();
        let b = random_cloud(&mut rng).cast::<f32>();
        assert_ne!(model.encode(&a).unwrap(), model.encode(&b).unwrap(), "seed {seed}");
    }
}

#[test]
fn generation_is_deterministic() {
    let config = GeneratorConfig {
        k_schedule: vec![3, 3],
        latent_width: 6,
        embed_width: 3,
        mlp_hidden: vec![5, 5],
        encoder_hidden: vec![6],
        vae_mode: true,
    };
    let a: Rpg<f32> = Rpg::init(config.clone(), 9).unwrap();
    let b: Rpg<f32> = Rpg::init(config, 9).unwrap();
    let z = [0.1, -0.4, 0.3, 0.0, 1.2, -0.7];
    assert_eq!(a.generate(&z).unwrap(), b.generate(&z).unwrap());
}
