//! Nearest-neighbour search and Chamfer distance against exhaustive scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpg_core::geometry::{chamfer_distance, nearest_neighbors, sq_dist, NearestNeighborIndex, Neighbor};

fn brute_nearest(queries: &[[f64; 3]], target: &[[f64; 3]]) -> Vec<Neighbor<f64>> {
    queries
        .iter()
        .map(|q| {
            let mut best = Neighbor {
                index: 0,
                dist2: sq_dist(q, &target[0]),
            };
            for (i, t) in target.iter().enumerate().skip(1) {
                let d = sq_dist(q, t);
                if d < best.dist2 {
                    best = Neighbor { index: i, dist2: d };
                }
            }
            best
        })
        .collect()
}

fn brute_chamfer(p: &[[f64; 3]], q: &[[f64; 3]]) -> f64 {
    let mean = |m: Vec<Neighbor<f64>>| {
        let mut s = 0.0;
        for n in &m {
            s += n.dist2;
        }
        s / m.len() as f64
    };
    mean(brute_nearest(p, q)) + mean(brute_nearest(q, p))
}

/// Random cloud; some seeds draw from a coarse integer grid so that exact
/// ties and duplicate points occur.
fn random_cloud(rng: &mut ChaCha8Rng, n: usize, grid: bool) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            if grid {
                [0, 1, 2].map(|_| rng.random_range(-4..=4) as f64 * 0.25)
            } else {
                [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))
            }
        })
        .collect()
}

#[test]
pub fn kd_tree_and_chamfer_equal_brute_force() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = seed % 3 == 0;
        let n = rng.random_range(1..=1024);
        let m = rng.random_range(1..=1024);
        let p = random_cloud(&mut rng, n, grid);
        let q = random_cloud(&mut rng, m, grid);

        assert_eq!(nearest_neighbors(&p, &q).unwrap(), brute_nearest(&p, &q), "seed {seed}");
        assert_eq!(nearest_neighbors(&q, &p).unwrap(), brute_nearest(&q, &p), "seed {seed}");

        let ch = chamfer_distance(&p, &q).unwrap();
        assert_eq!(ch.value, brute_chamfer(&p, &q), "seed {seed}");
        assert_eq!(ch.value, chamfer_distance(&q, &p).unwrap().value, "symmetry, seed {seed}");
    }
}

#[test]
pub fn small_leaves_still_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let target = random_cloud(&mut rng, 300, true);
    let queries = random_cloud(&mut rng, 200, false);
    let expected = brute_nearest(&queries, &target);
    for leaf in [1, 2, 5, 64] {
        let index = NearestNeighborIndex::with_leaf_size(&target, leaf).unwrap();
        let found: Vec<_> = queries.iter().map(|q| index.nearest(q)).collect();
        assert_eq!(found, expected, "leaf size {leaf}");
    }
}

#[test]
pub fn chamfer_hand_cases() {
    let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let q = [[0.0, 0.0, 0.0]];
    assert_eq!(chamfer_distance(&p, &q).unwrap().value, 0.5);
    assert_eq!(chamfer_distance(&[[0.0, 0.0, 0.0]], &[[3.0, 4.0, 0.0]]).unwrap().value, 50.0);
    assert_eq!(chamfer_distance(&p, &p).unwrap().value, 0.0);
}

#[test]
fn translation_preserves_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_cloud(&mut rng, 400, true);
    let q = random_cloud(&mut rng, 350, true);
    let shift = |c: &[[f64; 3]]| c.iter().map(|x| [x[0] + 8.0, x[1] - 3.0, x[2] + 0.5]).collect::<Vec<_>>();
    let a = chamfer_distance(&p, &q).unwrap();
    let b = chamfer_distance(&shift(&p), &shift(&q)).unwrap();
    let idx = |m: &[Neighbor<f64>]| m.iter().map(|n| n.index).collect::<Vec<_>>();
    assert_eq!(idx(&a.p_matches), idx(&b.p_matches));
    assert_eq!(idx(&a.q_matches), idx(&b.q_matches));
    assert_eq!(a.value, b.value);
}

#[test]
fn self_chamfer_is_zero_and_disjoint_is_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = random_cloud(&mut rng, 128, false);
    let mut dup = p.clone();
    dup.extend_from_slice(&p[..10]);
    assert_eq!(chamfer_distance(&p, &dup).unwrap().value, 0.0);
    let mut moved = p.clone();
    moved[3][0] += 0.5;
    assert!(chamfer_distance(&p, &moved).unwrap().value > 0.0);
}
