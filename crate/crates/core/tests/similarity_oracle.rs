use std::sync::Arc;

use capsight_core::similarity::{
    overlap_metric, symmetry_metric, CosineIndex, Neighbor,
};
use capsight_core::{EmbeddingSpace, Execution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sort-everything reference: f64 cosine straight from the definition.
fn brute_force(space: &EmbeddingSpace, seed: usize, n: usize) -> Vec<String> {
    let q = space.row(seed);
    let qn: f64 = q.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let mut all: Vec<(f64, &str)> = (0..space.len())
        .filter(|&j| j != seed)
        .map(|j| {
            let v = space.row(j);
            let d: f64 = q.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
            let vn: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            ((d / (qn * vn)).clamp(-1.0, 1.0), space.ids()[j].as_str())
        })
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(n).map(|(_, id)| id.to_string()).collect()
}

fn random_space(rng: &mut ChaCha8Rng, rows: usize, dim: usize, coarse: bool) -> EmbeddingSpace {
    let mut s = EmbeddingSpace::new("r", dim).unwrap();
    let mut i = 0;
    while s.len() < rows {
        let v: Vec<f32> = (0..dim)
            .map(|_| {
                if coarse {
                    rng.random_range(-2i32..=2) as f32
                } else {
                    rng.random_range(-1.0f32..1.0)
                }
            })
            .collect();
        // Shuffled ids so that id order differs from row order.
        let id = format!("{:08x}", rng.random::<u32>() ^ i);
        i += 1;
        let _ = s.push(id, &v);
    }
    s
}

fn ids(index: &CosineIndex, list: &[Neighbor]) -> Vec<String> {
    list.iter().map(|nb| index.space().ids()[nb.index].clone()).collect()
}

#[test]
fn matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..25 {
        let dim = [2, 32, 128][trial % 3];
        let rows = rng.random_range(2..=500);
        // Coarse integer vectors produce many exact cosine ties.
        let space = random_space(&mut rng, rows, dim, trial % 4 == 0);
        let index = CosineIndex::new(Arc::new(space.clone()));
        let n = rng.random_range(1..=30);
        let batch = index.top_n_all(n, Execution::default());
        for seed in 0..space.len() {
            let expected = brute_force(&space, seed, n);
            assert_eq!(ids(&index, &batch[seed]), expected, "trial {trial} seed {seed}");
            if seed % 17 == 0 {
                assert_eq!(ids(&index, &index.top_n_of(seed, n)), expected);
            }
        }
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let space = random_space(&mut rng, 300, 64, false);
    let index = CosineIndex::new(Arc::new(space));
    assert_eq!(
        index.top_n_all(10, Execution::Sequential),
        index.top_n_all(10, Execution::Parallel)
    );
}

#[test]
fn scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..100 {
        let dim = [2, 8, 32][trial % 3];
        let rows = rng.random_range(3..60);
        let space = random_space(&mut rng, rows, dim, false);
        let mut scaled = EmbeddingSpace::new("r", dim).unwrap();
        for (id, v) in space.iter() {
            let c: f32 = 2f32.powi(rng.random_range(-20..20)) * rng.random_range(0.5f32..1.0);
            let v: Vec<f32> = v.iter().map(|x| x * c).collect();
            scaled.push(id, &v).unwrap();
        }
        let a = CosineIndex::new(Arc::new(space));
        let b = CosineIndex::new(Arc::new(scaled));
        let n = 5;
        for i in 0..a.len() {
            assert_eq!(
                ids(&a, &a.top_n_of(i, n)),
                ids(&b, &b.top_n_of(i, n)),
                "trial {trial} row {i}"
            );
        }
    }
}

#[test]
fn reciprocated_count_non_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let rows = rng.random_range(5..200);
        let space = random_space(&mut rng, rows, 16, false);
        let index = CosineIndex::new(Arc::new(space));
        let ns: Vec<usize> = (1..=25).collect();
        let rep = symmetry_metric(&index, &ns, Execution::default()).unwrap();
        for w in rep.entries.windows(2) {
            assert!(w[0].reciprocated_count <= w[1].reciprocated_count);
        }
        for e in &rep.entries {
            assert_eq!(
                e.total_directed_count,
                (index.len() * e.n.min(index.len() - 1)) as u64
            );
        }
    }
}

#[test]
fn symmetry_matches_direct_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let space = random_space(&mut rng, 80, 8, true);
    let index = CosineIndex::new(Arc::new(space.clone()));
    let rep = symmetry_metric(&index, &[1, 3, 7], Execution::default()).unwrap();
    for e in &rep.entries {
        let lists: Vec<Vec<String>> = (0..space.len()).map(|i| brute_force(&space, i, e.n)).collect();
        let mut rec = 0;
        for (i, list) in lists.iter().enumerate() {
            for j in list {
                let jpos = space.position(j).unwrap();
                if lists[jpos].contains(&space.ids()[i]) {
                    rec += 1;
                }
            }
        }
        assert_eq!(e.reciprocated_count, rec, "n = {}", e.n);
    }
}

fn pair(rng: &mut ChaCha8Rng, rows: usize) -> (CosineIndex, CosineIndex) {
    let a = random_space(rng, rows, 12, false);
    let mut b = EmbeddingSpace::new("b", 5).unwrap();
    // Same ids, different vectors, reversed row order.
    for id in a.ids().iter().rev() {
        let v: Vec<f32> = (0..5).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        b.push(id.clone(), &v).unwrap();
    }
    (CosineIndex::new(Arc::new(a)), CosineIndex::new(Arc::new(b)))
}

#[test]
fn overlap_symmetric_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let rows = rng.random_range(3..120);
        let (a, b) = pair(&mut rng, rows);
        let ns: Vec<usize> = (1..=25).collect();
        let ab = overlap_metric(&a, &b, &ns, Execution::default()).unwrap();
        let ba = overlap_metric(&b, &a, &ns, Execution::default()).unwrap();
        for (x, y) in ab.entries.iter().zip(&ba.entries) {
            assert_eq!(x.mean_overlap, y.mean_overlap);
            assert_eq!(x.proportion_zero_overlap, y.proportion_zero_overlap);
            assert_eq!(x.proportion_overlap_at_most_one, y.proportion_overlap_at_most_one);
            assert!(x.proportion_zero_overlap <= x.proportion_overlap_at_most_one);
            assert!(x.mean_overlap <= x.n as f64);
        }
        for w in ab.entries.windows(2) {
            assert!(w[0].mean_overlap <= w[1].mean_overlap);
        }
    }
}

#[test]
fn overlap_matches_set_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (a, b) = pair(&mut rng, 60);
    let rep = overlap_metric(&a, &b, &[1, 4, 9], Execution::default()).unwrap();
    for e in &rep.entries {
        let mut total = 0usize;
        for (i, id) in a.space().ids().iter().enumerate() {
            let la = brute_force(a.space(), i, e.n);
            let lb = brute_force(b.space(), b.space().position(id).unwrap(), e.n);
            total += la.iter().filter(|x| lb.contains(x)).count();
        }
        assert_eq!(e.mean_overlap, total as f64 / 60.0);
    }
}

#[test]
fn disjoint_recommendations() {
    // Space a pairs (0,1),(2,3); space b pairs (0,2),(1,3): top-1 never agrees.
    let deg = |d: f32| [d.to_radians().cos(), d.to_radians().sin()];
    let mut a = EmbeddingSpace::new("a", 2).unwrap();
    let mut b = EmbeddingSpace::new("b", 2).unwrap();
    for (id, da, db) in [("0", 0.0, 0.0), ("1", 5.0, 90.0), ("2", 90.0, 5.0), ("3", 95.0, 95.0)] {
        a.push(id, &deg(da)).unwrap();
        b.push(id, &deg(db)).unwrap();
    }
    let (a, b) = (CosineIndex::new(Arc::new(a)), CosineIndex::new(Arc::new(b)));
    let rep = overlap_metric(&a, &b, &[1], Execution::Sequential).unwrap();
    assert_eq!(rep.entries[0].mean_overlap, 0.0);
    assert_eq!(rep.entries[0].proportion_zero_overlap, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_n_length_and_order(
        rows in prop::collection::vec(prop::collection::vec(-4i8..=4, 3), 2..40),
        n in 1usize..50,
    ) {
        let mut s = EmbeddingSpace::new("p", 3).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let v: Vec<f32> = r.iter().map(|x| *x as f32).collect();
            let _ = s.push(format!("{i:03}"), &v);
        }
        prop_assume!(s.len() >= 2);
        let index = CosineIndex::new(Arc::new(s.clone()));
        for i in 0..s.len() {
            let list = index.top_n_of(i, n);
            prop_assert_eq!(list.len(), n.min(s.len() - 1));
            prop_assert!(list.iter().all(|nb| nb.index != i));
            prop_assert_eq!(ids(&index, &list), brute_force(&s, i, n));
        }
    }
}
