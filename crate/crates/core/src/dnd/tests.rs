use super::*;
use crate::rng::stream_rng;
use proptest::prelude::*;
use rand::Rng;

fn config(p: usize) -> DndConfig {
    DndConfig {
        neighbors: p,
        ..DndConfig::default()
    }
}

fn random_key(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Linear-scan reference: sort everything by (distance, insert step, id).
fn brute_knn(store: &DndStore, action: usize, q: &[f64]) -> Vec<usize> {
    let entries = store.entries(action);
    let mut ids: Vec<usize> = (0..entries.len()).collect();
    ids.sort_by(|&a, &b| {
        squared_distance(q, &entries[a].key)
            .total_cmp(&squared_distance(q, &entries[b].key))
            .then(entries[a].insert_step.cmp(&entries[b].insert_step))
            .then(a.cmp(&b))
    });
    ids.truncate(store.config().neighbors);
    ids
}

#[test]
fn singleton_store_returns_its_entry() {
    let mut s = DndStore::new(1, 3, config(5)).unwrap();
    s.write(0, &[1.0, 2.0, 3.0], 3.0, 0).unwrap();
    assert_eq!(s.knn(0, &[9.0, 9.0, 9.0]).unwrap(), vec![0]);
    let r = s.lookup(0, &[-4.0, 0.0, 1.0]).unwrap();
    assert_eq!(r.q_value, 3.0);
    assert_eq!(r.weights, vec![1.0]);
}

#[test]
fn empty_memory_is_rejected() {
    let s = DndStore::new(2, 3, config(5)).unwrap();
    assert_eq!(s.knn(1, &[0.0; 3]).unwrap_err(), DndError::EmptyMemory(1));
    assert_eq!(s.q_values(&[0.0; 3]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn knn_matches_linear_scan() {
    let mut rng = stream_rng(3, 0);
    let mut s = DndStore::new(
        1,
        8,
        DndConfig {
            capacity: 2_000,
            ..config(50)
        },
    )
    .unwrap();
    for i in 0..1_000 {
        s.write(0, &random_key(&mut rng, 8), i as f64, i).unwrap();
    }
    for _ in 0..50 {
        let q = random_key(&mut rng, 8);
        assert_eq!(s.knn(0, &q).unwrap(), brute_knn(&s, 0, &q));
    }
    s.audit().unwrap();
}

#[test]
fn exact_key_ranks_first() {
    let mut rng = stream_rng(4, 0);
    let mut s = DndStore::new(1, 4, config(10)).unwrap();
    let keys: Vec<Vec<f64>> = (0..100).map(|_| random_key(&mut rng, 4)).collect();
    for (i, k) in keys.iter().enumerate() {
        s.write(0, k, 0.0, i as u64).unwrap();
    }
    for (i, k) in keys.iter().enumerate() {
        assert_eq!(s.knn(0, k).unwrap()[0], i);
    }
}

#[test]
fn ties_prefer_older_entries() {
    let mut s = DndStore::new(1, 1, config(1)).unwrap();
    s.write(0, &[1.0], 0.0, 10).unwrap();
    s.write(0, &[-1.0], 0.0, 5).unwrap();
    assert_eq!(s.knn(0, &[0.0]).unwrap(), vec![1]);
}

#[test]
fn kernel_closed_forms() {
    let x = [0.3, -0.2, 0.7];
    assert!((kernel(&x, &x, 1e-3) - 1000.0).abs() < 1e-9);
    let mut y = x;
    y[0] += 1.0;
    assert!((kernel(&x, &y, 1e-3) - 1.0 / 1.001).abs() < 1e-15);
}

proptest! {
    #[test]
    fn kernel_decreases_with_distance(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        let k_near = kernel(&[0.0, 0.0], &[near, 0.0], 1e-3);
        let k_far = kernel(&[0.0, 0.0], &[far, 0.0], 1e-3);
        prop_assert!(k_near >= k_far);
    }

    #[test]
    fn capacity_never_exceeded(ops in proptest::collection::vec((0usize..2, -3i32..3, -3i32..3, -5.0f64..5.0), 1..200)) {
        let cfg = DndConfig { capacity: 7, ..config(3) };
        let mut s = DndStore::new(2, 2, cfg).unwrap();
        for (step, (a, x, y, t)) in ops.into_iter().enumerate() {
            s.write(a, &[x as f64, y as f64], t, step as u64).unwrap();
            prop_assert!(s.len(a) <= 7);
            if step % 3 == 0 && !s.is_empty(a) {
                s.lookup_and_touch(a, &[0.0, 0.0]).unwrap();
            }
        }
        s.audit().unwrap();
    }

    #[test]
    fn weights_form_a_simplex(seed in 0u64..500) {
        let mut rng = stream_rng(seed, 0);
        let mut s = DndStore::new(1, 3, config(7)).unwrap();
        let n = rng.random_range(1..30);
        for i in 0..n {
            s.write(0, &random_key(&mut rng, 3), rng.random_range(-2.0..2.0), i).unwrap();
        }
        let r = s.lookup(0, &random_key(&mut rng, 3)).unwrap();
        prop_assert!(r.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let vals: Vec<f64> = r.neighbor_ids.iter().map(|&i| s.entries(0)[i].value).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= r.q_value && r.q_value <= hi + 1e-12);
    }
}

#[test]
fn equidistant_neighbours_average() {
    let mut s = DndStore::new(1, 1, config(2)).unwrap();
    s.write(0, &[-1.0], 1.0, 0).unwrap();
    s.write(0, &[1.0], 5.0, 1).unwrap();
    assert_eq!(s.lookup(0, &[0.0]).unwrap().q_value, 3.0);
}

#[test]
fn lookup_matches_direct_formula() {
    let mut rng = stream_rng(8, 0);
    let mut s = DndStore::new(1, 5, config(10)).unwrap();
    for i in 0..100 {
        s.write(0, &random_key(&mut rng, 5), rng.random_range(-1.0..1.0), i)
            .unwrap();
    }
    let q = random_key(&mut rng, 5);
    let r = s.lookup(0, &q).unwrap();

    let entries = s.entries(0);
    let nn = brute_knn(&s, 0, &q);
    let ks: Vec<f64> = nn
        .iter()
        .map(|&i| 1.0 / (squared_distance(&q, &entries[i].key) + 1e-3))
        .collect();
    let total: f64 = ks.iter().sum();
    let expect: f64 = nn.iter().zip(&ks).map(|(&i, k)| k / total * entries[i].value).sum();
    assert!((r.q_value - expect).abs() < 1e-12);
}

#[test]
fn single_entry_gradients() {
    let mut s = DndStore::new(1, 3, config(4)).unwrap();
    s.write(0, &[0.5, 0.1, -0.3], 2.0, 0).unwrap();
    let q = [0.0, 0.4, 0.2];
    let r = s.lookup(0, &q).unwrap();
    let g = s.lookup_gradients(&r, &q, 1.7).unwrap();
    assert_eq!(g.values, vec![1.7]);
    assert!(g.query.iter().all(|v| *v == 0.0));
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = stream_rng(1, 1);
    let mut s = DndStore::new(1, 3, config(4)).unwrap();
    for i in 0..6 {
        s.write(0, &random_key(&mut rng, 3), i as f64, i).unwrap();
    }
    let q = random_key(&mut rng, 3);
    let r = s.lookup(0, &q).unwrap();
    let g = s.lookup_gradients(&r, &q, 0.0).unwrap();
    assert!(g
        .query
        .iter()
        .chain(&g.values)
        .chain(g.keys.iter().flatten())
        .all(|v| *v == 0.0));
}

fn q_at(s: &DndStore, q: &[f64]) -> f64 {
    s.lookup(0, q).unwrap().q_value
}

#[test]
fn query_and_key_gradients_match_finite_differences() {
    let mut rng = stream_rng(12, 0);
    let mut s = DndStore::new(1, 4, config(5)).unwrap();
    for i in 0..5 {
        s.write(0, &random_key(&mut rng, 4), rng.random_range(-2.0..2.0), i)
            .unwrap();
    }
    let q = random_key(&mut rng, 4);
    let r = s.lookup(0, &q).unwrap();
    let g = s.lookup_gradients(&r, &q, 1.0).unwrap();
    let h = 1e-6;

    let mut num = [0.0; 4];
    for j in 0..4 {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        num[j] = (q_at(&s, &qp) - q_at(&s, &qm)) / (2.0 * h);
    }
    let err: f64 = num
        .iter()
        .zip(&g.query)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    assert!(err / scale < 1e-5, "query rel err {}", err / scale);

    // key gradients: perturb one stored key in a cloned store
    for (slot, &id) in r.neighbor_ids.iter().enumerate() {
        for j in 0..4 {
            let perturbed = |delta: f64| {
                let mut snap = s.snapshot();
                snap.memories[0].entries[id].key[j] += delta;
                let t = DndStore::from_snapshot(snap).unwrap();
                q_at(&t, &q)
            };
            let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
            let an = g.keys[slot][j];
            assert!(
                (fd - an).abs() <= 1e-5 * an.abs().max(fd.abs()).max(1e-3),
                "key {id}/{j}: {fd} vs {an}"
            );
        }
    }
}

#[test]
fn stale_lookup_is_rejected() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    s.write(0, &[0.0, 0.0], 1.0, 0).unwrap();
    let r = s.lookup(0, &[0.1, 0.1]).unwrap();
    s.write(0, &[1.0, 1.0], 1.0, 1).unwrap();
    assert_eq!(
        s.lookup_gradients(&r, &[0.1, 0.1], 1.0).unwrap_err(),
        DndError::StaleLookup { action: 0 }
    );
    // touching is not a mutation of keys or values
    let r = s.lookup(0, &[0.1, 0.1]).unwrap();
    s.touch(0, &[0]).unwrap();
    assert!(s.lookup_gradients(&r, &[0.1, 0.1], 1.0).is_ok());
}

#[test]
fn first_write_appends() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    assert_eq!(s.write(0, &[1.0, 1.0], 2.0, 0).unwrap(), WriteOutcome::Appended);
    assert_eq!(s.len(0), 1);
}

#[test]
fn repeated_key_moves_value_by_write_rate() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    s.write(0, &[1.0, 1.0], 2.0, 0).unwrap();
    assert_eq!(s.write(0, &[1.0, 1.0], 4.0, 1).unwrap(), WriteOutcome::Updated);
    assert!((s.entries(0)[0].value - 2.2).abs() < 1e-12);
    assert_eq!(s.len(0), 1);
}

#[test]
fn non_finite_target_is_rejected() {
    let mut s = DndStore::new(1, 1, config(3)).unwrap();
    assert!(matches!(
        s.write(0, &[0.0], f64::NAN, 0),
        Err(DndError::NonFiniteTarget(_))
    ));
}

#[test]
fn eviction_takes_least_recently_accessed() {
    let mut s = DndStore::new(
        1,
        1,
        DndConfig {
            capacity: 2,
            ..config(1)
        },
    )
    .unwrap();
    s.write(0, &[0.0], 1.0, 0).unwrap();
    s.write(0, &[10.0], 2.0, 1).unwrap();
    // touch entry 0 only
    s.lookup_and_touch(0, &[0.1]).unwrap();
    assert_eq!(s.write(0, &[20.0], 3.0, 2).unwrap(), WriteOutcome::AppendedWithEviction);
    let keys: Vec<f64> = s.entries(0).iter().map(|e| e.key[0]).collect();
    assert_eq!(keys, vec![0.0, 20.0]);
    s.audit().unwrap();
}

#[test]
fn zero_rate_updates_change_nothing() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    s.write(0, &[1.0, 0.0], 1.0, 0).unwrap();
    let before = s.snapshot();
    s.apply_gradient_updates(0, &[0], &[5.0], Some(&[vec![1.0, 1.0]]), 0.0)
        .unwrap();
    assert_eq!(s.snapshot(), before);
}

#[test]
fn value_gradient_step() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    s.write(0, &[1.0, 0.0], 1.0, 0).unwrap();
    s.apply_gradient_updates(0, &[0], &[1.0], None, 0.1).unwrap();
    assert!((s.entries(0)[0].value - 0.9).abs() < 1e-15);
}

#[test]
fn disabled_key_updates_reject_or_ignore() {
    let cfg = DndConfig {
        key_updates: false,
        ..config(3)
    };
    let mut s = DndStore::new(1, 2, cfg.clone()).unwrap();
    s.write(0, &[1.0, 0.0], 1.0, 0).unwrap();
    assert_eq!(
        s.apply_gradient_updates(0, &[0], &[1.0], Some(&[vec![1.0, 1.0]]), 0.1)
            .unwrap_err(),
        DndError::KeyUpdatesDisabled
    );
    let mut s = DndStore::new(
        1,
        2,
        DndConfig {
            ignore_disabled_key_grads: true,
            ..cfg
        },
    )
    .unwrap();
    s.write(0, &[1.0, 0.0], 1.0, 0).unwrap();
    s.apply_gradient_updates(0, &[0], &[1.0], Some(&[vec![1.0, 1.0]]), 0.1)
        .unwrap();
    assert_eq!(s.entries(0)[0].key, vec![1.0, 0.0]);
}

#[test]
fn moved_keys_match_rebuilt_index() {
    let mut rng = stream_rng(21, 0);
    let mut s = DndStore::new(
        1,
        3,
        DndConfig {
            capacity: 500,
            ..config(10)
        },
    )
    .unwrap();
    for i in 0..300 {
        s.write(0, &random_key(&mut rng, 3), 0.0, i).unwrap();
    }
    for round in 0..40 {
        let ids: Vec<usize> = (0..5)
            .map(|_| rng.random_range(0..300))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let grads: Vec<Vec<f64>> = ids.iter().map(|_| random_key(&mut rng, 3)).collect();
        s.apply_gradient_updates(0, &ids, &vec![0.0; ids.len()], Some(&grads), 0.5)
            .unwrap();
        let rebuilt = DndStore::from_snapshot(s.snapshot()).unwrap();
        let q = random_key(&mut rng, 3);
        assert_eq!(s.knn(0, &q).unwrap(), rebuilt.knn(0, &q).unwrap(), "round {round}");
        assert_eq!(s.knn(0, &q).unwrap(), brute_knn(&s, 0, &q));
    }
    s.audit().unwrap();
}

#[test]
fn snapshot_round_trips_through_json() {
    let mut rng = stream_rng(5, 5);
    let mut s = DndStore::new(3, 4, config(4)).unwrap();
    for i in 0..40 {
        s.write(
            (i % 3) as usize,
            &random_key(&mut rng, 4),
            rng.random_range(-1.0..1.0),
            i,
        )
        .unwrap();
    }
    let json = serde_json::to_string(&s.snapshot()).unwrap();
    let back = DndStore::from_snapshot(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back.snapshot(), s.snapshot());
    let q = random_key(&mut rng, 4);
    assert_eq!(back.q_values(&q).unwrap(), s.q_values(&q).unwrap());
}

#[test]
fn wrong_key_length_is_rejected() {
    let mut s = DndStore::new(1, 2, config(3)).unwrap();
    assert_eq!(
        s.write(0, &[1.0], 0.0, 0).unwrap_err(),
        DndError::KeyDimMismatch { expected: 2, actual: 1 }
    );
    assert!(matches!(
        s.write(5, &[1.0, 1.0], 0.0, 0),
        Err(DndError::BadAction { .. })
    ));
}
