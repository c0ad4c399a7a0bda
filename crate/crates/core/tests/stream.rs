use coarse_sketch::stream::{
    accumulate, cascaded_norm, check_bounded_deletion, exact_fp, exact_g_norm, exact_heavy_set,
    exact_moment, exact_schatten, schatten_norm, FrequencyVector, GEstimator, MatrixStream,
    TurnstileStream, Update,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn updates_strategy(n: u64) -> impl Strategy<Value = Vec<(u64, i64)>> {
    prop::collection::vec((0..n, -50i64..=50), 0..200)
}

fn stream_of(n: u64, ups: &[(u64, i64)]) -> TurnstileStream {
    TurnstileStream::from_updates(n, 10_000, ups.iter().map(|&(i, d)| Update::new(i, d)).collect())
}

#[test]
fn moment_examples() {
    let x = FrequencyVector::from_entries(vec![3, 4]);
    assert_eq!(exact_moment(&x, 2.0), 5.0);
    assert_eq!(exact_moment(&FrequencyVector::from_entries(vec![0, 1, 0, -2]), 0.0), 2.0);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<i64> = (0..500).map(|_| r.random_range(-1000..=1000)).collect();
    let cubes: i128 = v.iter().map(|&a| (a.abs() as i128).pow(3)).sum();
    let got = exact_fp(&FrequencyVector::from_entries(v), 3.0);
    assert!((got - cubes as f64).abs() <= 1e-12 * cubes as f64);
}

#[test]
fn g_norm_examples() {
    let sq = GEstimator::power(2.0).unwrap();
    assert_eq!(exact_g_norm(&FrequencyVector::from_entries(vec![3, 4]), &sq), 25.0);
    assert_eq!(exact_g_norm(&FrequencyVector::zeros(5), &sq), 0.0);
    let g = GEstimator::power(1.5).unwrap();
    let v = vec![4i64, -9, 0, 16];
    let direct = 8.0 + 27.0 + 0.0 + 64.0;
    assert!((exact_g_norm(&FrequencyVector::from_entries(v), &g) - direct).abs() < 1e-9);
    assert!(GEstimator::new(|t| if t == 0 { 0.0 } else { 1.0 }, 1.0).is_err());
    assert!(GEstimator::new(|t| (t as f64).abs() + 1.0, 1.0).is_err());
}

#[test]
fn heavy_set_examples() {
    assert_eq!(exact_heavy_set(&FrequencyVector::from_entries(vec![10, 1, 1]), 2), vec![0]);
    assert_eq!(exact_heavy_set(&FrequencyVector::from_entries(vec![1, 1, 1, 1]), 4), vec![0, 1, 2, 3]);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut v = vec![0i64; 300];
    for _ in 0..20 {
        v[r.random_range(0..300)] = r.random_range(-100..=100);
    }
    let f2: i128 = v.iter().map(|&a| (a as i128).pow(2)).sum();
    let scan: Vec<u64> = (0..300u64)
        .filter(|&i| (v[i as usize] as i128).pow(2) * 8 >= f2)
        .collect();
    assert_eq!(exact_heavy_set(&FrequencyVector::from_entries(v), 8), scan);
}

#[test]
fn schatten_examples() {
    let d = MatrixStream::from_dense(&DMatrix::from_row_slice(2, 2, &[3i64, 0, 0, 4]), 4);
    assert!((exact_schatten(&d, 2.0).unwrap() - 5.0).abs() < 1e-12);
    let n = 16;
    let id = MatrixStream::from_dense(&DMatrix::<i64>::identity(n, n), 1);
    assert!((exact_schatten(&id, 4.0).unwrap() - (n as f64).powf(0.25)).abs() < 1e-12);
}

#[test]
fn schatten_matches_trace_power() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let a = DMatrix::from_fn(8, 8, |_, _| r.random_range(-5i64..=5) as f64);
        let ata = a.transpose() * &a;
        let trace = (&ata * &ata * &ata).trace();
        let oracle = trace.powf(1.0 / 6.0);
        assert!((schatten_norm(&a, 6.0) - oracle).abs() <= 1e-8 * oracle);
    }
}

#[test]
fn cascaded_examples() {
    let mut a = DMatrix::<f64>::zeros(5, 4);
    let row = [1.0, -2.0, 3.0, 0.5];
    for (j, v) in row.iter().enumerate() {
        a[(2, j)] = *v;
    }
    let lq: f64 = row.iter().map(|v: &f64| v.abs().powf(4.0)).sum::<f64>().powf(0.25);
    assert!((cascaded_norm(&a, 3.0, 4.0) - lq).abs() < 1e-12);
    let ones = DMatrix::<f64>::from_element(6, 7, 1.0);
    assert!((cascaded_norm(&ones, 2.0, 2.0) - 42f64.sqrt()).abs() < 1e-12);
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let m = DMatrix::from_fn(6, 6, |_, _| r.random_range(-9i64..=9) as f64);
    let mut outer = 0.0;
    for i in 0..6 {
        let mut inner = 0.0;
        for j in 0..6 {
            inner += m[(i, j)].abs().powi(3);
        }
        outer += inner.powf(5.0 / 3.0);
    }
    assert!((cascaded_norm(&m, 5.0, 3.0) - outer.powf(0.2)).abs() < 1e-10 * outer.powf(0.2));
}

#[test]
fn bounded_deletion_examples() {
    let ins = TurnstileStream::from_updates(1, 10, (0..10).map(|_| Update::new(0, 1)).collect());
    assert!(check_bounded_deletion(&ins, 1.0));
    let cancel = TurnstileStream::from_updates(1, 1, vec![Update::new(0, 1), Update::new(0, -1)]);
    assert!(!check_bounded_deletion(&cancel, 1000.0));
}

#[test]
fn text_format_rejects_garbage() {
    assert!(TurnstileStream::parse("").is_err());
    assert!(TurnstileStream::parse("4 2\n1 x\n").is_err());
    assert!(TurnstileStream::parse("4 2\n-1 1\n").is_err());
    let s = TurnstileStream::parse("# comment\n4 2\n1 2\n3 -1\n").unwrap();
    assert_eq!(accumulate(&s).unwrap().entries(), &[0, 2, 0, -1]);
}

proptest! {
    #[test]
    fn accumulate_order_invariant(ups in updates_strategy(32), seed in any::<u64>()) {
        let s = stream_of(32, &ups);
        let mut shuffled = ups.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(accumulate(&s).unwrap(), accumulate(&stream_of(32, &shuffled)).unwrap());
    }

    #[test]
    fn text_round_trip(ups in updates_strategy(100)) {
        let s = stream_of(100, &ups);
        prop_assert_eq!(TurnstileStream::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn moment_sandwich(v in prop::collection::vec(-1000i64..=1000, 1..300), q in 2.0f64..6.0, dp in 0.0f64..4.0) {
        let p = q + dp;
        let x = FrequencyVector::from_entries(v);
        let n = x.len() as f64;
        let (lp, lq) = (exact_moment(&x, p), exact_moment(&x, q));
        prop_assert!(lp <= lq * (1.0 + 1e-12));
        prop_assert!(lq <= n.powf(1.0 / q - 1.0 / p) * lp * (1.0 + 1e-9));
    }

    #[test]
    fn heavy_set_downward_consistent(v in prop::collection::vec(-100i64..=100, 1..100), k in 1u64..50) {
        let x = FrequencyVector::from_entries(v);
        let small = exact_heavy_set(&x, k);
        let large = exact_heavy_set(&x, k + 1);
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn matrix_text_round_trip(cells in prop::collection::vec((0u64..5, 0u64..7, -9i64..=9), 0..50)) {
        let mut a = MatrixStream::new(5, 7, 1000);
        for &(r, c, d) in &cells {
            a.push(r, c, d);
        }
        let b = MatrixStream::parse(&a.to_text()).unwrap();
        prop_assert_eq!(b.updates(), a.updates());
        prop_assert_eq!(a.flattened().len(), cells.len());
    }
}
