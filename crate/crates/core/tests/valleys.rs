use valleywalk::env_model::EnvironmentModel;
use valleywalk::numeric::rng::StreamId;
use valleywalk::potential::ExcursionStream;
use valleywalk::valleys::{critical_height, decompose, valley_width, NoOverlapTracker, ValleyParams};
use valleywalk::Error;

#[test]
fn height_and_width_arithmetic() {
    let l = 16f64.ln();
    assert!((critical_height(16, 1.0).unwrap() - (l - l.ln())).abs() < 1e-14);
    assert!((critical_height(1000, 1.0).unwrap() - 4.9751).abs() < 1e-4);
    // n = e² with γ = 1, A = 1, κ = 1 gives ⌈4⌉
    assert_eq!(valley_width(2f64.exp().round() as u64, 1.0, 1.0, 1.0).unwrap(), 4);
    assert!(matches!(critical_height(2, 1.0), Err(Error::TooSmall(2))));
}

#[test]
fn decomposition_lists_exactly_the_deep_excursions() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let n = 20_000u64;
    for seed in 0..5 {
        let recs: Vec<_> = ExcursionStream::new(&m, StreamId::root(seed)).take(n as usize + 50).collect();
        let params = ValleyParams::new(1.0, 1.25);
        let d = decompose(&recs, 50, n, &params, m.kappa()).unwrap();
        let deep: Vec<u64> = (0..n).filter(|&j| recs[50 + j as usize].height >= d.h_n).collect();
        let listed: Vec<u64> = d.valleys.iter().map(|v| v.sigma).collect();
        assert_eq!(deep, listed);
        assert_eq!(d.k_n, deep.len() as u64);
        assert!((d.q_n_hat - d.k_n as f64 / n as f64).abs() < 1e-15);
        for v in &d.valleys {
            assert_eq!(v.b, recs[50 + v.sigma as usize].start);
            assert_eq!(v.d, recs[50 + v.sigma as usize].end);
            assert_eq!(v.a_index, v.sigma as i64 - d.d_n_width as i64);
        }
        // the streaming tracker gives the same K_n and NO(n)
        let mut t = NoOverlapTracker::new(d.h_n, d.d_n_width);
        for j in 0..n as usize {
            t.push(recs[50 + j].height);
        }
        assert_eq!((t.k_n(), t.no_event()), (d.k_n, d.no_event));
        assert_eq!(d.no_event, d.valleys.first().is_none_or(|v| v.a_index > 0) && d.valleys_disjoint());
    }
}

#[test]
fn k_n_is_binomial_with_the_pooled_frequency() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let n = 10_000u64;
    let h = critical_height(n, m.kappa()).unwrap();
    let pool = 2_000_000;
    let q = ExcursionStream::new(&m, StreamId::root(40)).take(pool).filter(|r| r.height >= h).count() as f64 / pool as f64;
    let reps = 300;
    let mut total = 0u64;
    for i in 0..reps {
        let mut t = NoOverlapTracker::new(h, 10);
        for r in ExcursionStream::new(&m, StreamId::root(41).replicate(i)).take(n as usize) {
            t.push(r.height);
        }
        total += t.k_n();
    }
    let mean = total as f64 / reps as f64;
    let expect = n as f64 * q;
    // binomial spread of the replicate mean plus the pool error
    let sd = (expect / reps as f64 + (n as f64).powi(2) * q / pool as f64).sqrt();
    assert!((mean - expect).abs() < 4.0 * sd, "{mean} vs {expect} ± {sd}");
}

#[test]
fn too_few_excursions() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let recs: Vec<_> = ExcursionStream::new(&m, StreamId::root(1)).take(10).collect();
    let r = decompose(&recs, 0, 100, &ValleyParams::new(1.0, 1.0), 1.5);
    assert!(matches!(r, Err(Error::InsufficientExcursions { needed: 100, available: 10 })));
}
