use valleywalk::env_model::EnvironmentModel;
use valleywalk::numeric::rng::StreamId;
use valleywalk::numeric::stats::{ks_critical, ks_two_sample};
use valleywalk::potential::{
    build_potential, omega_of_log_rho, sample_conditioned_left, sample_forward_excursion, ExcursionStream, PotentialPath,
};

fn path(values: &[f64]) -> PotentialPath {
    PotentialPath::from_values(0, values.to_vec()).unwrap()
}

#[test]
fn weak_ladder_rule() {
    let p = path(&[0.0, 1.0, 0.0, 2.0, -1.0]);
    assert_eq!(p.forward_epochs().sites, vec![0, 2, 4]);
}

#[test]
fn functionals_by_hand() {
    // V(x) = −x on [−30, 0], then 1, 2, −1
    let mut values: Vec<f64> = (0..=30).rev().map(|x| x as f64).collect();
    values.extend([1.0, 2.0, -1.0]);
    let p = PotentialPath::from_values(-30, values).unwrap();
    let ep = p.forward_epochs();
    assert_eq!(ep.sites, vec![0, 3]);
    let r = p.excursion_functionals(&ep, 0).unwrap();
    assert_eq!(r.height, 2.0);
    assert_eq!(r.t_h, 2);
    let m2 = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
    assert!((r.log_m2.exp() - m2).abs() < 1e-14);
    assert_eq!(r.drop, -1.0);
    // the linear left tail makes the geometric remainder exact
    let e = (-1.0f64).exp();
    let r_minus = 1.0 / (1.0 - e);
    assert!((r.log_r_minus.unwrap().exp() - r_minus).abs() < 1e-12);
    let m1 = r_minus - 1.0 + 1.0 + e;
    assert!((r.log_m1().unwrap().exp() - m1).abs() < 1e-12);
    assert!((r.log_z().unwrap() - (m1 * m2).ln() - 2.0).abs() < 1e-12);
}

#[test]
fn potential_from_omegas_round_trips() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let block = m.sample_omega_block(500, StreamId::root(9)).unwrap();
    let p = build_potential(&block, 100).unwrap();
    assert_eq!(p.v(0), 0.0);
    for x in p.left() + 1..=p.right() {
        let w = omega_of_log_rho(p.v(x) - p.v(x - 1));
        assert!((w - p.omega_at(x)).abs() < 1e-12);
    }
}

#[test]
fn forward_excursions_end_at_or_below_their_start() {
    let m = EnvironmentModel::beta(2.8, 1.2).unwrap();
    let mut rng = StreamId::root(2).rng();
    for _ in 0..2000 {
        let r = sample_forward_excursion(m.law(), &mut rng);
        assert!(r.drop <= 0.0);
        assert!(r.height >= 0.0);
        assert!(r.end > r.start && r.t_h >= r.start && r.t_h < r.end);
    }
}

#[test]
fn conditioned_left_paths_stay_above_zero() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    for i in 0..500 {
        let c = sample_conditioned_left(&m, 10, StreamId::root(6).replicate(i)).unwrap();
        assert!(c.path.values().iter().all(|&v| v >= 0.0));
        assert_eq!(c.path.v(0), 0.0);
        assert_eq!(*c.boundaries.last().unwrap(), 0);
    }
}

#[test]
fn left_excursions_have_the_forward_height_law() {
    // the excursion next to 0, found by the backward ladder rule
    let m = EnvironmentModel::beta(2.8, 1.2).unwrap();
    let n = 50_000;
    let left: Vec<f64> = (0..n)
        .map(|i| {
            let c = sample_conditioned_left(&m, 2, StreamId::root(21).replicate(i as u64)).unwrap();
            let ep = c.path.backward_epochs();
            let b = ep.sites[ep.sites.len() - 2];
            (b..=0).map(|x| c.path.v(x) - c.path.v(b)).fold(0.0, f64::max)
        })
        .collect();
    let mut rng = StreamId::root(22).rng();
    let fwd: Vec<f64> = (0..n).map(|_| sample_forward_excursion(m.law(), &mut rng).height).collect();
    assert!(ks_two_sample(&fwd, &left) < ks_critical(0.01, n, n));
}

#[test]
fn stream_records_carry_certified_left_sums() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let recs: Vec<_> = ExcursionStream::new(&m, StreamId::root(8)).take(1000).collect();
    for w in recs.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
    for r in &recs {
        // R₋ ≥ 1 (the k = start term); M₁, M₂ ≥ 1 once T_H > start
        let lr = r.log_r_minus.unwrap();
        assert!(lr >= 0.0);
        if r.t_h > r.start {
            assert!(r.log_z().unwrap() >= r.height - 1e-12);
        }
    }
    let again: Vec<_> = ExcursionStream::new(&m, StreamId::root(8)).take(1000).collect();
    assert_eq!(recs, again);
}
