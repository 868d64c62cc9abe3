mod common;

use valleywalk::env_model::{solve_kappa, EnvironmentLaw, EnvironmentModel};
use valleywalk::numeric::rng::StreamId;
use valleywalk::Error;

#[test]
fn beta_tail_index_is_alpha_minus_beta() {
    for (a, b) in [(2.0, 1.0), (3.0, 1.5), (2.8, 1.2), (4.0, 2.5)] {
        let m = EnvironmentModel::beta(a, b).unwrap();
        assert!((m.kappa() - (a - b)).abs() < 1e-9, "Beta({a},{b}) gave {}", m.kappa());
    }
}

#[test]
fn two_atom_kappa_against_bisection() {
    let f = |k: f64| 0.5 * (3.0f64 / 7.0).powf(k) + 0.5 * 1.5f64.powf(k) - 1.0;
    let (mut lo, mut hi) = (1e-6, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let law = EnvironmentLaw::discrete(vec![(0.7, 0.5), (0.4, 0.5)]).unwrap();
    let k = solve_kappa(&law, 1e-12).unwrap();
    assert!((k - lo).abs() < 1e-9, "{k} vs {lo}");
}

#[test]
fn moments_against_closed_forms_and_simpson() {
    // E[ρ] for Beta(3,1) = ∫ 3ω²(1−ω)/ω dω = 1/2
    let law = EnvironmentLaw::beta(3.0, 1.0).unwrap();
    assert!((law.moment_rho(1.0).unwrap() - 0.5).abs() < 1e-10);
    // E[ρ log ρ] for Beta(2,1) = 2∫(1−x)log((1−x)/x)dx = 2(−1/4 + 3/4) = 1
    let m = EnvironmentModel::beta(2.0, 1.0).unwrap();
    assert!((m.rho_log_moment(1.0).unwrap() - 1.0).abs() < 1e-10);
    // Beta(2.8,1.2) at s = κ, Simpson on the log-odds scale against the closed form
    let m = EnvironmentModel::beta(2.8, 1.2).unwrap();
    let norm = statrs::function::beta::beta(2.8, 1.2);
    let integrand = |u: f64| {
        // ω = 1/(1+e^u), ρ = e^u, dω = ω(1−ω)du
        let w = 1.0 / (1.0 + u.exp());
        let dens = w.powf(1.8) * (1.0 - w).powf(0.2) / norm;
        dens * (1.6 * u).exp() * u * w * (1.0 - w)
    };
    let oracle = common::simpson(integrand, -60.0, 60.0, 200_000);
    let got = m.rho_log_moment(1.6).unwrap();
    assert!((got - oracle).abs() < 1e-7 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn speed_of_a_transient_beta_law() {
    let m = EnvironmentModel::beta(3.0, 1.2).unwrap();
    assert!((m.speed() - 0.25).abs() < 1e-12);
    // κ ≤ 1 has zero speed
    assert_eq!(EnvironmentModel::beta(2.0, 1.0).unwrap().speed(), 0.0);
}

#[test]
fn blocks_are_reproducible_and_inside_the_unit_interval() {
    let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
    let a = m.sample_omega_block(10_000, StreamId::root(4)).unwrap();
    let b = m.sample_omega_block(10_000, StreamId::root(4)).unwrap();
    let c = m.sample_omega_block(10_000, StreamId::root(5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|w| *w > 0.0 && *w < 1.0));
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    // E[ω] = 2/3 with sd 0.19
    assert!((mean - 2.0 / 3.0).abs() < 4.0 * 0.19 / 100.0);
}

#[test]
fn recurrent_and_non_transient_laws_are_rejected() {
    assert!(EnvironmentModel::beta(1.0, 1.0).is_err());
    assert!(EnvironmentModel::beta(1.0, 2.0).is_err());
    assert!(EnvironmentLaw::beta(0.0, 1.0).is_err());
    // constant ρ has no positive root of E[ρ^κ] = 1
    assert!(EnvironmentLaw::discrete(vec![(0.6, 1.0)]).and_then(EnvironmentModel::new).is_err());
    // log ρ ∈ {±log 2} lives on a lattice
    let lattice = EnvironmentLaw::discrete(vec![(2.0 / 3.0, 0.7), (1.0 / 3.0, 0.3)]);
    assert!(matches!(lattice.and_then(EnvironmentModel::new), Err(Error::Lattice)));
}
